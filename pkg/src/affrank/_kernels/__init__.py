"""Hot loops of the tree learner.

The compiled ``_split`` extension is used when it was built; otherwise, or
when ``AFFRANK_PURE_PYTHON=1`` is set, the numpy implementation stands in.
"""

import os

from . import _split_py

BACKEND = "python"
find_best_splits = _split_py.find_best_splits

if os.environ.get("AFFRANK_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _split
    except ImportError:  # extension not built
        pass
    else:
        find_best_splits = _split.find_best_splits
        BACKEND = "cython"


def get_backend(name):
    """Return the split search for ``"cython"`` or ``"python"``."""
    if name == "python":
        return _split_py.find_best_splits
    if name == "cython":
        from . import _split
        return _split.find_best_splits
    raise ValueError(f"unknown backend {name!r}")


def available_backends():
    names = ["python"]
    try:
        from . import _split  # noqa: F401
    except ImportError:
        pass
    else:
        names.insert(0, "cython")
    return names

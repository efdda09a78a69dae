"""Share-of-past-papers baseline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional


@dataclass(frozen=True)
class ProbModel:
    scores: dict[str, float]
    window: Optional[tuple[int, int]] = None
    meta: dict = field(default_factory=dict)

    def ranking(self) -> list[tuple[str, float]]:
        return sorted(self.scores.items(), key=lambda kv: (-kv[1], kv[0]))

    def to_dict(self) -> dict:
        return {"scores": dict(self.scores), "window": list(self.window) if self.window else None}

    @classmethod
    def from_dict(cls, d: dict) -> "ProbModel":
        return cls({k: float(v) for k, v in d["scores"].items()},
                   tuple(d["window"]) if d.get("window") else None)


def prob_fit(counts: Mapping[str, int], window: Optional[tuple[int, int]] = None) -> ProbModel:
    """Each affiliation's fraction of the accepted papers in the window."""
    total = sum(counts.values())
    if any(v < 0 for v in counts.values()):
        raise ValueError("paper counts must be nonnegative")
    if total <= 0:
        raise ValueError("all-zero paper counts: nothing to estimate from")
    scores = {a: n / total for a, n in sorted(counts.items()) if n > 0}
    return ProbModel(scores, window)

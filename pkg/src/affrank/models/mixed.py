"""Linear model with a random intercept per group, fit by EM.

    y = X b + u[group] + e,   u ~ N(0, s2_group),   e ~ N(0, s2_resid)

Variance components are maximum likelihood estimates.  The default update
is parameter-expanded EM, which shares the fixed points of plain EM but
does not crawl when the group variance is small; ``accelerate=False``
gives the textbook iteration (GLS for b, then posterior moments of u).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Hashable, Optional, Sequence

import numpy as np
from scipy import linalg, stats

logger = logging.getLogger(__name__)

INTERCEPT = "(Intercept)"


class RankDeficientError(ValueError):
    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"design matrix is rank deficient; collinear columns: {self.columns}")


class ConvergenceError(RuntimeError):
    def __init__(self, message, trace):
        self.trace = trace
        super().__init__(message)


@dataclass
class MixedModel:
    fixed_coefficients: dict[str, float]
    random_intercepts: dict[Hashable, float]
    sigma2_residual: float
    sigma2_group: float
    std_errors: dict[str, float] = field(default_factory=dict)
    p_values: dict[str, float] = field(default_factory=dict)
    dropped_constant: list[str] = field(default_factory=list)
    eliminated: list[str] = field(default_factory=list)
    loglik: float = float("nan")
    n_iter: int = 0
    fitted: bool = True

    @property
    def features(self) -> list[str]:
        return [c for c in self.fixed_coefficients if c != INTERCEPT]

    def predict(self, X: np.ndarray, columns: Sequence[str], groups: Optional[Sequence[Hashable]] = None) -> np.ndarray:
        columns = list(columns)
        missing = [c for c in self.features if c not in columns]
        if missing:
            raise KeyError(f"missing feature column(s): {', '.join(missing)}")
        X = np.asarray(X, dtype=float)
        out = np.full(X.shape[0], self.fixed_coefficients.get(INTERCEPT, 0.0))
        for name in self.features:
            out += self.fixed_coefficients[name] * X[:, columns.index(name)]
        if groups is not None:
            out += np.array([self.random_intercepts.get(_key(g), 0.0) for g in groups])
        return out

    def to_dict(self) -> dict:
        return {
            "fixed_coefficients": self.fixed_coefficients,
            "random_intercepts": [[list(g) if isinstance(g, tuple) else g, v]
                                  for g, v in self.random_intercepts.items()],
            "sigma2_residual": self.sigma2_residual,
            "sigma2_group": self.sigma2_group,
            "std_errors": self.std_errors,
            "p_values": self.p_values,
            "dropped_constant": self.dropped_constant,
            "eliminated": self.eliminated,
            "loglik": self.loglik,
            "n_iter": self.n_iter,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixedModel":
        return cls(
            dict(d["fixed_coefficients"]),
            {_key(g): float(v) for g, v in d["random_intercepts"]},
            float(d["sigma2_residual"]), float(d["sigma2_group"]),
            dict(d.get("std_errors", {})), dict(d.get("p_values", {})),
            list(d.get("dropped_constant", [])), list(d.get("eliminated", [])),
            float(d.get("loglik", float("nan"))), int(d.get("n_iter", 0)),
        )


def _key(g):
    return tuple(g) if isinstance(g, list) else g


def _design(X, columns):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-d")
    columns = list(columns) if columns is not None else [f"x{i}" for i in range(X.shape[1])]
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite feature values")
    constant = [j for j in range(X.shape[1]) if X.shape[0] and np.all(X[:, j] == X[0, j])]
    keep = [j for j in range(X.shape[1]) if j not in constant]
    names = [INTERCEPT] + [columns[j] for j in keep]
    D = np.column_stack([np.ones(X.shape[0]), X[:, keep]])
    _, R, piv = linalg.qr(D, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > diag[0] * max(D.shape) * np.finfo(float).eps)) if diag.size else 0
    if rank < D.shape[1]:
        raise RankDeficientError(sorted(names[j] for j in piv[rank:]))
    return D, names, [columns[j] for j in constant]


def _group_index(groups):
    keys = [_key(g) for g in groups]
    uniq = sorted(set(keys), key=repr)
    pos = {g: i for i, g in enumerate(uniq)}
    return uniq, np.array([pos[g] for g in keys], dtype=np.intp)


def _loglik(r, gidx, n_g, s2u, s2e):
    R = np.bincount(gidx, weights=r, minlength=n_g.size)
    denom = s2e + n_g * s2u
    quad = (r @ r - np.sum(s2u / denom * R * R)) / s2e
    logdet = np.sum((n_g - 1) * np.log(s2e) + np.log(denom))
    return -0.5 * (r.size * np.log(2 * np.pi) + logdet + quad)


def _gls(D, y, gidx, n_g, s2u, s2e):
    """GLS coefficients and (X' V^-1 X)^-1 for the block compound symmetric V."""
    c = s2u / (s2e + n_g * s2u)
    G = np.zeros((n_g.size, D.shape[1]))
    np.add.at(G, gidx, D)
    Ry = np.bincount(gidx, weights=y, minlength=n_g.size)
    A = (D.T @ D - (G.T * c) @ G) / s2e
    b = (D.T @ y - G.T @ (c * Ry)) / s2e
    beta = linalg.solve(A, b, assume_a="pos")
    return beta, linalg.inv(A)


def mixed_fit(
    X: np.ndarray,
    y: np.ndarray,
    groups: Sequence[Hashable],
    columns: Optional[Sequence[str]] = None,
    *,
    zero_group_variance: bool = False,
    tol: float = 1e-8,
    max_iter: int = 200,
    accelerate: bool = True,
) -> MixedModel:
    """Fit the random-intercept model.

    Constant columns are dropped (the intercept covers them); any remaining
    linear dependence raises :class:`RankDeficientError`.  With
    ``zero_group_variance=True`` the group variance is pinned at zero and
    the fixed effects are the OLS solution.
    """
    y = np.asarray(y, dtype=float).ravel()
    if not np.all(np.isfinite(y)):
        raise ValueError("non-finite target values")
    uniq, gidx = _group_index(groups)
    if len(uniq) < 2:
        raise ValueError("mixed model needs at least two groups")
    D, names, dropped = _design(X, columns)
    if D.shape[0] != y.size or gidx.size != y.size:
        raise ValueError("X, y and groups have different lengths")
    N = y.size
    n_g = np.bincount(gidx).astype(float)

    beta, *_ = linalg.lstsq(D, y)
    r = y - D @ beta
    s2e = float(r @ r) / N
    # relative to the target scale: roundoff residuals count as an exact fit
    if s2e <= (64 * np.finfo(float).eps) ** 2 * max(float(y @ y) / N, np.finfo(float).tiny):
        raise ValueError("residual variance is zero; the fixed effects fit the data exactly")
    s2u = 0.0
    n_iter = 0
    trace = []

    R = np.bincount(gidx, weights=r, minlength=n_g.size)
    # score for s2u at zero; non-positive means the likelihood peaks on the boundary
    boundary_score = float(np.sum(R * R) / s2e**2 - N / s2e)
    if zero_group_variance:
        pass
    elif boundary_score > 0:
        gm = R / n_g
        s2u = max(float(np.var(gm)), 1e-3 * s2e)
        converged = False
        for n_iter in range(1, max_iter + 1):
            prev_beta = beta
            if not accelerate:
                beta, _ = _gls(D, y, gidx, n_g, s2u, s2e)
            r = y - D @ beta
            Rg = np.bincount(gidx, weights=r, minlength=n_g.size)
            denom = s2e + n_g * s2u
            m = s2u * Rg / denom
            v = s2u * s2e / denom
            s2u_new = float(np.mean(m * m + v))
            if accelerate:
                mrow = m[gidx]
                k = D.shape[1]
                A = np.empty((k + 1, k + 1))
                A[:k, :k] = D.T @ D
                A[:k, k] = A[k, :k] = D.T @ mrow
                A[k, k] = float(np.sum(n_g * (m * m + v)))
                b = np.concatenate([D.T @ y, [y @ mrow]])
                sol = linalg.solve(A, b, assume_a="sym")
                beta_new, scale = sol[:k], float(sol[k])
                resid = y - D @ beta_new - scale * mrow
                s2e_new = float(resid @ resid + scale * scale * np.sum(n_g * v)) / N
                s2u_new *= scale * scale
            else:
                beta_new = beta
                s2e_new = float(np.sum((r - m[gidx]) ** 2 + v[gidx])) / N
            step = max(
                float(np.max(np.abs(beta_new - prev_beta) / (1 + np.abs(prev_beta)))),
                abs(s2u_new - s2u) / (1 + s2u),
                abs(s2e_new - s2e) / (1 + s2e),
            )
            beta, s2u, s2e = beta_new, s2u_new, s2e_new
            trace.append((n_iter, s2u, s2e, step))
            if step < tol:
                converged = True
                break
        if not converged:
            raise ConvergenceError(
                f"EM did not converge in {max_iter} iterations (last step {trace[-1][3]:.3g})", trace
            )

    if s2u > 0:
        beta, cov = _gls(D, y, gidx, n_g, s2u, s2e)
    else:
        cov = s2e * linalg.inv(D.T @ D)
    r = y - D @ beta
    Rg = np.bincount(gidx, weights=r, minlength=n_g.size)
    u = s2u * Rg / (s2e + n_g * s2u) if s2u > 0 else np.zeros(n_g.size)
    se = np.sqrt(np.diag(cov))
    z = beta / se
    p = 2 * stats.norm.sf(np.abs(z))
    return MixedModel(
        fixed_coefficients={n: float(b) for n, b in zip(names, beta)},
        random_intercepts={g: float(v) for g, v in zip(uniq, u)},
        sigma2_residual=s2e,
        sigma2_group=s2u,
        std_errors={n: float(s) for n, s in zip(names, se)},
        p_values={n: float(q) for n, q in zip(names, p)},
        dropped_constant=dropped,
        loglik=float(_loglik(r, gidx, n_g, s2u, s2e)),
        n_iter=n_iter,
    )


def mixed_loglik(X, y, groups, beta, s2u, s2e) -> float:
    """Gaussian log-likelihood of the random-intercept model, ``beta`` includes the intercept."""
    _, gidx = _group_index(groups)
    D = np.column_stack([np.ones(len(y)), np.asarray(X, dtype=float)])
    r = np.asarray(y, dtype=float) - D @ np.asarray(beta)
    return float(_loglik(r, gidx, np.bincount(gidx).astype(float), s2u, s2e))


def backward_eliminate(
    X: np.ndarray,
    y: np.ndarray,
    groups: Sequence[Hashable],
    columns: Sequence[str],
    level: float = 0.05,
    **fit_kwargs,
) -> MixedModel:
    """Drop the least significant fixed effect until all pass ``level``.

    Uses Wald z-tests; stops when one feature remains.
    """
    X = np.asarray(X, dtype=float)
    columns = list(columns)
    keep = list(range(len(columns)))
    eliminated: list[str] = []
    while True:
        model = mixed_fit(X[:, keep], y, groups, [columns[j] for j in keep], **fit_kwargs)
        feats = model.features
        if len(feats) <= 1:
            break
        worst = max(feats, key=lambda f: (model.p_values[f], columns.index(f)))
        if model.p_values[worst] <= level:
            break
        logger.debug("dropping %s (p=%.3g)", worst, model.p_values[worst])
        eliminated.append(worst)
        keep.remove(columns.index(worst))
    model.eliminated = eliminated + [c for c in model.dropped_constant if c not in eliminated]
    return model

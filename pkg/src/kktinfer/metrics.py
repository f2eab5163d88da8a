"""Monte-Carlo region scores and demonstration violation rates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lin_core import NULL_TOL, HomConstraint, augment_states

VIOLATION_TOL = 1e-8


class EmptyDenominator(ValueError):
    """No sample fell in the region a score is normalized by."""


@dataclass(frozen=True)
class BoundingBox:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).ravel()
        hi = np.asarray(self.hi, dtype=float).ravel()
        if lo.shape != hi.shape:
            raise ValueError("lo and hi must have the same length")
        if not np.all(lo < hi):
            raise ValueError("need lo < hi in every dimension")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dim(self) -> int:
        return self.lo.size

    @classmethod
    def around(cls, states, inflate: float = 0.5) -> "BoundingBox":
        """Axis-aligned hull of ``states`` grown by ``inflate`` times its width on each side."""
        S = np.atleast_2d(np.asarray(states, dtype=float))
        lo, hi = S.min(axis=0), S.max(axis=0)
        pad = inflate * np.maximum(hi - lo, 1e-12) / 2.0
        return cls(lo - pad, hi + pad)

    def sample(self, n_samples: int, seed) -> np.ndarray:
        rng = np.random.default_rng(seed)
        return self.lo + (self.hi - self.lo) * rng.random((n_samples, self.dim))


@dataclass(frozen=True)
class RegionScore:
    coverage: float
    overlap: float
    n_samples: int
    coverage_se: float
    overlap_se: float


def _as_matrix(cs, dim: int) -> np.ndarray:
    rows = [c.c if isinstance(c, HomConstraint) else np.asarray(c, dtype=float) for c in cs]
    if not rows:
        return np.zeros((0, dim + 1))
    return np.array(rows)


def _active(cs, tol: float = NULL_TOL) -> list[HomConstraint]:
    cs = [c if isinstance(c, HomConstraint) else HomConstraint(c) for c in cs]
    return [c for c in cs if not c.is_null(tol)]


def feasible_mask(cs, points: np.ndarray) -> np.ndarray:
    """True where every constraint holds (``c . [x; 1] <= 0``)."""
    C = _as_matrix(cs, points.shape[1])
    if C.shape[0] == 0:
        return np.ones(points.shape[0], dtype=bool)
    return np.all(augment_states(points) @ C.T <= 0.0, axis=1)


def _ratio(k: int, n: int) -> tuple[float, float]:
    p = k / n
    return p, float(np.sqrt(p * (1.0 - p) / n))


def region_score(true_cs, est_cs, box: BoundingBox, n_samples: int = 100_000, seed=0) -> RegionScore:
    """Coverage of the true feasible set and overlap with the true infeasible set.

    Both sets are classified on one common uniform sample of ``box``.
    Degenerate (near-null) estimated constraints are ignored.

    Raises
    ------
    EmptyDenominator
        If no sample is truly feasible or none is truly infeasible.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    pts = box.sample(n_samples, seed)
    safe = feasible_mask(true_cs, pts)
    est = feasible_mask(_active(est_cs), pts)
    n_safe = int(safe.sum())
    n_unsafe = n_samples - n_safe
    if n_safe == 0:
        raise EmptyDenominator("no sample lies in the true feasible set; coverage undefined")
    if n_unsafe == 0:
        raise EmptyDenominator("no sample lies in the true infeasible set; overlap undefined")
    cov, cov_se = _ratio(int(np.sum(est & safe)), n_safe)
    ovl, ovl_se = _ratio(int(np.sum(est & ~safe)), n_unsafe)
    return RegionScore(cov, ovl, n_samples, cov_se, ovl_se)


def violation_rate(cs, demos) -> float:
    """Fraction of (demo, t) pairs, over x_1..x_T, where some constraint exceeds 1e-8."""
    demos = list(demos)
    if not demos:
        return 0.0
    S = np.vstack([d.states for d in demos])
    C = _as_matrix(cs, S.shape[1])
    if C.shape[0] == 0:
        return 0.0
    worst = (augment_states(S) @ C.T).max(axis=1)
    return float(np.mean(worst > VIOLATION_TOL))

"""Alternating minimization of the KKT residual and the greedy constraint-count searches."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..lin_core import NULL_TOL, HomConstraint
from .kkt import KktData, RegWeights, c_step, kkt_residual, lambda_step

log = logging.getLogger(__name__)

E_SENTINEL = 1e12


@dataclass(frozen=True)
class AltParams:
    K_max: int = 200
    inner_tol: float = 1e-8
    n_starts: int = 10

    def __post_init__(self):
        if self.K_max < 1:
            raise ValueError("K_max must be >= 1")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")


@dataclass
class InferenceResult:
    constraints: list[HomConstraint]
    lam: np.ndarray
    residual_history: list[float] = field(default_factory=list)
    alt_history: list[list[float]] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    @property
    def normalized(self) -> list[HomConstraint]:
        return [c.normalized() for c in self.constraints]

    def degenerate(self, tol: float = NULL_TOL) -> list[bool]:
        return [c.is_null(tol) for c in self.constraints]

    def active_constraints(self, tol: float = NULL_TOL) -> list[HomConstraint]:
        """Non-degenerate constraints, unit-normalized."""
        return [c.normalized() for c in self.constraints if not c.is_null(tol)]


def random_unit(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def rebalance(c: HomConstraint, lam_block: np.ndarray, w: RegWeights) -> tuple[HomConstraint, np.ndarray]:
    """Move along the exact symmetry (c, lam) -> (s c, lam / s) to the best scale s <= 1.

    Only the ridge terms depend on s.  Capping s at 1 means the ridge on c never
    grows, so the objective evaluated at the caller's rho2 cannot increase.
    """
    nc = float(np.linalg.norm(c.c))
    nl = float(np.linalg.norm(lam_block))
    if nc == 0.0 or nl == 0.0 or w.rho1 == 0.0:
        return c, lam_block
    s = min(1.0, (w.rho2_effective * nl * nl / (w.rho1 * nc * nc)) ** 0.25)
    return HomConstraint(c.c * s), lam_block / s


def _seed_list(seed) -> list[int]:
    return [int(v) for v in np.atleast_1d(seed)]


def _alternate_once(kkt, cs_prev, w, K_max, inner_tol, seed, c_init):
    rng = np.random.default_rng(seed)
    c = HomConstraint(random_unit(kkt.n + 1, rng) if c_init is None else c_init)
    lam = None
    hist: list[float] = []
    for _ in range(K_max):
        cs = cs_prev + [c]
        lam_new = lambda_step(kkt, cs, w)
        # the floored ridge can cost a hair of true objective; never take that step
        if lam is not None and kkt_residual(kkt, cs, lam_new, w) > kkt_residual(kkt, cs, lam, w):
            lam_new = lam
        lam = lam_new
        c = c_step(kkt, lam, cs_prev, w)
        k = len(cs_prev) * kkt.T
        c, tail = rebalance(c, lam[k:], w)
        lam = np.concatenate([lam[:k], tail])
        ell = kkt_residual(kkt, cs_prev + [c], lam, w)
        hist.append(ell)
        if len(hist) > 1 and abs(hist[-1] - hist[-2]) <= inner_tol * max(1.0, hist[-2]):
            break
    return c, lam, hist


def alternate(kkt: KktData, cs_prev, w: RegWeights, K_max: int = 200, inner_tol: float = 1e-8,
              seed=0, c_init=None, n_starts: int = 1) -> tuple[HomConstraint, np.ndarray, list[float]]:
    """Infer one more constraint with the previous ones held fixed.

    Returns the new constraint, multipliers for every constraint (previous
    ones first) and the residual after each (lambda, c) pass.  With
    ``n_starts > 1`` the alternation is repeated from independent random
    unit vectors (streams ``[*seed, j]``) and the run with the lowest final
    residual is kept; ties go to the earliest start.
    """
    if K_max < 1:
        raise ValueError("K_max must be >= 1")
    if n_starts < 1:
        raise ValueError("n_starts must be >= 1")
    cs_prev = list(cs_prev)
    if n_starts == 1 or c_init is not None:
        return _alternate_once(kkt, cs_prev, w, K_max, inner_tol, seed, c_init)
    best = None
    for j in range(n_starts):
        run = _alternate_once(kkt, cs_prev, w, K_max, inner_tol, _seed_list(seed) + [j], None)
        if best is None or run[2][-1] < best[2][-1]:
            best = run
    return best


def igci(kkt: KktData, w: RegWeights, delta: float, E0: float = E_SENTINEL,
         max_constraints: int | None = None, alt_params: AltParams = AltParams(),
         seed: int = 0) -> InferenceResult:
    """Add constraints one at a time until the residual stops moving by more than ``delta``.

    The constraint whose addition fails the test is not kept, but its residual
    is recorded as the last entry of ``residual_history``.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if max_constraints is None:
        max_constraints = kkt.n + 2
    C: list[HomConstraint] = []
    E = E0
    res_hist: list[float] = []
    alt_hist: list[list[float]] = []
    for k in range(1, max_constraints + 1):
        c, lam, hist = alternate(kkt, C, w, alt_params.K_max, alt_params.inner_tol, seed=[seed, k],
                                 n_starts=alt_params.n_starts)
        ell = kkt_residual(kkt, C + [c], lam, w)
        res_hist.append(ell)
        alt_hist.append(hist)
        log.info("IGCI round %d: residual %.6g (previous %.6g)", k, ell, E)
        if abs(ell - E) <= delta:
            break
        C.append(c)
        E = ell
    lam = lambda_step(kkt, C, w)
    config = {"method": "igci", "rho1": w.rho1, "rho2": w.rho2, "rho2_floor": w.rho2_floor,
              "delta": delta, "E0": E0, "max_constraints": max_constraints,
              "K_max": alt_params.K_max, "inner_tol": alt_params.inner_tol,
              "n_starts": alt_params.n_starts, "seed": seed}
    return InferenceResult(C, lam, res_hist, alt_hist, config)


def _joint_once(kkt, n_c, w, K_max, inner_tol, seed):
    rng = np.random.default_rng(seed)
    cs = [HomConstraint(random_unit(kkt.n + 1, rng)) for _ in range(n_c)]
    T = kkt.T
    lam = None
    hist: list[float] = []
    for _ in range(K_max):
        lam_new = lambda_step(kkt, cs, w)
        if lam is not None and kkt_residual(kkt, cs, lam_new, w) > kkt_residual(kkt, cs, lam, w):
            lam_new = lam
        lam = lam_new.copy()
        for j in range(n_c):
            cs[j] = c_step(kkt, lam, cs, w, index=j)
            cs[j], lam[j * T:(j + 1) * T] = rebalance(cs[j], lam[j * T:(j + 1) * T], w)
        hist.append(kkt_residual(kkt, cs, lam, w))
        if len(hist) > 1 and abs(hist[-1] - hist[-2]) <= inner_tol * max(1.0, hist[-2]):
            break
    return cs, lam, hist


def joint_alternate(kkt: KktData, n_c: int, w: RegWeights, K_max: int = 200, inner_tol: float = 1e-8,
                    seed=0, n_starts: int = 1) -> tuple[list[HomConstraint], np.ndarray, list[float]]:
    """Alternate a lambda step over all multipliers with a c step for each constraint in turn."""
    if n_c < 1:
        raise ValueError("n_c must be >= 1")
    if n_starts == 1:
        return _joint_once(kkt, n_c, w, K_max, inner_tol, seed)
    best = None
    for j in range(n_starts):
        run = _joint_once(kkt, n_c, w, K_max, inner_tol, _seed_list(seed) + [j])
        if best is None or run[2][-1] < best[2][-1]:
            best = run
    return best


def cgci(kkt: KktData, w: RegWeights, obj_thr: float, max_constraints: int | None = None,
         alt_params: AltParams = AltParams(), seed: int = 0) -> InferenceResult:
    """Re-infer all constraints jointly for a growing count; stop once the objective stalls."""
    if obj_thr <= 0:
        raise ValueError("obj_thr must be positive")
    if max_constraints is None:
        max_constraints = kkt.n + 2
    best = None
    prev_obj = E_SENTINEL
    res_hist: list[float] = []
    alt_hist: list[list[float]] = []
    for k in range(1, max_constraints + 1):
        cs, lam, hist = joint_alternate(kkt, k, w, alt_params.K_max, alt_params.inner_tol, seed=[seed, k],
                                        n_starts=alt_params.n_starts)
        obj = hist[-1]
        res_hist.append(obj)
        alt_hist.append(hist)
        log.info("CGCI with %d constraints: residual %.6g", k, obj)
        if best is not None and prev_obj - obj <= obj_thr:
            break
        best = (cs, lam)
        prev_obj = obj
    cs, lam = best
    config = {"method": "cgci", "rho1": w.rho1, "rho2": w.rho2, "rho2_floor": w.rho2_floor,
              "obj_thr": obj_thr, "max_constraints": max_constraints,
              "K_max": alt_params.K_max, "inner_tol": alt_params.inner_tol,
              "n_starts": alt_params.n_starts, "seed": seed}
    return InferenceResult(list(cs), lam, res_hist, alt_hist, config)

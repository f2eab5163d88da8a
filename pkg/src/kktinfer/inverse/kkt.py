"""KKT residual data, the residual objective and its two convex subproblems."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..forward import Demonstration, TaskSpec
from ..lin_core import HomConstraint, augment, build_stacked
from ..qp import ls_ineq_ridge, nnls_ridge


@dataclass(frozen=True)
class RegWeights:
    rho1: float = 10.0
    rho2: float = 0.0
    rho2_floor: float = 1e-8

    def __post_init__(self):
        if self.rho1 < 0 or self.rho2 < 0 or self.rho2_floor < 0:
            raise ValueError("regularization weights must be nonnegative")

    @property
    def rho2_effective(self) -> float:
        return max(self.rho2, self.rho2_floor)


@dataclass(frozen=True)
class KktData:
    """Per-demonstration KKT quantities in augmented coordinates.

    ``Gblk[t]`` are the rows of the augmented ``G`` producing ``x_{t+1}``,
    ``A1[i]`` is the cost gradient of demo ``i`` and ``A2[i, t]`` its augmented
    state ``[x_{t+1}; 1]``.
    """

    Gblk: np.ndarray  # (T, n + 1, m T)
    A1: np.ndarray  # (N, m T)
    A2: np.ndarray  # (N, T, n + 1)

    @property
    def T(self) -> int:
        return self.Gblk.shape[0]

    @property
    def n(self) -> int:
        return self.Gblk.shape[1] - 1

    @property
    def m(self) -> int:
        return self.Gblk.shape[2] // self.T

    @property
    def N(self) -> int:
        return self.A1.shape[0]

    @property
    def G(self) -> np.ndarray:
        return self.Gblk.reshape(self.T * (self.n + 1), -1)

    def subset(self, idx) -> "KktData":
        idx = np.atleast_1d(idx)
        return KktData(self.Gblk, self.A1[idx], self.A2[idx])

    def all_states(self) -> np.ndarray:
        """Augmented states of every demo, (N T, n + 1)."""
        return self.A2.reshape(-1, self.n + 1)


STATE_SOURCES = ("model", "observed")


def demo_states(task: TaskSpec, demos: list[Demonstration], source: str = "model") -> np.ndarray:
    """States x_1..x_T of every demo, (N, T, n).

    ``"model"`` rebuilds them as ``G U + H x0`` from the recorded controls and
    start under the nominal dynamics, so observation noise on the states does
    not enter; ``"observed"`` uses the recorded states as they are.
    """
    if source not in STATE_SOURCES:
        raise ValueError(f"unknown state source {source!r}; choose from {STATE_SOURCES}")
    if source == "observed":
        return np.array([d.states for d in demos])
    S = task.stacked()
    return np.array([S.apply(d.U, d.x0).reshape(task.T, task.n) for d in demos])


def build_kkt_data(task: TaskSpec, demos: list[Demonstration], source: str = "model") -> KktData:
    if not demos:
        raise ValueError("need at least one demonstration")
    T, n, m = task.T, task.n, task.m
    for d in demos:
        if d.states.shape != (T, n) or d.controls.shape != (T, m):
            raise ValueError(f"demo has states {d.states.shape} / controls {d.controls.shape}, "
                             f"expected ({T}, {n}) / ({T}, {m})")
    aug = augment(task.dyn)
    Ga = build_stacked(aug, T).G
    Qa = np.zeros((n + 1, n + 1))
    Qa[:n, :n] = task.Q
    Qbar = np.kron(np.eye(T), Qa)
    Rbar = np.kron(np.eye(T), task.R)
    track = np.hstack([task.x_track, np.ones((T, 1))]).ravel()
    A1, A2 = [], []
    for d, Xs in zip(demos, demo_states(task, demos, source)):
        X = np.hstack([Xs, np.ones((T, 1))])
        A1.append(2.0 * Ga.T @ Qbar @ (X.ravel() - track) + 2.0 * Rbar @ d.U)
        A2.append(X)
    return KktData(Gblk=Ga.reshape(T, n + 1, m * T), A1=np.array(A1), A2=np.array(A2))


def _cmat(cs) -> np.ndarray:
    if len(cs) == 0:
        return np.zeros((0, 0))
    return np.array([c.c if isinstance(c, HomConstraint) else np.asarray(c, dtype=float) for c in cs])


def stationarity_matrix(kkt: KktData, cs) -> np.ndarray:
    """Columns ``G_t' c_j`` so that the product with lambda equals ``G' C' lambda``; (m T, |cs| T)."""
    C = _cmat(cs)
    if C.size == 0:
        return np.zeros((kkt.m * kkt.T, 0))
    # (j, t, mT) -> columns ordered constraint-major
    cols = np.einsum("tkm,jk->jtm", kkt.Gblk, C)
    return cols.reshape(-1, kkt.m * kkt.T).T


def constraint_values(kkt: KktData, cs) -> np.ndarray:
    """c_j . [x_t; 1] for every demo; (N, |cs| T) constraint-major."""
    C = _cmat(cs)
    if C.size == 0:
        return np.zeros((kkt.N, 0))
    return np.einsum("itk,jk->ijt", kkt.A2, C).reshape(kkt.N, -1)


def _lambda_rows(kkt, lam, k):
    lam = np.asarray(lam, dtype=float)
    if lam.ndim == 1:
        if lam.size != k * kkt.T:
            raise ValueError(f"lambda has length {lam.size}, expected {k * kkt.T}")
        return np.broadcast_to(lam, (kkt.N, lam.size))
    if lam.shape != (kkt.N, k * kkt.T):
        raise ValueError(f"per-demo lambda has shape {lam.shape}, expected {(kkt.N, k * kkt.T)}")
    return lam


def residual_terms(kkt: KktData, cs, lam) -> tuple[np.ndarray, np.ndarray]:
    """Per-demo squared stationarity and complementarity residuals."""
    k = len(cs)
    L = _lambda_rows(kkt, lam, k)
    S = stationarity_matrix(kkt, cs)
    V = constraint_values(kkt, cs)
    stat = kkt.A1 + L @ S.T
    comp = np.einsum("ij,ij->i", V, L)
    return np.einsum("ij,ij->i", stat, stat), comp ** 2


def kkt_residual(kkt: KktData, cs, lam, w: RegWeights) -> float:
    """Summed squared stationarity and complementarity violations plus ridge terms.

    ``lam`` is either one multiplier vector shared by all demonstrations
    (length ``|cs| T``) or one row per demonstration.
    """
    stat, comp = residual_terms(kkt, cs, lam)
    C = _cmat(cs)
    ridge_c = float(np.sum(C * C)) if C.size else 0.0
    lam = np.asarray(lam, dtype=float)
    return float(stat.sum() + comp.sum() + w.rho1 * ridge_c + w.rho2 * float(np.sum(lam * lam)))


def lambda_system(kkt: KktData, cs) -> tuple[np.ndarray, np.ndarray]:
    """Stacked least-squares system for the shared multipliers."""
    S = stationarity_matrix(kkt, cs)
    V = constraint_values(kkt, cs)
    blocks, rhs = [], []
    for i in range(kkt.N):
        blocks.append(S)
        blocks.append(V[i][None, :])
        rhs.append(-kkt.A1[i])
        rhs.append([0.0])
    return np.vstack(blocks), np.concatenate(rhs)


def lambda_objective(kkt: KktData, cs, lam, rho2: float) -> float:
    At, bt = lambda_system(kkt, cs)
    r = At @ lam - bt
    return float(r @ r + rho2 * lam @ lam)


def lambda_step(kkt: KktData, cs_fixed, w: RegWeights) -> np.ndarray:
    """Nonnegative multipliers for all constraints in ``cs_fixed``."""
    if len(cs_fixed) == 0:
        raise ValueError("lambda_step needs at least one constraint")
    At, bt = lambda_system(kkt, cs_fixed)
    return nnls_ridge(At, bt, w.rho2_effective)


def c_system(kkt: KktData, lam, cs, j: int) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares system in constraint ``j`` with every other constraint and lambda fixed.

    ``cs[j]`` is ignored; the returned ``(Amat, bvec)`` satisfy
    ``||Amat c - bvec||^2 == sum of stationarity and complementarity residuals``.
    """
    T, k = kkt.T, len(cs)
    lam = np.asarray(lam, dtype=float).reshape(k, T)
    others = [i for i in range(k) if i != j]
    stat0 = kkt.A1.copy()
    comp0 = np.zeros(kkt.N)
    if others:
        cs_o = [cs[i] for i in others]
        lam_o = lam[others].ravel()
        stat0 = stat0 + stationarity_matrix(kkt, cs_o) @ lam_o
        comp0 = constraint_values(kkt, cs_o) @ lam_o
    lj = lam[j]
    M = np.einsum("t,tkm->mk", lj, kkt.Gblk)  # G' (lam_j kron I) : (mT, n+1)
    a = np.einsum("t,itk->ik", lj, kkt.A2)  # (N, n+1)
    blocks, rhs = [], []
    for i in range(kkt.N):
        blocks.append(M)
        blocks.append(a[i][None, :])
        rhs.append(-stat0[i])
        rhs.append([-comp0[i]])
    return np.vstack(blocks), np.concatenate(rhs)


def c_step(kkt: KktData, lambda_fixed, cs_prev_fixed, w: RegWeights, index: int | None = None) -> HomConstraint:
    """Best feasible constraint for one slot with multipliers and the other constraints held.

    By default the optimized slot is a new constraint appended after
    ``cs_prev_fixed``; with ``index`` the slot ``cs_prev_fixed[index]`` is
    re-optimized instead.
    """
    cs = list(cs_prev_fixed)
    if index is None:
        cs.append(None)
        index = len(cs) - 1
    Am, bv = c_system(kkt, lambda_fixed, cs, index)
    X = kkt.all_states()
    c = ls_ineq_ridge(Am, bv, w.rho1, X, np.zeros(X.shape[0]))
    # solver-tolerance slack would be magnified by normalization; shift the offset to remove it
    slack = float((X @ c).max())
    if slack > 0.0:
        c = c.copy()
        c[-1] -= slack
    return HomConstraint(c)

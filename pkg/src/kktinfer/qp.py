"""Dense convex QP and constrained least-squares solvers.

``qp_solve`` handles ``min 1/2 z'Pz + q'z  s.t.  Aineq z <= bineq``.  Strictly
convex problems are solved with the Goldfarb-Idnani dual active-set method,
which needs no feasible starting point and proves infeasibility on its own.
Singular (PSD) Hessians are handled by proximal-point iterations, each of
which is a strictly convex subproblem for the same active-set kernel.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
PSD_TOL = 1e-9


class QpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITER = "MaxIter"


class QpInfeasible(RuntimeError):
    pass


@dataclass(frozen=True)
class QpProblem:
    P: np.ndarray
    q: np.ndarray
    Aineq: np.ndarray | None = None
    bineq: np.ndarray | None = None

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.P, dtype=float))
        q = np.asarray(self.q, dtype=float).ravel()
        d = q.size
        if P.shape != (d, d):
            raise ValueError(f"P has shape {P.shape}, expected {(d, d)}")
        scale = max(1.0, float(np.abs(P).max(initial=0.0)))
        if not np.allclose(P, P.T, rtol=0.0, atol=1e-10 * scale):
            raise ValueError("P is not symmetric")
        if self.Aineq is None:
            A = np.zeros((0, d))
            b = np.zeros(0)
        else:
            A = np.asarray(self.Aineq, dtype=float).reshape(-1, d)
            b = np.asarray(self.bineq, dtype=float).ravel()
            if b.size != A.shape[0]:
                raise ValueError(f"bineq has length {b.size}, expected {A.shape[0]}")
        object.__setattr__(self, "P", 0.5 * (P + P.T))
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "Aineq", A)
        object.__setattr__(self, "bineq", b)

    @property
    def n_var(self) -> int:
        return self.q.size

    @property
    def n_ineq(self) -> int:
        return self.bineq.size

    def objective(self, z) -> float:
        z = np.asarray(z, dtype=float)
        return float(0.5 * z @ self.P @ z + self.q @ z)


@dataclass(frozen=True)
class QpSolution:
    z: np.ndarray
    duals: np.ndarray
    status: QpStatus
    kkt_error: float
    iterations: int = 0

    @property
    def ok(self) -> bool:
        return self.status is QpStatus.OPTIMAL


def kkt_error(prob: QpProblem, z, duals) -> float:
    """Scaled max-norm of stationarity, primal infeasibility, dual infeasibility and complementarity."""
    z = np.asarray(z, dtype=float)
    duals = np.asarray(duals, dtype=float)
    grad = prob.P @ z + prob.q
    scale = max(1.0, float(np.abs(prob.q).max(initial=0.0)), float(np.abs(grad - prob.q).max(initial=0.0)))
    stat = grad + prob.Aineq.T @ duals
    err = float(np.abs(stat).max(initial=0.0)) / scale
    if prob.n_ineq:
        slack = prob.Aineq @ z - prob.bineq
        cscale = np.maximum(1.0, np.abs(prob.bineq) + np.abs(prob.Aineq) @ np.abs(z))
        err = max(err, float(np.max(slack / cscale, initial=0.0)))
        err = max(err, float(np.max(-duals, initial=0.0)) / scale)
        err = max(err, float(np.abs(duals * slack / cscale).max(initial=0.0)) / scale)
    return err


def _is_pd(P: np.ndarray) -> bool:
    if P.size == 0:
        return True
    w = np.linalg.eigvalsh(P)
    return w[0] > PSD_TOL * max(abs(w[-1]), 1e-300)


def _check_psd(P: np.ndarray):
    if P.size == 0:
        return
    w = np.linalg.eigvalsh(P)
    if w[0] < -PSD_TOL * max(abs(w[-1]), 1.0):
        raise ValueError(f"P is not positive semidefinite (min eigenvalue {w[0]:.3e})")


def _dual_active_set(P, q, A, b, tol, max_iter):
    """Goldfarb-Idnani for strictly convex P. Returns (z, u, status, iters)."""
    d = q.size
    L = np.linalg.cholesky(P)
    z = -sla.cho_solve((L, True), q)
    u = np.zeros(A.shape[0])
    active: list[int] = []
    row_norm = np.linalg.norm(A, axis=1)
    ok_rows = row_norm > 0.0
    # rows that are identically zero are either vacuous or infeasible
    if np.any(~ok_rows & (b < -tol)):
        return z, u, QpStatus.INFEASIBLE, 0
    safe_norm = np.where(ok_rows, row_norm, 1.0)
    it = 0
    while it < max_iter:
        viol = np.where(ok_rows, (A @ z - b) / safe_norm, -np.inf)
        if active:
            viol[active] = -np.inf
        p = int(np.argmax(viol)) if viol.size else 0
        if viol.size == 0 or viol[p] <= tol * max(1.0, abs(b[p]) / safe_norm[p]):
            return z, u, QpStatus.OPTIMAL, it
        # walk along the path that raises u_p until p becomes active
        while True:
            it += 1
            if it > max_iter:
                return z, u, QpStatus.MAX_ITER, it
            v = sla.solve_triangular(L, A[p], lower=True)
            if active:
                N = sla.solve_triangular(L, A[active].T, lower=True)
                du, *_ = np.linalg.lstsq(N, v, rcond=None)
                du = -du
                r = v + N @ du
            else:
                du = np.zeros(0)
                r = v
            dz = -sla.solve_triangular(L.T, r, lower=False)
            curv = float(r @ r)
            slack = float(A[p] @ z - b[p])
            if curv > (1e-14 * float(v @ v)):
                t_full = slack / curv
            else:
                t_full = np.inf
            t_part = np.inf
            k = -1
            if active:
                ua = u[active]
                neg = du < 0.0
                if np.any(neg):
                    ratios = np.full(len(active), np.inf)
                    ratios[neg] = ua[neg] / -du[neg]
                    k = int(np.argmin(ratios))
                    t_part = float(ratios[k])
            t = min(t_full, t_part)
            if not np.isfinite(t):
                return z, u, QpStatus.INFEASIBLE, it
            if np.isfinite(t_full):
                z = z + t * dz
            if active:
                u[active] = np.maximum(u[active] + t * du, 0.0)
            u[p] += t
            if t_full <= t_part:
                active.append(p)
                break
            drop = active.pop(k)
            u[drop] = 0.0
    return z, u, QpStatus.MAX_ITER, it


def _polish(P, q, A, b, z, u):
    """Re-solve the equality KKT system on the final active set."""
    act = np.flatnonzero(u > 0.0)
    if act.size == 0:
        return z, u
    d = q.size
    Aa = A[act]
    K = np.block([[P, Aa.T], [Aa, np.zeros((act.size, act.size))]])
    rhs = np.concatenate([-q, b[act]])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return z, u
    z2 = sol[:d]
    u2 = np.zeros_like(u)
    u2[act] = sol[d:]
    if np.any(u2[act] < 0.0):
        return z, u
    viol = A @ z2 - b
    if np.max(viol, initial=0.0) > np.max(A @ z - b, initial=0.0) + 1e-12:
        return z, u
    return z2, u2


def qp_solve(prob: QpProblem, tol: float = DEFAULT_TOL, max_iter: int | None = None) -> QpSolution:
    """Solve a convex QP; the result carries a scaled KKT certificate.

    The caller must ensure the problem is bounded when ``P`` is only
    semidefinite.
    """
    P, q, A, b = prob.P, prob.q, prob.Aineq, prob.bineq
    if max_iter is None:
        max_iter = 10 * (prob.n_var + prob.n_ineq)
    max_iter = max(int(max_iter), 1)
    _check_psd(P)
    if _is_pd(P):
        z, u, status, iters = _dual_active_set(P, q, A, b, tol, max_iter)
        if status is QpStatus.OPTIMAL:
            z, u = _polish(P, q, A, b, z, u)
    else:
        z, u, status, iters = _proximal(P, q, A, b, tol, max_iter)
    err = kkt_error(prob, z, u)
    if status is QpStatus.OPTIMAL and err > tol:
        log.debug("QP KKT error %.3e above tolerance %.1e", err, tol)
        if err > 1e3 * tol:
            status = QpStatus.MAX_ITER
    return QpSolution(z=z, duals=u, status=status, kkt_error=err, iterations=iters)


def _proximal(P, q, A, b, tol, max_iter, max_outer: int = 20000):
    """Proximal-point iterations for a singular PSD Hessian."""
    d = q.size
    pnorm = max(float(np.linalg.norm(P, 2)), 1.0)
    sigma = 1e-3 * pnorm
    Ps = P + sigma * np.eye(d)
    z = np.zeros(d)
    u = np.zeros(A.shape[0])
    total = 0
    status = QpStatus.MAX_ITER
    for _ in range(max_outer):
        z_new, u, st, iters = _dual_active_set(Ps, q - sigma * z, A, b, 0.1 * tol, max_iter)
        total += iters
        if st is QpStatus.INFEASIBLE:
            return z_new, u, st, total
        if st is not QpStatus.OPTIMAL:
            return z_new, u, st, total
        step = float(np.abs(z_new - z).max(initial=0.0))
        z = z_new
        if sigma * step <= 0.1 * tol * max(1.0, float(np.abs(q).max(initial=0.0))):
            z, u = _polish_psd(P, q, A, b, z, u)
            status = QpStatus.OPTIMAL
            break
    return z, u, status, total


def _polish_psd(P, q, A, b, z, u):
    act = np.flatnonzero(u > 0.0)
    d = q.size
    Aa = A[act]
    K = np.block([[P, Aa.T], [Aa, np.zeros((act.size, act.size))]])
    rhs = np.concatenate([-q, b[act]])
    sol, *_ = np.linalg.lstsq(K, rhs, rcond=None)
    # minimum-norm KKT solution is only a valid polish if it stays primal/dual feasible
    # and does not move the iterate far (it may pick a different face point)
    z2 = sol[:d]
    u2 = np.zeros_like(u)
    u2[act] = sol[d:]
    if act.size and np.any(u2[act] < 0.0):
        return z, u
    if np.max(A @ z2 - b, initial=0.0) > 1e-12 * max(1.0, float(np.abs(b).max(initial=0.0))):
        return z, u
    if 0.5 * z2 @ P @ z2 + q @ z2 > 0.5 * z @ P @ z + q @ z + 1e-14:
        return z, u
    return z2, u2


def _lawson_hanson(A, b, tol=None, max_iter=None):
    """min ||A x - b||^2 subject to x >= 0."""
    m, n = A.shape
    if max_iter is None:
        max_iter = 3 * n + 10
    if tol is None:
        tol = 10 * np.finfo(float).eps * max(m, n) * max(1.0, float(np.linalg.norm(A, 1))) * max(
            1.0, float(np.abs(b).max(initial=0.0)))
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ (b - A @ x)
    it = 0
    while it < max_iter:
        cand = np.where(~passive, w, -np.inf)
        j = int(np.argmax(cand)) if n else 0
        if n == 0 or cand[j] <= tol:
            break
        passive[j] = True
        while True:
            it += 1
            idx = np.flatnonzero(passive)
            s = np.zeros(n)
            s[idx], *_ = np.linalg.lstsq(A[:, idx], b, rcond=None)
            if np.all(s[idx] > 0.0):
                x = s
                break
            bad = idx[s[idx] <= 0.0]
            alpha = float(np.min(x[bad] / (x[bad] - s[bad])))
            x = x + alpha * (s - x)
            drop = passive & (x <= tol)
            if not np.any(drop):
                # numerically stuck: remove the offending coordinate
                drop = np.zeros(n, dtype=bool)
                drop[bad[np.argmin(x[bad])]] = True
            passive &= ~drop
            x[~passive] = 0.0
            if it >= max_iter:
                break
        w = A.T @ (b - A @ x)
    return np.maximum(x, 0.0)


def nnls_ridge(Amat, bvec, rho: float = 0.0) -> np.ndarray:
    """argmin ||Amat lam - bvec||^2 + rho ||lam||^2 over lam >= 0.

    Solved as a Lawson-Hanson NNLS on the stacked system ``[Amat; sqrt(rho) I]``,
    which keeps the conditioning of ``Amat`` rather than squaring it.
    """
    Amat = np.atleast_2d(np.asarray(Amat, dtype=float))
    bvec = np.asarray(bvec, dtype=float).ravel()
    if Amat.shape[0] != bvec.size:
        raise ValueError(f"Amat has {Amat.shape[0]} rows but bvec has length {bvec.size}")
    if rho < 0:
        raise ValueError("rho must be nonnegative")
    k = Amat.shape[1]
    if rho > 0:
        A = np.vstack([Amat, np.sqrt(rho) * np.eye(k)])
        b = np.concatenate([bvec, np.zeros(k)])
    else:
        A, b = Amat, bvec
    return _lawson_hanson(A, b)


def nnls_ridge_qp(Amat, bvec, rho: float = 0.0) -> QpProblem:
    """The QP that ``nnls_ridge`` solves, in ``qp_solve`` form."""
    Amat = np.atleast_2d(np.asarray(Amat, dtype=float))
    bvec = np.asarray(bvec, dtype=float).ravel()
    k = Amat.shape[1]
    return QpProblem(P=2.0 * (Amat.T @ Amat + rho * np.eye(k)), q=-2.0 * Amat.T @ bvec,
                     Aineq=-np.eye(k), bineq=np.zeros(k))


def ls_ineq_ridge(Amat, bvec, rho: float, Gineq=None, hvec=None, tol: float = DEFAULT_TOL) -> np.ndarray:
    """argmin ||Amat c - bvec||^2 + rho ||c||^2 subject to Gineq c <= hvec."""
    Amat = np.atleast_2d(np.asarray(Amat, dtype=float))
    bvec = np.asarray(bvec, dtype=float).ravel()
    k = Amat.shape[1]
    prob = QpProblem(P=2.0 * (Amat.T @ Amat + rho * np.eye(k)), q=-2.0 * Amat.T @ bvec,
                     Aineq=None if Gineq is None else np.asarray(Gineq, dtype=float).reshape(-1, k),
                     bineq=hvec)
    sol = qp_solve(prob, tol=tol)
    if sol.status is QpStatus.INFEASIBLE:
        raise QpInfeasible("inequality-constrained least squares is infeasible")
    if sol.status is not QpStatus.OPTIMAL:
        log.warning("ls_ineq_ridge stopped with status %s (kkt error %.2e)", sol.status.value, sol.kkt_error)
    return sol.z

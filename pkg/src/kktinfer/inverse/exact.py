"""Exact recovery of a constraint from states known to be binding on it."""
from __future__ import annotations

import numpy as np

from ..forward import Demonstration
from ..lin_core import HomConstraint, augment_states


class RankDeficient(ValueError):
    """Binding states do not pin down a unique hyperplane."""


class SignAmbiguous(ValueError):
    """Nonbinding states cannot fix the orientation of the hyperplane."""


def _as_augmented(states, dim=None) -> np.ndarray:
    S = np.atleast_2d(np.asarray(states, dtype=float))
    if S.size == 0:
        return np.zeros((0, dim or 0))
    if dim is not None and S.shape[1] == dim - 1:
        S = augment_states(S)
    return S


def exact_recover(binding_states, nonbinding_states, rank_tol: float = 1e-9,
                  sign_tol: float = 1e-9) -> HomConstraint:
    """Unit-norm ``c`` with ``c . s = 0`` on binding states and ``<= 0`` on the rest.

    States are augmented vectors ``[x; 1]``.  The binding states must have
    rank ``n`` (singular values below ``rank_tol * sigma_max`` count as zero).
    If they are not exactly coplanar (rank ``n + 1``) the least-squares
    hyperplane is returned.
    """
    Xb = np.atleast_2d(np.asarray(binding_states, dtype=float))
    dim = Xb.shape[1]
    if Xb.shape[0] == 0:
        raise RankDeficient("no binding states supplied")
    _, s, Vt = np.linalg.svd(Xb, full_matrices=True)
    if s[0] == 0.0:
        raise RankDeficient("binding states are all zero")
    rank = int(np.sum(s >= rank_tol * s[0]))
    if dim - rank > 1:
        raise RankDeficient(f"binding states have rank {rank}; need {dim - 1} independent states")
    c = Vt[-1]
    Xn = _as_augmented(nonbinding_states, dim)
    if Xn.shape[0] == 0:
        raise SignAmbiguous("no nonbinding states to orient the constraint")
    vals = Xn @ c
    scale = sign_tol * (1.0 + np.linalg.norm(Xn, axis=1))
    pos = vals > scale
    neg = vals < -scale
    if np.any(pos) and np.any(neg):
        raise SignAmbiguous("nonbinding states lie on both sides of the recovered hyperplane")
    if not (np.any(pos) or np.any(neg)):
        raise SignAmbiguous("all nonbinding states lie on the recovered hyperplane")
    if np.any(pos):
        c = -c
    return HomConstraint(c / np.linalg.norm(c))


def detect_binding(demo: Demonstration, constraint: HomConstraint, bind_tol: float = 1e-6) -> set[int]:
    """Time steps ``t`` (1-based, for ``x_t``) at which the constraint holds with equality."""
    S = augment_states(demo.states)
    vals = S @ constraint.c
    thr = bind_tol * (1.0 + np.linalg.norm(S, axis=1))
    return {t + 1 for t in np.flatnonzero(np.abs(vals) <= thr)}


def detect_hyperplanes(states, max_constraints: int, bind_tol: float = 1e-6, n_hypotheses: int = 200,
                       seed: int = 0, min_inliers: int | None = None,
                       rank_tol: float = 1e-9) -> list[HomConstraint]:
    """Find supporting hyperplanes that many states lie on, then recover each exactly.

    A RANSAC-style search: every hypothesis is the hyperplane through ``n``
    randomly chosen states; it is kept only if all states lie on one side of
    it.  The best hypothesis (most states on it, at least ``min_inliers``) is
    refit with :func:`exact_recover` and its states are removed from the pool.
    """
    X = np.atleast_2d(np.asarray(states, dtype=float))
    n = X.shape[1]
    Xa = augment_states(X)
    if min_inliers is None:
        min_inliers = n + 1
    thr = bind_tol * (1.0 + np.linalg.norm(Xa, axis=1))
    rng = np.random.default_rng(seed)
    pool = np.arange(X.shape[0])
    found: list[HomConstraint] = []
    while len(found) < max_constraints and pool.size >= n:
        best, best_count = None, 0
        for _ in range(n_hypotheses):
            idx = rng.choice(pool, size=n, replace=False)
            _, s, Vt = np.linalg.svd(Xa[idx], full_matrices=True)
            if s[-1] < rank_tol * s[0]:
                continue
            c = Vt[-1]
            nrm = np.linalg.norm(c[:n])
            if nrm == 0.0:
                continue
            c = c / nrm
            vals = Xa @ c
            if np.all(vals <= thr):
                pass
            elif np.all(vals >= -thr):
                c, vals = -c, -vals
            else:
                continue
            on = np.abs(vals[pool]) <= thr[pool]
            count = int(on.sum())
            if count > best_count:
                best, best_count = pool[on], count
        if best is None or best_count < min_inliers:
            break
        rest = np.setdiff1d(np.arange(X.shape[0]), best)
        try:
            found.append(exact_recover(Xa[best], Xa[rest], rank_tol=rank_tol))
        except (RankDeficient, SignAmbiguous):
            pass
        pool = np.setdiff1d(pool, best)
    return found

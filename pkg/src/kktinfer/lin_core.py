"""Linear time-invariant dynamics and the condensed horizon matrices.

States over a horizon are stacked as ``X = G U + H x0`` where ``X`` holds
``x_1 ... x_T`` and ``U`` holds ``u_0 ... u_{T-1}``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NULL_TOL = 1e-8


@dataclass(frozen=True)
class LinearDynamics:
    """x_{t+1} = A x_t + B u_t."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B.reshape(-1, 1)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise ValueError(f"A must be square with n >= 1, got shape {A.shape}")
        if B.ndim != 2 or B.shape[0] != A.shape[0] or B.shape[1] < 1:
            raise ValueError(f"B must be {A.shape[0]} x m with m >= 1, got shape {B.shape}")
        A.setflags(write=False)
        B.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class StackedSystem:
    G: np.ndarray
    H: np.ndarray
    T: int
    n: int = field(init=False)
    m: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "n", self.H.shape[1])
        object.__setattr__(self, "m", self.G.shape[1] // self.T)

    def apply(self, U, x0) -> np.ndarray:
        """Stacked states x_1..x_T (flat, length n*T)."""
        return self.G @ np.asarray(U, dtype=float).ravel() + self.H @ np.asarray(x0, dtype=float)

    def block(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """Rows of G and H producing x_{t+1}."""
        sl = slice(t * self.n, (t + 1) * self.n)
        return self.G[sl], self.H[sl]


def build_stacked(dyn: LinearDynamics, T: int) -> StackedSystem:
    if T < 1:
        raise ValueError(f"horizon must be >= 1, got {T}")
    n, m = dyn.n, dyn.m
    # powers[k] = A^k
    powers = [np.eye(n)]
    for _ in range(T):
        powers.append(dyn.A @ powers[-1])
    G = np.zeros((n * T, m * T))
    H = np.zeros((n * T, n))
    for i in range(T):
        H[i * n:(i + 1) * n] = powers[i + 1]
        for j in range(i + 1):
            G[i * n:(i + 1) * n, j * m:(j + 1) * m] = powers[i - j] @ dyn.B
    G.setflags(write=False)
    H.setflags(write=False)
    return StackedSystem(G=G, H=H, T=T)


def augment(dyn: LinearDynamics) -> LinearDynamics:
    """Append a constant-one coordinate so affine constraints become homogeneous."""
    n, m = dyn.n, dyn.m
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = dyn.A
    A[n, n] = 1.0
    B = np.zeros((n + 1, m))
    B[:n] = dyn.B
    return LinearDynamics(A, B)


def augment_states(X) -> np.ndarray:
    """Append a column of ones to a (k, n) array of states."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.hstack([X, np.ones((X.shape[0], 1))])


def rollout(dyn: LinearDynamics, x0, U) -> np.ndarray:
    """Simulate the dynamics; returns states x_1..x_T as a (T, n) array."""
    x = np.asarray(x0, dtype=float).ravel()
    U = np.asarray(U, dtype=float).ravel()
    if x.shape[0] != dyn.n:
        raise ValueError(f"x0 has length {x.shape[0]}, expected {dyn.n}")
    if U.size % dyn.m != 0 or U.size == 0:
        raise ValueError(f"control stack length {U.size} is not a positive multiple of m={dyn.m}")
    T = U.size // dyn.m
    out = np.empty((T, dyn.n))
    for t in range(T):
        x = dyn.A @ x + dyn.B @ U[t * dyn.m:(t + 1) * dyn.m]
        out[t] = x
    return out


@dataclass(frozen=True)
class HomConstraint:
    """Affine constraint ``c[:n] . x <= d`` stored as ``c = [c[:n], -d]`` so that ``c . [x; 1] <= 0``."""

    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).ravel()
        if c.size < 2:
            raise ValueError("homogeneous constraint needs at least n + 1 = 2 entries")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @classmethod
    def from_affine(cls, normal, rhs) -> "HomConstraint":
        return cls(np.append(np.asarray(normal, dtype=float), -float(rhs)))

    @property
    def n(self) -> int:
        return self.c.size - 1

    @property
    def normal(self) -> np.ndarray:
        return self.c[:-1]

    @property
    def rhs(self) -> float:
        return -float(self.c[-1])

    def is_null(self, tol: float = NULL_TOL) -> bool:
        return float(np.linalg.norm(self.c)) < tol

    def normalized(self) -> "HomConstraint":
        nrm = np.linalg.norm(self.c)
        if nrm == 0.0:
            return self
        return HomConstraint(self.c / nrm)

    def values(self, states) -> np.ndarray:
        """c . [x; 1] for each row of ``states`` (plain or already augmented)."""
        S = np.atleast_2d(np.asarray(states, dtype=float))
        if S.shape[1] == self.n:
            S = augment_states(S)
        return S @ self.c

    def __eq__(self, other):
        return isinstance(other, HomConstraint) and np.array_equal(self.c, other.c)

    def __hash__(self):
        return hash(self.c.tobytes())

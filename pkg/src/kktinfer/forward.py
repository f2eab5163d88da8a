"""Forward problem: constrained finite-horizon tracking LQR and demonstration generation."""
from __future__ import annotations

import enum
import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .lin_core import HomConstraint, LinearDynamics, StackedSystem, build_stacked, rollout
from .qp import QpProblem, QpStatus, qp_solve

FEAS_TOL = 1e-8


class InfeasibleStart(ValueError):
    """Initial state violates a ground-truth constraint."""


class InfeasibleProblem(RuntimeError):
    """The forward QP has no feasible control sequence."""


class SamplingBudgetExceeded(RuntimeError):
    pass


class Provenance(str, enum.Enum):
    OPTIMAL = "optimal"
    NOISY = "noisy"
    SUBOPTIMAL = "suboptimal"


@dataclass(frozen=True)
class TaskSpec:
    dyn: LinearDynamics
    T: int
    Q: np.ndarray
    R: np.ndarray
    x_track: np.ndarray
    x0_mean: np.ndarray
    x0_sigma: float
    constraints: tuple[HomConstraint, ...] = ()

    def __post_init__(self):
        n, m = self.dyn.n, self.dyn.m
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        X = np.asarray(self.x_track, dtype=float).reshape(-1, n) if np.size(self.x_track) else np.zeros((0, n))
        if self.T < 1:
            raise ValueError("horizon T must be >= 1")
        if Q.shape != (n, n) or not np.allclose(Q, Q.T):
            raise ValueError(f"Q must be symmetric {n}x{n}")
        if np.linalg.eigvalsh(Q)[0] < -1e-12 * max(1.0, np.abs(Q).max()):
            raise ValueError("Q must be positive semidefinite")
        if R.shape != (m, m) or not np.allclose(R, R.T):
            raise ValueError(f"R must be symmetric {m}x{m}")
        if np.linalg.eigvalsh(R)[0] <= 0:
            raise ValueError("R must be positive definite")
        if X.shape != (self.T, n):
            raise ValueError(f"x_track must have {self.T} points of dimension {n}, got {X.shape}")
        x0 = np.asarray(self.x0_mean, dtype=float).ravel()
        if x0.size != n:
            raise ValueError(f"x0_mean has length {x0.size}, expected {n}")
        if self.x0_sigma < 0:
            raise ValueError("x0_sigma must be nonnegative")
        cons = tuple(c if isinstance(c, HomConstraint) else HomConstraint(c) for c in self.constraints)
        for c in cons:
            if c.n != n:
                raise ValueError(f"constraint has {c.c.size} entries, expected {n + 1}")
        for name, val in (("Q", Q), ("R", R), ("x_track", X), ("x0_mean", x0)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "x0_sigma", float(self.x0_sigma))
        object.__setattr__(self, "constraints", cons)

    @property
    def n(self) -> int:
        return self.dyn.n

    @property
    def m(self) -> int:
        return self.dyn.m

    def stacked(self) -> StackedSystem:
        return build_stacked(self.dyn, self.T)

    def with_constraints(self, constraints) -> "TaskSpec":
        return TaskSpec(self.dyn, self.T, self.Q, self.R, self.x_track, self.x0_mean, self.x0_sigma,
                        tuple(constraints))

    def is_feasible_state(self, x, tol: float = 0.0) -> bool:
        return all(float(c.values(np.asarray(x, dtype=float)[None])[0]) <= tol for c in self.constraints)

    def canonical(self) -> dict:
        return {
            "A": self.dyn.A.tolist(), "B": self.dyn.B.tolist(), "T": self.T,
            "Q": self.Q.tolist(), "R": self.R.tolist(), "x_track": self.x_track.tolist(),
            "x0_mean": self.x0_mean.tolist(), "x0_sigma": self.x0_sigma,
            "constraints": [c.c.tolist() for c in self.constraints],
        }

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Demonstration:
    x0: np.ndarray
    states: np.ndarray  # (T, n): x_1 .. x_T
    controls: np.ndarray  # (T, m): u_0 .. u_{T-1}
    provenance: Provenance = Provenance.OPTIMAL
    noise_sigma: float = 0.0
    # forward-solver multipliers, ordered constraint-major; only for optimal demos
    duals: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float).ravel()
        X = np.atleast_2d(np.asarray(self.states, dtype=float))
        U = np.asarray(self.controls, dtype=float)
        U = U.reshape(X.shape[0], -1)
        if X.shape[1] != x0.size:
            raise ValueError("state dimension mismatch between x0 and states")
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "states", X)
        object.__setattr__(self, "controls", U)
        object.__setattr__(self, "provenance", Provenance(self.provenance))

    @property
    def T(self) -> int:
        return self.states.shape[0]

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def m(self) -> int:
        return self.controls.shape[1]

    @property
    def U(self) -> np.ndarray:
        return self.controls.ravel()

    def all_states(self) -> np.ndarray:
        """x_0 .. x_T as a (T + 1, n) array."""
        return np.vstack([self.x0, self.states])


@dataclass(frozen=True)
class MismatchModel:
    delta_A: np.ndarray
    delta_B: np.ndarray
    waypoint_iters: int = 5
    gain: float = 1.0

    def __post_init__(self):
        if self.waypoint_iters < 1:
            raise ValueError("waypoint_iters must be >= 1")
        if self.gain <= 0:
            raise ValueError("gain must be positive")
        object.__setattr__(self, "delta_A", np.atleast_2d(np.asarray(self.delta_A, dtype=float)))
        object.__setattr__(self, "delta_B", np.atleast_2d(np.asarray(self.delta_B, dtype=float)))

    @classmethod
    def random(cls, n: int, m: int, scale: float, seed, waypoint_iters: int = 5,
               gain: float = 1.0) -> "MismatchModel":
        """Entries drawn uniformly from [-scale, scale]."""
        rng = np.random.default_rng(seed)
        return cls(scale * rng.uniform(-1, 1, (n, n)), scale * rng.uniform(-1, 1, (n, m)),
                   waypoint_iters, gain)


def fcp_qp(task: TaskSpec, x0, constraints=None) -> QpProblem:
    """The condensed forward problem in ``1/2 U'PU + q'U`` form."""
    sys_ = task.stacked()
    G, H = sys_.G, sys_.H
    T, n, m = task.T, task.n, task.m
    Qbar = np.kron(np.eye(T), task.Q)
    Rbar = np.kron(np.eye(T), task.R)
    x0 = np.asarray(x0, dtype=float)
    free = H @ x0 - task.x_track.ravel()
    P = 2.0 * (G.T @ Qbar @ G + Rbar)
    q = 2.0 * G.T @ Qbar @ free
    cons = task.constraints if constraints is None else constraints
    rows, rhs = [], []
    for c in cons:
        normal, off = c.normal, c.c[-1]
        for t in range(T):
            Gt, Ht = sys_.block(t)
            rows.append(normal @ Gt)
            rhs.append(-(normal @ Ht @ x0) - off)
    A = np.array(rows).reshape(len(rows), m * T) if rows else None
    b = np.array(rhs) if rows else None
    return QpProblem(P=P, q=q, Aineq=A, bineq=b)


def tracking_cost(task: TaskSpec, demo: Demonstration) -> float:
    err = demo.states - task.x_track
    return float(np.einsum("ti,ij,tj->", err, task.Q, err)
                 + np.einsum("ti,ij,tj->", demo.controls, task.R, demo.controls))


def solve_fcp(task: TaskSpec, x0, tol: float = 1e-10) -> Demonstration:
    """Optimal demonstration from ``x0`` under the task's ground-truth constraints."""
    x0 = np.asarray(x0, dtype=float).ravel()
    if not task.is_feasible_state(x0, FEAS_TOL):
        raise InfeasibleStart(f"initial state {x0.tolist()} violates a ground-truth constraint")
    sol = qp_solve(fcp_qp(task, x0), tol=tol)
    if sol.status is QpStatus.INFEASIBLE:
        raise InfeasibleProblem("no control sequence satisfies the constraints")
    if sol.status is not QpStatus.OPTIMAL:
        raise InfeasibleProblem(f"forward QP did not converge (status {sol.status.value})")
    U = sol.z
    states = rollout(task.dyn, x0, U)
    return Demonstration(x0=x0, states=states, controls=U.reshape(task.T, task.m),
                         provenance=Provenance.OPTIMAL, duals=sol.duals)


def demo_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per (seed, demo index)."""
    return np.random.default_rng([int(seed), int(index)])


def sample_start(task: TaskSpec, rng: np.random.Generator, max_attempts: int = 1000) -> np.ndarray:
    for _ in range(max_attempts):
        x0 = task.x0_mean + task.x0_sigma * rng.standard_normal(task.n)
        if task.is_feasible_state(x0):
            return x0
    raise SamplingBudgetExceeded(f"no feasible initial state after {max_attempts} draws")


def add_observation_noise(demo: Demonstration, sigma: float, rng: np.random.Generator) -> Demonstration:
    """Perturb x_1..x_T; x_0 and controls stay exact."""
    if sigma <= 0:
        return demo
    noisy = demo.states + sigma * rng.standard_normal(demo.states.shape)
    return Demonstration(x0=demo.x0, states=noisy, controls=demo.controls,
                         provenance=Provenance.NOISY, noise_sigma=sigma)


def generate_demos(task: TaskSpec, N: int, noise_sigma: float = 0.0, seed: int = 0,
                   max_attempts: int = 1000) -> list[Demonstration]:
    """N demonstrations from independent feasible starts, optionally with observation noise."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be nonnegative")
    return [_one_demo(task, noise_sigma, seed, i, max_attempts) for i in range(N)]


def _one_demo(task, noise_sigma, seed, index, max_attempts):
    rng = demo_rng(seed, index)
    for _ in range(max_attempts):
        x0 = sample_start(task, rng, max_attempts)
        try:
            demo = solve_fcp(task, x0)
        except InfeasibleProblem:
            continue
        return add_observation_noise(demo, noise_sigma, rng)
    raise SamplingBudgetExceeded(f"demo {index}: no start with a feasible forward problem")


def rollout_suboptimal(task: TaskSpec, x0, mismatch: MismatchModel, seed: int | None = None) -> Demonstration:
    """Closed-loop waypoint tracking of the nominal optimum on the perturbed system.

    ``seed`` is accepted for interface symmetry; the rollout itself is
    deterministic once the mismatch model is fixed.
    """
    nominal = solve_fcp(task, x0)
    A_true = task.dyn.A + mismatch.delta_A
    B_true = task.dyn.B + mismatch.delta_B
    Binv = np.linalg.pinv(task.dyn.B)
    x = nominal.x0.copy()
    states = np.empty_like(nominal.states)
    controls = np.empty_like(nominal.controls)
    for t, w in enumerate(nominal.states):
        applied = np.zeros(task.m)
        for _ in range(mismatch.waypoint_iters):
            u = mismatch.gain * Binv @ (w - x)
            x = A_true @ x + B_true @ u
            applied += u
        states[t] = x
        controls[t] = applied
    return Demonstration(x0=nominal.x0, states=states, controls=controls,
                         provenance=Provenance.SUBOPTIMAL)


def generate_suboptimal(task: TaskSpec, N: int, mismatch: MismatchModel, seed: int = 0,
                        max_attempts: int = 1000) -> list[Demonstration]:
    demos = []
    for i in range(N):
        rng = demo_rng(seed, i)
        x0 = sample_start(task, rng, max_attempts)
        demos.append(rollout_suboptimal(task, x0, mismatch))
    return demos

"""Built-in benchmark scenarios and strict JSON scenario configs."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .forward import MismatchModel, TaskSpec, solve_fcp
from .inverse.greedy import AltParams
from .inverse.kkt import RegWeights
from .lin_core import HomConstraint, LinearDynamics
from .metrics import BoundingBox

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """A scenario config is malformed or has unknown fields."""


@dataclass(frozen=True)
class NoiseSettings:
    # the level is read as a variance unless noise_param_is_variance is false
    level: float = 0.0
    noise_param_is_variance: bool = True

    @property
    def sigma(self) -> float:
        if self.level < 0:
            raise ConfigError("noise level must be nonnegative")
        return float(np.sqrt(self.level)) if self.noise_param_is_variance else float(self.level)


@dataclass(frozen=True)
class MismatchSettings:
    scale: float = 0.0
    waypoint_iters: int = 5
    gain: float = 1.0

    def model(self, n: int, m: int, seed) -> MismatchModel:
        return MismatchModel.random(n, m, self.scale, seed, self.waypoint_iters, self.gain)


@dataclass(frozen=True)
class InferenceSettings:
    rho1: float = 10.0
    rho2: float = 0.0
    rho2_floor: float = 1e-8
    delta: float = 1.0
    obj_thr: float = 1.0
    K_max: int = 200
    inner_tol: float = 1e-8
    n_starts: int = 10
    max_constraints: int | None = None
    # where the KKT data takes demonstration states from: "model" or "observed"
    kkt_states: str = "model"

    def __post_init__(self):
        if self.kkt_states not in ("model", "observed"):
            raise ConfigError(f"inference.kkt_states must be 'model' or 'observed', not {self.kkt_states!r}")

    def weights(self) -> RegWeights:
        return RegWeights(self.rho1, self.rho2, self.rho2_floor)

    def alt_params(self) -> AltParams:
        return AltParams(self.K_max, self.inner_tol, self.n_starts)


@dataclass(frozen=True)
class MetricSettings:
    box_lo: list[float] = field(default_factory=list)
    box_hi: list[float] = field(default_factory=list)
    n_samples: int = 100_000
    box_source: str = ""

    def box(self) -> BoundingBox:
        return BoundingBox(np.array(self.box_lo), np.array(self.box_hi))


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    A: list[list[float]]
    B: list[list[float]]
    T: int
    Q: list[list[float]]
    R: list[list[float]]
    x_track: list[list[float]]
    x0_mean: list[float]
    x0_sigma: float
    constraints: list[list[float]]
    constraints_source: str = "given"
    n_demos: int = 10
    seed: int = 0
    noise: NoiseSettings = NoiseSettings()
    mismatch: MismatchSettings = MismatchSettings()
    inference: InferenceSettings = InferenceSettings()
    metrics: MetricSettings = MetricSettings()
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        self.task()  # re-checks every TaskSpec invariant

    def task(self) -> TaskSpec:
        dyn = LinearDynamics(np.array(self.A, dtype=float), np.array(self.B, dtype=float))
        cons = tuple(HomConstraint(np.array(c, dtype=float)) for c in self.constraints)
        return TaskSpec(dyn, self.T, np.array(self.Q), np.array(self.R), np.array(self.x_track),
                        np.array(self.x0_mean), self.x0_sigma, cons)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def replace(self, **changes) -> "ScenarioConfig":
        d = self.to_dict()
        for key, val in changes.items():
            if key in ("noise", "mismatch", "inference", "metrics"):
                d[key].update(val)
            else:
                d[key] = val
        return from_dict(d)


_NESTED = {"noise": NoiseSettings, "mismatch": MismatchSettings,
           "inference": InferenceSettings, "metrics": MetricSettings}


def _strict(cls, data: dict, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object")
    known = {f.name for f in fields(cls)}
    extra = sorted(set(data) - known)
    if extra:
        raise ConfigError(f"{where}: unknown field(s) {extra}")
    return data


def from_dict(data: dict) -> ScenarioConfig:
    data = dict(_strict(ScenarioConfig, data, "scenario"))
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}")
    for key, cls in _NESTED.items():
        if key in data:
            data[key] = cls(**_strict(cls, data[key], key))
    try:
        return ScenarioConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def from_json(text: str) -> ScenarioConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from None
    return from_dict(data)


def load(path) -> ScenarioConfig:
    return from_json(Path(path).read_text())


def save(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(cfg.to_json())


NAV2D_TRACK = [[0.0, -5.5], [-0.6, -4.5], [-1.5, -3.8], [-1.5, -3.5],
               [-1.6, -2.5], [-0.2, -2.0], [0.5, -2.0], [0.8, -1.5]]

FETCH3D_TRACK = [[0.95, 1.0, 0.8], [0.9, 1.0, 0.8], [0.85, 1.0, 0.8], [0.8, 1.1, 0.9],
                 [0.9, 1.15, 0.9], [0.95, 1.2, 0.9], [1.0, 1.25, 0.9], [1.1, 1.3, 0.9]]


def nav2d_constraints() -> list[HomConstraint]:
    """Reconstructed pair: a left wall x1 >= -1.35 and a tilted upper wall.

    The second constraint is ``-x1/2 + (sqrt(3)/2) x2 <= -0.7``.  Both bind
    on the nominal optimum from ``x0_mean``.
    """
    return [HomConstraint.from_affine([-1.0, 0.0], 1.35),
            HomConstraint.from_affine([-0.5, np.sqrt(3.0) / 2.0], -0.7)]


def scenario_nav2d() -> ScenarioConfig:
    cons = nav2d_constraints()
    base = ScenarioConfig(
        name="nav2d", A=[[0.8, 0.1], [0.1, 0.8]], B=[[0.1], [0.5]], T=8,
        Q=(100.0 * np.eye(2)).tolist(), R=[[0.1]], x_track=NAV2D_TRACK, x0_mean=[-0.5, -5.5],
        x0_sigma=0.05, constraints=[c.c.tolist() for c in cons], constraints_source="reconstructed",
        noise=NoiseSettings(0.0), inference=InferenceSettings(delta=1.0, obj_thr=1.0),
        metrics=MetricSettings([-1.0, -1.0], [1.0, 1.0]),
    )
    nominal = solve_fcp(base.task(), base.task().x0_mean)
    box = BoundingBox.around(nominal.all_states(), inflate=0.5)
    return base.replace(metrics={"box_lo": box.lo.tolist(), "box_hi": box.hi.tolist(),
                                 "box_source": "nominal-hull x1.5"})


def scenario_fetch3d() -> ScenarioConfig:
    return ScenarioConfig(
        name="fetch3d", A=np.eye(3).tolist(), B=np.eye(3).tolist(), T=8,
        Q=(10.0 * np.eye(3)).tolist(), R=(10.0 * np.eye(3)).tolist(), x_track=FETCH3D_TRACK,
        x0_mean=[1.0, 1.0, 0.8], x0_sigma=0.05,
        constraints=[[0.0, 1.0, 0.0, -1.1], [-1.0, 0.0, 0.0, 0.9]], constraints_source="given",
        mismatch=MismatchSettings(scale=0.05), inference=InferenceSettings(delta=0.5, obj_thr=0.5),
        metrics=MetricSettings([0.4] * 3, [1.4] * 3, box_source="given"),
    )


def _unconstrained_states(task: TaskSpec) -> np.ndarray:
    return solve_fcp(task.with_constraints(()), task.x0_mean).all_states()


def scenario_synthetic(n: int = 2, m: int = 1, T: int = 8, M: int = 1, seed: int = 0,
                       budget: int = 100) -> ScenarioConfig:
    """Random stable system with ``M`` constraints that the unconstrained optimum violates.

    Raises
    ------
    ConfigError
        If no admissible constraint placement is found within ``budget`` draws.
    """
    rng = np.random.default_rng([seed, n, m, T, M])
    A = rng.standard_normal((n, n))
    radius = np.abs(np.linalg.eigvals(A)).max()
    if radius > 0.95:
        A *= 0.95 / radius
    B = rng.standard_normal((n, m))
    x0 = rng.standard_normal(n)
    track = x0 + np.cumsum(0.5 * rng.standard_normal((T, n)), axis=0)
    base = dict(name=f"synthetic-n{n}-m{m}-T{T}-M{M}-s{seed}", A=A.tolist(), B=B.tolist(), T=T,
                Q=(10.0 * np.eye(n)).tolist(), R=(0.1 * np.eye(m)).tolist(), x_track=track.tolist(),
                x0_mean=x0.tolist(), x0_sigma=0.05, constraints=[], constraints_source="synthetic",
                seed=seed)
    free = ScenarioConfig(**base)
    if M == 0:
        return _with_box(free)
    S = _unconstrained_states(free.task())
    for _ in range(budget):
        cons = []
        for _ in range(M):
            normal = rng.standard_normal(n)
            normal /= np.linalg.norm(normal)
            proj = S @ normal
            reach = proj.max() - proj[0]
            # keep the start well inside and the cut well short of the trajectory's extreme
            if reach <= 6.0 * base["x0_sigma"]:
                break
            rhs = proj[0] + reach * rng.uniform(0.3, 0.8)
            cons.append(HomConstraint.from_affine(normal, rhs).c.tolist())
        if len(cons) < M:
            continue
        cfg = ScenarioConfig(**{**base, "constraints": cons})
        task = cfg.task()
        if not task.is_feasible_state(task.x0_mean, -1e-6):
            continue
        try:
            solve_fcp(task, task.x0_mean)
        except (RuntimeError, ValueError):
            continue
        return _with_box(cfg)
    raise ConfigError(f"no admissible constraint placement after {budget} draws")


def _with_box(cfg: ScenarioConfig) -> ScenarioConfig:
    box = BoundingBox.around(_unconstrained_states(cfg.task()), inflate=0.5)
    return cfg.replace(metrics={"box_lo": box.lo.tolist(), "box_hi": box.hi.tolist(),
                                "box_source": "unconstrained-hull x1.5"})


BUILTIN = {"nav2d": scenario_nav2d, "fetch3d": scenario_fetch3d}


def get_scenario(name_or_path: str) -> ScenarioConfig:
    """Built-in scenario by name, or a JSON config file path."""
    if name_or_path in BUILTIN:
        return BUILTIN[name_or_path]()
    path = Path(name_or_path)
    if not path.exists():
        raise ConfigError(f"unknown scenario {name_or_path!r}; built-ins are {sorted(BUILTIN)}")
    return load(path)

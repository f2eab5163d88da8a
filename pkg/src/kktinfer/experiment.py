"""Per-seed pipeline shared by the command line and the test-suite."""
from __future__ import annotations

import numpy as np

from .forward import Demonstration, Provenance, generate_demos, generate_suboptimal
from .inverse.exact import detect_hyperplanes
from .inverse.greedy import InferenceResult, cgci, igci
from .inverse.kkt import build_kkt_data, demo_states, kkt_residual, lambda_step
from .metrics import RegionScore, region_score, violation_rate
from .scenarios import ScenarioConfig

METHODS = ("igci", "cgci", "exact")
KINDS = ("optimal", "noisy", "suboptimal")


def data_kind(cfg: ScenarioConfig, suboptimal: bool = False) -> str:
    if suboptimal:
        return "suboptimal"
    return "noisy" if cfg.noise.sigma > 0 else "optimal"


def data_tag(cfg: ScenarioConfig, suboptimal: bool = False) -> str:
    """Directory name for one dataset family, e.g. ``N10-noise0.005``."""
    kind = data_kind(cfg, suboptimal)
    if kind == "suboptimal":
        return f"N{cfg.n_demos}-mismatch{cfg.mismatch.scale:g}"
    if kind == "noisy":
        return f"N{cfg.n_demos}-noise{cfg.noise.level:g}"
    return f"N{cfg.n_demos}-clean"


def make_demos(cfg: ScenarioConfig, seed: int, suboptimal: bool = False) -> list[Demonstration]:
    task = cfg.task()
    if suboptimal:
        mm = cfg.mismatch.model(task.n, task.m, seed)
        return generate_suboptimal(task, cfg.n_demos, mm, seed)
    return generate_demos(task, cfg.n_demos, cfg.noise.sigma, seed)


def reference_demos(cfg: ScenarioConfig, seed: int) -> list[Demonstration]:
    """Optimal demonstrations from the same starts the seed's dataset used."""
    return generate_demos(cfg.task(), cfg.n_demos, 0.0, seed)


def infer(cfg: ScenarioConfig, demos, method: str, seed: int) -> InferenceResult:
    task = cfg.task()
    inf = cfg.inference
    kkt = build_kkt_data(task, demos, inf.kkt_states)
    w = inf.weights()
    max_c = inf.max_constraints if inf.max_constraints is not None else task.n + 2
    if method == "igci":
        res = igci(kkt, w, inf.delta, max_constraints=max_c, alt_params=inf.alt_params(), seed=seed)
    elif method == "cgci":
        res = cgci(kkt, w, inf.obj_thr, max_constraints=max_c, alt_params=inf.alt_params(), seed=seed)
    elif method == "exact":
        X = demo_states(task, demos, inf.kkt_states)
        states = np.vstack([np.vstack([d.x0, Xi]) for d, Xi in zip(demos, X)])
        cs = detect_hyperplanes(states, max_c, seed=seed)
        lam = lambda_step(kkt, cs, w) if cs else np.zeros(0)
        ell = kkt_residual(kkt, cs, lam, w) if cs else float(np.sum(kkt.A1 ** 2))
        res = InferenceResult(cs, lam, [ell], [[ell]],
                              {"method": "exact", "mode": "exact+detected", "seed": seed,
                               "max_constraints": max_c, "rho1": w.rho1, "rho2": w.rho2})
    else:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    res.config["scenario"] = cfg.name
    res.config["n_demos"] = len(demos)
    res.config["kkt_states"] = inf.kkt_states
    return res


def score(cfg: ScenarioConfig, res: InferenceResult, seed: int,
          reference: list[Demonstration] | None = None) -> tuple[RegionScore, float]:
    """Region score against the truth and violation rate on optimal demonstrations."""
    task = cfg.task()
    sc = region_score(task.constraints, res.constraints, cfg.metrics.box(), cfg.metrics.n_samples, seed)
    ref = reference if reference is not None else reference_demos(cfg, seed)
    ref = [d for d in ref if d.provenance is Provenance.OPTIMAL]
    return sc, violation_rate(res.active_constraints(), ref)


def run_seed(cfg: ScenarioConfig, seed: int, method: str = "igci", suboptimal: bool = False) -> dict:
    """Generate, infer and score one seed; returns a flat summary row."""
    demos = make_demos(cfg, seed, suboptimal)
    res = infer(cfg, demos, method, seed)
    sc, vr = score(cfg, res, seed)
    return {"seed": seed, "result": res, "demos": demos, "score": sc, "violation_rate": vr,
            "n_constraints": len(res.active_constraints())}

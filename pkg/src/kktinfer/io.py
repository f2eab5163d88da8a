"""JSON and CSV serialization of datasets, inference results and scores."""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .forward import Demonstration, Provenance
from .inverse.greedy import InferenceResult
from .lin_core import HomConstraint


def dump_json(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2) + "\n")


def read_json(path) -> dict:
    return json.loads(Path(path).read_text())


def dataset_to_dict(demos, task_hash: str, seed: int) -> dict:
    demos = list(demos)
    provs = sorted({d.provenance.value for d in demos})
    return {
        "task_hash": task_hash,
        "seed": int(seed),
        "provenance": provs[0] if len(provs) == 1 else provs,
        "demos": [{"x0": d.x0.tolist(), "states": d.states.tolist(), "controls": d.controls.tolist(),
                   "provenance": d.provenance.value, "noise_sigma": d.noise_sigma} for d in demos],
    }


def dataset_from_dict(data: dict) -> tuple[list[Demonstration], str, int]:
    demos = []
    for i, d in enumerate(data["demos"]):
        try:
            demos.append(Demonstration(x0=np.array(d["x0"], dtype=float),
                                       states=np.array(d["states"], dtype=float),
                                       controls=np.array(d["controls"], dtype=float),
                                       provenance=Provenance(d.get("provenance", "optimal")),
                                       noise_sigma=float(d.get("noise_sigma", 0.0))))
        except (KeyError, ValueError) as exc:
            raise ValueError(f"demo {i}: {exc}") from None
    return demos, data["task_hash"], int(data["seed"])


def write_dataset(path, demos, task_hash: str, seed: int) -> None:
    dump_json(dataset_to_dict(demos, task_hash, seed), path)


def read_dataset(path) -> tuple[list[Demonstration], str, int]:
    return dataset_from_dict(read_json(path))


def write_trajectory_csv(path, demos) -> None:
    """One row per (demo, t) for t = 0..T; the control column is empty at t = T."""
    demos = list(demos)
    n, m = demos[0].n, demos[0].m
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["demo", "t", "provenance"] + [f"x{k}" for k in range(n)] + [f"u{k}" for k in range(m)])
        for i, d in enumerate(demos):
            X = d.all_states()
            for t in range(d.T + 1):
                u = d.controls[t].tolist() if t < d.T else [""] * m
                w.writerow([i, t, d.provenance.value] + X[t].tolist() + u)


def result_to_dict(res: InferenceResult) -> dict:
    return {
        "constraints": [c.c.tolist() for c in res.constraints],
        "constraints_normalized": [c.normalized().c.tolist() if not c.is_null() else c.c.tolist()
                                   for c in res.constraints],
        "degenerate": res.degenerate(),
        "lambda": np.asarray(res.lam, dtype=float).tolist(),
        "residual_history": [float(v) for v in res.residual_history],
        "alt_history": [[float(v) for v in h] for h in res.alt_history],
        "config": res.config,
    }


def result_from_dict(data: dict) -> InferenceResult:
    cs = [HomConstraint(np.array(c, dtype=float)) for c in data["constraints"]]
    return InferenceResult(cs, np.array(data["lambda"], dtype=float), list(data["residual_history"]),
                           [list(h) for h in data["alt_history"]], dict(data.get("config", {})))


def write_result(path, res: InferenceResult) -> None:
    dump_json(result_to_dict(res), path)


def read_result(path) -> InferenceResult:
    return result_from_dict(read_json(path))


def write_residual_csv(path, res: InferenceResult, n_demos: int) -> None:
    """Alternation residuals, raw and divided by the number of demonstrations."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["outer", "iteration", "residual", "residual_per_demo"])
        for k, hist in enumerate(res.alt_history, start=1):
            for j, v in enumerate(hist, start=1):
                w.writerow([k, j, repr(float(v)), repr(float(v) / n_demos)])


SCORE_COLUMNS = ["scenario", "N_demos", "noise", "provenance", "method", "seed", "n_constraints",
                 "coverage", "overlap", "coverage_se", "overlap_se", "violation_rate", "n_samples",
                 "box_source"]


def upsert_rows(path, columns, rows, key) -> None:
    """Merge rows into a CSV, replacing existing rows with the same key columns."""
    path = Path(path)
    existing = read_rows(path) if path.exists() and path.stat().st_size else []
    merged = {tuple(str(r[k]) for k in key): r for r in existing}
    for r in rows:
        merged[tuple(str(r[k]) for k in key)] = r
    write_rows(path, columns, merged.values())


def write_rows(path, columns, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def read_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))

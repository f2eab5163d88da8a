"""Command-line driver: generate | infer | evaluate | report.

Output layout under ``--out``::

    <scenario>/<datatag>/seed<k>/dataset.json, trajectories.csv, manifest.json
    <scenario>/<datatag>/<method>/seed<k>/result.json, residuals.csv, scores.csv, manifest.json
    results.csv                      cumulative score rows (one per evaluate call and seed)
    report/coverage_by_N.csv         coverage/overlap mean and stderr per group
    report/residual_<...>.csv        mean residual per alternating iteration, per group

Exit codes: 0 success, 2 bad arguments, 3 infeasible or degenerate numerical
outcome, 4 IO failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import io as kio
from .experiment import METHODS, data_kind, data_tag, infer, make_demos, reference_demos, score
from .forward import InfeasibleProblem, InfeasibleStart, SamplingBudgetExceeded
from .inverse.exact import RankDeficient, SignAmbiguous
from .metrics import EmptyDenominator
from .qp import QpInfeasible
from .scenarios import ConfigError, ScenarioConfig, get_scenario

log = logging.getLogger("kktinfer")

EXIT_OK, EXIT_ARGS, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

NUMERIC_ERRORS = (QpInfeasible, InfeasibleProblem, InfeasibleStart, SamplingBudgetExceeded,
                  EmptyDenominator, RankDeficient, SignAmbiguous, np.linalg.LinAlgError)

COVERAGE_COLUMNS = ["scenario", "provenance", "noise", "method", "N_demos", "n_seeds",
                    "coverage_mean", "coverage_se", "overlap_mean", "overlap_se",
                    "n_constraints_mean", "violation_rate_max"]
RESIDUAL_COLUMNS = ["iteration", "residual_per_demo_mean", "residual_per_demo_se", "n_runs"]
RESULTS_COLUMNS = kio.SCORE_COLUMNS + ["result_dir"]
RESULT_KEY = ("scenario", "N_demos", "noise", "provenance", "method", "seed")


class UsageError(ValueError):
    pass


def parse_seeds(text: str) -> list[int]:
    """``7``, ``0-9`` or ``1,3,5`` (items may mix)."""
    seeds: list[int] = []
    try:
        for part in text.split(","):
            if "-" in part:
                lo, hi = (int(v) for v in part.split("-", 1))
                if hi < lo:
                    raise ValueError
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None
    return seeds


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--scenario", default="nav2d", help="built-in name (nav2d, fetch3d) or config JSON path")
    g.add_argument("--seed", type=parse_seeds, default=[0], help="seed, range a-b or comma list")
    g.add_argument("--jobs", type=_positive_int, default=1, help="worker processes for seed sweeps")
    g.add_argument("--out", default="runs", help="output root directory")
    d = common.add_argument_group("data")
    d.add_argument("--n", type=_positive_int, help="number of demonstrations")
    d.add_argument("--noise", type=float, help="observation noise level (variance unless the config says otherwise)")
    d.add_argument("--suboptimal", action="store_true", help="closed-loop rollouts on perturbed dynamics")
    d.add_argument("--mismatch-scale", type=float, help="entry bound of the random dynamics perturbation")
    h = common.add_argument_group("inference")
    h.add_argument("--method", choices=METHODS, default="igci")
    h.add_argument("--rho1", type=float)
    h.add_argument("--rho2", type=float)
    h.add_argument("--delta", type=float, help="IGCI stopping threshold")
    h.add_argument("--obj-thr", type=float, help="CGCI stopping threshold")
    h.add_argument("--kmax", type=_positive_int, help="alternation iteration cap")
    h.add_argument("--inner-tol", type=float)
    h.add_argument("--n-starts", type=_positive_int, help="random restarts per alternation")
    h.add_argument("--max-constraints", type=_positive_int)
    h.add_argument("--kkt-states", choices=("model", "observed"),
                   help="states in the KKT data: rebuilt from controls (model) or as recorded")
    h.add_argument("--nsamples", type=_positive_int, help="Monte-Carlo samples for region scores")

    p = argparse.ArgumentParser(prog="kktinfer", description="Infer affine state constraints from "
                                "constrained LQR demonstrations by KKT residual minimization.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--manifest", help="replay the run recorded in a manifest.json")
    p.add_argument("--replay-out", help="with --manifest: write the replay under this root instead")
    sub = p.add_subparsers(dest="command")
    sub.add_parser("generate", parents=[common], help="write demonstration datasets")
    sub.add_parser("infer", parents=[common], help="run inference (generates missing datasets)")
    sub.add_parser("evaluate", parents=[common], help="score inferred constraints; append results.csv")
    rep = sub.add_parser("report", parents=[common], help="aggregate results.csv into plot-ready CSVs",
                         description="Writes report/coverage_by_N.csv with columns "
                         + ", ".join(COVERAGE_COLUMNS) + " and one report/residual_<group>.csv per "
                         "(scenario, provenance, noise, method, N) with columns "
                         + ", ".join(RESIDUAL_COLUMNS) + ".")
    rep.add_argument("--results", help="results CSV (default <out>/results.csv)")
    return p


def resolve_config(args) -> ScenarioConfig:
    cfg = get_scenario(args.scenario)
    top, noise, mism, inf, met = {}, {}, {}, {}, {}
    if args.n is not None:
        top["n_demos"] = args.n
    if args.noise is not None:
        if args.noise < 0:
            raise UsageError("--noise must be nonnegative")
        noise["level"] = args.noise
    if args.mismatch_scale is not None:
        mism["scale"] = args.mismatch_scale
    for flag, key in (("rho1", "rho1"), ("rho2", "rho2"), ("delta", "delta"), ("obj_thr", "obj_thr"),
                      ("kmax", "K_max"), ("inner_tol", "inner_tol"), ("n_starts", "n_starts"),
                      ("max_constraints", "max_constraints"), ("kkt_states", "kkt_states")):
        val = getattr(args, flag)
        if val is not None:
            inf[key] = val
    if args.nsamples is not None:
        met["n_samples"] = args.nsamples
    if inf.get("delta", 1.0) <= 0 or inf.get("obj_thr", 1.0) <= 0:
        raise UsageError("--delta and --obj-thr must be positive")
    if inf.get("rho1", 1.0) < 0 or inf.get("rho2", 0.0) < 0:
        raise UsageError("--rho1 and --rho2 must be nonnegative")
    return cfg.replace(**top, noise=noise, mismatch=mism, inference=inf, metrics=met)


def _dataset_dir(out: Path, cfg, sub, seed) -> Path:
    return out / cfg.name / data_tag(cfg, sub) / f"seed{seed}"


def _method_dir(out: Path, cfg, sub, method, seed) -> Path:
    return out / cfg.name / data_tag(cfg, sub) / method / f"seed{seed}"


def _manifest(args, cfg: ScenarioConfig, argv, seed, timings) -> dict:
    return {"tool": "kktinfer", "version": __version__, "argv": _with_flag(argv, "--seed", str(seed)),
            "command": args.command,
            "scenario": args.scenario, "seed": seed, "seeds": args.seed, "out": str(args.out),
            "config": cfg.to_dict(), "wall_clock_s": timings}


def _load_or_make(out, cfg, sub, seed):
    path = _dataset_dir(out, cfg, sub, seed) / "dataset.json"
    if path.exists():
        demos, task_hash, _ = kio.read_dataset(path)
        if task_hash != cfg.task().hash():
            raise UsageError(f"{path} was generated for a different task")
        return demos
    return make_demos(cfg, seed, sub)


def job_generate(args, cfg, argv, seed):
    t0 = time.perf_counter()
    demos = make_demos(cfg, seed, args.suboptimal)
    d = _dataset_dir(Path(args.out), cfg, args.suboptimal, seed)
    kio.write_dataset(d / "dataset.json", demos, cfg.task().hash(), seed)
    kio.write_trajectory_csv(d / "trajectories.csv", demos)
    kio.dump_json(_manifest(args, cfg, argv, seed, {"generate": time.perf_counter() - t0}),
                  d / "manifest.json")
    return []


def job_infer(args, cfg, argv, seed):
    out = Path(args.out)
    t0 = time.perf_counter()
    demos = _load_or_make(out, cfg, args.suboptimal, seed)
    t1 = time.perf_counter()
    res = infer(cfg, demos, args.method, seed)
    t2 = time.perf_counter()
    d = _method_dir(out, cfg, args.suboptimal, args.method, seed)
    kio.write_result(d / "result.json", res)
    kio.write_residual_csv(d / "residuals.csv", res, len(demos))
    kio.dump_json(_manifest(args, cfg, argv, seed, {"data": t1 - t0, "infer": t2 - t1}), d / "manifest.json")
    if not res.active_constraints():
        log.warning("seed %d: every inferred constraint is degenerate", seed)
    return []


def job_evaluate(args, cfg, argv, seed):
    out = Path(args.out)
    d = _method_dir(out, cfg, args.suboptimal, args.method, seed)
    t0 = time.perf_counter()
    res = kio.read_result(d / "result.json")
    sc, vr = score(cfg, res, seed, reference_demos(cfg, seed))
    row = {"scenario": cfg.name, "N_demos": cfg.n_demos, "noise": repr(cfg.noise.level),
           "provenance": data_kind(cfg, args.suboptimal), "method": args.method, "seed": seed,
           "n_constraints": len(res.active_constraints()), "coverage": repr(sc.coverage),
           "overlap": repr(sc.overlap), "coverage_se": repr(sc.coverage_se),
           "overlap_se": repr(sc.overlap_se), "violation_rate": repr(vr), "n_samples": sc.n_samples,
           "box_source": cfg.metrics.box_source}
    kio.write_rows(d / "scores.csv", kio.SCORE_COLUMNS, [row])
    man = kio.read_json(d / "manifest.json") if (d / "manifest.json").exists() else {}
    man.setdefault("wall_clock_s", {})["evaluate"] = time.perf_counter() - t0
    man["evaluate_argv"] = _with_flag(argv, "--seed", str(seed))
    kio.dump_json(man, d / "manifest.json")
    return [{**row, "result_dir": str(d.relative_to(out))}]


JOBS = {"generate": job_generate, "infer": job_infer, "evaluate": job_evaluate}


def _run_job(payload):
    name, args, cfg, argv, seed = payload
    _setup_logging()
    return JOBS[name](args, cfg, argv, seed)


def run_seeds(args, cfg, argv) -> list[dict]:
    payloads = [(args.command, args, cfg, argv, s) for s in args.seed]
    if args.jobs == 1 or len(payloads) == 1:
        results = [_run_job(p) for p in payloads]
    else:
        with ProcessPoolExecutor(max_workers=min(args.jobs, len(payloads))) as pool:
            results = list(pool.map(_run_job, payloads))
    return [row for rows in results for row in rows]


def _mean_se(vals) -> tuple[float, float]:
    v = np.asarray(vals, dtype=float)
    if v.size == 0:
        return float("nan"), float("nan")
    se = float(v.std(ddof=1) / np.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def cmd_report(args) -> int:
    out = Path(args.out)
    src = Path(args.results) if args.results else out / "results.csv"
    rows = kio.read_rows(src) if src.exists() and src.stat().st_size else []
    groups = defaultdict(list)
    for r in rows:
        groups[(r["scenario"], r["provenance"], r["noise"], r["method"], int(r["N_demos"]))].append(r)
    rep = out / "report"
    cov_rows = []
    for key in sorted(groups):
        grp = groups[key]
        cm, cse = _mean_se([float(r["coverage"]) for r in grp])
        om, ose = _mean_se([float(r["overlap"]) for r in grp])
        cov_rows.append(dict(zip(COVERAGE_COLUMNS, [
            *key[:4], key[4], len({r["seed"] for r in grp}), repr(cm), repr(cse), repr(om), repr(ose),
            repr(float(np.mean([int(r["n_constraints"]) for r in grp]))),
            repr(max(float(r["violation_rate"]) for r in grp))])))
        curves = []
        for r in grp:
            rd = out / r["result_dir"] if "result_dir" in r else None
            if rd is None or not (rd / "result.json").exists():
                continue
            hist = [v for h in kio.read_json(rd / "result.json")["alt_history"] for v in h]
            curves.append(np.asarray(hist) / int(r["N_demos"]))
        if curves:
            L = max(len(c) for c in curves)
            M = np.array([np.pad(c, (0, L - len(c)), mode="edge") for c in curves])
            se = M.std(axis=0, ddof=1) / np.sqrt(len(M)) if len(M) > 1 else np.zeros(L)
            tag = "_".join(str(k) for k in key).replace("/", "-")
            kio.write_rows(rep / f"residual_{tag}.csv", RESIDUAL_COLUMNS,
                           [dict(zip(RESIDUAL_COLUMNS, [i + 1, repr(float(M[:, i].mean())), repr(float(se[i])),
                                                        len(M)])) for i in range(L)])
    kio.write_rows(rep / "coverage_by_N.csv", COVERAGE_COLUMNS, cov_rows)
    return EXIT_OK


def _setup_logging() -> None:
    level = os.environ.get("CF_LOG", "error").lower()
    logging.basicConfig(level={"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}.get(
        level, logging.ERROR), format="%(levelname)s %(name)s: %(message)s")


def _with_flag(argv, flag: str, value: str) -> list[str]:
    """Copy of ``argv`` with ``flag`` set to ``value`` (appended if absent)."""
    argv = list(argv)
    for i, tok in enumerate(argv):
        if tok == flag and i + 1 < len(argv):
            argv[i + 1] = value
            return argv
        if tok.startswith(flag + "="):
            argv[i] = f"{flag}={value}"
            return argv
    return argv + [flag, value]


def _replay_argvs(path: str, out: str | None) -> list[list[str]]:
    man = kio.read_json(path)
    argvs = [man[k] for k in ("argv", "evaluate_argv") if man.get(k)]
    if not argvs:
        raise UsageError(f"{path} has no recorded command line")
    return [_with_flag(a, "--out", out) if out else list(a) for a in argvs]


def main(argv=None) -> int:
    _setup_logging()
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.manifest:
            if args.command:
                raise UsageError("--manifest replays a recorded run; do not pass a subcommand")
            code = EXIT_OK
            for rec in _replay_argvs(args.manifest, args.replay_out):
                code = main(rec)
                if code != EXIT_OK:
                    break
            return code
        if not args.command:
            parser.print_help(sys.stderr)
            return EXIT_ARGS
        if args.command == "report":
            return cmd_report(args)
        cfg = resolve_config(args)
        rows = run_seeds(args, cfg, argv)
        if args.command == "evaluate":
            kio.upsert_rows(Path(args.out) / "results.csv", RESULTS_COLUMNS, rows, RESULT_KEY)
            for r in rows:
                print(f"{r['scenario']} seed {r['seed']}: coverage {float(r['coverage']):.4f} "
                      f"overlap {float(r['overlap']):.4f} constraints {r['n_constraints']}")
        return EXIT_OK
    except (UsageError, ConfigError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except NUMERIC_ERRORS as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())

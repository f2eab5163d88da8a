"""The ten acceptance criteria, run end to end through the command line where they involve sweeps."""
import time
from pathlib import Path

import numpy as np
import pytest

from kktinfer.cli import main
from kktinfer.experiment import make_demos
from kktinfer.forward import generate_demos
from kktinfer.inverse.exact import exact_recover
from kktinfer.inverse.greedy import alternate
from kktinfer.inverse.kkt import RegWeights, build_kkt_data, kkt_residual
from kktinfer.io import read_json, read_rows
from kktinfer.lin_core import HomConstraint
from kktinfer.qp import QpProblem, QpStatus, qp_solve
from kktinfer.scenarios import scenario_fetch3d, scenario_nav2d
from oracles import enumerate_qp

SEEDS = "0-9"
NOISE = "0.005"  # read as a variance

# (label, argv) for every sweep the criteria below draw on
RUNS = {
    "nav_clean_10": ["--scenario", "nav2d", "--n", "10"],
    "nav_clean_1": ["--scenario", "nav2d", "--n", "1"],
    "nav_noisy_10": ["--scenario", "nav2d", "--n", "10", "--noise", NOISE],
    "nav_noisy_1": ["--scenario", "nav2d", "--n", "1", "--noise", NOISE],
    "fetch_nominal": ["--scenario", "fetch3d", "--n", "10"],
    "fetch_subopt": ["--scenario", "fetch3d", "--n", "10", "--suboptimal", "--mismatch-scale", "0.05"],
}

# seed-0 scores from the first verified run (nav2d, IGCI, 100000 samples)
PINNED_SEED0 = {
    "nav_clean_1": (1.0, 0.00014134775080391532),
    "nav_noisy_1": (1.0, 0.00014134775080391532),
    "nav_clean_10": (1.0, 0.0),
    "nav_noisy_10": (1.0, 0.0),
}


def sweep(out: Path, jobs: int) -> dict:
    """Infer and evaluate every run; returns rows and results keyed by run label."""
    runs = {}
    for label, argv in RUNS.items():
        root = out / label
        for cmd in ("infer", "evaluate"):
            code = main([cmd, "--out", str(root), "--seed", SEEDS, "--jobs", str(jobs)] + argv)
            assert code == 0, f"{cmd} {label} exited with {code}"
        rows = sorted(read_rows(root / "results.csv"), key=lambda r: int(r["seed"]))
        results = [read_json(root / r["result_dir"] / "result.json") for r in rows]
        manifests = [read_json(root / r["result_dir"] / "manifest.json") for r in rows]
        runs[label] = {"root": root, "rows": rows, "results": results, "manifests": manifests}
    return runs


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    return sweep(tmp_path_factory.mktemp("acceptance-jobs1"), jobs=1)


def col(run, name):
    return np.array([float(r[name]) for r in run["rows"]])


def counts(run):
    return [int(r["n_constraints"]) for r in run["rows"]]


def final_residual_per_demo(run):
    """Terminal value of each seed's alternation curve divided by the number of demonstrations."""
    return np.array([res["alt_history"][-1][-1] / res["config"]["n_demos"] for res in run["results"]])


# --- 1 -----------------------------------------------------------------------

def test_criterion_01_exact_recovery(record_property):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 1.0
    for k in range(100):
        n = 2 + k % 2
        a = rng.standard_normal(n)
        a /= np.linalg.norm(a)
        b = rng.standard_normal()
        truth = HomConstraint.from_affine(a, b).normalized()
        # n independent points on a.x = b, and points strictly inside
        basis = np.linalg.svd(a[None, :])[2][1:]
        on = a * b + rng.standard_normal((n, n - 1)) @ basis
        inside = a * b + rng.standard_normal((5, n - 1)) @ basis - np.outer(rng.uniform(0.1, 2.0, 5), a)
        est = exact_recover(np.hstack([on, np.ones((n, 1))]), np.hstack([inside, np.ones((5, 1))]))
        worst = min(worst, float(est.c @ truth.c))
    elapsed = time.perf_counter() - t0
    record_property("measured", f"min cosine 1-{1 - worst:.1e}, {elapsed:.3f} s")
    assert worst >= 1 - 1e-10
    assert elapsed < 1.0


# --- 2 -----------------------------------------------------------------------

def test_criterion_02_qp_oracle_equivalence(record_property):
    rng = np.random.default_rng(7)
    t0 = time.perf_counter()
    worst_z = worst_f = 0.0
    for _ in range(500):
        d, k = rng.integers(1, 4), rng.integers(0, 5)
        M = rng.standard_normal((d, d))
        P = M @ M.T + 0.1 * np.eye(d)
        q = rng.standard_normal(d)
        A = rng.standard_normal((k, d))
        b = rng.standard_normal(k) + 0.5
        z_ref, f_ref = enumerate_qp(P, q, A, b)
        sol = qp_solve(QpProblem(P, q, A if k else None, b if k else None))
        if z_ref is None:
            assert sol.status is QpStatus.INFEASIBLE
            continue
        f = 0.5 * sol.z @ P @ sol.z + q @ sol.z
        worst_z = max(worst_z, float(np.abs(sol.z - z_ref).max()))
        worst_f = max(worst_f, abs(f - f_ref))
    elapsed = time.perf_counter() - t0
    record_property("measured", f"max argmin err {worst_z:.1e}, max objective err {worst_f:.1e}, {elapsed:.2f} s")
    assert worst_z <= 1e-5 and worst_f <= 1e-6
    assert elapsed < 5.0


# --- 3 -----------------------------------------------------------------------

def test_criterion_03_kkt_fixed_point(record_property):
    task = scenario_nav2d().task()
    demos = generate_demos(task, 10, 0.0, 0)
    kkt = build_kkt_data(task, demos)
    # the forward solver's certificate holds one multiplier vector per demonstration
    lam = np.array([d.duals for d in demos])
    ell = kkt_residual(kkt, list(task.constraints), lam, RegWeights(0.0, 0.0))
    record_property("measured", f"residual {ell:.2e}")
    assert ell <= 1e-6


# --- 4 -----------------------------------------------------------------------

def _perturbation_gap(kkt, c, lam, w):
    """Largest decrease of the residual under feasible +-1e-4 moves of one coordinate of c or lambda."""
    ell = kkt_residual(kkt, [c], lam, w)
    X = kkt.all_states()
    worst = 0.0
    for k in range(c.c.size):
        for e in (1e-4, -1e-4):
            cc = c.c.copy()
            cc[k] += e
            if (X @ cc).max() > 0.0:
                continue
            worst = max(worst, ell - kkt_residual(kkt, [HomConstraint(cc)], lam, w))
    for k in range(lam.size):
        for e in (1e-4, -1e-4):
            ll = lam.copy()
            ll[k] = max(0.0, ll[k] + e)
            worst = max(worst, ell - kkt_residual(kkt, [c], ll, w))
    return worst / max(1.0, ell)


def test_criterion_04_descent(record_property):
    w = RegWeights()
    worst_rise = worst_gap = 0.0
    n_runs = 0
    for make in (scenario_nav2d, scenario_fetch3d):
        task = make().task()
        kkt = build_kkt_data(task, generate_demos(task, 10, 0.0, 0))
        for s in range(25):
            c, lam, hist = alternate(kkt, [], w, seed=s)
            h = np.asarray(hist)
            if h.size > 1:
                worst_rise = max(worst_rise, float(np.max((h[1:] - h[:-1]) / np.maximum(1.0, np.abs(h[:-1])))))
            worst_gap = max(worst_gap, _perturbation_gap(kkt, c, lam, w))
            n_runs += 1
    record_property("measured", f"{n_runs} runs, max relative rise {worst_rise:.1e}, "
                                f"max relative perturbation gain {worst_gap:.1e}")
    assert n_runs == 50
    assert worst_rise <= 1e-10
    assert worst_gap <= 1e-10


# --- 5 -----------------------------------------------------------------------

def test_criterion_05_igci_constraint_count(runs, record_property):
    run = runs["nav_clean_10"]
    n = counts(run)
    elbows = []
    for res in run["results"]:
        h = res["residual_history"]
        elbows.append(len(h) >= 3 and (h[0] - h[1]) >= 10.0 * (h[1] - h[2]))
    secs = [m["wall_clock_s"]["infer"] for m in run["manifests"]]
    record_property("measured", f"counts {n}, elbow in {sum(elbows)}/10 seeds, "
                                f"delta {run['results'][0]['config']['delta']}, max {max(secs):.1f} s/seed")
    assert sum(k == 2 for k in n) >= 9
    assert sum(elbows) >= 9
    assert max(secs) < 30.0


# --- 6 -----------------------------------------------------------------------

def test_criterion_06_coverage_ordering(runs, record_property):
    cov = {k: col(runs[k], "coverage").mean() for k in PINNED_SEED0}
    ovl10 = col(runs["nav_clean_10"], "overlap").mean()
    record_property("measured", "mean coverage clean N1 %.3f N10 %.3f, noisy N1 %.3f N10 %.3f; overlap N10 clean %.4f"
                    % (cov["nav_clean_1"], cov["nav_clean_10"], cov["nav_noisy_1"], cov["nav_noisy_10"], ovl10))
    assert cov["nav_clean_10"] >= cov["nav_clean_1"]
    assert cov["nav_noisy_10"] >= cov["nav_noisy_1"]
    assert ovl10 <= 0.1
    for label, (c0, o0) in PINNED_SEED0.items():
        row = runs[label]["rows"][0]
        assert row["seed"] == "0"
        assert float(row["coverage"]) == pytest.approx(c0, abs=1e-12)
        assert float(row["overlap"]) == pytest.approx(o0, abs=1e-12)


# --- 7 -----------------------------------------------------------------------

def test_criterion_07_noise_robustness(runs, record_property):
    noisy, clean = runs["nav_noisy_10"], runs["nav_clean_10"]
    n = counts(noisy)
    gap = abs(col(noisy, "coverage").mean() - col(clean, "coverage").mean())
    record_property("measured", f"counts {n}, |coverage noisy - clean| {gap:.3f}")
    assert sum(k == 2 for k in n) >= 9
    assert gap <= 0.15


# --- 8 -----------------------------------------------------------------------

def test_criterion_08_suboptimality_robustness(runs, record_property):
    sub, nom = runs["fetch_subopt"], runs["fetch_nominal"]
    n = counts(sub)
    gap = abs(col(sub, "coverage").mean() - col(nom, "coverage").mean())
    r_nom = final_residual_per_demo(nom).mean()
    r_sub = final_residual_per_demo(sub).mean()
    record_property("measured", f"suboptimal counts {n} (nominal {counts(nom)}), coverage suboptimal "
                                f"{col(sub, 'coverage').mean():.3f} vs nominal {col(nom, 'coverage').mean():.3f}, "
                                f"terminal residual/N nominal {r_nom:.3g} vs suboptimal {r_sub:.3g}")
    assert sum(k == 2 for k in n) >= 9
    assert gap <= 0.2
    assert r_nom <= r_sub


# --- 9 -----------------------------------------------------------------------

def test_criterion_09_safety(runs, record_property):
    # violation_rate in results.csv is measured on optimal demonstrations from each seed's starts
    bad = {label: col(run, "violation_rate").max() for label, run in runs.items()}
    record_property("measured", ", ".join(f"{k} {v:.3f}" for k, v in bad.items()))
    assert all(v == 0.0 for v in bad.values())


# --- 10 ----------------------------------------------------------------------

def test_criterion_10_reproducibility(runs, tmp_path_factory, record_property):
    other = sweep(tmp_path_factory.mktemp("acceptance-jobs8"), jobs=8)
    compared = mismatched = 0
    for label, run in runs.items():
        assert (run["root"] / "results.csv").read_bytes() == (other[label]["root"] / "results.csv").read_bytes()
        for row in run["rows"]:
            for name in ("result.json", "scores.csv", "residuals.csv"):
                a = (run["root"] / row["result_dir"] / name).read_bytes()
                b = (other[label]["root"] / row["result_dir"] / name).read_bytes()
                compared += 1
                mismatched += a != b
    # and the same seed in-process gives the same demonstrations as the sweep used
    cfg = scenario_nav2d()
    a, b = make_demos(cfg, 3), make_demos(cfg, 3)
    same = all(x.states.tobytes() == y.states.tobytes() for x, y in zip(a, b))
    record_property("measured", f"{compared} files compared between --jobs 1 and --jobs 8, {mismatched} differ")
    assert mismatched == 0 and same

import json

import numpy as np
import pytest

from kktinfer.forward import solve_fcp
from kktinfer.scenarios import (ConfigError, from_dict, from_json, get_scenario, load, save, scenario_fetch3d,
                                scenario_nav2d, scenario_synthetic)


@pytest.mark.parametrize("make", [scenario_nav2d, scenario_fetch3d, lambda: scenario_synthetic(3, 2, 6, 2, 1)])
def test_round_trip_byte_identical(make, tmp_path):
    cfg = make()
    text = cfg.to_json()
    assert from_json(text).to_json() == text
    save(cfg, tmp_path / "c.json")
    assert load(tmp_path / "c.json") == cfg


def test_unknown_fields_rejected():
    d = scenario_nav2d().to_dict()
    d["bogus"] = 1
    with pytest.raises(ConfigError):
        from_dict(d)
    d = scenario_nav2d().to_dict()
    d["inference"]["delta_typo"] = 1.0
    with pytest.raises(ConfigError):
        from_dict(d)
    d = scenario_nav2d().to_dict()
    d["schema_version"] = 99
    with pytest.raises(ConfigError):
        from_dict(d)
    with pytest.raises(ConfigError):
        from_json("{not json")


def test_get_scenario(tmp_path):
    assert get_scenario("nav2d") == scenario_nav2d()
    with pytest.raises(ConfigError):
        get_scenario("no-such-scenario")
    path = tmp_path / "f.json"
    path.write_text(scenario_fetch3d().to_json())
    assert get_scenario(str(path)) == scenario_fetch3d()


@pytest.mark.parametrize("make", [scenario_nav2d, scenario_fetch3d])
def test_builtin_start_feasible_and_constraints_bind(make):
    task = make().task()
    assert task.is_feasible_state(task.x0_mean)
    d = solve_fcp(task, task.x0_mean)
    for k, c in enumerate(task.constraints):
        assert np.any(d.duals[k * task.T:(k + 1) * task.T] > 1e-6), f"constraint {k} never binds"


def test_task_hash_stable():
    a, b = scenario_nav2d().task(), scenario_nav2d().task()
    assert a.hash() == b.hash()
    assert a.hash() != scenario_nav2d().replace(T=7, x_track=scenario_nav2d().x_track[:7]).task().hash()


def test_replace_merges_nested():
    cfg = scenario_nav2d().replace(noise={"level": 0.005}, n_demos=3)
    assert cfg.noise.level == 0.005 and cfg.noise.noise_param_is_variance and cfg.n_demos == 3
    np.testing.assert_allclose(cfg.noise.sigma, np.sqrt(0.005))


@pytest.mark.parametrize("M", [0, 1, 2])
def test_synthetic_deterministic_and_admissible(M):
    a = scenario_synthetic(2, 1, 8, M, 4)
    assert a.to_json() == scenario_synthetic(2, 1, 8, M, 4).to_json()
    assert len(a.constraints) == M
    task = a.task()
    assert task.is_feasible_state(task.x0_mean)
    free = solve_fcp(task.with_constraints(()), task.x0_mean)
    for c in task.constraints:
        assert c.values(free.states).max() > 0.0  # each constraint cuts the unconstrained optimum


def test_synthetic_spectral_radius():
    for s in range(5):
        A = np.array(scenario_synthetic(3, 1, 5, 1, s).A)
        assert np.abs(np.linalg.eigvals(A)).max() <= 0.95 + 1e-12


def test_config_json_is_plain():
    d = json.loads(scenario_fetch3d().to_json())
    assert d["inference"]["delta"] == 0.5 and d["metrics"]["box_lo"] == [0.4] * 3

import json

import pytest
import yaml

from dexmodel.cli import main
from dexmodel.config import ExperimentConfig, config_from_dict, load_config
from dexmodel.io import load_result
from dexmodel.sim import ConfigError

TINY = {
    "hand": "robotiq", "episodes": 2, "max_steps": 2,
    "data": {"episodes": 20, "steps_per_episode": 5},
    "forward": {"hidden": [16], "steps": 20},
    "inverse": {"hidden": [16], "steps": 20},
    "budget": {"samples": 20, "cem_iterations": 2, "elites": 5},
}


def _write(tmp_path, d, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(d) if name.endswith(".json") else yaml.safe_dump(d))
    return str(path)


def test_defaults_resolve():
    cfg = ExperimentConfig()
    assert cfg.resolved_budget().planning_samples == 5 * 400
    seq = ExperimentConfig(setting="sequential").resolved_budget()
    assert (seq.horizon, seq.cem_iterations, seq.samples, seq.beta) == (3, 3, 600, 0.2)
    assert cfg.hand_config().action_dim == 16


def test_json_and_yaml_load_the_same(tmp_path):
    a = load_config(_write(tmp_path, TINY, "c.json"))
    b = load_config(_write(tmp_path, TINY, "c.yaml"))
    assert a.to_dict() == b.to_dict()
    assert a.forward.hidden == (16,) and a.resolved_budget().samples == 20


def test_infinite_threshold_round_trips_as_string():
    cfg = config_from_dict({"threshold": "inf"})
    assert cfg.hand_config().success_threshold == float("inf")
    assert cfg.to_dict()["threshold"] == "inf"
    assert config_from_dict(json.loads(json.dumps(cfg.to_dict()))).threshold == float("inf")


@pytest.mark.parametrize("bad", [
    {"hand": "nope"}, {"setting": "fast"}, {"planner": "magic"}, {"planners": ["ours", "x"]},
    {"episodes": 0}, {"seeds": []}, {"max_steps": -1}, {"budget": {"samples": 0}},
    {"budget": {"nope": 1}}, {"colour": "red"}, {"data": {"episodes": 3, "extra": 1}}, {"data": 5},
])
def test_invalid_configs_raise_config_error(bad):
    with pytest.raises(ConfigError):
        config_from_dict(bad)


def test_unreadable_or_unparseable_files(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "broken.json")


# -- command line -------------------------------------------------------------------------


def test_cli_config_error_exit_code(tmp_path, capsys):
    path = _write(tmp_path, {"hand": "nope"})
    assert main(["explore", "--config", path, "--out", str(tmp_path / "o")]) == 2
    assert "configuration error" in capsys.readouterr().err
    assert main(["plan", "--config", str(tmp_path / "missing.json")]) == 2


def test_cli_runtime_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "data.jsonl"
    bad.write_text('{"format": "dexmodel-dataset"')
    path = _write(tmp_path, dict(TINY, dataset=str(bad)))
    assert main(["train-forward", "--config", path, "--out", str(tmp_path / "o")]) == 3
    assert "runtime error" in capsys.readouterr().err


def test_cli_dimension_mismatch_is_config_error(tmp_path):
    out = tmp_path / "fm"
    assert main(["train-forward", "--config", _write(tmp_path, TINY), "--out", str(out)]) == 0
    other = _write(tmp_path, dict(TINY, hand="allegro", forward_model=str(out / "forward.json"),
                                  planner="fm_cem"), "other.json")
    assert main(["plan", "--config", other, "--out", str(tmp_path / "p")]) == 2


def test_cli_training_disabled_without_models(tmp_path):
    path = _write(tmp_path, dict(TINY, train=False))
    assert main(["plan", "--config", path, "--out", str(tmp_path / "o")]) == 2


def test_seed_flag_replaces_config_seeds(tmp_path):
    path = _write(tmp_path, dict(TINY, seeds=[1, 2]))
    assert main(["explore", "--config", path, "--seed", "7", "--out", str(tmp_path / "o")]) == 0
    doc = load_result(tmp_path / "o" / "explore.json")
    assert doc["result"]["seed"] == 7 and doc["config"]["seeds"] == [7]


def test_plan_reports_samples_and_error(tmp_path):
    path = _write(tmp_path, TINY)
    assert main(["plan", "--config", path, "--out", str(tmp_path / "o")]) == 0
    res = load_result(tmp_path / "o" / "plan.json")["result"]
    assert res["samples"] == 40 and len(res["actions"]) == 1 and res["final_error"] >= 0


def test_explore_is_byte_identical_across_reruns(tmp_path):
    path = _write(tmp_path, TINY)
    for d in ("a", "b"):
        assert main(["explore", "--config", path, "--out", str(tmp_path / d)]) == 0
    for name in ("dataset.jsonl", "explore.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

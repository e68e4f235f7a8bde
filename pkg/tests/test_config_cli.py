import csv
import json
import time

import pytest
import yaml

from neuroaccel import config as config_mod
from neuroaccel.cli import main
from neuroaccel.errors import ConfigError


def write_yaml(path, obj):
    path.write_text(yaml.safe_dump(obj))
    return str(path)


def read_rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    return lines[0].split("=", 1)[1], list(csv.DictReader(lines[1:]))


# --- config ---------------------------------------------------------------------


def test_defaults_validate_and_hash_is_stable():
    a, b = config_mod.resolve(), config_mod.resolve()
    assert config_mod.config_hash(a) == config_mod.config_hash(b)
    assert config_mod.config_hash(a) != config_mod.config_hash(config_mod.resolve(fast=True))
    exp = config_mod.Experiment(a)
    assert exp.narma_spec.n_range == list(range(2, 21))
    assert exp.parity_spec.n_range == list(range(1, 7))
    assert exp.drive("parity").alpha == 0.7


@pytest.mark.parametrize(
    "override",
    [
        {"drive": {"v0_typo": 1.0}},
        {"drive": 3},
        {"narma": {"target_source": "oracle"}},
        {"sweep": {"grid": {"q_factor": [1.0]}}},
        {"learning": {"gamma_grid": []}},
        {"narma": {"n_range": [5, 2]}},
    ],
)
def test_bad_overrides_rejected(override):
    with pytest.raises(ConfigError):
        config_mod.resolve(override)


def test_user_values_win_over_fast_profile():
    cfg = config_mod.resolve({"narma": {"train_len": 123}}, fast=True)
    assert cfg["narma"]["train_len"] == 123 and cfg["profile"] == "fast"


# --- CLI ----------------------------------------------------------------------------


def test_validate_config(tmp_path, capsys):
    assert main(["validate-config"]) == 0
    assert config_mod.config_hash(config_mod.resolve()) in capsys.readouterr().out
    bad = write_yaml(tmp_path / "bad.yaml", {"drive": {"v0_typo": 1.0}})
    assert main(["validate-config", "-c", bad]) == 2
    assert "unknown config key" in capsys.readouterr().err


def test_design_report(tmp_path, capsys):
    out = tmp_path / "design.json"
    assert main(["design-report", "-o", str(out)]) == 0
    printed = json.loads(capsys.readouterr().out)
    assert printed == json.loads(out.read_text())
    assert printed["squeeze_film_q"] == pytest.approx(241.65, rel=1e-4)


@pytest.fixture(scope="module")
def parity_fast(tmp_path_factory):
    out = tmp_path_factory.mktemp("parity")
    assert main(["benchmark", "parity", "--fast", "-o", str(out)]) == 0
    return out / "parity"


def test_benchmark_outputs_and_manifest(parity_fast):
    man = json.loads((parity_fast / "manifest.json").read_text())
    for key in ("config_hash", "tool_version", "command", "profile", "status", "wall_time_s", "outputs", "acceptance_summary"):
        assert key in man
    assert man["status"] == "ok" and man["profile"] == "fast"
    for name in man["outputs"]:
        p = parity_fast / name
        assert p.exists()
        if p.suffix == ".csv":
            assert p.read_text().startswith(f"# config_hash={man['config_hash']}\n")
        else:
            assert json.loads(p.read_text())["config_hash"] == man["config_hash"]
    _, rows = read_rows(parity_fast / "scores.csv")
    assert [r["n"] for r in rows] == [str(n) for n in range(1, 7)]
    assert float(rows[0]["success"]) >= 0.99


def test_benchmark_rerun_bit_identical(parity_fast, tmp_path):
    assert main(["benchmark", "parity", "--fast", "-o", str(tmp_path)]) == 0
    for name in ("scores.csv", "predictions.csv", "model.json", "run/states.csv"):
        assert (tmp_path / "parity" / name).read_bytes() == (parity_fast / name).read_bytes()


def test_narma_benchmark_has_nineteen_orders(tmp_path):
    cfg = write_yaml(tmp_path / "c.yaml", {"narma": {"train_len": 300, "test_len": 100}})
    assert main(["benchmark", "narma", "--fast", "-c", cfg, "-o", str(tmp_path)]) == 0
    _, rows = read_rows(tmp_path / "narma" / "scores.csv")
    assert [int(r["n"]) for r in rows] == list(range(2, 21))
    assert all(float(r["nrmse"]) >= 0 for r in rows)


def test_characterize_fast_is_quick_and_complete(tmp_path):
    t0 = time.perf_counter()
    assert main(["characterize", "--fast", "-o", str(tmp_path)]) == 0
    assert time.perf_counter() - t0 < 60
    man = json.loads((tmp_path / "manifest.json").read_text())
    names = set(man["outputs"])
    assert "sensor_response.csv" in names
    assert sum(n.startswith("frequency_sweep_v0_") for n in names) == 6
    assert sum(n.startswith("amplitude_sweep_fd_") for n in names) == 6
    s = man["acceptance_summary"]
    assert not s["frequency_sweep_hysteretic"]["75"] and s["frequency_sweep_hysteretic"]["250"]
    _, rows = read_rows(tmp_path / "frequency_sweep_v0_135.csv")
    assert {r["direction"] for r in rows} == {"up", "down"}


def test_linear_beam_has_no_hysteresis_files(tmp_path):
    cfg = write_yaml(
        tmp_path / "c.yaml",
        {"physics": {"beam": {"beta": 0.0}}, "characterize": {"v0_set": [75.0, 250.0], "amplitude_fd_set": [245.0e3]}},
    )
    assert main(["characterize", "--fast", "-c", cfg, "-o", str(tmp_path / "out")]) == 0
    assert not list((tmp_path / "out").glob("hysteresis_*.csv"))


def test_sweep_single_point(tmp_path):
    cfg = write_yaml(
        tmp_path / "c.yaml",
        {
            "sweep": {"task": "parity", "grid": {"alpha": [0.7], "gamma": [1.0e-6]}},
            "parity": {"train_len": 300, "test_len": 100},
        },
    )
    assert main(["sweep", "--fast", "-c", cfg, "-o", str(tmp_path / "out")]) == 0
    _, rows = read_rows(tmp_path / "out" / "sweep_ranked.csv")
    assert len(rows) == 1 and rows[0]["rank"] == "1"
    assert float(rows[0]["gamma_used"]) == 1e-6
    man = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert man["acceptance_summary"]["points_completed"] == 1
    assert not (tmp_path / "out" / "sweep_partial.jsonl").exists()

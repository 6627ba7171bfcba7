import json

import numpy as np
import pytest

from bousscontrol.cli import run_command
from bousscontrol.config import ConfigError, apply_override, load_config


def _write(tmp_path, obj, name="c.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return p


def test_minimal_config_gets_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, {"geometry": {"nx": 6, "ny": 6}, "physics": {"nu": 0.1}}))
    assert cfg["time"]["nt"] == 20 and cfg["physics"]["k"] == 0.05
    assert cfg.domain().nx == 6


def test_validation_messages(tmp_path):
    with pytest.raises(ConfigError, match="ν > 0 required"):
        load_config(_write(tmp_path, {"physics": {"nu": 0}}))
    with pytest.raises(ConfigError, match=r"\(1.3\)"):
        load_config(_write(tmp_path, {"controls": {"alpha1": 0.5, "beta1": 0.2}}))
    with pytest.raises(ConfigError, match=r"\(1.4\)"):
        load_config(_write(tmp_path, {"controls": {"alpha2": 0.0}}))
    with pytest.raises(ConfigError, match="unknown config key 'physics.mu'"):
        load_config(_write(tmp_path, {"physics": {"mu": 1}}))
    with pytest.raises(ConfigError, match="line 2"):
        load_config(_write(tmp_path, '{"physics":\n  {"nu": }}'))


def test_overrides():
    cfg = load_config(None, ["physics.beta=0", "cost.r1.left=2", "geometry.partition.top=1"])
    assert cfg["physics"]["beta"] == 0
    assert cfg["cost"]["r1"] == {"right": 1.0, "left": 2}
    assert len(cfg.domain().gamma1) == 24
    with pytest.raises(ConfigError):
        apply_override({"a": {}}, "a.b.c=1")
    with pytest.raises(ConfigError):
        load_config(None, ["physics.nu"])


def test_side_mapping_weights():
    cfg = load_config(None, ["cost.r2={\"top\": 2.0}"])
    d = cfg.domain()
    w = cfg.weights(d, cfg.time())
    top = d.faces.side[d.gamma2] == "top"
    assert np.all(w.r2[:, top] == 2.0) and np.all(w.r2[:, ~top] == 0.0)


def test_cli_exit_codes(tmp_path, capsys):
    c = _write(tmp_path, {})
    assert run_command(["frobnicate", "--config", str(c)]) == 1
    assert run_command(["simulate"]) == 1
    assert run_command(["simulate", "--config", str(tmp_path / "missing.json")]) == 1
    assert run_command(["simulate", "--config", str(c), "--override", "physics.nu=0"]) == 1
    # a time step far above the stability limit is a numerical failure
    assert run_command(["simulate", "--config", str(c), "--out", str(tmp_path / "o"),
                        "--override", "time.T=20"]) == 2
    err = capsys.readouterr().err
    assert "CFL" in err or "stability" in err


def test_cli_verify_forms_and_gradient_check(tmp_path, capsys):
    c = _write(tmp_path, {"algorithm": {"samples": 20}})
    assert run_command(["verify-forms", "--config", str(c), "--out", str(tmp_path / "vf")]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and out.count("PASS") == 8
    assert run_command(["gradient-check", "--config", str(c), "--out", str(tmp_path / "gc")]) == 0
    assert capsys.readouterr().out.strip().endswith("PASS")
    assert run_command(["gradient-check", "--config", str(c), "--out", str(tmp_path / "gc2"), "--flip-sign"]) == 2
    rep = json.loads((tmp_path / "gc" / "gradient_check.json").read_text())
    assert rep["passed"] and rep["min_error"] <= 1e-4


def test_cli_check_smallness(tmp_path, capsys):
    c = _write(tmp_path, {"physics": {"beta": 0.0}})
    assert run_command(["check-smallness", "--config", str(c), "--out", str(tmp_path / "s")]) == 0
    assert "PASS" in capsys.readouterr().out
    doc = json.loads((tmp_path / "s" / "smallness.json").read_text())
    assert doc["lhs"] == 0.0 and doc["passes"]


def test_simulate_manifest_and_checksums(tmp_path):
    c = _write(tmp_path, {"time": {"T": 0.02, "nt": 1}})
    assert run_command(["simulate", "--config", str(c), "--out", str(tmp_path / "a")]) == 0
    assert run_command(["simulate", "--config", str(c), "--out", str(tmp_path / "b")]) == 0
    assert run_command(["simulate", "--config", str(c), "--out", str(tmp_path / "c"),
                        "--override", "physics.nu=0.04"]) == 0
    ma, mb, mc = (json.loads((tmp_path / x / "manifest.json").read_text())["files"] for x in "abc")
    assert len(ma) >= 3
    assert ma == mb
    assert ma["fields/zv_00001.csv"] != mc["fields/zv_00001.csv"]
    assert ma["config.json"] != mc["config.json"]

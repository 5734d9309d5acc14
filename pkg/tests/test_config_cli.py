import json

import pytest

from polykin import cli
from polykin.bounds import MomentSnapshot, elementary_constants, frozen_bound_set
from polykin.config import ConfigError, RunConfig, defaults_text, dumps, load_config, loads
from polykin.report import canonical, tag, tag_all, untagged_numbers

from configs import MINIMAL


def test_minimal_config_uses_documented_defaults():
    cfg = loads(MINIMAL)
    ref = RunConfig()
    assert cfg.mode == "simulate"
    assert cfg.kernel == ref.kernel
    assert cfg.simulation == ref.simulation


def test_defaults_text_round_trips():
    cfg = loads(defaults_text())
    assert cfg.to_dict() == RunConfig().to_dict()
    assert loads(dumps(cfg)).to_dict() == cfg.to_dict()


def test_out_of_range_omega_names_key_line_and_range():
    text = "[run]\nmode = \"simulate\"\n\n[kernel]\nomega = 1.5\n"
    with pytest.raises(ConfigError) as err:
        loads(text)
    msg = str(err.value)
    assert "kernel.omega" in msg and "line 5" in msg and "[0.0, 1.0]" in msg


def test_zero_frozen_rate_is_accepted_but_zero_poly_rate_is_not():
    assert loads("[kernel]\nzeta_f = 0.0\n").kernel.zeta_f == 0.0
    with pytest.raises(ConfigError, match="kernel.zeta"):
        loads("[kernel]\nzeta = 0.0\n")


def test_unknown_keys_and_sections_rejected():
    with pytest.raises(ConfigError, match=r"kernel\.omgea.*line 2"):
        loads("[kernel]\nomgea = 0.5\n")
    with pytest.raises(ConfigError, match="bogus"):
        loads("[bogus]\nx = 1\n")


@pytest.mark.parametrize("text,key", [
    ("[run]\nmode = \"party\"\n", "run.mode"),
    ("[kernel]\nc_zeta = 2.0\nC_zeta = 1.0\n", "kernel.c_zeta"),
    ("[initial]\nT = [1.0, 2.0]\n", "initial.T"),
    ("[simulation]\nn_particles = \"many\"\n", "simulation.n_particles"),
    ("[verification]\nks = [2.0, 4.0]\n", "verification.ks"),
    ("[externals]\nsource = \"given\"\n", "externals.A_bar"),
    ("[kernel]\nangular = \"tabulated\"\nangular_mu = [-1.0, 1.0]\nangular_values = [1.0]\n",
     "kernel.angular_values"),
])
def test_schema_errors_name_the_key(text, key):
    with pytest.raises(ConfigError, match=key.replace(".", r"\.")):
        loads(text)


def test_malformed_toml_and_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="malformed"):
        loads("[kernel\nomega = 1")
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.toml")


def test_print_defaults(capsys):
    assert cli.main(["--print-defaults"]) == 0
    assert capsys.readouterr().out == defaults_text()


def test_missing_mode_or_config_is_usage_error(capsys):
    assert cli.main([]) == 2
    assert "required" in capsys.readouterr().err


def test_invalid_out_dir_leaves_nothing_behind(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text(MINIMAL)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    before = sorted(p.name for p in tmp_path.iterdir())
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(blocker)]) != 0
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "no" / "such" / "dir")]) != 0
    assert sorted(p.name for p in tmp_path.iterdir()) == before
    assert blocker.read_text() == "x"


def test_bad_threads_and_seed(tmp_path, monkeypatch):
    cfg = tmp_path / "c.toml"
    cfg.write_text(MINIMAL)
    assert cli.main(["simulate", "--config", str(cfg), "--threads", "0", "--out", str(tmp_path / "o")]) == 2
    monkeypatch.setenv("POLYKIN_THREADS", "0")
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_simulate_mode_writes_trace_and_report(tmp_path, monkeypatch):
    cfg = tmp_path / "c.toml"
    cfg.write_text(MINIMAL + "\n[simulation]\nn_particles = 1000\nn_steps = 30\nrecord_every = 10\n"
                   "moments = [[\"v\", 4], [\"total\", 6]]\n")
    monkeypatch.setenv("POLYKIN_THREADS", "3")
    out = tmp_path / "out"
    assert cli.main(["simulate", "--config", str(cfg), "--out", str(out), "--seed", "5"]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["meta"]["seed"] == "5" and rep["meta"]["threads"] == "3"
    assert untagged_numbers(rep) == []
    head = (out / "trace.csv").read_text().splitlines()[0].split(",")
    assert head == ["t", "m0", "m2", "m2_v", "m2_I", "v_4", "total_6"]
    assert not [p for p in out.iterdir() if p.name.startswith(".polykin-")]


def test_constants_mode_matches_bounds_module(tmp_path):
    text = ("[run]\nmode = \"constants\"\n[kernel]\nomega = 0.0\n[initial]\nkind = \"gaussian\"\nT = [1.0]\n"
            "drift = 0.0\n[povzner]\nn_pairs_frozen = 300\nn_pairs_poly = 100\n")
    cfg = loads(text)
    code, rep = cli.orchestrate(cfg)
    assert code == 0
    table = rep["constants"]["initial_density"]["frozen"]["4"]
    assert all(v["provenance"] == "formula" for v in table.values() if isinstance(v, dict))
    dens = cli.initial_density(cfg)
    C_4 = rep["constants"]["elementary"]["4"]["C_k"]["value"]
    e = elementary_constants(1.0, 1.0, 1.0, 1.0, C_4, 4.0)
    ref = frozen_bound_set(MomentSnapshot.from_density(dens, 1.0), None, e)
    for name, val in ref.as_dict().items():
        assert table[name]["value"] == pytest.approx(val, rel=1e-14), name


def test_report_helpers():
    assert tag(1.5, "formula") == {"value": 1.5, "provenance": "formula"}
    with pytest.raises(ValueError):
        tag(1.0, "guessed")
    t = tag_all({"a": 1, "b": "x", "c": True, "d": [1, 2]}, "simulated")
    assert untagged_numbers(t) == []
    assert untagged_numbers({"x": {"y": [1, tag(2, "fitted")]}}) == [".x.y[0]"]
    assert canonical({"meta": {"timestamp": "now", "seed": "1"}}) == {"meta": {"seed": "1"}}


def test_module_error_marks_report_incomplete():
    cfg = loads("[run]\nmode = \"constants\"\n[kernel]\nomega = 0.0\n[povzner]\nfrozen_C_k = {\"4\" = 1.5}\n"
                "n_pairs_frozen = 100\nn_pairs_poly = 50\nk_stop = 6.0\n")
    code, rep = cli.orchestrate(cfg)
    assert code != 0
    assert rep["meta"]["status"] == "incomplete"
    assert "not below" in rep["meta"]["error"]

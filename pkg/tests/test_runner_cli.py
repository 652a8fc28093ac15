import json

import numpy as np
import pytest

from freqbin import cli
from freqbin.errors import ValidationError
from freqbin.runner import (
    ScenarioConfig,
    Sweep,
    emit_outputs,
    format_sweep,
    list_scenarios,
    load_scenario,
    run_scenario,
    validate_config,
)


def test_bundled_scenarios_listed():
    names = list_scenarios()
    assert set(cli.DEFAULT_SCENARIOS.values()) <= set(names)
    assert len(names) == 8


def test_validation_collects_every_violation():
    raw = {
        "kind": "fringe",
        "seed": -1,
        "bogus": 1,
        "lattice": {"subdivision": 0, "colour": "red"},
        "fringe": {"pairs": [6]},
    }
    problems = validate_config(raw)
    joined = "\n".join(problems)
    assert len(problems) >= 4
    for needle in ("bogus", "colour", "seed", "source"):
        assert needle in joined
    with pytest.raises(ValidationError) as err:
        ScenarioConfig(raw)
    assert err.value.violations == problems


def test_unknown_kind():
    assert validate_config({"kind": "laser"})
    assert validate_config({})


def test_load_reports_json_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"kind": "dip",\n  "dip": }')
    with pytest.raises(ValidationError, match=":2:"):
        ScenarioConfig.load(p)


@pytest.mark.parametrize("name", list_scenarios())
def test_every_scenario_runs(name, tmp_path):
    cfg = load_scenario(name).with_overrides(out_dir=tmp_path)
    bundle = run_scenario(cfg)
    assert bundle.scalars
    assert all(np.isfinite(float(v)) for v in bundle.scalars.values())
    doc = json.loads((tmp_path / "results.json").read_text())
    assert doc["provenance"]["config_sha256"] == cfg.digest()
    assert doc["provenance"]["name"] == name
    for f in doc["files"]:
        assert (tmp_path / f).exists()


@pytest.mark.parametrize("name", ["fringe_pairs_6_7", "cglmp_simulated", "jsi_pairs_3_40"])
def test_same_seed_gives_identical_bytes(name, tmp_path):
    base = load_scenario(name)
    files = {}
    for run in ("a", "b"):
        out = tmp_path / run
        run_scenario(base.with_overrides(seed=11, out_dir=out))
        files[run] = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    assert files["a"] == files["b"]
    out = tmp_path / "c"
    run_scenario(base.with_overrides(seed=12, out_dir=out))
    other = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
    assert other["results.json"] != files["a"]["results.json"]


def test_digest_ignores_output_dir(tmp_path):
    cfg = load_scenario("dip_pairs_6_7")
    assert cfg.with_overrides(out_dir=tmp_path).digest() == cfg.digest()
    assert cfg.with_overrides(seed=5).digest() != cfg.digest()


def test_empty_sweep_is_header_only(tmp_path):
    assert format_sweep(Sweep(("x", "y"))) == "x,y\n"
    from freqbin.runner import ResultBundle

    files = emit_outputs(ResultBundle("dip", {"a": 1.0}, sweeps={"e": Sweep(("x", "y"))}), tmp_path)
    assert (tmp_path / "sweep_e.csv").read_text() == "x,y\n"
    assert "sweep_e.csv" in files


def test_dip_sweep_sorted_two_columns(tmp_path):
    cfg = load_scenario("dip_pairs_6_7")
    bundle = run_scenario(cfg, write=False)
    (sweep,) = bundle.sweeps.values()
    assert len(sweep.columns) == 2
    xs = [r[0] for r in sweep.rows]
    assert xs == sorted(xs)
    assert len(xs) == 121


def test_shuffled_offsets_still_sorted():
    raw = dict(load_scenario("dip_pairs_6_7").raw)
    dip = {k: v for k, v in raw["dip"].items() if not k.startswith("offset_")}
    dip["offsets_ghz"] = [25.0, 24.6, 24.8, 24.7]
    raw["dip"] = dip
    (sweep,) = run_scenario(ScenarioConfig(raw), write=False).sweeps.values()
    assert [r[0] for r in sweep.rows] == sorted(r[0] for r in sweep.rows)


def test_cli_success(tmp_path, capsys):
    assert cli.main(["cglmp", "--out", str(tmp_path)]) == cli.EXIT_OK
    scalars = json.loads(capsys.readouterr().out)
    assert scalars["i3"] == pytest.approx(421 / 160)
    assert (tmp_path / "results.json").exists()


def test_cli_seed_override(tmp_path, capsys):
    assert cli.main(["cglmp", "--config", str(_scenario_path("cglmp_simulated")), "--seed", "3",
                     "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "results.json").read_text())
    assert doc["provenance"]["seed"] == 3


def test_cli_fixture_override(tmp_path, capsys):
    src = _data("table2.csv").read_text().replace('"P11(0,0)",1,1,0,0,0,pi/6,150', '"P11(0,0)",1,1,0,0,0,pi/6,310')
    p = tmp_path / "t2.csv"
    p.write_text(src)
    assert cli.main(["cglmp", "--fixture", str(p)]) == 0
    assert json.loads(capsys.readouterr().out)["i3"] == pytest.approx(581 / 160)


def test_cli_invalid_inputs(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"kind": "dip", "dip": {"gamma_mhz": -1}, "extra": 0}))
    assert cli.main(["dip", "--config", str(bad)]) == cli.EXIT_INVALID
    assert cli.main(["tomo", "--config", str(_scenario_path("dip_pairs_6_7"))]) == cli.EXIT_INVALID
    assert cli.main(["tomo", "--fixture", str(tmp_path / "missing.csv")]) == cli.EXIT_INVALID
    broken = tmp_path / "t1.csv"
    broken.write_text(_data("table1.csv").read_text().replace("36,40", "-36,40", 1))
    assert cli.main(["tomo", "--fixture", str(broken)]) == cli.EXIT_INVALID
    err = capsys.readouterr().err
    assert "negative count" in err


def test_cli_rejects_bad_seed():
    with pytest.raises(SystemExit):
        cli.main(["dip", "--seed", "-4"])
    with pytest.raises(SystemExit):
        cli.main(["dip", "--seed", str(2**64)])


def test_cli_convergence_failure(tmp_path, capsys):
    cfg = tmp_path / "tomo.json"
    cfg.write_text(json.dumps({"kind": "tomo", "tomo": {"restarts": 0, "max_evals": 50}}))
    assert cli.main(["tomo", "--config", str(cfg)]) == cli.EXIT_NO_CONVERGENCE
    assert "no convergence" in capsys.readouterr().err


def _data(name):
    from freqbin.fixtures import data_path

    return data_path(name)


def _scenario_path(name):
    return _data("scenarios") / f"{name}.json"

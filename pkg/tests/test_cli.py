import json

import pytest

from ahrad import cli
from ahrad import config as cfgmod
from ahrad.errors import ConfigInvalid


def _field_cfg(**extra):
    cfg = {
        "experiment": "field",
        "metric": {"profile": "funnel", "a": 0.1, "x_max": 1.0},
        "grid": {"delta": 0.004, "T": 4.0, "s_min": -5},
        "data": {"bumps": [{"k": [0], "x_a": 0.15, "x_b": 0.5, "amp1": 0.5, "amp2": 1.0}]},
        "field": {"filter": None},
    }
    cfg.update(extra)
    return cfg


def test_normalize_round_trip():
    norm = cfgmod.normalize(_field_cfg())
    assert cfgmod.normalize(json.loads(json.dumps(norm))) == norm
    assert norm["tolerances"]["unitarity"] == 0.02
    assert norm["grid"]["chart"] == "tprime"
    assert cfgmod.config_hash(norm) == cfgmod.config_hash(cfgmod.normalize(norm))


@pytest.mark.parametrize("mutate, path", [
    (lambda c: c.pop("grid"), "grid"),
    (lambda c: c["grid"].pop("delta"), "grid.delta"),
    (lambda c: c["metric"].update(profile="torus"), "metric.profile"),
    (lambda c: c.update(tolerances={"unitarity": -1}), "tolerances.unitarity"),
    (lambda c: c.update(tolerances={"bogus": 1}), "tolerances.bogus"),
    (lambda c: c["data"]["bumps"][0].update(x_b=0.1), "data.bumps[0].x_b"),
    (lambda c: c.update(experiment="plot"), "experiment"),
])
def test_invalid_configs_name_the_field(mutate, path):
    cfg = _field_cfg()
    mutate(cfg)
    with pytest.raises(ConfigInvalid) as info:
        cfgmod.normalize(cfg)
    assert info.value.path == path


def test_convergence_needs_three_levels():
    cfg = _field_cfg(experiment="convergence", convergence={"levels": 1})
    with pytest.raises(ConfigInvalid) as info:
        cfgmod.normalize(cfg)
    assert info.value.path == "convergence.levels"
    ok = cfgmod.normalize(_field_cfg(experiment="convergence"))
    with pytest.raises(ValueError):
        cli.convergence_study(ok, levels=1)


def test_random_data_are_seeded():
    cfg = cfgmod.normalize(_field_cfg(data={"random": {"count": 3}}, seed=7))
    from ahrad.config import data_of, metric_of
    m = metric_of(cfg["metric"])
    a = data_of(m, cfg["data"], 7)
    b = data_of(m, cfg["data"], 7)
    c = data_of(m, cfg["data"], 8)
    assert len(a) == 3
    assert all((x.f2 == y.f2).all() for x, y in zip(a, b))
    assert not (a[0].f2 == c[0].f2).all()


def test_run_writes_manifest_and_is_deterministic(tmp_path, monkeypatch):
    monkeypatch.setenv("AHRAD_OUT", str(tmp_path))
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(_field_cfg()))
    assert cli.main(["field", "--config", str(path)]) == 0
    run_dir, = [p for p in tmp_path.iterdir() if p.is_dir()]
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["passed"] and manifest["error"] is None
    assert run_dir.name == "field-" + manifest["config_hash"][:16]
    names = {a["name"] for a in manifest["artifacts"]}
    assert {"field_0.csv", "unitarity.json", "config.json"} <= names
    header = (run_dir / "field_0.csv").read_text().splitlines()[0]
    assert header == "k,s,re_F,im_F"
    report = json.loads((run_dir / "unitarity.json").read_text())
    assert report["config_hash"] == manifest["config_hash"]
    first = {a["name"]: a["sha256"] for a in manifest["artifacts"]}
    # a second run is a no-op; a forced run reproduces the artifacts bit for bit
    (run_dir / "field_0.csv").write_text("tampered")
    assert cli.main(["field", "--config", str(path)]) == 0
    assert (run_dir / "field_0.csv").read_text() == "tampered"
    assert cli.main(["field", "--config", str(path), "--force", "--jobs", "2"]) == 0
    again = json.loads((run_dir / "manifest.json").read_text())
    assert {a["name"]: a["sha256"] for a in again["artifacts"]} == first


def test_failed_check_gives_nonzero_exit(tmp_path, monkeypatch):
    monkeypatch.setenv("AHRAD_OUT", str(tmp_path))
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(_field_cfg(tolerances={"unitarity": 1e-9})))
    assert cli.main(["field", "--config", str(path)]) == 1


def test_bad_config_exit_code(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    cfg = _field_cfg()
    cfg.pop("grid")
    path.write_text(json.dumps(cfg))
    assert cli.main(["field", "--config", str(path)]) == 2
    assert "grid" in capsys.readouterr().err


def test_convergence_orders(tmp_path, monkeypatch):
    monkeypatch.setenv("AHRAD_OUT", str(tmp_path))
    cfg = cfgmod.normalize({
        "experiment": "convergence",
        "metric": {"profile": "hyperbolic", "x_max": 1.0},
        "grid": {"delta": 0.004, "T": 4.0, "s_min": -5},
        "data": {"bumps": [{"k": [1], "x_a": 0.15, "x_b": 0.5, "amp1": 0.5, "amp2": 1.0}]},
    })
    rows = cli.convergence_study(cfg)
    orders = {r["quantity"]: r["order"] for r in rows if r["level"] == 2}
    assert orders["field"] >= 1.9
    assert orders["unitarity"] >= 1.5


def test_shipped_configs_are_valid():
    from pathlib import Path
    paths = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))
    assert {p.stem for p in paths} == set(cfgmod.EXPERIMENTS)
    for p in paths:
        cfg = cfgmod.load(p)
        assert cfg["experiment"] == p.stem

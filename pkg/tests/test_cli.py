import json

import jsonschema
import pytest

from orliczlab.cli import example_config, list_models, load_schema, main, parse_config
from orliczlab.errors import ConfigError
from orliczlab.structures import REGISTRY

EXAMPLE_71 = {"kind": "linear", "c0": 2.0, "slope": 0.3}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def run(tmp_path, cfg, *extra, out="out"):
    status = main(["--config", write(tmp_path, cfg), "--out", str(tmp_path / out), *extra])
    return status, tmp_path / out


def reports(out):
    return {p.stem[len("report_"):]: json.loads(p.read_text()) for p in sorted(out.glob("report_*.json"))}


# registry and config parsing


def test_list_models_has_every_family(capsys):
    assert len(list_models()) >= 5
    assert main(["--list-models"]) == 0
    dumped = json.loads(capsys.readouterr().out)
    assert set(dumped) == set(REGISTRY)
    assert all("params" in entry for entry in dumped.values())


@pytest.mark.parametrize("family", sorted(REGISTRY))
def test_example_config_round_trips(family):
    cfg = parse_config(example_config(family))
    assert cfg["model"]["family"] == family
    assert parse_config({k: cfg[k] for k in ("model", "pipeline", "seed", "grid")})["grid"] == cfg["grid"]


def test_missing_model_names_field(tmp_path, capsys):
    with pytest.raises(ConfigError) as err:
        parse_config({"pipeline": "conditions"})
    assert err.value.path == "model"
    status, _ = run(tmp_path, {"pipeline": "conditions"})
    assert status == 2
    assert "model" in capsys.readouterr().err


def test_unknown_family_lists_registry():
    with pytest.raises(ConfigError) as err:
        parse_config({"model": {"family": "p_laplacian"}})
    for name in REGISTRY:
        assert name in str(err.value)
    assert err.value.path == "model.family"


@pytest.mark.parametrize("bad, path", [
    ({"model": {"family": "p_laplace", "params": {"p": 2.0}}, "grid": {"N": 30}}, "grid.N"),
    ({"model": {"family": "p_laplace", "params": {"r": 2.0}}}, "model.params"),
    ({"model": {"family": "p_laplace", "params": {"p": 0.5}}}, "model.params"),
    ({"model": {"family": "p_laplace"}, "pipeline": "everything"}, "pipeline"),
])
def test_invalid_fields_report_paths(bad, path):
    with pytest.raises(ConfigError) as err:
        parse_config(bad)
    assert err.value.path == path


def test_unreadable_config_exit_status(tmp_path):
    assert main(["--config", str(tmp_path / "none.json")]) == 2
    (tmp_path / "broken.json").write_text("{")
    assert main(["--config", str(tmp_path / "broken.json")]) == 2
    assert main([]) == 2


# pipelines


def test_conditions_on_square_laplacian(tmp_path):
    status, out = run(tmp_path, {"model": {"family": "p_laplace", "params": {"p": 2.0}}, "pipeline": "conditions"})
    assert status == 0
    res = reports(out)["conditions"]["results"]
    assert all(res[k]["passed"] for k in ("VA1", "wVA1", "A1"))
    assert all(row["omega_tight"] == 0.0 and row["omega"] == 0.0 for row in res["VA1"]["table"])
    header = (out / "moduli.csv").read_text().splitlines()[0]
    assert header == "condition,r,omega_tight,omega,Lbar,violations"


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("full")
    cfg = {"model": {"family": "variable_exponent", "params": {"p": EXAMPLE_71}}, "pipeline": "full",
           "grid": {"N": 16}, "certificate": {"directions": 16},
           "conditions": {"radii": [0.02, 0.05, 0.1, 0.2], "magnitudes": 8, "directions": 4},
           "probes": {"bumps": 2}, "seed": 3}
    return run(tmp, cfg)


def test_full_pipeline_emits_every_report(full_run):
    status, out = full_run
    assert status == 0
    reps = reports(out)
    assert set(reps) == {"certificate", "conditions", "approx_verify", "solve", "probes"}
    assert all(rep["status"] == "ok" for rep in reps.values())
    for name in ("moduli.csv", "solution.csv", "gradient.csv"):
        assert (out / name).exists()


def test_reports_validate_against_schema(full_run):
    _, out = full_run
    schema = load_schema("report.schema.json")
    for rep in reports(out).values():
        jsonschema.validate(rep, schema)


def test_same_seed_gives_identical_csv(tmp_path):
    cfg = {"model": {"family": "double_phase", "params": {"p": 2.0, "q": 3.0, "a": EXAMPLE_71}},
           "pipeline": "full", "grid": {"N": 16}, "certificate": {"directions": 16},
           "conditions": {"radii": [0.05, 0.1, 0.2], "magnitudes": 6, "directions": 4},
           "probes": {"bumps": 2}, "seed": 11}
    first = run(tmp_path, cfg, out="a")[1]
    second = run(tmp_path, cfg, out="b")[1]
    names = sorted(p.name for p in first.glob("*.csv"))
    assert names == sorted(p.name for p in second.glob("*.csv")) and names
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_stage_failure_exit_status(tmp_path):
    cfg = {"model": {"family": "p_laplace", "params": {"p": 2.0}}, "pipeline": "comparison", "grid": {"N": 16},
           "balls": [{"center": [0.05, 0.5], "r": 0.1}]}
    status, out = run(tmp_path, cfg)
    assert status == 3
    rep = reports(out)["comparison"]
    assert rep["status"] == "failed" and rep["error"]["type"] == "AdmissibilityError"
    jsonschema.validate(rep, load_schema("report.schema.json"))


def test_seed_flag_overrides_config(tmp_path):
    cfg = {"model": {"family": "p_laplace", "params": {"p": 2.0}}, "pipeline": "certificate", "seed": 1}
    status, out = run(tmp_path, cfg, "--seed", "9")
    assert status == 0 and reports(out)["certificate"]["seed"] == 9

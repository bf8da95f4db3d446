import json
from pathlib import Path

import jsonschema
import pytest

from conslaw.cli import main
from conslaw.harness import ExperimentPlan

DOCS = Path(__file__).resolve().parents[1] / "docs"


def schema(name):
    s = json.loads((DOCS / f"{name}.schema.json").read_text(encoding="utf-8"))
    jsonschema.Draft202012Validator.check_schema(s)
    return s


@pytest.fixture
def files(tmp_path, capsys):
    data, deriv = tmp_path / "v.csv", tmp_path / "dv.csv"
    main(["simulate", "--system", "volpert", "-o", str(data), "--derivatives-output", str(deriv)])
    capsys.readouterr()
    return data, deriv


def test_discovery_output(files, tmp_path, capsys):
    out = tmp_path / "r.json"
    main(["discover", "--data", str(files[0]), "--derivatives", str(files[1]), "-o", str(out)])
    jsonschema.validate(json.loads(out.read_text()), schema("discovery_result"))
    main(["discover", "--data", str(files[0]), "--cutoff", "auto", "--eps-x", "1e-3",
          "--candidates", "(2,0,0)", "-o", str(out)])
    capsys.readouterr()
    jsonschema.validate(json.loads(out.read_text()), schema("discovery_result"))


def test_bench_report(tmp_path, capsys):
    main(["bench", "--system", "no_laws", "--n-values", "20", "--trials", "1", "--format", "json",
          "-o", str(tmp_path)])
    capsys.readouterr()
    jsonschema.validate(json.loads((tmp_path / "report.json").read_text()), schema("report_row"))


def test_bounds_output(files, capsys):
    main(["bounds", "--data", str(files[0]), "--noisy-data", str(files[0]), "--eps-x", "0"])
    jsonschema.validate(json.loads(capsys.readouterr().out), schema("bound_report"))


@pytest.mark.parametrize("system", ["volpert", "oxidation"])
def test_plan_round_trip(system):
    jsonschema.validate(ExperimentPlan(system).to_dict(), schema("plan"))
    jsonschema.validate({"system": system, "candidates": "all", "diff_method": "tikhonov"}, schema("plan"))

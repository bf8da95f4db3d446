import json
from pathlib import Path

import numpy as np
import pytest

from conslaw.benchmarks import make_system
from conslaw.differentiation import SAVITZKY_GOLAY, TIKHONOV, DiffMethod
from conslaw.errors import ConfigurationError, ValidationError
from conslaw.harness import (ExperimentPlan, ExperimentRow, default_cutoff_floor,
                             default_diff_method, embed_laws, emit_report, law_error,
                             load_report_json, render_report, run_plan, thread_count)
from conslaw.library import STANDARD_MENU, LibrarySpec, expand

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture(scope="module")
def volpert_clean():
    return run_plan(ExperimentPlan("volpert", variances=(0.0,), trials=1))


class TestRuns:
    def test_volpert_single_trial(self, volpert_clean):
        row = volpert_clean.rows[0]
        assert (row.n, row.variance, row.trials) == (20, 0.0, 1)
        assert row.accuracy == 1.0 and row.optimal == "(1, 0, 0)" and row.count == 1
        assert row.residual_opt <= 1e-10 and row.xi_error <= 1e-10

    def test_mapk_single_trial(self):
        outcomes = {}
        res = run_plan(ExperimentPlan("mapk", n_values=(20,), variances=(0.0,), trials=1), outcomes)
        row = res.rows[0]
        assert row.count == 3 and row.accuracy == 1.0
        assert row.xi_error <= 1e-8
        assert outcomes[(20, 0.0)][0].count == 3

    def test_no_laws_clean(self):
        res = run_plan(ExperimentPlan("no_laws", n_values=(100,), variances=(0.0,), trials=1))
        row = res.rows[0]
        assert row.accuracy == 1.0 and row.optimal == "none" and row.count == 0
        assert row.xi_error is None and row.e_gamma is None

    def test_noisy_no_laws_has_no_accuracy_claim(self):
        res = run_plan(ExperimentPlan("no_laws", n_values=(100,), variances=(1e-5,), trials=2))
        assert res.rows[0].accuracy is None and res.rows[0].library_accuracy is None

    def test_default_grid_shape(self):
        res = run_plan(ExperimentPlan("volpert", trials=1))
        assert [(r.n, r.variance) for r in res.rows] == [
            (20, 0.0), (20, 1e-10), (20, 1e-5), (100, 0.0), (100, 1e-10), (100, 1e-5)]
        assert {rec.library for rec in res.singular_values} >= {"(1, 0, 0)", "(2, 0, 0)"}

    def test_singular_value_dump(self, volpert_clean):
        recs = [r for r in volpert_clean.singular_values if r.n == 20 and r.library == "(1, 0, 0)"]
        assert [r.index for r in recs] == [1, 2, 3]
        assert recs[-1].sigma < recs[-1].cutoff == 1e-10

    def test_unknown_system(self):
        with pytest.raises(ConfigurationError):
            ExperimentPlan("bogus")

    @pytest.mark.parametrize("system", ["volpert", "two_laws", "mapk"])
    def test_accuracy_floor(self, system):
        res = run_plan(ExperimentPlan(system, trials=100))
        assert all(r.accuracy == 1.0 for r in res.rows), [(r.n, r.variance, r.accuracy) for r in res.rows]

    @pytest.mark.parametrize("system", ["volpert", "two_laws", "oxidation", "mapk"])
    def test_monotonic_degradation(self, system):
        # the mean residual may sit a fraction of a percent below the clean
        # value when the added noise is far below the derivative error
        res = run_plan(ExperimentPlan(system, trials=20))
        for n in (20, 100):
            seq = [r.residual_opt for r in res.rows if r.n == n]
            assert all(b >= a * (1 - 1e-2) for a, b in zip(seq, seq[1:])), (n, seq)


class TestScoring:
    def test_embed_laws(self):
        sys = make_system("oxidation")
        terms = expand(LibrarySpec(2, log=True), 3)
        E = embed_laws(sys, terms)
        assert E.shape == (1, len(terms)) and E.sum() == pytest.approx(-0.5)
        assert embed_laws(sys, expand(LibrarySpec(2), 3)) is None
        assert embed_laws(make_system("no_laws"), expand(LibrarySpec(1), 2)) is None

    def test_law_error_pairs_rows(self):
        exact = np.array([[1.0, 0, 1, 0], [0, 1, 1, 1]])
        assert law_error(exact, exact[::-1]) == 0.0
        assert law_error(exact, exact + 1e-3) == pytest.approx(np.sqrt(8) * 1e-3)
        with pytest.raises(ValidationError):
            law_error(exact, exact[:1])


class TestPlan:
    def test_defaults(self):
        p = ExperimentPlan("oxidation")
        assert p.method == DiffMethod(SAVITZKY_GOLAY, sg_order=5)
        assert default_diff_method("volpert").kind == TIKHONOV
        assert p.floor(20) == 1e-5 and p.floor(100) == 1e-7
        assert default_cutoff_floor("mapk", 20) == 1e-10
        assert ExperimentPlan("mapk").horizon == 1000

    @pytest.mark.parametrize("kwargs", [
        {"trials": 0}, {"variances": (-1.0,)}, {"variances": ()}, {"n_values": (3,)},
        {"candidates": ()}, {"t_end": 0.0}, {"cutoff_floor": -1.0}])
    def test_validation(self, kwargs):
        with pytest.raises(ConfigurationError):
            ExperimentPlan("volpert", **kwargs)

    def test_dict_round_trip(self):
        p = ExperimentPlan("two_laws", n_values=(30,), trials=5, base_seed=9,
                           candidates=(LibrarySpec(1), LibrarySpec(2, log=True)))
        q = ExperimentPlan.from_dict(json.loads(json.dumps(p.to_dict())))
        assert q.to_dict() == p.to_dict()

    def test_from_dict_shorthands(self):
        p = ExperimentPlan.from_dict({"system": "volpert", "diff_method": "central_fd",
                                      "candidates": "(1,0,0),(1,1,0)"})
        assert p.method.kind == "central_fd" and len(p.candidates) == 2
        assert ExperimentPlan.from_dict({"system": "volpert", "candidates": "all"}).candidates == STANDARD_MENU

    @pytest.mark.parametrize("data", [{"trials": 3}, {"system": "volpert", "colour": 1},
                                      {"system": "volpert", "diff_method": "magic"}])
    def test_from_dict_errors(self, data):
        with pytest.raises(ConfigurationError):
            ExperimentPlan.from_dict(data)

    def test_thread_count(self, monkeypatch):
        monkeypatch.setenv("CONSLAW_THREADS", "3")
        assert thread_count() == 3
        for bad in ("0", "many"):
            monkeypatch.setenv("CONSLAW_THREADS", bad)
            with pytest.raises(ConfigurationError):
                thread_count()
        monkeypatch.delenv("CONSLAW_THREADS")
        assert thread_count() >= 1

    def test_results_independent_of_thread_count(self, monkeypatch):
        plan = ExperimentPlan("two_laws", n_values=(20,), variances=(1e-5,), trials=6)
        monkeypatch.setenv("CONSLAW_THREADS", "1")
        a = render_report(run_plan(plan).rows, "json")
        monkeypatch.setenv("CONSLAW_THREADS", "4")
        b = render_report(run_plan(plan).rows, "json")
        assert a == b


class TestReports:
    def test_golden_markdown(self, volpert_clean):
        text = render_report(volpert_clean.rows, "markdown")
        assert text == (GOLDEN / "volpert_report.md").read_text(encoding="utf-8")

    def test_json_round_trip(self, tmp_path, volpert_clean):
        path = emit_report(volpert_clean.rows, "json", tmp_path)
        assert load_report_json(path) == volpert_clean.rows

    def test_csv_one_row(self, volpert_clean):
        lines = render_report(volpert_clean.rows[:1], "csv").splitlines()
        assert len(lines) == 2
        assert lines[0].split(",")[:3] == ["system", "n", "variance"]

    def test_missing_values(self):
        row = ExperimentRow("no_laws", 20, 1e-5, 1, 1e-5, 1e-4, 0.1, 0.01, None, None, None,
                            None, None, None, "none", 0)
        md = render_report([row], "markdown")
        assert "NaN" in md
        assert ",," in render_report([row], "csv")

    def test_errors(self, volpert_clean):
        with pytest.raises(ValidationError):
            render_report([], "json")
        with pytest.raises(ConfigurationError):
            render_report(volpert_clean.rows, "xml")

    def test_singular_values_file(self, tmp_path, volpert_clean):
        emit_report(volpert_clean.rows, "csv", tmp_path, volpert_clean.singular_values)
        lines = (tmp_path / "singvals.csv").read_text().splitlines()
        assert lines[0] == "system,n,variance,library,index,sigma,cutoff"
        assert len(lines) == 1 + len(volpert_clean.singular_values)

    def test_deterministic_bytes(self):
        plan = ExperimentPlan("oxidation", n_values=(20,), variances=(1e-5,), trials=4, base_seed=3)
        assert render_report(run_plan(plan).rows, "csv") == render_report(run_plan(plan).rows, "csv")

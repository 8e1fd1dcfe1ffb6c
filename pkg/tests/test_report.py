# wienernet/tests/test_report.py
"""
Tests for report.py output files and manifest
"""
import json
import math

import numpy as np
import pandas as pd
import pytest

from wienernet.report import MANIFEST_NAME, RunResults, compute_sha256, emit_report
from wienernet.theory import ModelConstants, bound_lambda_and_n


@pytest.fixture
def results(chain_model):
    constants = ModelConstants(L=0.5, U=1.3, C=2.8, delta_inv=0.7, d=2, m=0.2, m_i=(0.2, 0.3, 0.25), frequency=0.1)
    return RunResults(
        command="compare",
        config={"seed": 0, "trials": 2},
        constants=constants,
        bounds=[bound_lambda_and_n(constants, 2, 0.05, "iid")],
        model=chain_model,
        tables={
            "baselines": pd.DataFrame({
                "n": [40, 80],
                "regularized": [1.0, 0.0],
                "unregularized": [2.0, 1.5],
                "cig": [3.0, math.nan],
            }),
            "empty": pd.DataFrame(),
        },
    )


class TestEmitReport:
    """Tests for emit_report"""

    def test_writes_tables_plots_and_manifest(self, results, tmp_path):
        """Should write the CSV, its plot and the manifest last"""
        written = emit_report(results, tmp_path)
        assert [p.name for p in written] == ["baselines.csv", "error_vs_n.svg", MANIFEST_NAME]
        assert not (tmp_path / "empty.csv").exists()

    def test_manifest_checksums(self, results, tmp_path):
        """Should record a sha256 for every item"""
        emit_report(results, tmp_path)
        manifest = json.loads((tmp_path / MANIFEST_NAME).read_text())
        for item in manifest["items"]:
            assert item["checksum"] == f"sha256:{compute_sha256(tmp_path / item['relative_path'])}"
        assert manifest["command"] == "compare"

    def test_manifest_theory_section(self, results, tmp_path):
        """Should key bounds by regime and epsilon"""
        emit_report(results, tmp_path)
        theory = json.loads((tmp_path / MANIFEST_NAME).read_text())["theory"]
        assert len(theory["model_hash"]) == 16
        assert "restart_record/0.05" in theory["bounds"]
        assert theory["constants"]["d"] == 2

    def test_nan_becomes_null(self, results, tmp_path):
        """Should write non-finite values as JSON null"""
        results.extra["ratio"] = np.float64("nan")
        emit_report(results, tmp_path, plots=False)
        manifest = json.loads((tmp_path / MANIFEST_NAME).read_text())
        assert manifest["extra"]["ratio"] is None

    def test_reproducible(self, results, tmp_path):
        """Should write byte-identical files on a rerun"""
        first = emit_report(results, tmp_path / "a")
        second = emit_report(results, tmp_path / "b")
        for a, b in zip(first, second):
            assert a.read_bytes() == b.read_bytes()

    def test_csv_round_trip_values(self, results, tmp_path):
        """Should keep full float precision in tables"""
        results.tables["baselines"].loc[0, "regularized"] = 1 / 3
        emit_report(results, tmp_path, plots=False)
        frame = pd.read_csv(tmp_path / "baselines.csv")
        assert frame.loc[0, "regularized"] == 1 / 3

    def test_success_and_sweep_plots(self, tmp_path):
        """Should draw the success curve and the n_min fit"""
        results = RunResults(
            command="nmin",
            config={},
            tables={
                "success_curve": pd.DataFrame({"n": [8, 16], "successes": [1, 3], "trials": [3, 3]}),
                "nmin_vs_p": pd.DataFrame({"p": [8, 24], "log_p": [math.log(8), math.log(24)], "n_min": [40, 60]}),
            },
            fit=(2.0, 15.0),
        )
        names = [p.name for p in emit_report(results, tmp_path)]
        assert "success_curve.svg" in names
        assert "nmin_vs_logp.svg" in names
        assert json.loads((tmp_path / MANIFEST_NAME).read_text())["fit"] == {"intercept": 2.0, "slope": 15.0}

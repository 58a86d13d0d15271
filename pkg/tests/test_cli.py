import json

import numpy as np
import pandas as pd
import pytest

from glm_subsampling.cli.io import REPORT_COLUMNS, load_csv_dataset
from glm_subsampling.cli.main import main
from glm_subsampling.config import parse_config
from glm_subsampling.errors import ConstantColumn, MalformedCsv, MissingColumn, MissingResponses, NonNumericField
from glm_subsampling.estimators import draw_pilot
from glm_subsampling.glm_core import LogisticFamily
from glm_subsampling.sampling import Criterion, os_probabilities
from glm_subsampling.simulation.designs import generate_response
from glm_subsampling.simulation.experiment import simulate_dataset
from glm_subsampling.solver import FitOptions


def _write_config(tmp_path, body):
    path = tmp_path / "run.cfg"
    path.write_text(body + f"\n[output]\ndirectory = {tmp_path / 'out'}\n", encoding="utf-8")
    return path


DESIGN = """
[experiment]
family = logistic
repetitions = 2
seed = 3

[data]
design = mzNormal
n = 2000
dim = 3
beta0 = 0.5

[sampling]
r_p = 200
r_grid = 400
criteria = aopt
"""


@pytest.fixture
def linear_csv(tmp_path):
    rng = np.random.default_rng(21)
    frame = pd.DataFrame(rng.standard_normal((60, 3)), columns=["f1", "f2", "f3"])
    frame["target"] = np.nan
    path = tmp_path / "unlabelled.csv"
    frame.to_csv(path, index=False)
    return path


class TestCsvLoader:
    def test_standardized_with_intercept(self, tmp_path):
        path = tmp_path / "small.csv"
        path.write_text("a,b,y\n1,10,0\n2,20,1\n3,30,0\n", encoding="utf-8")
        data = load_csv_dataset(path, "y")
        z = np.sqrt(1.5)
        np.testing.assert_allclose(data.x[:, 0], 1.0)
        np.testing.assert_allclose(data.x[:, 1], [-z, 0.0, z], atol=1e-12)
        np.testing.assert_allclose(data.x[:, 2], [-z, 0.0, z], atol=1e-12)
        np.testing.assert_array_equal(data.y, [0.0, 1.0, 0.0])
        assert data.feature_names == ["intercept", "a", "b"]
        assert data.has_intercept

    def test_raw_features_and_index_response(self, tmp_path):
        path = tmp_path / "small.csv"
        path.write_text("y,a\n1,4\n0,5\n", encoding="utf-8")
        data = load_csv_dataset(path, "0", standardize=False, add_intercept=False)
        np.testing.assert_array_equal(data.x[:, 0], [4.0, 5.0])
        np.testing.assert_array_equal(data.y, [1.0, 0.0])

    def test_missing_column_lists_available(self, tmp_path):
        path = tmp_path / "small.csv"
        path.write_text("a,b\n1,2\n3,4\n", encoding="utf-8")
        with pytest.raises(MissingColumn) as info:
            load_csv_dataset(path, "label")
        assert "a, b" in str(info.value)
        assert info.value.exit_code == 3

    def test_non_numeric_field(self, tmp_path):
        path = tmp_path / "small.csv"
        path.write_text("a,y\n1,0\nx,1\n", encoding="utf-8")
        with pytest.raises(NonNumericField) as info:
            load_csv_dataset(path, "y")
        assert "row 2" in str(info.value)

    def test_constant_column(self, tmp_path):
        path = tmp_path / "small.csv"
        path.write_text("a,b,y\n1,7,0\n2,7,1\n", encoding="utf-8")
        with pytest.raises(ConstantColumn) as info:
            load_csv_dataset(path, "y")
        assert "b" in str(info.value)

    def test_missing_responses(self, linear_csv):
        with pytest.raises(MissingResponses):
            load_csv_dataset(linear_csv, "target")
        data = load_csv_dataset(linear_csv, "target", allow_missing_response=True)
        assert not data.measured.any()

    def test_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("a,y\n", encoding="utf-8")
        with pytest.raises(MalformedCsv):
            load_csv_dataset(path, "y")


class TestSimulateCommand:
    def test_writes_report_and_manifest(self, tmp_path):
        config = _write_config(tmp_path, DESIGN)
        assert main(["simulate", str(config)]) == 0
        report = pd.read_csv(tmp_path / "out" / "mzNormal_report.csv")
        assert list(report.columns) == REPORT_COLUMNS
        assert len(report) == 2
        assert set(report["method"]) == {"unweighted", "weighted"}
        assert report["wall_ms"].isna().all()
        manifest = json.loads((tmp_path / "out" / "mzNormal_manifest.json").read_text())
        assert manifest["seed"] == 3
        assert "numpy" in manifest["versions"]
        assert "timings" not in manifest
        assert manifest["stats"]["repetitions"] == 2

    def test_rerun_is_byte_identical(self, tmp_path):
        config = _write_config(tmp_path, DESIGN)
        out = tmp_path / "out"
        assert main(["simulate", str(config)]) == 0
        report = (out / "mzNormal_report.csv").read_bytes()
        manifest = (out / "mzNormal_manifest.json").read_bytes()
        assert main(["simulate", str(config)]) == 0
        assert (out / "mzNormal_report.csv").read_bytes() == report
        assert (out / "mzNormal_manifest.json").read_bytes() == manifest

    def test_timings_on_request(self, tmp_path):
        config = _write_config(tmp_path, DESIGN.replace("seed = 3", "seed = 3\nrecord_timings = true"))
        assert main(["simulate", str(config)]) == 0
        manifest = json.loads((tmp_path / "out" / "mzNormal_manifest.json").read_text())
        assert manifest["timings"]["wall_time"] > 0
        report = pd.read_csv(tmp_path / "out" / "mzNormal_report.csv")
        assert (report["wall_ms"] > 0).all()


class TestProbabilitiesCommand:
    def test_design_probabilities(self, tmp_path):
        config = _write_config(tmp_path, DESIGN)
        assert main(["probabilities", str(config), "--criterion", "lopt"]) == 0
        frame = pd.read_csv(tmp_path / "out" / "mzNormal_probabilities.csv")
        assert list(frame.columns) == ["row_index", "pi"]
        assert len(frame) == 2000
        assert abs(frame["pi"].sum() - 1.0) < 1e-12
        assert (frame["pi"] > 0).all()
        manifest = json.loads((tmp_path / "out" / "mzNormal_manifest.json").read_text())
        assert manifest["criterion"] == "L-OS"
        assert len(manifest["pilot_rows"]) == 200

    def test_export_matches_os_probabilities(self, tmp_path):
        path = _write_config(tmp_path, DESIGN)
        assert main(["probabilities", str(path), "--criterion", "lopt"]) == 0
        config = parse_config(path)
        data, _ = simulate_dataset(config, config.experiment.seed)
        rng = np.random.default_rng([config.experiment.seed, 1])
        pilot = draw_pilot(LogisticFamily(), data, 200, rng, FitOptions(), config.pilot_options())
        plan = os_probabilities(LogisticFamily(), data.covariates_only(), pilot, Criterion.l_opt())
        frame = pd.read_csv(tmp_path / "out" / "mzNormal_probabilities.csv")
        np.testing.assert_array_equal(frame["row_index"], np.arange(2000))
        np.testing.assert_allclose(frame["pi"], plan.probabilities, rtol=1e-14, atol=0)
        manifest = json.loads((tmp_path / "out" / "mzNormal_manifest.json").read_text())
        assert manifest["pilot_rows"] == sorted(int(i) for i in pilot.pilot_indices)
        assert manifest["m_hat"] == pytest.approx(plan.m_hat, rel=1e-12)

    def test_lists_pilot_rows_to_measure(self, tmp_path):
        rng = np.random.default_rng(33)
        x = rng.standard_normal((1000, 3))
        labels = generate_response(LogisticFamily(), x, np.full(3, 0.5), rng)
        frame = pd.DataFrame(x, columns=["a", "b", "c"])
        frame["y"] = np.nan
        csv = tmp_path / "labels.csv"
        frame.to_csv(csv, index=False)
        body = (
            f"[experiment]\nfamily = logistic\nseed = 4\n\n"
            f"[data]\ncsv_path = {csv}\nresponse_column = y\n\n"
            f"[sampling]\nr_p = 150\ncriteria = aopt\n"
        )
        config = _write_config(tmp_path, body)
        manifest_path = tmp_path / "out" / "labels_manifest.json"

        assert main(["probabilities", str(config), "--responses-on-demand"]) == 3
        manifest = json.loads(manifest_path.read_text())
        assert manifest["status"] == "responses_needed"
        rows = manifest["pilot_rows"]
        assert len(rows) == 150
        assert not (tmp_path / "out" / "labels_probabilities.csv").exists()

        frame.loc[rows, "y"] = labels[rows]
        frame.to_csv(csv, index=False)
        assert main(["probabilities", str(config), "--responses-on-demand"]) == 0
        manifest = json.loads(manifest_path.read_text())
        assert manifest["pilot_rows"] == rows
        assert "status" not in manifest
        assert len(pd.read_csv(tmp_path / "out" / "labels_probabilities.csv")) == 1000

    def test_linear_csv_needs_no_responses(self, tmp_path, linear_csv):
        body = (
            f"[experiment]\nfamily = linear\n\n"
            f"[data]\ncsv_path = {linear_csv}\nresponse_column = target\n"
        )
        config = _write_config(tmp_path, body)
        assert main(["probabilities", str(config)]) == 3
        assert main(["probabilities", str(config), "--responses-on-demand"]) == 0
        frame = pd.read_csv(tmp_path / "out" / "unlabelled_probabilities.csv")
        assert len(frame) == 60
        assert abs(frame["pi"].sum() - 1.0) < 1e-12


class TestFitCommand:
    def test_unweighted_fit(self, tmp_path):
        config = _write_config(tmp_path, DESIGN)
        assert main(["fit", str(config), "--r", "500", "--full-fit"]) == 0
        payload = json.loads((tmp_path / "out" / "mzNormal_estimate.json").read_text())["estimate"]
        assert len(payload["beta"]) == 3
        assert payload["method"] == "unweighted"
        assert payload["r"] == 500 and payload["r_p"] == 200
        assert payload["beta0"] == [0.5, 0.5, 0.5]
        assert payload["error_norm_to_beta0"] < 1.0
        assert len(payload["standard_errors"]) == 3
        assert len(payload["confidence_intervals"]) == 3
        assert "error_norm_to_full_mle" in payload

    def test_weighted_fit_has_no_variance(self, tmp_path):
        config = _write_config(tmp_path, DESIGN)
        assert main(["fit", str(config), "--method", "weighted", "--seed", "8"]) == 0
        manifest = json.loads((tmp_path / "out" / "mzNormal_estimate.json").read_text())
        assert manifest["seed"] == 8
        assert "trace_v" not in manifest["estimate"]


class TestExitCodes:
    def test_missing_config(self, tmp_path):
        assert main(["simulate", str(tmp_path / "absent.cfg")]) == 2

    def test_invalid_config(self, tmp_path):
        config = _write_config(tmp_path, DESIGN.replace("r_grid = 400", "r_grid = 4000"))
        assert main(["simulate", str(config)]) == 2

    def test_missing_csv(self, tmp_path):
        body = f"[experiment]\nfamily = linear\n\n[data]\ncsv_path = {tmp_path / 'nope.csv'}\nresponse_column = y\n"
        assert main(["fit", str(_write_config(tmp_path, body))]) == 3

    def test_failure_logged_as_json(self, tmp_path, caplog):
        config = _write_config(tmp_path, DESIGN.replace("r_grid = 400", "r_grid = 4000"))
        assert main(["simulate", str(config)]) == 2
        records = [json.loads(record.getMessage()) for record in caplog.records if record.levelname == "ERROR"]
        assert records[-1]["event"] == "simulate"
        assert records[-1]["success"] is False
        assert records[-1]["exit_code"] == 2
        assert "4000" in records[-1]["error"]

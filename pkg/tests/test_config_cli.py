import json

import numpy as np
import pandas as pd
import pytest

from designfx import ConfigError, load_config
from designfx.cli import main

BASE_CONFIG = """\
data:
  observations: simout/observations.csv
  schedule: simout/schedule.csv
  concordance: simout/concordance.csv
specs:
  - name: cohort_fe
    outcome: log_wage
  - name: age_cell
    outcome: log_wage
    absorb: ["district^age_years"]
  - name: age_cell_md
    outcome: log_wage
    absorb: ["district^age_years"]
    month_dummies: true
    weights: trimmed
placebo:
  K: 30
  master_seed: 2
  spec: age_cell
trends:
  cohorts: {younger: [1986, 1991], older: [1975, 1980]}
simulate:
  n_districts: 20
  n_per_district: 40
  age_range: [21, 36]
  drift: 0.2
  seed: 3
  report: true
  placebo_k: 40
output_dir: out
"""


def write_config(tmp_path, text=BASE_CONFIG, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestConfigValidation:
    def test_unknown_top_level_key(self, tmp_path):
        path = write_config(tmp_path, "outputs: out\n")
        with pytest.raises(ConfigError, match="unknown key"):
            load_config(path)

    def test_unknown_spec_key(self, tmp_path):
        path = write_config(
            tmp_path, "specs:\n  - name: a\n    outcome: log_wage\n    weigths: raw\n"
        )
        with pytest.raises(ConfigError, match="weigths"):
            load_config(path)

    def test_spec_missing_outcome(self, tmp_path):
        path = write_config(tmp_path, "specs:\n  - name: a\n")
        with pytest.raises(ConfigError, match="outcome"):
            load_config(path)

    def test_duplicate_spec_names(self, tmp_path):
        path = write_config(
            tmp_path,
            "specs:\n  - name: a\n    outcome: log_wage\n"
            "  - name: a\n    outcome: log_pce\n",
        )
        with pytest.raises(ConfigError, match="duplicate"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "absent.yaml")

    def test_invalid_yaml(self, tmp_path):
        path = write_config(tmp_path, "specs: [unclosed\n")
        with pytest.raises(ConfigError, match="YAML"):
            load_config(path)

    def test_non_mapping_root(self, tmp_path):
        path = write_config(tmp_path, "- just\n- a list\n")
        with pytest.raises(ConfigError, match="mapping"):
            load_config(path)

    def test_no_specs_declared(self, tmp_path):
        path = write_config(tmp_path, "output_dir: out\n")
        config = load_config(path)
        with pytest.raises(ConfigError, match="no specs"):
            config.specs()

    def test_boolean_k_rejected(self, tmp_path):
        path = write_config(tmp_path, "placebo:\n  K: true\n")
        with pytest.raises(ConfigError, match="integer"):
            load_config(path).placebo_params()

    def test_window_and_defaults_parse(self, tmp_path):
        text = (
            'data:\n  window: ["2011-07-01", "2012-06-30"]\n'
            "specs:\n  - name: a\n    outcome: log_wage\n"
        )
        config = load_config(write_config(tmp_path, text))
        assert config.window() == (15156, 15521)
        name, spec = config.specs()[0]
        assert name == "a"
        assert spec.absorb == (("district",), ("birth_year",))
        assert spec.cluster == "district"
        assert spec.weight_policy.mode == "none"

    def test_paths_resolve_against_config_dir(self, tmp_path):
        config = load_config(write_config(tmp_path))
        assert config.output_dir() == tmp_path / "out"
        assert config.output_dir("elsewhere") != tmp_path / "out"


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One simulate run shared by the command tests."""
    root = tmp_path_factory.mktemp("cli")
    config = write_config(root)
    rc = main(["simulate", "--config", str(config), "--out", str(root / "simout")])
    assert rc == 0
    return root, config


class TestSimulateCommand:
    def test_writes_data_files(self, pipeline):
        root, _ = pipeline
        for name in ("observations.csv", "schedule.csv", "concordance.csv"):
            assert (root / "simout" / name).exists()
        obs = pd.read_csv(root / "simout" / "observations.csv")
        assert len(obs) == 20 * 40

    def test_mechanism_report_flags(self, pipeline):
        root, _ = pipeline
        report = json.loads((root / "simout" / "mechanism_report.json").read_text())
        assert report["flags"]["positive_design_effect"] is True
        assert report["flags"]["month_dummy_nullification"] is True
        assert set(report["fits"]) == {
            "cohort_fe",
            "age_cell_fe",
            "age_cell_fe_month_dummies",
        }
        assert report["design_effect"] > 0
        assert report["placebo_K"] == 40

    def test_seed_override_changes_draw(self, pipeline, tmp_path):
        root, config = pipeline
        rc = main(
            ["simulate", "--config", str(config), "--seed", "9", "--out", str(tmp_path)]
        )
        assert rc == 0
        a = pd.read_csv(root / "simout" / "observations.csv")
        b = pd.read_csv(tmp_path / "observations.csv")
        assert not a.equals(b)


class TestFitCommand:
    def test_writes_results(self, pipeline, tmp_path):
        root, config = pipeline
        rc = main(["fit", "--config", str(config), "--out", str(tmp_path)])
        assert rc == 0
        payload = json.loads((tmp_path / "fit_results.json").read_text())
        assert set(payload["results"]) == {"cohort_fe", "age_cell", "age_cell_md"}
        for result in payload["results"].values():
            assert np.isfinite(result["delta"])
            assert result["se_delta"] > 0
        text = (tmp_path / "fit_results.txt").read_text()
        assert "age_cell_md" in text


class TestPlaceboCommand:
    def test_selected_spec_only(self, pipeline, tmp_path):
        _, config = pipeline
        rc = main(["placebo", "--config", str(config), "--out", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "placebo_age_cell.json").exists()
        assert not (tmp_path / "placebo_cohort_fe.json").exists()
        payload = json.loads((tmp_path / "placebo_age_cell.json").read_text())
        assert payload["K"] == 30
        assert 0 < payload["p_two_tailed"] <= 1
        density = pd.read_csv(tmp_path / "placebo_age_cell_density.csv")
        assert list(density.columns) == ["estimate", "density"]
        assert len(density) > 1

    def test_reruns_identical_apart_from_meta(self, pipeline, tmp_path):
        _, config = pipeline
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["placebo", "--config", str(config), "--out", str(out_a)]) == 0
        assert main(
            ["placebo", "--config", str(config), "--threads", "4", "--out", str(out_b)]
        ) == 0
        pa = json.loads((out_a / "placebo_age_cell.json").read_text())
        pb = json.loads((out_b / "placebo_age_cell.json").read_text())
        pa.pop("meta"), pb.pop("meta")
        assert pa == pb
        da = (out_a / "placebo_age_cell_density.csv").read_bytes()
        db = (out_b / "placebo_age_cell_density.csv").read_bytes()
        assert da == db

    def test_unknown_placebo_spec_fails(self, pipeline, tmp_path):
        root, _ = pipeline
        bad = BASE_CONFIG.replace("spec: age_cell", "spec: no_such")
        config = write_config(root, bad, name="bad_placebo.yaml")
        rc = main(["placebo", "--config", str(config), "--out", str(tmp_path)])
        assert rc == 2


class TestTrendsCommand:
    def test_writes_curves_and_summary(self, pipeline, tmp_path):
        _, config = pipeline
        rc = main(["trends", "--config", str(config), "--out", str(tmp_path)])
        assert rc == 0
        for cohort in ("younger", "older"):
            for var in ("treated_fraction", "log_wage", "log_pce"):
                assert (tmp_path / f"trend_{cohort}_{var}.csv").exists()
                assert (tmp_path / f"trend_{cohort}_{var}_fit.csv").exists()
        summary = json.loads((tmp_path / "trends_summary.json").read_text())
        assert set(summary["slope_deltas"]) == {
            "treated_fraction",
            "log_wage",
            "log_pce",
        }
        older = pd.read_csv(tmp_path / "trend_older_treated_fraction.csv")
        values = older["smoothed"].dropna()
        assert (values == 0).all()


class TestConcordCommand:
    def test_identity_concordance_resolves_all(self, pipeline, tmp_path):
        _, config = pipeline
        rc = main(["concord", "--config", str(config), "--out", str(tmp_path)])
        assert rc == 0
        report = pd.read_csv(tmp_path / "concordance_report.csv")
        assert (report["status"] == "resolved").all()
        assert len(report) == 20


class TestErrorExits:
    def test_missing_config_file(self, tmp_path):
        rc = main(["fit", "--config", str(tmp_path / "none.yaml")])
        assert rc == 2

    def test_fit_without_observations(self, tmp_path, capsys):
        config = write_config(
            tmp_path, "specs:\n  - name: a\n    outcome: log_wage\n"
        )
        rc = main(["fit", "--config", str(config), "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "error:" in capsys.readouterr().err

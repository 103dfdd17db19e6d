import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from designfx import (
    ConfigError,
    DgpConfig,
    RegressionSpec,
    default_adoption_counts,
    estimate_birth_year,
    estimate_spec,
    generate,
    load_observations,
)
from designfx.dates import month_id_of, year_of

# treatment varies across districts within birth cohorts, so cohort FEs
# leave it identified; within district-age cells it varies only through
# the interview-year jump in the reported birth year
TWFE_SPEC = RegressionSpec(outcome="log_wage", absorb=("district", "birth_year"))
AGE_CELL_SPEC = RegressionSpec(outcome="log_wage", absorb=("district^age_years",))


def adoption_oracle(n, n_years=5):
    """Largest-remainder split of the geometric 31 -> 466 expansion."""
    ratio = (466.0 / 31.0) ** (1.0 / (n_years - 1))
    cum = np.array([31.0 * ratio**i for i in range(n_years)])
    inc = np.diff(cum, prepend=0.0)
    raw = inc / inc.sum() * n
    counts = np.floor(raw).astype(int)
    frac = raw - counts
    order = np.lexsort((np.arange(n_years), -frac))
    counts[order[: n - counts.sum()]] += 1
    return tuple(int(c) for c in counts)


class TestAdoptionCounts:
    def test_reference_split(self):
        assert default_adoption_counts(100) == (7, 6, 13, 25, 49)

    def test_matches_oracle_and_sums(self):
        for n in [1, 2, 5, 17, 100, 466, 1234]:
            counts = default_adoption_counts(n)
            assert sum(counts) == n
            assert counts == adoption_oracle(n)

    def test_rejects_bad_sizes(self):
        with pytest.raises(ConfigError):
            default_adoption_counts(0)
        with pytest.raises(ConfigError):
            default_adoption_counts(10, n_years=0)


class TestGenerate:
    def test_shape_and_schema(self):
        table, sched, conc = generate(DgpConfig(n_districts=12, n_per_district=7, seed=1))
        assert len(table.frame) == 12 * 7
        for col in ("district", "interview_date", "age_years", "weight", "log_wage", "log_pce"):
            assert col in table.frame.columns
        assert (table.column("weight") > 0).all()
        assert sched.districts.size == 12
        assert conc.identity is not None

    def test_schedule_counts_match_config(self):
        counts = (2, 0, 5, 1, 4)
        _, sched, _ = generate(
            DgpConfig(n_districts=12, n_per_district=5, adoption_counts=counts, seed=2)
        )
        got = sched.year_counts()
        years = [1985 + i for i in range(5)]
        assert [got.get(y, 0) for y in years] == list(counts)

    def test_same_seed_reproduces(self):
        a, sa, _ = generate(DgpConfig(n_districts=8, n_per_district=9, seed=5))
        b, sb, _ = generate(DgpConfig(n_districts=8, n_per_district=9, seed=5))
        pd.testing.assert_frame_equal(a.frame, b.frame)
        assert_array_equal(sa.years, sb.years)
        c, _, _ = generate(DgpConfig(n_districts=8, n_per_district=9, seed=6))
        assert not a.frame.equals(c.frame)

    def test_interviews_inside_window(self):
        for process in ("uniform", "sequenced-by-district"):
            cfg = DgpConfig(
                n_districts=10, n_per_district=20, interview_process=process, seed=3
            )
            table, _, _ = generate(cfg)
            dates = table.column("interview_date")
            assert dates.min() >= table.window[0]
            assert dates.max() <= table.window[1]

    def test_sequenced_process_groups_by_month(self):
        cfg = DgpConfig(
            n_districts=10,
            n_per_district=25,
            interview_process="sequenced-by-district",
            seed=4,
        )
        table, _, _ = generate(cfg)
        months = month_id_of(table.column("interview_date"))
        per_district = pd.Series(months).groupby(table.column("district")).nunique()
        assert (per_district == 1).all()

    def test_ages_inside_range(self):
        cfg = DgpConfig(n_districts=6, n_per_district=50, age_range=(21, 36), seed=7)
        table, _, _ = generate(cfg)
        ages = table.column("age_years")
        assert ages.min() >= 21
        assert ages.max() <= 36

    def test_flat_config_gives_constant_outcome(self):
        cfg = DgpConfig(
            n_districts=5,
            n_per_district=10,
            district_sd=0.0,
            age_profile=0.0,
            drift=0.0,
            true_effect=0.0,
            noise_sd=0.0,
            seed=8,
        )
        table, _, _ = generate(cfg)
        assert np.unique(table.column("log_wage")).size == 1
        assert np.unique(table.column("log_pce")).size == 1

    def test_birth_years_consistent_with_ages(self):
        table, _, _ = generate(DgpConfig(n_districts=6, n_per_district=30, seed=9))
        birth = estimate_birth_year(table.column("interview_date"), table.column("age_years"))
        assert_array_equal(birth, year_of(table.column("interview_date")) - table.column("age_years"))

    def test_csv_round_trip(self, tmp_path):
        table, _, _ = generate(DgpConfig(n_districts=6, n_per_district=10, seed=10))
        path = tmp_path / "obs.csv"
        table.to_csv(path)
        back = load_observations(path, window=table.window)
        assert back.n_rejected == 0
        assert len(back.frame) == len(table.frame)
        assert_array_equal(back.column("interview_date"), table.column("interview_date"))
        assert_allclose(back.column("log_wage"), table.column("log_wage"), rtol=0, atol=1e-12)


class TestConfigValidation:
    def test_rejects_bad_fields(self):
        with pytest.raises(ConfigError):
            DgpConfig(n_districts=0)
        with pytest.raises(ConfigError):
            DgpConfig(n_per_district=0)
        with pytest.raises(ConfigError):
            DgpConfig(age_range=(30, 21))
        with pytest.raises(ConfigError):
            DgpConfig(noise_sd=-0.1)
        with pytest.raises(ConfigError):
            DgpConfig(interview_process="alphabetical")
        with pytest.raises(ConfigError):
            DgpConfig(n_districts=10, adoption_counts=(5, 5, 5))


class TestMechanism:
    def test_true_effect_detected_without_drift(self):
        # completed-years age reporting misclassifies treatment near the
        # threshold, so the estimate is positive but attenuated toward 0
        cfg = DgpConfig(
            n_districts=40, n_per_district=40, true_effect=0.15, drift=0.0, seed=11
        )
        table, sched, conc = generate(cfg)
        fit = estimate_spec(table, TWFE_SPEC, sched, conc)
        assert fit.delta > 5 * fit.se_delta
        assert 0.0 < fit.delta < 0.15

    def test_drift_loads_onto_age_cell_specification(self):
        # pure interview-time drift, zero true effect: within district-age
        # cells the later-interviewed rows are more often coded treated, so
        # the drift surfaces as a positive estimate there; cohort FEs hold
        # the coding fixed and stay near zero
        cells, twfe = [], []
        for seed in range(200):
            cfg = DgpConfig(
                n_districts=30, n_per_district=30, true_effect=0.0, drift=0.2, seed=seed
            )
            table, sched, conc = generate(cfg)
            cells.append(estimate_spec(table, AGE_CELL_SPEC, sched, conc).delta)
            twfe.append(estimate_spec(table, TWFE_SPEC, sched, conc).delta)
        cells, twfe = np.array(cells), np.array(twfe)
        assert cells.mean() > 5 * cells.std() / np.sqrt(cells.size)
        assert abs(twfe.mean()) < 3 * twfe.std() / np.sqrt(twfe.size)
        assert (np.abs(twfe) < cells).mean() > 0.95

    def test_null_monte_carlo_band(self):
        # no drift, no effect: both specifications are centered on zero
        cells, twfe = [], []
        for seed in range(500):
            cfg = DgpConfig(
                n_districts=15, n_per_district=20, true_effect=0.0, drift=0.0, seed=seed
            )
            table, sched, conc = generate(cfg)
            cells.append(estimate_spec(table, AGE_CELL_SPEC, sched, conc).delta)
            twfe.append(estimate_spec(table, TWFE_SPEC, sched, conc).delta)
        for deltas in (np.array(cells), np.array(twfe)):
            band = 2.576 * deltas.std() / np.sqrt(deltas.size)
            assert abs(deltas.mean()) < band

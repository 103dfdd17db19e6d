"""Run configuration: one YAML file describing data, specs, and outputs.

Schema (all sections optional unless a command needs them)::

    data:
      observations: extract.csv        # micro-data CSV
      schema:                          # role -> source column
        district: distcode
        interview_date: intdate
        age_years: age
        weight: wt
        log_wage: lwage                # optional outcomes
        log_pce: lpce
        person_id: pid                 # optional
        controls: [educ, female]       # carried through by name
      window: ["2011-07-01", "2012-06-30"]
      schedule: rollout.csv            # (district, fiscal-year-start)
      concordance: conc.csv            # (district, parent, weight), optional
      cpi: cpi.csv                     # (YYYY-MM, value), optional
    treatment:
      sd_threshold: 0.1
      threshold_offset: 1
    specs:                             # list of estimations for `fit`
      - name: wage_unweighted
        outcome: log_wage
        absorb: ["district^age_years"]
        cluster: district
        weights: none                  # none | raw | trimmed
        trim_multiplier: 5.0
        month_dummies: false
        deflate: false
        controls: []
        cohort: [1985, 1991]           # optional birth-year range
    placebo:
      K: 1000
      master_seed: 1
      threads: 1
      spec: wage_unweighted            # optional; default = all specs
    trends:
      cohorts: {treated: [1985, 1990], control: [1975, 1980]}
      variables: [treated_fraction, log_wage, log_pce]
      bandwidth_days: 30
    simulate:                          # synthetic-data parameters
      n_districts: 100
      n_per_district: 50
      drift: 0.2
      true_effect: 0.0
      ...                              # any DgpConfig field
      report: true                     # chain fit/placebo/trends
    output_dir: out

Relative paths are resolved against the config file's directory.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import yaml

from .data_model import CpiSeries, ObservationTable, WeightPolicy, load_observations
from .dates import to_days
from .errors import ConfigError
from .regression import RegressionSpec
from .synthetic import DgpConfig
from .treatment import Concordance, RolloutSchedule

_TOP_KEYS = {"data", "treatment", "specs", "placebo", "trends", "simulate", "output_dir"}
_SPEC_KEYS = {
    "name",
    "outcome",
    "treatment",
    "absorb",
    "cluster",
    "weights",
    "trim_multiplier",
    "month_dummies",
    "deflate",
    "controls",
    "cohort",
}
_DATA_KEYS = {"observations", "schema", "window", "schedule", "concordance", "cpi"}
_SCHEMA_KEYS = {
    "district",
    "interview_date",
    "age_years",
    "weight",
    "log_wage",
    "log_pce",
    "person_id",
    "controls",
}
_PLACEBO_KEYS = {"K", "master_seed", "threads", "spec"}
_TRENDS_KEYS = {"cohorts", "variables", "bandwidth_days"}
_DGP_KEYS = {
    "n_districts",
    "n_per_district",
    "adoption_counts",
    "start_year",
    "age_range",
    "true_effect",
    "drift",
    "district_sd",
    "age_profile",
    "noise_sd",
    "interview_process",
    "seed",
    "report",
    "placebo_k",
}

IDENTITY_SCHEMA = {
    "district": "district",
    "interview_date": "interview_date",
    "age_years": "age_years",
    "weight": "weight",
    "log_wage": "log_wage",
    "log_pce": "log_pce",
    "person_id": "person_id",
}


def _require_keys(section: dict, allowed: set, where: str) -> None:
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def _as_int(value, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where} must be an integer, got {value!r}")
    return value


@dataclass(frozen=True)
class RunConfig:
    """Parsed and structurally validated configuration."""

    raw: dict
    base_dir: Path

    def _path(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def _existing_path(self, value: str, where: str) -> Path:
        p = self._path(value)
        if not p.exists():
            raise ConfigError(f"{where}: file not found: {p}")
        return p

    # --- data section -------------------------------------------------

    def window(self) -> tuple[int, int]:
        data = self.raw.get("data", {})
        if "window" in data:
            w = data["window"]
            return to_days(str(w[0])), to_days(str(w[1]))
        from .dates import default_window

        return default_window()

    def schema(self) -> dict:
        data = self.raw.get("data", {})
        schema = dict(data.get("schema", IDENTITY_SCHEMA))
        return schema

    def load_table(self) -> ObservationTable:
        data = self.raw.get("data", {})
        if "observations" not in data:
            raise ConfigError("data.observations is required for this command")
        path = self._existing_path(str(data["observations"]), "data.observations")
        return load_observations(path, self.schema(), window=self.window())

    def load_schedule(self) -> RolloutSchedule:
        data = self.raw.get("data", {})
        if "schedule" not in data:
            raise ConfigError("data.schedule is required for this command")
        path = self._existing_path(str(data["schedule"]), "data.schedule")
        return RolloutSchedule.from_csv(path)

    def load_concordance(self) -> Concordance | None:
        data = self.raw.get("data", {})
        if "concordance" not in data:
            return None
        path = self._existing_path(str(data["concordance"]), "data.concordance")
        return Concordance.from_csv(path)

    def load_cpi(self) -> CpiSeries | None:
        data = self.raw.get("data", {})
        if "cpi" not in data:
            return None
        path = self._existing_path(str(data["cpi"]), "data.cpi")
        return CpiSeries.from_csv(path)

    # --- treatment knobs ----------------------------------------------

    def treatment_params(self) -> dict:
        section = self.raw.get("treatment", {})
        out = {}
        if "sd_threshold" in section:
            out["sd_threshold"] = float(section["sd_threshold"])
        if "threshold_offset" in section:
            out["threshold_offset"] = _as_int(
                section["threshold_offset"], "treatment.threshold_offset"
            )
        return out

    # --- specs ----------------------------------------------------------

    def specs(self) -> list[tuple[str, RegressionSpec]]:
        entries = self.raw.get("specs")
        if not entries:
            raise ConfigError("config declares no specs")
        out = []
        seen = set()
        for i, entry in enumerate(entries):
            name = str(entry.get("name", f"spec{i + 1}"))
            if name in seen:
                raise ConfigError(f"duplicate spec name {name!r}")
            seen.add(name)
            kwargs = dict(
                outcome=str(entry["outcome"]),
                treatment=str(entry.get("treatment", "treated")),
                controls=tuple(entry.get("controls", ())),
                absorb=tuple(entry.get("absorb", ("district", "birth_year"))),
                cluster=str(entry.get("cluster", "district")),
                weight_policy=WeightPolicy(
                    mode=str(entry.get("weights", "none")),
                    trim_multiplier=float(entry.get("trim_multiplier", 5.0)),
                ),
                month_dummies=bool(entry.get("month_dummies", False)),
                deflate_outcome=bool(entry.get("deflate", False)),
            )
            if entry.get("cohort") is not None:
                lo, hi = entry["cohort"]
                kwargs["cohort"] = (int(lo), int(hi))
            out.append((name, RegressionSpec(**kwargs)))
        return out

    def spec_by_name(self, name: str) -> RegressionSpec:
        for spec_name, spec in self.specs():
            if spec_name == name:
                return spec
        raise ConfigError(f"no spec named {name!r} in config")

    # --- placebo ----------------------------------------------------------

    def placebo_params(self) -> dict:
        section = self.raw.get("placebo", {})
        return {
            "K": _as_int(section.get("K", 1000), "placebo.K"),
            "master_seed": _as_int(section.get("master_seed", 1), "placebo.master_seed"),
            "threads": _as_int(section.get("threads", 1), "placebo.threads"),
            "spec": section.get("spec"),
        }

    # --- trends -----------------------------------------------------------

    def trend_params(self) -> dict:
        section = self.raw.get("trends", {})
        cohorts_raw = section.get(
            "cohorts", {"treated": [1985, 1990], "control": [1975, 1980]}
        )
        cohorts = {
            str(name): (int(lo), int(hi)) for name, (lo, hi) in cohorts_raw.items()
        }
        variables = tuple(
            str(v) for v in section.get("variables", ("treated_fraction", "log_wage", "log_pce"))
        )
        return {
            "cohorts": cohorts,
            "variables": variables,
            "bandwidth_days": float(section.get("bandwidth_days", 30.0)),
        }

    # --- synthetic ----------------------------------------------------------

    def dgp(self, seed_override: int | None = None) -> DgpConfig:
        section = dict(self.raw.get("simulate", {}))
        section.pop("report", None)
        section.pop("placebo_k", None)
        kwargs = {}
        for key in (
            "n_districts",
            "n_per_district",
            "start_year",
            "true_effect",
            "drift",
            "district_sd",
            "noise_sd",
            "interview_process",
            "seed",
        ):
            if key in section:
                kwargs[key] = section[key]
        if "adoption_counts" in section:
            kwargs["adoption_counts"] = tuple(int(c) for c in section["adoption_counts"])
        if "age_range" in section:
            lo, hi = section["age_range"]
            kwargs["age_range"] = (int(lo), int(hi))
        if "age_profile" in section:
            prof = section["age_profile"]
            kwargs["age_profile"] = (
                tuple(float(v) for v in prof) if isinstance(prof, (list, tuple)) else float(prof)
            )
        if seed_override is not None:
            kwargs["seed"] = seed_override
        kwargs["window"] = self.window()
        return DgpConfig(**kwargs)

    def simulate_report(self) -> bool:
        return bool(self.raw.get("simulate", {}).get("report", False))

    def simulate_placebo_k(self) -> int:
        return _as_int(self.raw.get("simulate", {}).get("placebo_k", 200), "simulate.placebo_k")

    def output_dir(self, override: str | None = None) -> Path:
        if override is not None:
            return Path(override)
        return self._path(str(self.raw.get("output_dir", "out")))


def load_config(path) -> RunConfig:
    """Parse and structurally validate a YAML run configuration."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    with open(p, "r", encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as err:
            raise ConfigError(f"config is not valid YAML: {err}") from err
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")

    _require_keys(raw, _TOP_KEYS, "config")
    if "data" in raw:
        if not isinstance(raw["data"], dict):
            raise ConfigError("data section must be a mapping")
        _require_keys(raw["data"], _DATA_KEYS, "data")
        if "schema" in raw["data"]:
            _require_keys(raw["data"]["schema"], _SCHEMA_KEYS, "data.schema")
    if "specs" in raw:
        if not isinstance(raw["specs"], list):
            raise ConfigError("specs must be a list")
        for i, entry in enumerate(raw["specs"]):
            if not isinstance(entry, dict):
                raise ConfigError(f"specs[{i}] must be a mapping")
            _require_keys(entry, _SPEC_KEYS, f"specs[{i}]")
            if "outcome" not in entry:
                raise ConfigError(f"specs[{i}] is missing 'outcome'")
    if "placebo" in raw:
        _require_keys(raw["placebo"], _PLACEBO_KEYS, "placebo")
    if "trends" in raw:
        _require_keys(raw["trends"], _TRENDS_KEYS, "trends")
    if "simulate" in raw:
        _require_keys(raw["simulate"], _DGP_KEYS, "simulate")
    if "treatment" in raw:
        _require_keys(raw["treatment"], {"sd_threshold", "threshold_offset"}, "treatment")

    config = RunConfig(raw=raw, base_dir=p.parent.resolve())
    # eager spec validation catches bad entries before any work runs
    if "specs" in raw:
        config.specs()
    return config

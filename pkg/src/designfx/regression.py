"""Weighted least squares with absorbed fixed effects.

The estimation pipeline used throughout the package:

1. code treatment from a rollout schedule (or take an existing column),
2. restrict to the analysis birth cohorts,
3. drop rows with missing treatment, outcome or controls,
4. apply the weight policy (trimming caps are computed on this sample),
5. optionally deflate the outcome by a CPI series,
6. optionally append survey-month indicator controls,
7. iteratively drop fixed-effect singletons,
8. sweep out the fixed effects (exactly for one grouping, by alternating
   projections for several),
9. solve the weighted least-squares problem on the demeaned columns,
10. form the cluster-robust sandwich covariance.

Step 8 relies on the projection identity: regressing demeaned columns on
each other reproduces the coefficients of the full dummy-variable
regression, and the cluster covariance of the retained block as well once
the degrees-of-freedom count includes the absorbed cells.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg
import scipy.sparse
from scipy.sparse.csgraph import connected_components

from .data_model import CpiSeries, ObservationTable, WeightPolicy, deflate, trim_weights
from .dates import format_month, month_id_of, month_ids_in
from .errors import (
    ConfigError,
    ConvergenceError,
    DegenerateSampleError,
    RankDeficiencyError,
    SchemaError,
)
from .treatment import (
    DEFAULT_SD_THRESHOLD,
    DEFAULT_THRESHOLD_OFFSET,
    Concordance,
    RolloutSchedule,
    assign_treatment,
    estimate_birth_year,
)

logger = logging.getLogger(__name__)

AP_TOL = 1e-10
AP_MAX_SWEEPS = 10_000
# post/pre norm ratio below which a design column counts as absorbed
ABSORBED_NORM_RATIO = 1e-8


def _normalize_absorb(absorb) -> tuple[tuple[str, ...], ...]:
    if isinstance(absorb, str):
        absorb = (absorb,)
    out = []
    for grouping in absorb:
        if isinstance(grouping, str):
            parts = tuple(p.strip() for p in grouping.split("^"))
        else:
            parts = tuple(str(p) for p in grouping)
        if not parts or any(not p for p in parts):
            raise ConfigError(f"empty fixed-effect grouping in {absorb!r}")
        out.append(parts)
    return tuple(out)


@dataclass(frozen=True)
class RegressionSpec:
    """What to estimate.

    ``absorb`` lists fixed-effect groupings; each entry is either a column
    name or an interaction written ``"a^b"`` (or a tuple of names). An
    interaction is one grouping whose cells are the observed value
    combinations, not two separate groupings.

    ``cohort`` restricts estimated birth years to an inclusive range; the
    default None derives the range from the rollout schedule (one year
    before the first threshold through one year after the last), so the
    oldest cohort is never treated and the youngest always is.
    """

    outcome: str
    treatment: str = "treated"
    controls: tuple[str, ...] = ()
    absorb: tuple[tuple[str, ...], ...] = (("district",), ("birth_year",))
    cluster: str = "district"
    weight_policy: WeightPolicy = field(default_factory=WeightPolicy)
    month_dummies: bool = False
    deflate_outcome: bool = False
    cohort: tuple[int, int] | None = None

    def __post_init__(self):
        object.__setattr__(self, "controls", tuple(str(c) for c in self.controls))
        object.__setattr__(self, "absorb", _normalize_absorb(self.absorb))
        if self.cohort is not None:
            lo, hi = self.cohort
            if lo > hi:
                raise ConfigError(f"cohort range {self.cohort!r} is inverted")
            object.__setattr__(self, "cohort", (int(lo), int(hi)))

    def spec_hash(self) -> str:
        payload = repr(
            (
                self.outcome,
                self.treatment,
                self.controls,
                self.absorb,
                self.cluster,
                (self.weight_policy.mode, self.weight_policy.trim_multiplier),
                self.month_dummies,
                self.deflate_outcome,
                self.cohort,
            )
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class FitResult:
    """Output of one estimation.

    ``coef`` maps design-column names to estimates; the treatment effect
    and its clustered standard error are broken out as ``delta`` and
    ``se_delta``. ``vcov`` is ordered like ``column_names`` (treatment
    first). ``exclusions`` accounts for every input row not used:
    n_used + sum(exclusions.values()) equals the input row count.
    """

    delta: float
    se_delta: float
    coef: dict
    column_names: tuple[str, ...]
    vcov: np.ndarray
    residuals: np.ndarray
    n_input: int
    n_used: int
    exclusions: dict
    n_clusters: int
    k_design: int
    k_absorbed: int
    small_sample_factor: float
    spec_hash: str = ""

    @property
    def n_singletons_dropped(self) -> int:
        return int(self.exclusions.get("singleton", 0))

    def to_dict(self, include_residuals: bool = False) -> dict:
        out = {
            "delta": self.delta,
            "se_delta": self.se_delta,
            "coef": dict(self.coef),
            "column_names": list(self.column_names),
            "vcov": np.asarray(self.vcov).tolist(),
            "n_input": self.n_input,
            "n_used": self.n_used,
            "exclusions": dict(self.exclusions),
            "n_clusters": self.n_clusters,
            "k_design": self.k_design,
            "k_absorbed": self.k_absorbed,
            "small_sample_factor": self.small_sample_factor,
            "spec_hash": self.spec_hash,
        }
        if include_residuals:
            out["residuals"] = np.asarray(self.residuals).tolist()
        return out


def _codes_1d(values) -> tuple[np.ndarray, int]:
    """Sorted-order integer codes for one column."""
    uniq, codes = np.unique(np.asarray(values), return_inverse=True)
    return codes.astype("int64"), int(uniq.size)


def group_codes(frame, grouping: tuple[str, ...]) -> tuple[np.ndarray, int]:
    """Integer cell ids for a (possibly interacted) grouping.

    Cells are numbered in lexicographic order of their sorted column
    values, so the coding is independent of row order.
    """
    codes, size = _codes_1d(frame[grouping[0]].to_numpy())
    for name in grouping[1:]:
        nxt, nxt_size = _codes_1d(frame[name].to_numpy())
        combined = codes * nxt_size + nxt
        uniq, codes = np.unique(combined, return_inverse=True)
        codes = codes.astype("int64")
        size = int(uniq.size)
    return codes, size


def drop_singletons(frame, absorb: tuple[tuple[str, ...], ...]) -> tuple[np.ndarray, int]:
    """Mask of rows to keep after iterative singleton removal.

    A singleton is the only row in some fixed-effect cell; removing it can
    create new singletons in other groupings, so the pass repeats until a
    fixed point. Returns (keep mask over the input rows, rows dropped).
    """
    keep = np.ones(len(frame), dtype=bool)
    if not absorb:
        return keep, 0
    changed = True
    while changed:
        changed = False
        sub = frame[keep]
        if len(sub) == 0:
            raise DegenerateSampleError("every row was a fixed-effect singleton")
        for grouping in absorb:
            codes, size = group_codes(sub, grouping)
            counts = np.bincount(codes, minlength=size)
            bad = counts[codes] == 1
            if bad.any():
                idx = np.flatnonzero(keep)[bad]
                keep[idx] = False
                changed = True
                sub = frame[keep]
                if len(sub) == 0:
                    raise DegenerateSampleError("every row was a fixed-effect singleton")
    return keep, int((~keep).sum())


def _weighted_cell_demean(X: np.ndarray, codes: np.ndarray, size: int, w: np.ndarray) -> np.ndarray:
    wsum = np.bincount(codes, weights=w, minlength=size)
    out = X.copy()
    for j in range(X.shape[1]):
        means = np.bincount(codes, weights=w * X[:, j], minlength=size) / wsum
        out[:, j] = X[:, j] - means[codes]
    return out


def absorb_fe(
    X,
    groupings: list[tuple[np.ndarray, int]],
    weights,
    tol: float = AP_TOL,
    max_sweeps: int = AP_MAX_SWEEPS,
) -> np.ndarray:
    """Remove weighted fixed-effect means from the columns of X.

    ``groupings`` is a list of (cell codes, cell count) pairs, one per
    fixed-effect grouping. One grouping is demeaned in a single exact
    pass. Several groupings alternate projections until the largest
    column change in a full sweep falls below ``tol`` (raising
    :class:`ConvergenceError` past ``max_sweeps``).
    """
    X = np.array(X, dtype="float64", copy=True)
    if X.ndim == 1:
        X = X[:, None]
    w = np.asarray(weights, dtype="float64")
    if not groupings:
        return X
    if len(groupings) == 1:
        codes, size = groupings[0]
        return _weighted_cell_demean(X, codes, size, w)
    for _ in range(max_sweeps):
        before = X.copy()
        for codes, size in groupings:
            X = _weighted_cell_demean(X, codes, size, w)
        change = float(np.max(np.abs(X - before))) if X.size else 0.0
        if change < tol:
            return X
    raise ConvergenceError(achieved_tol=change, max_sweeps=max_sweeps)


def wls_fit(X, y, weights, column_names=None) -> tuple[np.ndarray, np.ndarray]:
    """Solve min_b sum_i w_i (y_i - x_i'b)^2.

    The design must have full column rank; a pivoted QR factorization
    detects deficiency and the error names the offending columns.
    Returns (coefficients, residuals on the original scale).
    """
    X = np.asarray(X, dtype="float64")
    y = np.asarray(y, dtype="float64")
    w = np.asarray(weights, dtype="float64")
    if column_names is None:
        column_names = tuple(f"x{j}" for j in range(X.shape[1]))
    sw = np.sqrt(w)
    Xs = X * sw[:, None]
    ys = y * sw
    q, r, piv = scipy.linalg.qr(Xs, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    lead = diag[0] if diag.size else 0.0
    rtol = lead * max(Xs.shape) * np.finfo("float64").eps
    rank = int(np.sum(diag > rtol))
    k = X.shape[1]
    if rank < k:
        bad = sorted(column_names[p] for p in piv[rank:])
        raise RankDeficiencyError(columns=bad)
    beta_piv = scipy.linalg.solve_triangular(r, q.T @ ys)
    beta = np.empty(k, dtype="float64")
    beta[piv] = beta_piv
    residuals = y - X @ beta
    return beta, residuals


def absorbed_dof(groupings: list[tuple[np.ndarray, int]]) -> int:
    """Degrees of freedom consumed by the absorbed fixed effects.

    One grouping costs its cell count. Each further grouping costs its
    cell count minus the number of connected components of its bipartite
    incidence graph with the first grouping (for two groupings this is
    the exact rank of the joint dummy block; beyond two it is the usual
    first-grouping-anchored approximation).
    """
    if not groupings:
        return 0
    codes0, size0 = groupings[0]
    total = size0
    for codes_j, size_j in groupings[1:]:
        pairs = np.unique(codes0 * size_j + codes_j)
        rows = pairs // size_j
        cols = size0 + pairs % size_j
        n_nodes = size0 + size_j
        graph = scipy.sparse.coo_matrix(
            (np.ones(pairs.size), (rows, cols)), shape=(n_nodes, n_nodes)
        )
        n_comp, _ = connected_components(graph.tocsr(), directed=False)
        total += size_j - n_comp
    return total


def cluster_vcov(
    X,
    residuals,
    weights,
    cluster_codes,
    n_clusters: int,
    k_total: int,
) -> np.ndarray:
    """Cluster-robust sandwich covariance of WLS coefficients.

    Scores w_i e_i x_i are summed within clusters; the meat is the sum of
    their outer products, scaled by (M/(M-1)) * ((N-1)/(N-K)) where K
    counts design columns plus absorbed fixed-effect degrees of freedom.
    """
    X = np.asarray(X, dtype="float64")
    e = np.asarray(residuals, dtype="float64")
    w = np.asarray(weights, dtype="float64")
    n = X.shape[0]
    m = int(n_clusters)
    if m < 2:
        raise DegenerateSampleError("cluster-robust covariance needs at least 2 clusters")
    if n <= k_total:
        raise DegenerateSampleError(
            f"{n} rows cannot support {k_total} estimated parameters"
        )
    Xw = X * w[:, None]
    bread = np.linalg.inv(X.T @ Xw)
    scores = Xw * e[:, None]
    summed = np.zeros((m, X.shape[1]), dtype="float64")
    np.add.at(summed, np.asarray(cluster_codes, dtype="int64"), scores)
    meat = summed.T @ summed
    factor = (m / (m - 1.0)) * ((n - 1.0) / (n - k_total))
    v = factor * bread @ meat @ bread
    return (v + v.T) / 2.0


def small_sample_factor(n: int, m: int, k_total: int) -> float:
    return (m / (m - 1.0)) * ((n - 1.0) / (n - k_total))


def _month_dummies(month_ids: np.ndarray, window: tuple[int, int]) -> tuple[list, list]:
    """Indicator columns for the survey months, first month as base.

    Months in the window that never occur in the sample would enter as
    all-zero columns; they carry no parameter and are skipped with a note.
    """
    cols, names = [], []
    all_months = month_ids_in(window)
    for mid in all_months[1:]:
        col = (month_ids == mid).astype("float64")
        if not col.any():
            logger.info("survey month %s absent from sample; indicator skipped", format_month(mid))
            continue
        cols.append(col)
        names.append(f"month_{format_month(mid)}")
    return cols, names


def _canonical_order(arrays: list[np.ndarray]) -> np.ndarray:
    """Row permutation sorting by every supplied column (ties bitwise-safe)."""
    keys = []
    for a in arrays:
        if a.dtype.kind in ("U", "S", "O"):
            codes, _ = _codes_1d(a)
            keys.append(codes)
        else:
            keys.append(a)
    return np.lexsort(keys[::-1])


def estimate_spec(
    table: ObservationTable,
    spec: RegressionSpec,
    schedule: RolloutSchedule | None = None,
    concordance: Concordance | None = None,
    cpi: CpiSeries | None = None,
    *,
    sd_threshold: float = DEFAULT_SD_THRESHOLD,
    threshold_offset: int = DEFAULT_THRESHOLD_OFFSET,
) -> FitResult:
    """Run the full estimation pipeline for one specification.

    Parameters
    ----------
    table : ObservationTable
        Micro-data with the canonical columns.
    spec : RegressionSpec
        Outcome, treatment, controls, fixed effects, clustering, weights.
    schedule : RolloutSchedule, optional
        When given, the treatment column is (re)coded from the schedule
        through ``concordance``; when omitted, ``spec.treatment`` must
        already be a column of the table.
    concordance : Concordance, optional
        Defaults to the identity mapping.
    cpi : CpiSeries, optional
        Required when ``spec.deflate_outcome`` is set.

    Returns
    -------
    FitResult

    Notes
    -----
    Outputs are bit-identical under any permutation of input rows: the
    estimation sample is put into a canonical order before any floating
    -point reduction.
    """
    n_input = len(table)
    frame = table.frame

    needed = {spec.outcome, spec.cluster, *spec.controls}
    for grouping in spec.absorb:
        needed.update(grouping)
    needed.discard("birth_year")
    needed.discard(spec.treatment)
    table.require(sorted(needed))

    # stage 1: treatment and birth year
    if schedule is not None:
        assignment = assign_treatment(
            table,
            schedule,
            concordance,
            sd_threshold=sd_threshold,
            threshold_offset=threshold_offset,
        )
        treated = assignment.treated
        birth_year = assignment.birth_year
    else:
        if spec.treatment not in frame.columns:
            raise SchemaError(
                f"treatment column {spec.treatment!r} absent and no schedule supplied"
            )
        treated = frame[spec.treatment].to_numpy(dtype="float64")
        birth_year = estimate_birth_year(
            frame["interview_date"].to_numpy(), frame["age_years"].to_numpy()
        )

    work = frame.copy()
    work[spec.treatment] = treated
    work["birth_year"] = birth_year

    exclusions: dict[str, int] = {}

    # stage 2: cohort restriction
    if spec.cohort is not None:
        lo, hi = spec.cohort
    elif schedule is not None:
        lo = int(schedule.years.min()) + threshold_offset - 1
        hi = int(schedule.years.max()) + threshold_offset + 1
    else:
        lo, hi = None, None
    keep = np.ones(len(work), dtype=bool)
    if lo is not None:
        in_cohort = (work["birth_year"].to_numpy() >= lo) & (work["birth_year"].to_numpy() <= hi)
        exclusions["out_of_cohort"] = int((keep & ~in_cohort).sum())
        keep &= in_cohort

    # stage 3: completeness filters, counted in a fixed stage order
    for label, column in (
        ("missing_treatment", spec.treatment),
        ("missing_outcome", spec.outcome),
    ):
        ok = ~pd.isna(work[column].to_numpy(dtype="float64"))
        exclusions[label] = int((keep & ~ok).sum())
        keep &= ok
    if spec.controls:
        ok = np.ones(len(work), dtype=bool)
        for name in spec.controls:
            col = work[name]
            if col.dtype.kind in ("f", "i"):
                ok &= ~pd.isna(col.to_numpy(dtype="float64"))
        exclusions["missing_control"] = int((keep & ~ok).sum())
        keep &= ok

    work = work[keep].reset_index(drop=True)
    if len(work) == 0:
        raise DegenerateSampleError("no rows left after treatment/outcome filters")

    # canonical row order: bitwise determinism under input permutations
    used_cols = [spec.treatment, spec.outcome, "birth_year", "weight",
                 "interview_date", "age_years", spec.cluster, *spec.controls]
    for grouping in spec.absorb:
        used_cols.extend(grouping)
    seen: list[str] = []
    for c in used_cols:
        if c not in seen:
            seen.append(c)
    order = _canonical_order([work[c].to_numpy() for c in seen])
    work = work.iloc[order].reset_index(drop=True)

    # stage 4: weights
    w = trim_weights(work["weight"].to_numpy(dtype="float64"), spec.weight_policy)

    # stage 5: price deflation
    y = work[spec.outcome].to_numpy(dtype="float64")
    if spec.deflate_outcome:
        if cpi is None:
            raise ConfigError("spec requests deflation but no CPI series was supplied")
        y = deflate(y, work["interview_date"].to_numpy(), cpi)

    # stage 6: survey-month indicators
    design_cols = [work[spec.treatment].to_numpy(dtype="float64")]
    design_names = [spec.treatment]
    for name in spec.controls:
        design_cols.append(work[name].to_numpy(dtype="float64"))
        design_names.append(name)
    if spec.month_dummies:
        mids = month_id_of(work["interview_date"].to_numpy())
        cols, names = _month_dummies(mids, table.window)
        design_cols.extend(cols)
        design_names.extend(names)

    work_design = np.column_stack(design_cols) if design_cols else np.empty((len(work), 0))

    # stage 7: singleton removal
    keep2, n_singletons = drop_singletons(work, spec.absorb)
    exclusions["singleton"] = n_singletons
    work = work[keep2].reset_index(drop=True)
    work_design = work_design[keep2]
    y = y[keep2]
    w = w[keep2]

    # stage 8: absorption
    groupings = [group_codes(work, grouping) for grouping in spec.absorb]
    pre_norm = np.sqrt((w[:, None] * work_design**2).sum(axis=0))
    stacked = np.column_stack([y[:, None], work_design])
    demeaned = absorb_fe(stacked, groupings, w)
    y_dm = demeaned[:, 0]
    x_dm = demeaned[:, 1:]
    post_norm = np.sqrt((w[:, None] * x_dm**2).sum(axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(pre_norm > 0, post_norm / pre_norm, 0.0)
    absorbed = ratio < ABSORBED_NORM_RATIO
    if absorbed.any():
        bad = sorted(np.asarray(design_names, dtype=object)[absorbed])
        raise RankDeficiencyError(
            columns=bad,
            message=(
                "column(s) "
                + ", ".join(str(b) for b in bad)
                + " are collinear with the absorbed fixed effects"
            ),
        )

    # stages 9 and 10: solve and covariance
    beta, residuals = wls_fit(x_dm, y_dm, w, tuple(design_names))
    cluster_code, n_clusters = _codes_1d(work[spec.cluster].to_numpy())
    k_abs = absorbed_dof(groupings)
    k_total = len(design_names) + k_abs
    vcov = cluster_vcov(x_dm, residuals, w, cluster_code, n_clusters, k_total)

    n_used = len(work)
    factor = small_sample_factor(n_used, n_clusters, k_total)
    return FitResult(
        delta=float(beta[0]),
        se_delta=float(np.sqrt(vcov[0, 0])),
        coef={name: float(b) for name, b in zip(design_names, beta)},
        column_names=tuple(design_names),
        vcov=vcov,
        residuals=residuals,
        n_input=n_input,
        n_used=n_used,
        exclusions=exclusions,
        n_clusters=n_clusters,
        k_design=len(design_names),
        k_absorbed=k_abs,
        small_sample_factor=factor,
        spec_hash=spec.spec_hash(),
    )

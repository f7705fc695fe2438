"""Flag-and-rescan loop simulation, per subject and per cohort.

Two modes share the same loop skeleton — scan, predict, re-scan while
flagged and budget remains, accept otherwise, pay a correction if the
accepted scan truly failed:

* **abstract** re-draws failure independently on every scan with the
  subject's own probability and flags through a calibrated coin-flip
  predictor.  This matches the closed-form cost model's assumptions
  exactly, so cohort averages must converge to it — the package's main
  cross-check.

* **kinematic** derives failure from probe pose: each re-scan moves the
  probe along a noisy guidance offset, so successive scans are no longer
  independent.  This deliberately relaxes the independence assumption to
  show where the closed form does and does not bend.

Cohorts fan out over worker processes in contiguous index chunks; because
every subject consumes only its own stream (see ``streams``), results are
bit-identical for a fixed master seed no matter the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterator

import numpy as np

from .alpha_distributions import mean_alpha as _dist_mean_alpha
from .alpha_distributions import expected_cost_ratio, sample_alpha
from .cost_model import CostRates, FailureRate, PredictorProfile
from .errors import DivergentLoop, ModeMismatch, SupportViolation
from .predictor_model import ConfusionPredictor, ScorePredictor, classify, score
from .probe_kinematics import (
    GuidanceNoise,
    LearnerPolicy,
    ProbePose,
    SubjectAnatomy,
    apply_move,
    guidance_offset,
    image_quality,
    perturb_pose,
)
from .streams import subject_stream

if TYPE_CHECKING:
    from .alpha_distributions import FailureDistribution
    from .config import ExperimentConfig


@dataclass(frozen=True, slots=True)
class LoopPolicy:
    """Loop controls: when to stop re-scanning.

    ``quality_threshold`` is the score cutoff for kinematic (score) mode and
    must be None in abstract (confusion) mode, where the predictor flags
    directly.  A flagged scan triggers a re-scan only while the count of
    re-scans is below ``max_rescans``; after that the scan is accepted as-is.
    """

    max_rescans: int
    quality_threshold: float | None = None

    def __post_init__(self) -> None:
        if self.max_rescans < 0:
            raise ValueError(f"max_rescans must be >= 0, got {self.max_rescans}")


@dataclass(frozen=True, slots=True)
class SubjectRecord:
    """Everything one subject's loop produced.

    Tallies count every scan the subject underwent (including the accepted
    one), so cohort-level precision/recall and costs are recomputable from
    records alone.  ``first_fail`` is whether the very first scan truly
    failed — the cost the subject would have incurred with no loop at all,
    under the same random draws.
    """

    subject_id: int
    alpha: float | None
    scans: int
    rescans: int
    accepted: bool
    first_fail: bool
    final_true_fail: bool
    correction_paid: bool
    cost: float
    flagged_scans: int
    failed_scans: int
    flagged_failed_scans: int
    quality_trajectory: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        if self.scans != self.rescans + 1:
            raise ValueError(f"scans ({self.scans}) must equal rescans + 1 ({self.rescans + 1})")
        if not (
            0 <= self.flagged_failed_scans <= min(self.flagged_scans, self.failed_scans)
            and max(self.flagged_scans, self.failed_scans) <= self.scans
        ):
            raise ValueError("scan tallies are inconsistent")
        if self.quality_trajectory is not None and len(self.quality_trajectory) != self.scans:
            raise ValueError("quality trajectory must have one entry per scan")


def run_subject_abstract(
    alpha: FailureRate,
    policy: LoopPolicy,
    predictor: ConfusionPredictor,
    rates: CostRates,
    rng: np.random.Generator,
    subject_id: int = 0,
) -> SubjectRecord:
    """One subject under the independence assumption.

    Each scan fails with probability alpha independently of history; each
    flagged scan buys a re-scan while budget remains.  The accepted scan
    pays a correction if it truly failed.  Two stream draws per scan
    (failure, flag), always.
    """
    a = alpha.alpha
    rescans = 0
    flagged_scans = failed_scans = flagged_failed = 0
    first_fail = False
    while True:
        true_fail = rng.random() < a
        flagged = classify(true_fail, predictor, rng)
        if rescans == 0:
            first_fail = true_fail
        failed_scans += true_fail
        flagged_scans += flagged
        flagged_failed += true_fail and flagged
        if flagged and rescans < policy.max_rescans:
            rescans += 1
            continue
        break
    cost = rescans * rates.rescan_cost + (rates.correction_cost if true_fail else 0.0)
    return SubjectRecord(
        subject_id=subject_id,
        alpha=a,
        scans=rescans + 1,
        rescans=rescans,
        accepted=True,
        first_fail=first_fail,
        final_true_fail=true_fail,
        correction_paid=true_fail,
        cost=cost,
        flagged_scans=flagged_scans,
        failed_scans=failed_scans,
        flagged_failed_scans=flagged_failed,
    )


def run_subject_kinematic(
    subject: SubjectAnatomy,
    start: ProbePose,
    policy: LoopPolicy,
    score_pred: ScorePredictor,
    guidance: GuidanceNoise,
    learner: LearnerPolicy,
    rates: CostRates,
    rng: np.random.Generator,
    subject_id: int = 0,
) -> SubjectRecord:
    """One subject with pose-driven quality and guided re-scans.

    Quality comes from the probe pose; a scan truly fails when quality is
    below the subject's cutoff.  Flagging compares the noisy score against
    the policy threshold; each re-scan applies a guidance offset before the
    next scan, so scans are dependent by design.
    """
    if policy.quality_threshold is None:
        raise ValueError("kinematic mode requires a quality_threshold in the loop policy")
    tau = policy.quality_threshold
    pose = start
    rescans = 0
    flagged_scans = failed_scans = flagged_failed = 0
    trajectory: list[float] = []
    first_fail = False
    while True:
        quality = image_quality(pose, subject)
        trajectory.append(quality)
        true_fail = quality < subject.failure_cutoff
        flagged = score(quality, score_pred, rng) < tau
        if len(trajectory) == 1:
            first_fail = true_fail
        failed_scans += true_fail
        flagged_scans += flagged
        flagged_failed += true_fail and flagged
        if flagged and rescans < policy.max_rescans:
            offset = guidance_offset(pose, subject, guidance, rng)
            pose = apply_move(pose, offset, learner, rng)
            rescans += 1
            continue
        break
    cost = rescans * rates.rescan_cost + (rates.correction_cost if true_fail else 0.0)
    return SubjectRecord(
        subject_id=subject_id,
        alpha=None,
        scans=rescans + 1,
        rescans=rescans,
        accepted=True,
        first_fail=first_fail,
        final_true_fail=true_fail,
        correction_paid=true_fail,
        cost=cost,
        flagged_scans=flagged_scans,
        failed_scans=failed_scans,
        flagged_failed_scans=flagged_failed,
        quality_trajectory=tuple(trajectory),
    )


class SubjectTable:
    """Column-oriented store of SubjectRecords for large cohorts.

    Keeps one numpy column per record field (plus an optional ragged list of
    quality trajectories) so million-subject cohorts stay cheap to hold,
    aggregate, and serialize, while ``row``/iteration still hand out proper
    SubjectRecord objects.
    """

    _INT_COLS = ("scans", "rescans", "flagged_scans", "failed_scans", "flagged_failed_scans")
    _BOOL_COLS = ("accepted", "first_fail", "final_true_fail", "correction_paid")

    def __init__(
        self,
        alpha: np.ndarray,
        scans: np.ndarray,
        rescans: np.ndarray,
        accepted: np.ndarray,
        first_fail: np.ndarray,
        final_true_fail: np.ndarray,
        correction_paid: np.ndarray,
        cost: np.ndarray,
        flagged_scans: np.ndarray,
        failed_scans: np.ndarray,
        flagged_failed_scans: np.ndarray,
        trajectories: list[tuple[float, ...]] | None = None,
    ) -> None:
        self.alpha = alpha  # NaN where not applicable (kinematic mode)
        self.scans = scans
        self.rescans = rescans
        self.accepted = accepted
        self.first_fail = first_fail
        self.final_true_fail = final_true_fail
        self.correction_paid = correction_paid
        self.cost = cost
        self.flagged_scans = flagged_scans
        self.failed_scans = failed_scans
        self.flagged_failed_scans = flagged_failed_scans
        self.trajectories = trajectories
        n = len(alpha)
        for name in self._INT_COLS + self._BOOL_COLS + ("cost",):
            if len(getattr(self, name)) != n:
                raise ValueError(f"column {name} has mismatched length")
        if trajectories is not None and len(trajectories) != n:
            raise ValueError("trajectories list has mismatched length")

    @classmethod
    def from_records(cls, records: list[SubjectRecord]) -> "SubjectTable":
        kinematic = any(r.quality_trajectory is not None for r in records)
        return cls(
            alpha=np.array([math.nan if r.alpha is None else r.alpha for r in records]),
            scans=np.array([r.scans for r in records], dtype=np.int64),
            rescans=np.array([r.rescans for r in records], dtype=np.int64),
            accepted=np.array([r.accepted for r in records], dtype=bool),
            first_fail=np.array([r.first_fail for r in records], dtype=bool),
            final_true_fail=np.array([r.final_true_fail for r in records], dtype=bool),
            correction_paid=np.array([r.correction_paid for r in records], dtype=bool),
            cost=np.array([r.cost for r in records], dtype=float),
            flagged_scans=np.array([r.flagged_scans for r in records], dtype=np.int64),
            failed_scans=np.array([r.failed_scans for r in records], dtype=np.int64),
            flagged_failed_scans=np.array(
                [r.flagged_failed_scans for r in records], dtype=np.int64
            ),
            trajectories=[r.quality_trajectory for r in records] if kinematic else None,
        )

    @classmethod
    def concatenate(cls, parts: list["SubjectTable"]) -> "SubjectTable":
        if not parts:
            return cls.empty(kinematic=False)
        kwargs = {
            name: np.concatenate([getattr(p, name) for p in parts])
            for name in ("alpha", "cost") + cls._INT_COLS + cls._BOOL_COLS
        }
        if parts[0].trajectories is not None:
            trajectories: list[tuple[float, ...]] | None = []
            for p in parts:
                trajectories.extend(p.trajectories)
        else:
            trajectories = None
        return cls(trajectories=trajectories, **kwargs)

    @classmethod
    def empty(cls, kinematic: bool) -> "SubjectTable":
        return cls(
            alpha=np.empty(0),
            scans=np.empty(0, dtype=np.int64),
            rescans=np.empty(0, dtype=np.int64),
            accepted=np.empty(0, dtype=bool),
            first_fail=np.empty(0, dtype=bool),
            final_true_fail=np.empty(0, dtype=bool),
            correction_paid=np.empty(0, dtype=bool),
            cost=np.empty(0),
            flagged_scans=np.empty(0, dtype=np.int64),
            failed_scans=np.empty(0, dtype=np.int64),
            flagged_failed_scans=np.empty(0, dtype=np.int64),
            trajectories=[] if kinematic else None,
        )

    def __len__(self) -> int:
        return len(self.alpha)

    def row(self, i: int) -> SubjectRecord:
        a = float(self.alpha[i])
        return SubjectRecord(
            subject_id=i,
            alpha=None if math.isnan(a) else a,
            scans=int(self.scans[i]),
            rescans=int(self.rescans[i]),
            accepted=bool(self.accepted[i]),
            first_fail=bool(self.first_fail[i]),
            final_true_fail=bool(self.final_true_fail[i]),
            correction_paid=bool(self.correction_paid[i]),
            cost=float(self.cost[i]),
            flagged_scans=int(self.flagged_scans[i]),
            failed_scans=int(self.failed_scans[i]),
            flagged_failed_scans=int(self.flagged_failed_scans[i]),
            quality_trajectory=None if self.trajectories is None else self.trajectories[i],
        )

    def __iter__(self) -> Iterator[SubjectRecord]:
        return (self.row(i) for i in range(len(self)))


@dataclass(frozen=True, slots=True)
class CohortAggregates:
    """Cohort summaries, all recomputable from the per-subject table."""

    subjects: int
    total_scans: int
    total_rescans: int
    total_corrections: int
    total_cost: float
    mean_cost: float | None
    mean_rescans: float | None
    empirical_precision: float | None
    empirical_recall: float | None
    empirical_cost_ratio: float | None
    analytic_cost_ratio: float | None
    mean_initial_quality: float | None = None
    mean_final_quality: float | None = None


@dataclass(frozen=True, slots=True)
class SimulationReport:
    """Cohort results: config echo, per-subject table, aggregates, manifest."""

    mode: str
    config: dict
    table: SubjectTable
    aggregates: CohortAggregates
    manifest: dict


def _empirical_ratio(table: SubjectTable, rates: CostRates) -> float | None:
    """Paired estimator: looped cost over the cost the same draws would have
    incurred with no loop (correction on first-scan failure)."""
    baseline = rates.correction_cost * float(table.first_fail.sum())
    if baseline == 0.0:
        return None
    return float(table.cost.sum()) / baseline


def _aggregate(
    table: SubjectTable, rates: CostRates, analytic_ratio: float | None
) -> CohortAggregates:
    n = len(table)
    flagged = int(table.flagged_scans.sum())
    failed = int(table.failed_scans.sum())
    hits = int(table.flagged_failed_scans.sum())

    mean_initial = mean_final = None
    if table.trajectories is not None and n > 0:
        mean_initial = float(np.mean([t[0] for t in table.trajectories]))
        mean_final = float(np.mean([t[-1] for t in table.trajectories]))

    return CohortAggregates(
        subjects=n,
        total_scans=int(table.scans.sum()),
        total_rescans=int(table.rescans.sum()),
        total_corrections=int(table.correction_paid.sum()),
        total_cost=float(table.cost.sum()),
        mean_cost=float(table.cost.mean()) if n > 0 else None,
        mean_rescans=float(table.rescans.mean()) if n > 0 else None,
        empirical_precision=hits / flagged if flagged > 0 else None,
        empirical_recall=hits / failed if failed > 0 else None,
        empirical_cost_ratio=_empirical_ratio(table, rates),
        analytic_cost_ratio=analytic_ratio,
        mean_initial_quality=mean_initial,
        mean_final_quality=mean_final,
    )


def _simulate_chunk(config: "ExperimentConfig", start: int, stop: int) -> SubjectTable:
    """Simulate subjects [start, stop) and return their columns."""
    records: list[SubjectRecord] = []
    if config.mode == "abstract":
        for i in range(start, stop):
            rng = subject_stream(config.master_seed, i)
            alpha = sample_alpha(config.distribution, rng)
            predictor = ConfusionPredictor.calibrated(config.profile, alpha)
            records.append(
                run_subject_abstract(alpha, config.policy, predictor, config.rates, rng, i)
            )
    else:
        anatomy = config.anatomy
        for i in range(start, stop):
            rng = subject_stream(config.master_seed, i)
            start_pose = perturb_pose(
                anatomy.target_pose, config.start_offset_t, config.start_offset_r, rng
            )
            records.append(
                run_subject_kinematic(
                    anatomy,
                    start_pose,
                    config.policy,
                    config.score_predictor,
                    config.guidance,
                    config.learner,
                    config.rates,
                    rng,
                    i,
                )
            )
    if not records:
        return SubjectTable.empty(kinematic=config.mode == "kinematic")
    return SubjectTable.from_records(records)


def run_cohort(config: "ExperimentConfig") -> SimulationReport:
    """Simulate every subject of the configured cohort.

    Results are bit-identical for a fixed master seed regardless of
    ``config.workers``: subjects consume only their own streams and chunks
    are reassembled in subject order.
    """
    n = config.n_subjects
    workers = config.workers
    chunk = max(1, -(-n // (workers * 8))) if workers > 1 else max(1, n)
    bounds = [(s, min(s + chunk, n)) for s in range(0, n, chunk)] or [(0, 0)]

    if workers == 1 or n <= chunk:
        parts = [_simulate_chunk(config, s, e) for s, e in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_simulate_chunk_star, [(config, s, e) for s, e in bounds]))
    table = SubjectTable.concatenate(parts) if len(parts) > 1 else parts[0]

    analytic = None
    if config.mode == "abstract":
        try:
            analytic = expected_cost_ratio(
                config.distribution, config.profile, config.rates.quotient
            ).ratio
        except (SupportViolation, DivergentLoop):
            analytic = None

    aggregates = _aggregate(table, config.rates, analytic)
    return SimulationReport(
        mode=config.mode,
        config=config.echo,
        table=table,
        aggregates=aggregates,
        manifest=config.manifest_dict(),
    )


def _simulate_chunk_star(args: tuple) -> SubjectTable:
    return _simulate_chunk(*args)


@dataclass(frozen=True, slots=True)
class ComparisonSummary:
    """Analytic population costs next to their simulated estimates."""

    subjects: int
    analytic_original_cost: float
    analytic_new_cost: float
    analytic_cost_ratio: float
    empirical_mean_cost: float
    empirical_cost_se: float | None
    empirical_cost_ratio: float | None
    empirical_ratio_se: float | None
    z_mean_cost: float | None
    z_cost_ratio: float | None


def empirical_vs_analytic(
    report: SimulationReport,
    dist: "FailureDistribution",
    profile: PredictorProfile,
    rates: CostRates,
) -> ComparisonSummary:
    """Compare an abstract-mode report against the closed-form population costs.

    Standard errors are sample-based; the cost-ratio one uses the delta
    method for the paired ratio estimator.  With a single subject no spread
    is estimable, so the errors and z-scores are reported as None.

    Raises:
        ModeMismatch: for kinematic reports, whose scans violate the
            independence assumption the closed forms rely on.
    """
    if report.mode != "abstract":
        raise ModeMismatch("analytic comparison is defined for abstract-mode reports only")
    n = len(report.table)
    if n == 0:
        raise ValueError("cannot compare an empty cohort")

    mean_a = _dist_mean_alpha(dist)
    analytic_original = mean_a * rates.correction_cost
    analytic_ratio = expected_cost_ratio(dist, profile, rates.quotient).ratio
    analytic_new = analytic_original * analytic_ratio

    cost = report.table.cost
    baseline = rates.correction_cost * report.table.first_fail.astype(float)
    mean_cost = float(cost.mean())

    if n == 1:
        return ComparisonSummary(
            subjects=1,
            analytic_original_cost=analytic_original,
            analytic_new_cost=analytic_new,
            analytic_cost_ratio=analytic_ratio,
            empirical_mean_cost=mean_cost,
            empirical_cost_se=None,
            empirical_cost_ratio=None if baseline.sum() == 0.0 else float(
                cost.sum() / baseline.sum()
            ),
            empirical_ratio_se=None,
            z_mean_cost=None,
            z_cost_ratio=None,
        )

    cost_se = float(cost.std(ddof=1) / math.sqrt(n))
    z_cost = (mean_cost - analytic_new) / cost_se if cost_se > 0.0 else None

    ratio = ratio_se = z_ratio = None
    if baseline.sum() > 0.0:
        ratio = float(cost.sum() / baseline.sum())
        ybar = float(baseline.mean())
        var = (
            float(cost.var(ddof=1))
            - 2.0 * ratio * float(np.cov(cost, baseline, ddof=1)[0, 1])
            + ratio**2 * float(baseline.var(ddof=1))
        ) / (n * ybar**2)
        ratio_se = math.sqrt(max(var, 0.0))
        if ratio_se > 0.0:
            z_ratio = (ratio - analytic_ratio) / ratio_se

    return ComparisonSummary(
        subjects=n,
        analytic_original_cost=analytic_original,
        analytic_new_cost=analytic_new,
        analytic_cost_ratio=analytic_ratio,
        empirical_mean_cost=mean_cost,
        empirical_cost_se=cost_se,
        empirical_cost_ratio=ratio,
        empirical_ratio_se=ratio_se,
        z_mean_cost=z_cost,
        z_cost_ratio=z_ratio,
    )

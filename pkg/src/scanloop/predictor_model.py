"""Quality predictors realized by their operating characteristics.

Two abstractions of a scan-quality classifier, without any learned model:

* ``ConfusionPredictor`` flips calibrated coins.  It is built from a target
  (precision, recall) operating point plus the failure base rate it must
  hold at; the implied false-positive rate is derived so that the marginal
  precision of the simulated flags is exactly the configured one.  Ignoring
  false positives would under-count re-scans and break agreement with the
  closed-form cost model.

* ``ScorePredictor`` perturbs the true image quality with Gaussian noise and
  flags scans whose noisy score falls strictly below a threshold, inducing
  a (precision, recall) point per threshold — the knob a threshold sweep
  turns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cost_model import FailureRate, PredictorProfile
from .errors import InfeasibleOperatingPoint


def false_positive_rate(alpha: FailureRate, profile: PredictorProfile) -> float:
    """Rate of flagging intact scans that makes marginal precision exact.

    Solves  precision = alpha·recall / (alpha·recall + (1 − alpha)·q)  for q.

    Raises:
        InfeasibleOperatingPoint: when the solution q exceeds 1, i.e. no
            classifier can hold this (precision, recall) at this base rate.
    """
    a, p, r = alpha.alpha, profile.precision, profile.recall
    q = a * r * (1.0 - p) / (p * (1.0 - a))
    if q > 1.0:
        raise InfeasibleOperatingPoint(
            f"no false-positive rate in [0, 1] yields precision {p} and recall {r}"
            f" at base rate {a} (would need {q})"
        )
    return q


@dataclass(frozen=True, slots=True)
class ConfusionPredictor:
    """Coin-flip classifier calibrated to an operating point at a base rate.

    Build with ``ConfusionPredictor.calibrated``; constructing directly
    requires passing the exact derived false-positive rate.
    """

    profile: PredictorProfile
    base_rate: FailureRate
    false_positive_rate: float

    def __post_init__(self) -> None:
        expected = false_positive_rate(self.base_rate, self.profile)
        if self.false_positive_rate != expected:
            raise ValueError(
                f"false_positive_rate {self.false_positive_rate} is not the calibrated"
                f" value {expected} for this profile and base rate"
            )

    @classmethod
    def calibrated(
        cls, profile: PredictorProfile, base_rate: FailureRate
    ) -> "ConfusionPredictor":
        return cls(profile, base_rate, false_positive_rate(base_rate, profile))


def classify(true_fail: bool, predictor: ConfusionPredictor, rng: np.random.Generator) -> bool:
    """One flag decision; consumes exactly one uniform draw from the stream."""
    u = rng.random()
    if true_fail:
        return u < predictor.profile.recall
    return u < predictor.false_positive_rate


def classify_many(
    true_fails: np.ndarray, predictor: ConfusionPredictor, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized ``classify``: same stream consumption, one draw per scan."""
    u = rng.random(len(true_fails))
    cut = np.where(true_fails, predictor.profile.recall, predictor.false_positive_rate)
    return u < cut


@dataclass(frozen=True, slots=True)
class ScorePredictor:
    """Noisy quality scorer; flag when score < threshold (ties pass)."""

    noise_scale: float
    threshold: float

    def __post_init__(self) -> None:
        if self.noise_scale < 0.0:
            raise ValueError(f"noise_scale must be >= 0, got {self.noise_scale}")


def score(
    true_quality: float, predictor: ScorePredictor, rng: np.random.Generator
) -> float:
    """Noisy quality estimate in [0, 1]; consumes exactly one Gaussian draw.

    The draw happens even at noise_scale 0 so that stream positions do not
    depend on the noise setting.
    """
    eps = rng.standard_normal()
    return float(np.clip(true_quality + predictor.noise_scale * eps, 0.0, 1.0))


@dataclass(frozen=True, slots=True)
class OperatingPoint:
    """Empirical (precision, recall) induced by one threshold over a sample.

    ``precision`` is None when nothing was flagged; ``recall`` is None when
    the sample contains no true failures.  Neither is ever reported as 0 in
    those cases.
    """

    precision: float | None
    recall: float | None
    threshold: float
    flag_rate: float


def operating_point(
    score_predictor: ScorePredictor,
    threshold: float,
    cohort_sample: list[tuple[float, bool]],
    rng: np.random.Generator,
) -> OperatingPoint:
    """Score every (true_quality, true_fail) item and tally flag statistics."""
    if not cohort_sample:
        raise ValueError("cohort_sample must be nonempty")
    qualities = np.array([q for q, _ in cohort_sample])
    fails = np.array([f for _, f in cohort_sample], dtype=bool)
    eps = rng.standard_normal(len(cohort_sample))
    scores = np.clip(qualities + score_predictor.noise_scale * eps, 0.0, 1.0)
    flags = scores < threshold

    n_flagged = int(flags.sum())
    n_fails = int(fails.sum())
    n_hits = int((flags & fails).sum())
    precision = n_hits / n_flagged if n_flagged > 0 else None
    recall = n_hits / n_fails if n_fails > 0 else None
    return OperatingPoint(
        precision=precision,
        recall=recall,
        threshold=threshold,
        flag_rate=n_flagged / len(cohort_sample),
    )

"""Closed-form expected-cost model of a flag-and-rescan screening loop.

Each acquired scan is segmented automatically; with per-subject probability
``alpha`` the segmentation fails and must be corrected manually at cost
``correction_cost``.  A quality predictor with operating point
(``precision``, ``recall``) flags suspect scans; every flagged scan triggers
one re-acquisition at cost ``rescan_cost``, and the loop repeats on the new
scan.  Because each round flags with probability ``alpha * recall /
precision``, the loop is a geometric retry process and its expected cost has
a closed form, implemented here for a single point value of ``alpha``.
Population-level averages over a distribution of ``alpha`` live in
``alpha_distributions``.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DivergentLoop, UndefinedRatio


@dataclass(frozen=True, slots=True)
class PredictorProfile:
    """Operating point of the quality predictor.

    ``precision`` is the fraction of flagged scans that truly failed;
    ``recall`` is the fraction of truly failed scans that get flagged.
    """

    precision: float
    recall: float

    def __post_init__(self) -> None:
        if not 0.0 < self.precision <= 1.0:
            raise ValueError(f"precision must be in (0, 1], got {self.precision}")
        if not 0.0 <= self.recall <= 1.0:
            raise ValueError(f"recall must be in [0, 1], got {self.recall}")


@dataclass(frozen=True, slots=True)
class CostRates:
    """Per-event costs, in abstract cost units.

    ``rescan_cost`` is paid for each re-acquisition; ``correction_cost`` for
    each accepted scan whose segmentation truly failed.  The initial scan and
    final verification are excluded: the loop does not change them.
    """

    rescan_cost: float
    correction_cost: float

    def __post_init__(self) -> None:
        if self.rescan_cost < 0.0:
            raise ValueError(f"rescan_cost must be >= 0, got {self.rescan_cost}")
        if self.correction_cost <= 0.0:
            raise ValueError(f"correction_cost must be > 0, got {self.correction_cost}")

    @property
    def quotient(self) -> float:
        """rescan_cost / correction_cost, the dimensionless knob of the model."""
        return self.rescan_cost / self.correction_cost


@dataclass(frozen=True, slots=True)
class FailureRate:
    """Per-subject probability that a scan's segmentation fails.

    alpha = 1 is excluded: a subject who always fails re-scans forever under
    a perfect predictor, so no formula below stays finite there.
    """

    alpha: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")


@dataclass(frozen=True, slots=True)
class CostRatio:
    """Ratio of looped cost to baseline cost; reduction is its complement."""

    ratio: float

    @property
    def reduction(self) -> float:
        return 1.0 - self.ratio


@dataclass(frozen=True, slots=True)
class BreakevenPrecision:
    """Minimum precision at which flagging pays off; infeasible if bound >= 1."""

    bound: float
    feasible: bool


def original_cost_at(alpha: FailureRate, rates: CostRates) -> float:
    """Expected per-subject cost without the loop: every failure is corrected."""
    return alpha.alpha * rates.correction_cost


def new_cost_at(alpha: FailureRate, profile: PredictorProfile, rates: CostRates) -> float:
    """Expected per-subject cost under the flag-and-rescan loop.

    Closed form of the retry recursion (see ``cost_recursion_rhs``).  Finite
    only while precision > alpha * recall; past that point each round flags
    at least as much expected work as it retires and the expected cost
    diverges.

    Raises:
        DivergentLoop: if precision <= alpha * recall.
    """
    a, p, r = alpha.alpha, profile.precision, profile.recall
    c_s, c_c = rates.rescan_cost, rates.correction_cost
    denom = p - a * r
    if denom <= 0.0:
        raise DivergentLoop(
            f"no finite expected cost: precision {p} <= alpha*recall {a * r}"
        )
    return (p * a * c_c - p * a * r * c_c + a * r * c_s) / denom


def cost_recursion_rhs(
    candidate: float,
    alpha: FailureRate,
    profile: PredictorProfile,
    rates: CostRates,
) -> float:
    """One step of the self-consistent cost recursion.

    A scan passes the gate unflagged but truly failed with probability
    ``alpha * (1 - recall)`` (pay a correction), or gets flagged with
    probability ``alpha * recall / precision`` (pay a re-scan, then face the
    same expected cost again).  ``new_cost_at`` is the fixed point of this
    map; the function exists so tests can verify that independently.
    """
    a, p, r = alpha.alpha, profile.precision, profile.recall
    return a * (1.0 - r) * rates.correction_cost + (a * r / p) * (
        rates.rescan_cost + candidate
    )


def cost_ratio_at(
    alpha: FailureRate, profile: PredictorProfile, cost_quotient: float
) -> CostRatio:
    """Looped cost divided by baseline cost for one subject.

    Depends on costs only through ``cost_quotient`` = rescan_cost /
    correction_cost.

    Raises:
        UndefinedRatio: at alpha = 0, where the baseline cost is zero.
        DivergentLoop: if precision <= alpha * recall.
    """
    a, p, r = alpha.alpha, profile.precision, profile.recall
    if cost_quotient < 0.0:
        raise ValueError(f"cost_quotient must be >= 0, got {cost_quotient}")
    if a == 0.0:
        raise UndefinedRatio("cost ratio is 0/0 at alpha = 0")
    denom = p - a * r
    if denom <= 0.0:
        raise DivergentLoop(
            f"no finite expected cost: precision {p} <= alpha*recall {a * r}"
        )
    return CostRatio((p - p * r + r * cost_quotient) / denom)


def breakeven_precision(alpha: FailureRate, cost_quotient: float) -> BreakevenPrecision:
    """Precision above which the loop costs less than the baseline.

    The bound is ``alpha + cost_quotient``; when it reaches 1 no realizable
    predictor reduces cost for this subject.
    """
    if cost_quotient < 0.0:
        raise ValueError(f"cost_quotient must be >= 0, got {cost_quotient}")
    bound = alpha.alpha + cost_quotient
    return BreakevenPrecision(bound=bound, feasible=bound < 1.0)


def cost_reduction_table(
    rows: list[tuple[float, float, float, float]],
) -> list[CostRatio]:
    """Evaluate ``cost_ratio_at`` for rows of (alpha, cost_quotient, precision, recall).

    Errors from individual rows are re-raised with the row index attached.
    """
    out: list[CostRatio] = []
    for i, (a, quotient, p, r) in enumerate(rows):
        try:
            out.append(cost_ratio_at(FailureRate(a), PredictorProfile(p, r), quotient))
        except (ValueError, UndefinedRatio, DivergentLoop) as exc:
            raise type(exc)(f"row {i}: {exc}") from exc
    return out

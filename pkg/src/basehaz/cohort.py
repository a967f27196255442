"""Right-censored cohorts and the empirical norms built on them.

A cohort is the single input every estimator in this package consumes: the
observed follow-up times, the event indicators, the covariate matrix and the
study horizon ``tau``.  Everything here is immutable and pure, so cohorts can
be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from .hazards import PiecewiseConstantHazard, midpoint_grid

__all__ = ["Observation", "Cohort", "at_risk", "rand_norm_sq"]


class Observation(NamedTuple):
    """One subject: follow-up time, event indicator and covariate row."""

    time: float
    status: int
    covariates: np.ndarray


@dataclass(frozen=True)
class Cohort:
    """An immutable right-censored sample with its study horizon.

    Parameters
    ----------
    times : ndarray of shape (n,)
        Observed follow-up times, the minimum of the event time and the
        (possibly horizon-clipped) censoring time.
    status : ndarray of shape (n,)
        Event indicators, 1 if the event was observed and 0 if censored.
    covariates : ndarray of shape (n, p)
        Covariate rows, one per subject.
    tau : float
        End of the study window.  Estimators never recompute it; the value
        stored here is the single source of truth.
    """

    times: np.ndarray
    status: np.ndarray
    covariates: np.ndarray
    tau: float
    _sort_order: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        times = np.ascontiguousarray(self.times, dtype=float)
        status = np.ascontiguousarray(self.status, dtype=np.int8)
        covariates = np.ascontiguousarray(self.covariates, dtype=float)
        if covariates.ndim != 2:
            raise ValueError("covariates must be a 2-d array")
        if times.ndim != 1 or times.shape[0] != covariates.shape[0]:
            raise ValueError("times and covariates disagree on the sample size")
        if status.shape != times.shape:
            raise ValueError("status and times disagree on the sample size")
        if times.shape[0] < 1:
            raise ValueError("a cohort needs at least one observation")
        if np.any(times < 0) or not np.all(np.isfinite(times)):
            raise ValueError("times must be finite and nonnegative")
        if not np.all((status == 0) | (status == 1)):
            raise ValueError("status must be 0 or 1")
        if not np.all(np.isfinite(covariates)):
            raise ValueError("covariates must be finite")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError("tau must be a positive real")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "status", status)
        object.__setattr__(self, "covariates", covariates)
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "_sort_order", np.argsort(times, kind="stable"))
        self.times.setflags(write=False)
        self.status.setflags(write=False)
        self.covariates.setflags(write=False)
        self._sort_order.setflags(write=False)

    @property
    def n(self) -> int:
        return self.times.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    @property
    def observations(self) -> Iterator[Observation]:
        for i in range(self.n):
            yield Observation(float(self.times[i]), int(self.status[i]), self.covariates[i])

    @classmethod
    def from_observations(cls, observations, tau: float) -> "Cohort":
        obs = list(observations)
        times = np.array([o.time for o in obs], dtype=float)
        status = np.array([o.status for o in obs], dtype=np.int8)
        covariates = np.array([np.asarray(o.covariates, dtype=float) for o in obs])
        if covariates.ndim == 1:
            covariates = covariates.reshape(len(obs), -1)
        return cls(times=times, status=status, covariates=covariates, tau=tau)

    def linear_predictor(self, beta: np.ndarray) -> np.ndarray:
        """Return the per-subject linear predictor ``covariates @ beta``."""
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.p,):
            raise ValueError(f"beta has length {beta.shape}, expected ({self.p},)")
        return self.covariates @ beta

    def event_mask(self) -> np.ndarray:
        """Subjects whose event is observed inside the study window."""
        return (self.status == 1) & (self.times <= self.tau)

    def sorted_times(self) -> np.ndarray:
        return self.times[self._sort_order]

    def sort_order(self) -> np.ndarray:
        return self._sort_order


def at_risk(cohort: Cohort, t: float) -> np.ndarray:
    """Indicator vector of subjects still under observation at time ``t``.

    Component ``i`` is 1 exactly when the observed time of subject ``i`` is at
    least ``t``.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    return (cohort.times >= t).astype(np.int8)


def _at_risk_weight_curve(cohort: Cohort, beta: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Average of exp(beta'Z_i) over subjects at risk, evaluated on ``grid``.

    Returns w(t) = (1/n) * sum_i exp(beta'Z_i) 1{X_i >= t} for each grid node.
    """
    eta = cohort.linear_predictor(beta)
    order = cohort.sort_order()
    sorted_times = cohort.times[order]
    weights = np.exp(eta[order])
    # suffix[k] = sum of weights with sorted index >= k
    suffix = np.concatenate([np.cumsum(weights[::-1])[::-1], [0.0]])
    pos = np.searchsorted(sorted_times, grid, side="left")
    return suffix[pos] / cohort.n


def rand_norm_sq(cohort: Cohort, beta: np.ndarray, alpha) -> float:
    """Empirical squared norm of a hazard under the at-risk weighting.

    Computes (1/n) sum_i int_0^tau alpha(t)^2 exp(beta'Z_i) 1{X_i >= t} dt.
    Piecewise-constant hazards are integrated exactly on their intervals;
    anything else goes through the fixed midpoint quadrature grid.
    """
    if isinstance(alpha, PiecewiseConstantHazard):
        eta = cohort.linear_predictor(beta)
        w = np.exp(eta)
        edges = alpha.edges()
        values = alpha.values()
        total = 0.0
        for left, right, value in zip(edges[:-1], edges[1:], values):
            if value == 0.0:
                continue
            occupied = np.clip(cohort.times, left, right) - left
            total += value * value * float(w @ occupied)
        return total / cohort.n
    grid, width = midpoint_grid(cohort.tau)
    curve = _at_risk_weight_curve(cohort, beta, grid)
    values = np.asarray(alpha(grid), dtype=float)
    return float(np.sum(values * values * curve) * width)

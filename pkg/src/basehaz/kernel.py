"""Kernel smoothing of the baseline hazard with cross-validated bandwidth."""

from __future__ import annotations

import numpy as np

from .cohort import Cohort
from .hazards import KernelHazard, midpoint_grid

__all__ = [
    "epanechnikov",
    "event_weights",
    "kernel_estimate",
    "fit_kernel",
    "default_bandwidth_grid",
    "cv_bandwidth",
]


def epanechnikov(u):
    """Parabolic kernel 0.75 * (1 - u^2) on [-1, 1], zero outside."""
    u = np.asarray(u, dtype=float)
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def event_weights(cohort: Cohort, beta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Event times and their inverse weighted at-risk sums.

    For every subject with an observed event, the weight is
    1 / sum_j exp(beta'Z_j) 1{X_j >= X_i}; censored subjects carry no mass.
    """
    eta = cohort.linear_predictor(beta)
    order = cohort.sort_order()
    sorted_times = cohort.times[order]
    w_sorted = np.exp(eta[order])
    suffix = np.concatenate([np.cumsum(w_sorted[::-1])[::-1], [0.0]])
    events = cohort.status == 1
    times = cohort.times[events]
    pos = np.searchsorted(sorted_times, times, side="left")
    return times, 1.0 / suffix[pos]


def kernel_estimate(cohort: Cohort, beta: np.ndarray, h: float, t) -> np.ndarray:
    """Kernel hazard estimate at times ``t`` for bandwidth ``h``."""
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    times, weights = event_weights(cohort, beta)
    return KernelHazard(bandwidth=h, event_times=times, weights=weights, tau=cohort.tau)(t)


def fit_kernel(cohort: Cohort, beta: np.ndarray, h: float) -> KernelHazard:
    """Bundle the weighted events into an evaluable kernel hazard."""
    if not h > 0:
        raise ValueError("bandwidth must be positive")
    times, weights = event_weights(cohort, beta)
    return KernelHazard(bandwidth=h, event_times=times, weights=weights, tau=cohort.tau)


def default_bandwidth_grid(cohort: Cohort, size: int = 30) -> np.ndarray:
    """Log-spaced bandwidth candidates from tau/n up to tau/2."""
    return np.geomspace(cohort.tau / cohort.n, cohort.tau / 2.0, size)


def _cv_criterion(cohort: Cohort, beta: np.ndarray, h: float) -> float:
    """Squared-norm term minus twice the leave-out cross term at bandwidth h.

    The first term is the plug-in integral of the squared estimate over
    [0, tau] (quadrature); the second is the symmetric double sum over
    distinct subjects of kernel-smoothed products of the raw hazard
    increments, with the unweighted at-risk counts in the denominators.
    """
    alpha = fit_kernel(cohort, beta, h)
    grid, width = midpoint_grid(cohort.tau)
    values = alpha(grid)
    sq_term = float(np.sum(values * values) * width)
    sorted_times = cohort.sorted_times()
    risk_counts = cohort.n - np.searchsorted(sorted_times, cohort.times, side="left")
    increments = cohort.status / risk_counts
    kmat = epanechnikov((cohort.times[:, None] - cohort.times[None, :]) / h) / h
    cross = float(increments @ kmat @ increments) - float(
        np.sum(kmat.diagonal() * increments * increments)
    )
    return sq_term - 2.0 * cross


def cv_bandwidth(
    cohort: Cohort, beta: np.ndarray, grid=None
) -> tuple[float, np.ndarray]:
    """Bandwidth minimizing the cross-validation criterion over a grid.

    Returns the winning bandwidth and the per-candidate criterion values.
    Ties break toward the first (smallest) candidate.
    """
    if grid is None:
        grid = default_bandwidth_grid(cohort)
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise ValueError("bandwidth grid must be nonempty")
    if np.any(grid <= 0):
        raise ValueError("bandwidth candidates must be positive")
    scores = np.array([_cv_criterion(cohort, beta, float(h)) for h in grid])
    return float(grid[int(np.argmin(scores))]), scores

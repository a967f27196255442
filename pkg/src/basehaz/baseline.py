"""Histogram projection of the baseline hazard with penalized level selection.

The baseline is fit per dyadic resolution level by minimizing a least-squares
contrast over the histogram space; the level is then chosen by adding a
dimension-proportional penalty.  A spectral floor on the weighted Gram matrix
guards against near-singular systems, in which case the level is skipped and
recorded rather than solved.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cohort import Cohort, rand_norm_sq
from .hazards import HistogramBasis, HistogramHazard

__all__ = [
    "GuardFailure",
    "ModelSelection",
    "SelectionError",
    "contrast",
    "gram_matrix",
    "gamma_vector",
    "fit_projection",
    "invertibility_guard",
    "penalty",
    "sup_norm_plugin",
    "max_level",
    "select_model",
]


@dataclass(frozen=True)
class GuardFailure:
    """Value (not an exception) marking a level whose Gram floor failed."""

    level: int
    min_eigenvalue: float
    threshold: float


@dataclass(frozen=True)
class ModelSelection:
    """Outcome of the penalized level search."""

    chosen_level: int
    criterion_values: np.ndarray  # NaN where the guard failed
    penalty_constant: float
    sup_norm_plugin: float
    guard_failures: frozenset[int]
    sup_norm_warning: bool = False
    no_event_warning: bool = False


class SelectionError(RuntimeError):
    """Every candidate level failed the Gram guard."""

    def __init__(self, message: str, failures: list[GuardFailure]):
        super().__init__(message)
        self.failures = failures


def contrast(cohort: Cohort, alpha, beta: np.ndarray) -> float:
    """Least-squares contrast of a hazard against the observed events.

    -(2/n) * sum of alpha at observed event times, plus the squared at-risk
    weighted norm of alpha.  Its population minimizer is the true baseline.
    """
    events = cohort.event_mask()
    event_term = 0.0
    if np.any(events):
        event_term = float(np.sum(np.asarray(alpha(cohort.times[events]), dtype=float)))
    return -2.0 * event_term / cohort.n + rand_norm_sq(cohort, beta, alpha)


def _occupancy(cohort: Cohort, beta: np.ndarray, basis: HistogramBasis) -> np.ndarray:
    """Per-cell average of exp(beta'Z_i) * (time spent at risk in the cell)."""
    w = np.exp(cohort.linear_predictor(beta))
    edges = basis.cell_edges()
    out = np.empty(basis.dimension)
    for j in range(basis.dimension):
        occupied = np.clip(cohort.times, edges[j], edges[j + 1]) - edges[j]
        out[j] = float(w @ occupied) / cohort.n
    return out


def gram_matrix(cohort: Cohort, beta: np.ndarray, basis: HistogramBasis) -> np.ndarray:
    """Weighted Gram matrix of the basis under the at-risk measure.

    Entry (j, k) integrates phi_j * phi_k * exp(beta'Z_i) over each subject's
    at-risk window, averaged over subjects.  Histogram cells have disjoint
    supports, so the result is diagonal; it is still returned as a full
    matrix so generic solvers can consume it.
    """
    diag = _occupancy(cohort, beta, basis) * basis.height**2
    return np.diag(diag)


def gamma_vector(cohort: Cohort, basis: HistogramBasis) -> np.ndarray:
    """Basis functions averaged against the observed event times.

    Component j is (1/n) * sum over events in [0, tau] of phi_j(X_i).
    """
    events = cohort.event_mask()
    counts = np.zeros(basis.dimension)
    if np.any(events):
        idx = basis.cell_index(cohort.times[events])
        inside = idx >= 0
        counts = np.bincount(idx[inside], minlength=basis.dimension).astype(float)
    return counts * basis.height / cohort.n


def invertibility_guard(
    gram: np.ndarray,
    f0_hat: float,
    n: int,
    b_bound: float | None = None,
    beta0_l1: float | None = None,
    beta_gap_l1: float | None = None,
) -> tuple[bool, float, float]:
    """Spectral floor test for the weighted Gram matrix.

    Passes when the minimum eigenvalue reaches
    max(f0_hat * damping / 6, 1/sqrt(n)), where the damping factor
    exp(-B*|beta0|_1) * exp(-B*|beta0-beta|_1) is applied only when the
    caller supplies those (usually unknowable) quantities.  Returns
    (passed, min_eigenvalue, threshold).
    """
    gram = np.asarray(gram, dtype=float)
    diag = np.diag(gram)
    if np.count_nonzero(gram - np.diag(diag)) == 0:
        min_eig = float(np.min(diag))
    else:
        min_eig = float(np.min(np.linalg.eigvalsh(gram)))
    damping = 1.0
    if b_bound is not None and beta0_l1 is not None:
        damping *= math.exp(-b_bound * beta0_l1)
        if beta_gap_l1 is not None:
            damping *= math.exp(-b_bound * beta_gap_l1)
    threshold = max(f0_hat * damping / 6.0, 1.0 / math.sqrt(n))
    return min_eig >= threshold, min_eig, threshold


def fit_projection(cohort: Cohort, beta: np.ndarray, level: int):
    """Contrast minimizer over the histogram space at one dyadic level.

    Uses the closed form for the histogram basis: each coefficient is the
    cell's event average divided by its weighted at-risk occupancy.  Returns
    a :class:`GuardFailure` value instead of a hazard when the Gram floor
    fails (the estimator is then the zero function by convention, and the
    level is unusable for selection).
    """
    basis = HistogramBasis(level=level, tau=cohort.tau)
    occupancy = _occupancy(cohort, beta, basis)
    gram_diag = occupancy * basis.height**2
    f0_hat = float(np.min(gram_diag))
    passed, min_eig, threshold = invertibility_guard(np.diag(gram_diag), f0_hat, cohort.n)
    if not passed:
        return GuardFailure(level=level, min_eigenvalue=min_eig, threshold=threshold)
    events = cohort.event_mask()
    event_avg = np.zeros(basis.dimension)
    if np.any(events):
        idx = basis.cell_index(cohort.times[events])
        inside = idx >= 0
        event_avg = np.bincount(idx[inside], minlength=basis.dimension) * (
            basis.height / cohort.n
        )
    coefficients = basis.cell_width / occupancy * event_avg
    return HistogramHazard(basis=basis, coefficients=coefficients)


def penalty(level: int, sup_norm: float, k0: float, n: int) -> float:
    """Complexity charge k0 * (1 + sup_norm) * 2**level / n."""
    if sup_norm < 0:
        raise ValueError("sup_norm must be nonnegative")
    if not k0 > 0:
        raise ValueError("k0 must be positive")
    return k0 * (1.0 + sup_norm) * 2**level / n


def sup_norm_plugin(cohort: Cohort, beta: np.ndarray, max_level: int) -> tuple[float, bool]:
    """Sup norm of the projection fitted at the largest candidate level.

    Stands in for the unknown sup of the true baseline inside the penalty.
    Returns (value, warning): the warning flags a guard failure at the top
    level, in which case the plugin value degrades to 0.
    """
    fit = fit_projection(cohort, beta, max_level)
    if isinstance(fit, GuardFailure):
        return 0.0, True
    return fit.sup_norm(), False


def max_level(n: int) -> int:
    """Largest dyadic level in the candidate collection for a sample of size n."""
    if n < 2:
        raise ValueError("need n >= 2 observations")
    return int(math.floor(math.log(n / math.log(n)) / math.log(2.0)))


def select_model(
    cohort: Cohort, beta: np.ndarray, k0: float = 2.0
) -> tuple[ModelSelection, HistogramHazard]:
    """Penalized choice of the histogram resolution.

    Fits every level from 0 to the n-dependent maximum, adds the complexity
    penalty, skips guard failures, and returns the argmin level together with
    its fitted hazard.  Ties break toward the smaller level.  Raises
    :class:`SelectionError` when no level survives the guard.
    """
    top = max_level(cohort.n)
    plugin, plugin_warning = sup_norm_plugin(cohort, beta, top)
    criteria = np.full(top + 1, np.nan)
    fits: dict[int, HistogramHazard] = {}
    failures: list[GuardFailure] = []
    for level in range(top + 1):
        fit = fit_projection(cohort, beta, level)
        if isinstance(fit, GuardFailure):
            failures.append(fit)
            continue
        fits[level] = fit
        criteria[level] = contrast(cohort, fit, beta) + penalty(level, plugin, k0, cohort.n)
    if not fits:
        raise SelectionError(
            f"the Gram guard failed at every level 0..{top}", failures
        )
    usable = np.where(np.isfinite(criteria))[0]
    chosen = int(usable[np.argmin(criteria[usable])])
    selection = ModelSelection(
        chosen_level=chosen,
        criterion_values=criteria,
        penalty_constant=k0,
        sup_norm_plugin=plugin,
        guard_failures=frozenset(f.level for f in failures),
        sup_norm_warning=plugin_warning,
        no_event_warning=not np.any(cohort.event_mask()),
    )
    return selection, fits[chosen]

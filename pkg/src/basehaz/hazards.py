"""Hazard functions: the Weibull ground truth, histogram hazards, kernel hazards.

A hazard function here is anything callable on times in [0, tau] returning
finite nonnegative values (vectorized over numpy arrays).  Histogram hazards
additionally expose their breakpoints so integrals against them can be done
exactly instead of by quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "QUAD_CELLS",
    "midpoint_grid",
    "integrate_on_grid",
    "l2_norm_sq",
    "WeibullBaseline",
    "HistogramBasis",
    "HistogramHazard",
    "KernelHazard",
    "PiecewiseConstantHazard",
]

# Number of uniform quadrature cells on [0, tau] for integrals of hazards that
# are not piecewise constant.  Midpoint nodes keep the rule away from t=0,
# where decreasing Weibull baselines blow up.
QUAD_CELLS = 2048


def midpoint_grid(tau: float, cells: int = QUAD_CELLS):
    """Midpoints of ``cells`` uniform subintervals of [0, tau], with the width."""
    width = tau / cells
    grid = (np.arange(cells) + 0.5) * width
    return grid, width


def integrate_on_grid(f, tau: float) -> float:
    """Composite-midpoint integral of ``f`` over [0, tau]."""
    grid, width = midpoint_grid(tau)
    return float(np.sum(np.asarray(f(grid), dtype=float)) * width)


class PiecewiseConstantHazard:
    """Mixin for hazards that are constant between known breakpoints.

    Subclasses provide ``edges()`` (increasing, from 0 to tau) and
    ``values()`` (one value per interval); integrals against them are exact.
    """

    def edges(self) -> np.ndarray:
        raise NotImplementedError

    def values(self) -> np.ndarray:
        raise NotImplementedError


def l2_norm_sq(alpha, tau: float) -> float:
    """Squared Lebesgue L2 norm of a hazard over [0, tau].

    Exact interval arithmetic for piecewise-constant hazards, midpoint
    quadrature otherwise.
    """
    if isinstance(alpha, PiecewiseConstantHazard):
        edges = alpha.edges()
        values = alpha.values()
        return float(np.sum(values * values * np.diff(edges)))
    return integrate_on_grid(lambda t: np.asarray(alpha(t)) ** 2, tau)


@dataclass(frozen=True)
class WeibullBaseline:
    """Weibull baseline hazard a * lam**a * t**(a-1).

    ``shape`` is the Weibull shape a and ``scale`` the rate-like parameter
    lam; the cumulative hazard is (lam * t)**a.  For shape < 1 the hazard
    diverges at t=0, which is why quadrature in this package never evaluates
    at the origin.
    """

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("shape and scale must be positive")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        a, lam = self.shape, self.scale
        with np.errstate(divide="ignore"):
            out = a * lam**a * np.power(t, a - 1.0)
        return out

    def cumulative_hazard(self, t):
        t = np.asarray(t, dtype=float)
        return (self.scale * t) ** self.shape

    def mean_survival_time(self) -> float:
        """Mean of the unconditional Weibull time (no covariate effect)."""
        return math.gamma(1.0 + 1.0 / self.shape) / self.scale

    def label(self) -> str:
        def fmt(x: float) -> str:
            return f"{x:g}"

        return f"W({fmt(self.shape)},{fmt(self.scale)})"


@dataclass(frozen=True)
class HistogramBasis:
    """Orthonormal histogram basis on [0, tau] with 2**level equal cells.

    Basis function j (1-indexed) is (1/sqrt(tau)) * 2**(level/2) on the
    half-open cell [(j-1)*tau/2**level, j*tau/2**level), zero elsewhere, so
    the basis is exactly orthonormal in L2([0, tau]).
    """

    level: int
    tau: float

    def __post_init__(self):
        if self.level < 0:
            raise ValueError("level must be nonnegative")
        if not (np.isfinite(self.tau) and self.tau > 0):
            raise ValueError("tau must be a positive real")

    @property
    def dimension(self) -> int:
        return 2**self.level

    @property
    def cell_width(self) -> float:
        return self.tau / self.dimension

    @property
    def height(self) -> float:
        """Common nonzero value of every basis function."""
        return 2 ** (self.level / 2) / math.sqrt(self.tau)

    def cell_edges(self) -> np.ndarray:
        return np.linspace(0.0, self.tau, self.dimension + 1)

    def cell_index(self, t) -> np.ndarray:
        """Index of the cell containing each time, -1 outside [0, tau)."""
        t = np.asarray(t, dtype=float)
        idx = np.floor_divide(t, self.cell_width).astype(int)
        idx = np.clip(idx, 0, self.dimension - 1)
        return np.where((t >= 0) & (t < self.tau), idx, -1)

    def evaluate(self, j: int, t) -> np.ndarray:
        """Value of basis function ``j`` (1-indexed) at times ``t``."""
        if not 1 <= j <= self.dimension:
            raise ValueError(f"basis index {j} outside 1..{self.dimension}")
        return np.where(self.cell_index(t) == j - 1, self.height, 0.0)


@dataclass(frozen=True)
class HistogramHazard(PiecewiseConstantHazard):
    """Piecewise-constant hazard spanned by a histogram basis.

    ``coefficients`` are the coordinates in the orthonormal basis, so the
    squared L2 norm is exactly the sum of squared coefficients.
    """

    basis: HistogramBasis
    coefficients: np.ndarray

    def __post_init__(self):
        coef = np.ascontiguousarray(self.coefficients, dtype=float)
        if coef.shape != (self.basis.dimension,):
            raise ValueError(
                f"expected {self.basis.dimension} coefficients, got {coef.shape}"
            )
        object.__setattr__(self, "coefficients", coef)
        self.coefficients.setflags(write=False)

    def __call__(self, t):
        idx = self.basis.cell_index(t)
        heights = self.coefficients * self.basis.height
        padded = np.concatenate([heights, [0.0]])
        return padded[idx]

    def edges(self) -> np.ndarray:
        return self.basis.cell_edges()

    def values(self) -> np.ndarray:
        return self.coefficients * self.basis.height

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values()))) if self.coefficients.size else 0.0

    def refine(self) -> "HistogramHazard":
        """Same function expressed one dyadic level finer."""
        finer = HistogramBasis(level=self.basis.level + 1, tau=self.basis.tau)
        coef = np.repeat(self.coefficients, 2) / math.sqrt(2.0)
        return HistogramHazard(basis=finer, coefficients=coef)

    @classmethod
    def zero(cls, basis: HistogramBasis) -> "HistogramHazard":
        return cls(basis=basis, coefficients=np.zeros(basis.dimension))


@dataclass(frozen=True)
class KernelHazard:
    """Smoothed hazard: Epanechnikov kernel sum over observed events.

    ``event_times`` and ``weights`` hold one entry per subject with an
    observed event; the weight is the inverse of the at-risk sum of
    exp(beta'Z) at that event time.  Evaluation is
    (1/bandwidth) * sum_i weights[i] * K((t - event_times[i]) / bandwidth).
    """

    bandwidth: float
    event_times: np.ndarray
    weights: np.ndarray
    tau: float

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        times = np.ascontiguousarray(self.event_times, dtype=float)
        weights = np.ascontiguousarray(self.weights, dtype=float)
        if times.shape != weights.shape or times.ndim != 1:
            raise ValueError("event_times and weights must be matching 1-d arrays")
        if np.any(weights < 0):
            raise ValueError("weights must be nonnegative")
        object.__setattr__(self, "event_times", times)
        object.__setattr__(self, "weights", weights)
        self.event_times.setflags(write=False)
        self.weights.setflags(write=False)

    def __call__(self, t):
        from .kernel import epanechnikov  # local import to avoid a cycle

        t_arr = np.asarray(t, dtype=float)
        scalar = t_arr.ndim == 0
        t_arr = np.atleast_1d(t_arr)
        if self.event_times.size == 0:
            out = np.zeros_like(t_arr)
        else:
            u = (t_arr[:, None] - self.event_times[None, :]) / self.bandwidth
            out = epanechnikov(u) @ self.weights / self.bandwidth
        return float(out[0]) if scalar else out

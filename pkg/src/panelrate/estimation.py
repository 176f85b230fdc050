"""Empirical and kernel-smoothed cause-specific rate estimators.

The empirical rate of cause ``j`` at time ``t`` averages, over the subjects
still under observation at ``t``, the average rate of the interval
``(t_{p-1}, t_p]`` that contains ``t``::

    r_j(t) = sum_i [dn^j_{i,p} / dt_{i,p}] 1{t in (t_{i,p-1}, t_{i,p}]} / #{i : t <= t_{i,M_i}}

It is a step function that only needs to be known on the distinct visit
times. The smoothed estimator is a Nadaraya-Watson average of those step
values with Gaussian weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dataset import PanelCountDataset, TimeGrid, require_risk, time_grid
from .errors import BoundsOutsideGrid, NonPositiveBandwidth


def gaussian_kernel(u):
    return np.exp(-0.5 * np.square(u)) / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class StepRateEstimate:
    grid: TimeGrid
    values_per_cause: np.ndarray  # (J, l)
    overall_values: np.ndarray  # (l,)

    @property
    def num_causes(self) -> int:
        return int(self.values_per_cause.shape[0])


@dataclass(frozen=True)
class SmoothedRateEstimate:
    points: np.ndarray  # evaluation points
    bandwidth: float
    values_per_cause: np.ndarray  # (J, E)
    overall_values: np.ndarray  # (E,)
    kernel: str = "gaussian"

    @property
    def num_causes(self) -> int:
        return int(self.values_per_cause.shape[0])


def _check_times(dataset: PanelCountDataset, t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t <= 0):
        raise BoundsOutsideGrid("rates are only defined for t > 0")
    require_risk(dataset, t)
    return t


def subject_rate_matrix(dataset: PanelCountDataset, points) -> tuple[np.ndarray, np.ndarray]:
    """Per-subject interval rates and at-risk indicators at ``points``.

    Returns
    -------
    rates : ndarray, shape (J, T, n)
        ``rates[j, k, i]`` is subject i's cause-j rate on the interval that
        contains ``points[k]``, or 0 when ``points[k]`` is past its last visit.
    at_risk : ndarray, shape (T, n)
        1.0 where ``points[k] <= last visit of subject i``.
    """
    points = np.asarray(points, dtype=float)
    J, T, n = dataset.num_causes, points.size, dataset.n
    rates = np.zeros((J, T, n))
    at_risk = np.zeros((T, n))
    for i, s in enumerate(dataset.subjects):
        p = np.searchsorted(s.times, points, side="left")
        inside = p < s.num_visits
        if not np.any(inside):
            continue
        at_risk[inside, i] = 1.0
        pk = p[inside]
        start = np.where(pk > 0, s.times[np.maximum(pk - 1, 0)], 0.0)
        gap = s.times[pk] - start
        cum = s.cumulative_counts
        prev = np.where(pk > 0, cum[:, np.maximum(pk - 1, 0)], 0)
        rates[:, inside, i] = (cum[:, pk] - prev) / gap
    return rates, at_risk


def _empirical(dataset: PanelCountDataset, t) -> np.ndarray:
    """(J, T) empirical cause rates; numerator summed subject by subject."""
    rates, at_risk = subject_rate_matrix(dataset, t)
    numer = np.zeros(rates.shape[:2])
    for i in range(dataset.n):
        numer += rates[:, :, i]
    return numer / at_risk.sum(axis=1)


def empirical_cause_rate(dataset: PanelCountDataset, cause: int, t):
    """Empirical rate of cause index ``cause`` (0-based) at ``t``.

    ``t`` may be a scalar or an array. Raises ``EmptyRiskSet`` if no subject
    is under observation at some requested time.
    """
    scalar = np.ndim(t) == 0
    tt = _check_times(dataset, t)
    out = _empirical(dataset, tt)[cause]
    return float(out[0]) if scalar else out


def empirical_overall_rate(dataset: PanelCountDataset, t):
    """Empirical rate of all recurrences, causes pooled."""
    return empirical_cause_rate(dataset.collapse_causes(), 0, t)


def step_estimate(dataset: PanelCountDataset) -> StepRateEstimate:
    grid = time_grid(dataset)
    values = _empirical(dataset, grid.points)
    return StepRateEstimate(grid, values, values.sum(axis=0))


def _check_bandwidth(bandwidth: float) -> float:
    bandwidth = float(bandwidth)
    if not bandwidth > 0 or not math.isfinite(bandwidth):
        raise NonPositiveBandwidth(f"bandwidth must be positive and finite, got {bandwidth}")
    return bandwidth


def kernel_weight_matrix(grid_points, eval_points, bandwidth: float) -> np.ndarray:
    """Normalised Gaussian weights, one row per evaluation point.

    The ``1/h`` factor and the kernel constant cancel in the normalisation,
    and the exponent is shifted by its row maximum, so rows far from every
    grid point still get finite weights (concentrated on the nearest points).
    """
    h = _check_bandwidth(bandwidth)
    b = np.asarray(grid_points, dtype=float)
    e = np.atleast_1d(np.asarray(eval_points, dtype=float))
    if b.size == 0:
        raise ValueError("empty grid")
    expo = -0.5 * np.square((e[:, None] - b[None, :]) / h)
    expo -= expo.max(axis=1, keepdims=True)
    w = np.exp(expo)
    return w / w.sum(axis=1, keepdims=True)


def kernel_weights(grid: TimeGrid | Sequence[float], t: float, bandwidth: float) -> np.ndarray:
    points = grid.points if isinstance(grid, TimeGrid) else grid
    return kernel_weight_matrix(points, [t], bandwidth)[0]


def smooth(step: StepRateEstimate, bandwidth: float, eval_points=None) -> SmoothedRateEstimate:
    """Kernel-smooth a step estimate at ``eval_points`` (default: its grid)."""
    h = _check_bandwidth(bandwidth)
    points = step.grid.points if eval_points is None else np.asarray(eval_points, dtype=float)
    W = kernel_weight_matrix(step.grid.points, points, h)
    per_cause = step.values_per_cause @ W.T
    return SmoothedRateEstimate(points.copy(), h, per_cause, per_cause.sum(axis=0))


def default_bandwidth(dataset_or_n) -> float:
    """``n ** (1/10)`` with n the number of subjects."""
    n = dataset_or_n if isinstance(dataset_or_n, (int, np.integer)) else len(dataset_or_n)
    if n < 1:
        raise ValueError("need at least one subject")
    return float(n) ** 0.1


def dense_grid(dataset: PanelCountDataset, num: int = 200, tau: float | None = None) -> np.ndarray:
    """``num`` equally spaced points on (0, tau]."""
    tau = float(dataset.last_times.max()) if tau is None else float(tau)
    return np.linspace(tau / num, tau, num)


def estimate(dataset: PanelCountDataset, bandwidth: float | None = None, eval_points=None):
    """Step estimate plus its smoothed version; returns ``(step, smoothed)``."""
    step = step_estimate(dataset)
    h = default_bandwidth(dataset) if bandwidth is None else bandwidth
    return step, smooth(step, h, eval_points)


@dataclass(frozen=True)
class BandwidthSearch:
    bandwidths: np.ndarray
    mse: np.ndarray
    best: float


def bandwidth_search(datasets: Sequence[PanelCountDataset],
                     true_rates: Callable[[np.ndarray], np.ndarray],
                     n: int | None = None, num: int = 20) -> BandwidthSearch:
    """Pick the bandwidth with the smallest Monte Carlo MSE against a known truth.

    ``true_rates(t)`` must return the (J, len(t)) true cause rates. The MSE
    of each dataset is taken over its own visit times and averaged over
    datasets and causes. Candidates are ``num`` log-spaced bandwidths in
    ``[0.1, 10] * n ** 0.1``.
    """
    if not datasets:
        raise ValueError("need at least one dataset")
    n = datasets[0].n if n is None else n
    h0 = default_bandwidth(n)
    hs = np.geomspace(0.1 * h0, 10.0 * h0, num)
    mse = np.zeros(num)
    for ds in datasets:
        step = step_estimate(ds)
        truth = np.asarray(true_rates(step.grid.points), dtype=float)
        for k, h in enumerate(hs):
            sm = smooth(step, h)
            mse[k] += np.mean((sm.values_per_cause - truth) ** 2)
    mse /= len(datasets)
    return BandwidthSearch(hs, mse, float(hs[int(np.argmin(mse))]))

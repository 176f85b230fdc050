"""Chi-square test of equal cause-specific rate functions.

For each cause the statistic integrates the weighted gap between the
smoothed cause rate and the smoothed overall rate shared equally::

    v_j(tau) = int_0^tau w(u) [r*_j(u) - r*(u) / J] du

The J components sum to zero, so their bootstrap covariance is singular and
the quadratic form ``Z = v' S^+ v`` uses a Moore-Penrose inverse. Under the
null hypothesis Z is approximately chi-square with J - 1 degrees of freedom.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dataset import PanelCountDataset, risk_set_size, time_grid
from .errors import (
    DegenerateResample,
    GridTooCoarse,
    InsufficientCauses,
    NumericalError,
    StatisticalError,
)
from .estimation import (
    SmoothedRateEstimate,
    default_bandwidth,
    smooth,
    step_estimate,
    subject_rate_matrix,
)
from .numerics import (
    TOL,
    RngStream,
    regularized_upper_gamma,
    symmetric_eigen,
    trapezoid_integral,
    trapezoid_weights,
)

BOOTSTRAP_CHUNK = 64
REPORT_LEVELS = (0.1, 0.05, 0.01, 0.001)


class Weight(str, enum.Enum):
    UNIT = "unit"
    RISKSET = "riskset"  # number of subjects under observation at u
    RATE = "rate"  # smoothed overall rate r*(u)
    CONSTANT_N = "n"  # number of subjects in the study, constant in u

    @classmethod
    def parse(cls, value) -> "Weight":
        if isinstance(value, cls):
            return value
        aliases = {"1": "unit", "w1": "unit", "risk": "riskset", "atrisk": "riskset",
                   "overall": "rate", "constant_n": "n", "constant-n": "n"}
        key = str(value).strip().lower()
        return cls(aliases.get(key, key))

    @property
    def label(self) -> str:
        return {"unit": "1", "riskset": "n(t) at risk", "rate": "r*(.)", "n": "n"}[self.value]


DEFAULT_WEIGHTS = (Weight.UNIT, Weight.RISKSET, Weight.RATE)


def weight_values(weight, dataset: PanelCountDataset, smoothed: SmoothedRateEstimate) -> np.ndarray:
    weight = Weight.parse(weight)
    pts = smoothed.points
    if weight is Weight.UNIT:
        return np.ones(pts.size)
    if weight is Weight.CONSTANT_N:
        return np.full(pts.size, float(dataset.n))
    if weight is Weight.RISKSET:
        return np.asarray(risk_set_size(dataset, pts), dtype=float)
    return smoothed.overall_values.copy()


def v_statistic(dataset: PanelCountDataset, smoothed: SmoothedRateEstimate, weight,
                tau: float | None = None) -> np.ndarray:
    """Trapezoid approximation of each v_j over the smoothed evaluation points up to tau."""
    tau = float(dataset.last_times.max()) if tau is None else float(tau)
    pts = smoothed.points
    keep = pts <= tau
    if np.count_nonzero(keep) < 2:
        raise GridTooCoarse(f"need at least two evaluation points <= tau={tau:g}")
    w = weight_values(weight, dataset, smoothed)
    J = smoothed.num_causes
    gap = smoothed.values_per_cause - smoothed.overall_values / J
    integrand = w * gap
    return np.array([trapezoid_integral(pts, integrand[j], pts[0], min(tau, pts[-1])) for j in range(J)])


def test_points(dataset: PanelCountDataset, tau: float | None = None) -> np.ndarray:
    """Integration nodes: 0, every distinct visit time below tau, and tau."""
    tmax = float(dataset.last_times.max())
    tau = tmax if tau is None else float(tau)
    if not 0 < tau <= tmax:
        raise StatisticalError(f"tau must lie in (0, {tmax:g}], got {tau:g}")
    b = time_grid(dataset).points
    return np.concatenate(([0.0], b[b < tau], [tau]))


def resample_indices(n: int, seed: int, replicate: int) -> np.ndarray:
    return RngStream(seed, replicate).integers(0, n, n)


class _BootstrapKernel:
    """Evaluates v(tau) for many subject-count vectors at once.

    A bootstrap resample is fully described by how many times it draws each
    subject. With ``C`` the (n, B) matrix of those counts, every replicate's
    step estimate on the original visit grid is a ratio of matrix products,
    and a grid point belongs to the replicate's own grid iff some drawn
    subject visits it. Smoothing over the replicate's grid then reduces to
    masking the kernel matrix.
    """

    def __init__(self, dataset, bandwidth, weight, points):
        self.dataset = dataset
        self.weight = Weight.parse(weight)
        self.points = points
        self.J = dataset.num_causes
        grid = time_grid(dataset).points
        self.rates, self.at_risk = subject_rate_matrix(dataset, grid)
        self.visits = np.zeros((grid.size, dataset.n))
        for i, s in enumerate(dataset.subjects):
            self.visits[np.searchsorted(grid, s.times), i] = 1.0
        u = (points[:, None] - grid[None, :]) / bandwidth
        expo = -0.5 * u * u
        expo -= expo.max(axis=1, keepdims=True)
        self.kernel = np.exp(expo)
        self.risk_eval = (points[:, None] <= dataset.last_times[None, :]).astype(float)
        self.quad = trapezoid_weights(points)
        self.bandwidth = bandwidth

    def v(self, counts: np.ndarray) -> np.ndarray:
        """(B, J) replicate v-vectors for count matrix ``counts`` of shape (n, B)."""
        present = (self.visits @ counts) > 0
        mask = present.astype(float)
        risk = self.at_risk @ counts
        safe = np.where(present, risk, 1.0)
        denom = self.kernel @ mask
        smoothed = np.empty((self.J,) + denom.shape)
        for j in range(self.J):
            step = np.where(present, (self.rates[j] @ counts) / safe, 0.0)
            smoothed[j] = (self.kernel @ step) / denom
        overall = smoothed.sum(axis=0)
        if self.weight is Weight.UNIT:
            w = 1.0
        elif self.weight is Weight.CONSTANT_N:
            w = float(self.dataset.n)
        elif self.weight is Weight.RISKSET:
            w = self.risk_eval @ counts
        else:
            w = overall
        gap = smoothed - overall / self.J
        out = np.einsum("e,jeb->bj", self.quad, w * gap)
        # columns whose kernel mass underflowed on the replicate grid get NaN
        bad = ~np.all(denom > 1e-250, axis=0)
        out[bad] = np.nan
        return out


def _replicate_reference(dataset, idx, bandwidth, weight, points, tau):
    sub = dataset.subset(idx)
    sm = smooth(step_estimate(sub), bandwidth, points)
    return v_statistic(sub, sm, weight, tau)


def bootstrap_replicates(dataset: PanelCountDataset, B: int = 500, bandwidth: float | None = None,
                         weight=Weight.UNIT, tau: float | None = None, seed: int = 0,
                         workers: int = 1, method: str = "batched") -> np.ndarray:
    """The (B, J) matrix of bootstrap v-vectors.

    Replicate k resamples subjects with replacement using the stream
    ``(seed, k)``; a replicate whose v is not finite is redrawn from stream
    ``(seed, k + a * B)`` for a = 1, 2, ... (at most 10 * B redraws overall).
    ``method="reference"`` recomputes every replicate from scratch and is
    kept as a cross-check of the batched path.
    """
    if B < 2:
        raise StatisticalError("need at least two bootstrap replicates")
    n = dataset.n
    if n < 2:
        raise StatisticalError("need at least two subjects to bootstrap")
    h = default_bandwidth(dataset) if bandwidth is None else float(bandwidth)
    tau = float(dataset.last_times.max()) if tau is None else float(tau)
    points = test_points(dataset, tau)

    if method == "reference":
        def compute(idx_list):
            return np.array([_replicate_reference(dataset, idx, h, weight, points, tau) for idx in idx_list])
    elif method == "batched":
        kernel = _BootstrapKernel(dataset, h, weight, points)

        def compute(idx_list):
            counts = np.zeros((n, len(idx_list)))
            for b, idx in enumerate(idx_list):
                counts[:, b] = np.bincount(idx, minlength=n)
            out = kernel.v(counts)
            for b in np.nonzero(~np.all(np.isfinite(out), axis=1))[0]:
                out[b] = _replicate_reference(dataset, idx_list[b], h, weight, points, tau)
            return out
    else:
        raise ValueError(f"unknown method {method!r}")

    def chunk(start):
        ks = range(start, min(start + BOOTSTRAP_CHUNK, B))
        return compute([resample_indices(n, seed, k) for k in ks])

    starts = list(range(0, B, BOOTSTRAP_CHUNK))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(chunk, starts))
    else:
        parts = [chunk(s) for s in starts]
    V = np.concatenate(parts, axis=0)

    redraws = 0
    for k in range(B):
        attempt = 1
        while not np.all(np.isfinite(V[k])):
            if redraws >= 10 * B:
                raise DegenerateResample(f"gave up after {redraws} redraws")
            V[k] = compute([resample_indices(n, seed, k + attempt * B)])[0]
            attempt += 1
            redraws += 1
    return V


def sample_covariance(V: np.ndarray) -> np.ndarray:
    """Covariance of the rows of V about their mean, divisor B - 1."""
    V = np.asarray(V, dtype=float)
    centered = V - V.mean(axis=0)
    S = centered.T @ centered / (V.shape[0] - 1)
    return 0.5 * (S + S.T)


def bootstrap_covariance(dataset: PanelCountDataset, B: int = 500, bandwidth: float | None = None,
                         weight=Weight.UNIT, tau: float | None = None, seed: int = 0,
                         workers: int = 1, method: str = "batched") -> np.ndarray:
    V = bootstrap_replicates(dataset, B, bandwidth, weight, tau, seed, workers, method)
    return sample_covariance(V)


def generalized_inverse(m, tolerance: float = TOL.pinv_relative) -> np.ndarray:
    """Moore-Penrose inverse of a symmetric matrix.

    Eigenvalues with modulus at most ``tolerance`` times the largest modulus
    are treated as zero.
    """
    values, vectors = symmetric_eigen(m)
    if values.size == 0:
        return np.zeros((0, 0))
    cutoff = tolerance * float(np.max(np.abs(values)))
    inv = np.zeros_like(values)
    keep = np.abs(values) > cutoff
    inv[keep] = 1.0 / values[keep]
    out = (vectors * inv) @ vectors.T
    return 0.5 * (out + out.T)


def z_statistic(v, covariance, tolerance: float = TOL.pinv_relative) -> float:
    v = np.asarray(v, dtype=float)
    z = float(v @ generalized_inverse(covariance, tolerance) @ v)
    if z < 0:
        if z < -TOL.z_clip * max(1.0, float(v @ v)):
            raise NumericalError(f"quadratic form is negative ({z:g}); covariance is not PSD")
        z = 0.0
    return z


def chi_square_upper_tail(x: float, df: int) -> float:
    """P(X >= x) for X chi-square with ``df`` degrees of freedom."""
    if df < 1:
        raise ValueError("df must be at least 1")
    if x < 0:
        raise ValueError("x must be non-negative")
    return regularized_upper_gamma(df / 2.0, x / 2.0)


def chi_square_critical(alpha: float, df: int) -> float:
    """Upper-alpha quantile, by bisection on the tail function."""
    lo, hi = 0.0, 1.0
    while chi_square_upper_tail(hi, df) > alpha:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if chi_square_upper_tail(mid, df) > alpha:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class TestResult:
    v: np.ndarray
    covariance: np.ndarray
    z_statistic: float
    df: int
    p_value: float
    tau: float
    weight: Weight
    bandwidth: float
    bootstrap_reps: int
    seed: int
    alpha: float = 0.05
    cause_names: tuple = field(default=())

    __test__ = False  # not a pytest class

    @property
    def reject(self) -> bool:
        return self.p_value <= self.alpha

    def reject_at(self) -> dict:
        levels = sorted(set(REPORT_LEVELS) | {self.alpha}, reverse=True)
        return {f"{a:g}": bool(self.p_value <= a) for a in levels}

    def to_dict(self) -> dict:
        return {
            "weight": self.weight.value,
            "bandwidth": self.bandwidth,
            "B": self.bootstrap_reps,
            "seed": self.seed,
            "tau": self.tau,
            "causes": list(self.cause_names),
            "v": [float(x) for x in self.v],
            "covariance": [[float(x) for x in row] for row in self.covariance],
            "z": self.z_statistic,
            "df": self.df,
            "p_value": self.p_value,
            "alpha": self.alpha,
            "reject_at": self.reject_at(),
        }


def run_test(dataset: PanelCountDataset, weight=Weight.UNIT, bandwidth: float | None = None,
             B: int = 500, tau: float | None = None, alpha: float = 0.05, seed: int = 0,
             workers: int = 1, method: str = "batched") -> TestResult:
    """Smooth, integrate, bootstrap the covariance and form the chi-square statistic."""
    J = dataset.num_causes
    if J < 2:
        raise InsufficientCauses(f"the test compares causes and needs J >= 2, got J = {J}")
    weight = Weight.parse(weight)
    h = default_bandwidth(dataset) if bandwidth is None else float(bandwidth)
    tau = float(dataset.last_times.max()) if tau is None else float(tau)
    points = test_points(dataset, tau)
    sm = smooth(step_estimate(dataset), h, points)
    v = v_statistic(dataset, sm, weight, tau)
    cov = bootstrap_covariance(dataset, B, h, weight, tau, seed, workers, method)
    z = z_statistic(v, cov)
    p = chi_square_upper_tail(z, J - 1)
    return TestResult(v, cov, z, J - 1, p, tau, weight, h, B, seed, alpha, dataset.cause_names)

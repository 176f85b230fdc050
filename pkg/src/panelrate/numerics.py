"""Numerical substrate: seeded RNG streams, Poisson draws, small symmetric
eigenproblems, the regularized upper incomplete gamma function and clipped
trapezoidal quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BoundsOutsideGrid, NotSymmetric


@dataclass(frozen=True)
class Tolerances:
    """Every numerical tolerance used by the package, in one place."""

    symmetry: float = 1e-8
    pinv_relative: float = 1e-10
    weight_sum: float = 1e-12
    zero_sum: float = 1e-10
    jacobi_offdiag: float = 1e-15
    jacobi_max_sweeps: int = 100
    gamma_eps: float = 1e-16
    gamma_max_iter: int = 10_000
    z_clip: float = 1e-10


TOL = Tolerances()

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *keys: int) -> int:
    """Derive a 64-bit child seed from ``seed`` and an integer path.

    Uses numpy's ``SeedSequence`` hashing, which is specified independently
    of platform, so the mapping is stable.
    """
    ss = np.random.SeedSequence(entropy=int(seed) & _MASK64, spawn_key=tuple(int(k) for k in keys))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class RngStream:
    """Counter-based random stream keyed by ``(seed, stream_id)``.

    Backed by the Philox4x64 generator with the 128-bit key set to the pair,
    so distinct stream ids never share a prefix and the draws depend only
    on the key, not on execution order.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def integers(self, low, high, size=None):
        """Integers in ``[low, high)``."""
        return self.generator.integers(low, high, size=size)

    def poisson(self, lam, size=None):
        return poisson_sample(lam, self, size=size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def poisson_sample(lam, rng: RngStream | np.random.Generator, size=None):
    """Draw Poisson variates with mean ``lam`` (scalar or array).

    numpy's sampler uses sequential inversion below a mean of 10 and the
    PTRS transformed-rejection method above it. ``lam == 0`` gives 0.
    """
    gen = rng.generator if isinstance(rng, RngStream) else rng
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(lam_arr < 0) or not np.all(np.isfinite(lam_arr)):
        raise ValueError("Poisson mean must be finite and non-negative")
    out = gen.poisson(lam_arr, size=size)
    if np.ndim(out) == 0:
        return int(out)
    return out.astype(np.int64)


def _check_symmetric(m: np.ndarray, tol: float = TOL.symmetry) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NotSymmetric(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    if np.max(np.abs(m - m.T), initial=0.0) > tol * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    return 0.5 * (m + m.T)


def symmetric_eigen(m) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decompose a small symmetric matrix by cyclic Jacobi rotations.

    Returns
    -------
    values : ndarray
        Eigenvalues sorted in descending order.
    vectors : ndarray
        Orthonormal eigenvectors stored as columns, ``m = V diag(values) V'``.
    """
    a = _check_symmetric(m).copy()
    n = a.shape[0]
    v = np.eye(n)
    if n == 0:
        return np.zeros(0), v
    scale = float(np.max(np.abs(a)))
    if scale == 0.0:
        return np.zeros(n), v

    for _ in range(TOL.jacobi_max_sweeps):
        off = math.sqrt(float(np.sum(np.triu(a, 1) ** 2)))
        if off <= TOL.jacobi_offdiag * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # Rutishauser's stable rotation angle
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                rp = a[p, :].copy()
                rq = a[q, :].copy()
                a[p, :] = c * rp - s * rq
                a[q, :] = s * rp + c * rq
                a[p, q] = a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq

    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    return values[order], v[:, order]


def _lower_series(s: float, x: float) -> float:
    # P(s, x) by the power series, valid (and fast) for x < s + 1
    term = 1.0 / s
    total = term
    ap = s
    for _ in range(TOL.gamma_max_iter):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * TOL.gamma_eps:
            break
    return total * math.exp(-x + s * math.log(x) - math.lgamma(s))


def _upper_continued_fraction(s: float, x: float) -> float:
    # Q(s, x) by the Legendre continued fraction, modified Lentz evaluation
    tiny = 1e-300
    b = x + 1.0 - s
    c = 1.0 / tiny
    d = 1.0 / b
    h = d
    for i in range(1, TOL.gamma_max_iter):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < TOL.gamma_eps:
            break
    return math.exp(-x + s * math.log(x) - math.lgamma(s)) * h


def regularized_upper_gamma(s: float, x: float) -> float:
    """Q(s, x) = Gamma(s, x) / Gamma(s) for s > 0, x >= 0."""
    if s <= 0:
        raise ValueError("shape s must be positive")
    if x < 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < s + 1.0:
        return min(1.0, max(0.0, 1.0 - _lower_series(s, x)))
    return min(1.0, max(0.0, _upper_continued_fraction(s, x)))


def trapezoid_integral(xs, ys, a: float | None = None, b: float | None = None) -> float:
    """Trapezoid rule for the piecewise-linear interpolant of (xs, ys) on [a, b].

    Bounds default to the grid ends. Bounds falling between nodes are handled
    by linear interpolation, so the result is additive over adjacent ranges.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.ndim != 1 or xs.shape != ys.shape:
        raise ValueError("xs and ys must have matching length")
    if xs.size < 2:
        raise ValueError("need at least two grid points")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("xs must be strictly increasing")
    a = xs[0] if a is None else float(a)
    b = xs[-1] if b is None else float(b)
    if a < xs[0] or b > xs[-1] or a > b:
        raise BoundsOutsideGrid(f"[{a}, {b}] is not inside [{xs[0]}, {xs[-1]}]")
    if a == b:
        return 0.0
    inner = (xs > a) & (xs < b)
    px = np.concatenate(([a], xs[inner], [b]))
    py = np.concatenate(([np.interp(a, xs, ys)], ys[inner], [np.interp(b, xs, ys)]))
    return float(np.sum(0.5 * (py[1:] + py[:-1]) * np.diff(px)))


def trapezoid_weights(xs) -> np.ndarray:
    """Quadrature weights so that ``weights @ ys`` is the trapezoid rule over xs."""
    xs = np.asarray(xs, dtype=float)
    w = np.zeros_like(xs)
    if xs.size < 2:
        return w
    dx = np.diff(xs)
    w[:-1] += 0.5 * dx
    w[1:] += 0.5 * dx
    return w

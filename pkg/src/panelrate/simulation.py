"""Bivariate Poisson panel data generator and the Monte Carlo power study.

Two recurrence modes are driven by a bivariate Poisson pair built by
trivariate reduction, ``X = U1 + U3`` and ``Y = U2 + U3`` with independent
``U_k ~ Poisson(theta_k)``, so ``E X = theta1 + theta3``,
``E Y = theta2 + theta3`` and ``cov(X, Y) = theta3``.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .dataset import PanelCountDataset, SubjectRecord, validate
from .estimation import BandwidthSearch, bandwidth_search
from .inference import Weight, run_test
from .numerics import RngStream, derive_seed


@dataclass(frozen=True)
class BivPoissonParams:
    theta1: float
    theta2: float
    theta3: float

    def __post_init__(self):
        t = (self.theta1, self.theta2, self.theta3)
        if any(not math.isfinite(x) or x < 0 for x in t):
            raise ValueError(f"parameters must be finite and non-negative, got {t}")

    @classmethod
    def parse(cls, text: str) -> "BivPoissonParams":
        parts = [float(x) for x in str(text).replace(" ", "").strip("()").split(",")]
        if len(parts) != 3:
            raise ValueError(f"expected three comma-separated values, got {text!r}")
        return cls(*parts)

    def scaled(self, factor) -> tuple:
        return (self.theta1 * factor, self.theta2 * factor, self.theta3 * factor)

    @property
    def rates(self) -> tuple:
        """Per-unit-time rates of the two causes."""
        return (self.theta1 + self.theta3, self.theta2 + self.theta3)

    def __str__(self):
        return "({:g},{:g},{:g})".format(self.theta1, self.theta2, self.theta3)


def _poisson_logpmf(k: int, lam: float) -> float:
    if lam == 0:
        return 0.0 if k == 0 else -math.inf
    return k * math.log(lam) - lam - math.lgamma(k + 1)


def bivariate_poisson_pmf(x: int, y: int, params: BivPoissonParams) -> float:
    """Joint pmf of the bivariate Poisson pair.

    Uses the closed form with the sum over the shared component when both
    theta1 and theta2 are positive; otherwise falls back to the convolution
    over the shared count, which is the limit of that form.
    """
    if x < 0 or y < 0:
        return 0.0
    a, b, c = params.theta1, params.theta2, params.theta3
    if a > 0 and b > 0:
        base = -(a + b + c) + x * math.log(a) - math.lgamma(x + 1) + y * math.log(b) - math.lgamma(y + 1)
        if c == 0:
            return math.exp(base)
        logratio = math.log(c) - math.log(a) - math.log(b)
        terms = [
            math.lgamma(x + 1) - math.lgamma(k + 1) - math.lgamma(x - k + 1)
            + math.lgamma(y + 1) - math.lgamma(y - k + 1)
            + k * logratio
            for k in range(min(x, y) + 1)
        ]
        top = max(terms)
        return math.exp(base + top) * math.fsum(math.exp(t - top) for t in terms)
    total = 0.0
    for k in range(min(x, y) + 1):
        lp = _poisson_logpmf(k, c) + _poisson_logpmf(x - k, a) + _poisson_logpmf(y - k, b)
        if lp > -math.inf:
            total += math.exp(lp)
    return total


def sample_bivariate_poisson(params: BivPoissonParams, rng: RngStream, size=None, scale=1.0):
    """Draw ``(X, Y)``; ``scale`` multiplies all three parameters (array-valued allowed)."""
    u1 = rng.poisson(np.multiply(params.theta1, scale), size=size)
    u2 = rng.poisson(np.multiply(params.theta2, scale), size=size)
    u3 = rng.poisson(np.multiply(params.theta3, scale), size=size)
    return u1 + u3, u2 + u3


@dataclass(frozen=True)
class SimDesign:
    n: int
    params: BivPoissonParams
    visits_max: int = 10
    gap_upper: float = 5.0
    reps: int = 500
    alpha_levels: tuple = (0.05, 0.01)
    weights: tuple = (Weight.UNIT,)
    B: int = 200
    seed: int = 0
    bandwidth: float | None = None
    per_visit: bool = False  # unscaled counts per visit instead of per unit time

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need n >= 2 subjects")
        if self.reps < 1:
            raise ValueError("need reps >= 1")
        if self.visits_max < 1 or not self.gap_upper > 0:
            raise ValueError("visits_max must be >= 1 and gap_upper > 0")
        object.__setattr__(self, "weights", tuple(Weight.parse(w) for w in self.weights))
        object.__setattr__(self, "alpha_levels", tuple(float(a) for a in self.alpha_levels))


def generate_panel_dataset(design: SimDesign, rng: RngStream) -> PanelCountDataset:
    """One simulated study with two causes.

    Visit counts are uniform on 1..visits_max, gaps uniform on
    (0, gap_upper), and each interval's increments are bivariate Poisson
    with parameters scaled by the interval length, so cause j recurs at the
    constant rate ``theta_j + theta3`` per unit time.
    """
    n = design.n
    visits = rng.integers(1, design.visits_max + 1, size=n)
    total = int(visits.sum())
    gaps = rng.uniform(0.0, design.gap_upper, size=total)
    while np.any(gaps <= 0.0):
        zero = gaps <= 0.0
        gaps[zero] = rng.uniform(0.0, design.gap_upper, size=int(zero.sum()))
    scale = 1.0 if design.per_visit else gaps
    x, y = sample_bivariate_poisson(design.params, rng, size=total, scale=scale)

    subjects = []
    offsets = np.concatenate(([0], np.cumsum(visits)))
    for i in range(n):
        sl = slice(offsets[i], offsets[i + 1])
        times = np.cumsum(gaps[sl])
        counts = np.vstack((np.cumsum(x[sl]), np.cumsum(y[sl])))
        subjects.append(SubjectRecord(str(i + 1), times, counts))
    return PanelCountDataset(tuple(subjects), 2, ("cause_1", "cause_2"), "time")


def simulate(params: BivPoissonParams, n: int, seed: int, per_visit: bool = False) -> PanelCountDataset:
    design = SimDesign(n=n, params=params, per_visit=per_visit)
    return validate(generate_panel_dataset(design, RngStream(seed, 0)))


@dataclass(frozen=True)
class PowerRow:
    theta1: float
    theta2: float
    theta3: float
    n: int
    alpha: float
    weight: str
    reps: int
    B: int
    seed: int
    reject_pct: float


POWER_FIELDS = ("theta1", "theta2", "theta3", "n", "alpha", "weight", "reps", "B", "seed", "reject_pct")


def replicate_pvalues(design: SimDesign, rep: int) -> dict:
    """p-values of every weight on Monte Carlo replicate ``rep`` of a design.

    The dataset depends only on ``(seed, rep)``, so designs sharing a seed
    reuse the same visit schedules (common random numbers), and all weights
    are evaluated on the same dataset.
    """
    data_rng = RngStream(derive_seed(design.seed, 0), rep)
    ds = generate_panel_dataset(design, data_rng)
    boot_seed = derive_seed(design.seed, 1, rep)
    return {
        w: run_test(ds, w, bandwidth=design.bandwidth, B=design.B, seed=boot_seed).p_value
        for w in design.weights
    }


def _design_pvalues(design: SimDesign, reps: Sequence[int]) -> list:
    return [replicate_pvalues(design, r) for r in reps]


def design_pvalues(design: SimDesign, workers: int = 1) -> dict:
    """Map weight -> array of the ``reps`` p-values, in replicate order."""
    reps = list(range(design.reps))
    if workers > 1:
        chunks = [reps[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_design_pvalues, [design] * workers, chunks))
        by_rep = {}
        for chunk, part in zip(chunks, parts):
            by_rep.update(zip(chunk, part))
        results = [by_rep[r] for r in reps]
    else:
        results = _design_pvalues(design, reps)
    return {w: np.array([res[w] for res in results]) for w in design.weights}


def power_study(designs: Iterable[SimDesign], workers: int = 1, progress=None) -> list:
    """Rejection percentages, one row per (design, weight, alpha)."""
    rows = []
    for design in designs:
        pvals = design_pvalues(design, workers)
        for w in design.weights:
            for a in design.alpha_levels:
                pct = 100.0 * float(np.mean(pvals[w] <= a))
                p = design.params
                rows.append(PowerRow(p.theta1, p.theta2, p.theta3, design.n, a, w.value,
                                     design.reps, design.B, design.seed, pct))
        if progress is not None:
            progress(design)
    return rows


def power_csv(rows: Sequence[PowerRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(POWER_FIELDS)
    for r in rows:
        w.writerow([f"{r.theta1:g}", f"{r.theta2:g}", f"{r.theta3:g}", r.n, f"{r.alpha:g}",
                    r.weight, r.reps, r.B, r.seed, f"{r.reject_pct:.1f}"])
    return buf.getvalue()


def format_power_table(rows: Sequence[PowerRow]) -> str:
    """Fixed-width text table, one block per weight with sample sizes as columns."""
    ns = sorted({r.n for r in rows})
    cell = {(r.weight, (r.theta1, r.theta2, r.theta3), r.alpha, r.n): r.reject_pct for r in rows}
    lines = []
    header = f"{'(theta1,theta2,theta3)':<24}{'alpha%':>7}" + "".join(f"{'n=' + str(n):>9}" for n in ns)
    for weight in dict.fromkeys(r.weight for r in rows):
        lines.append(f"w = {Weight(weight).label}")
        lines.append(header)
        lines.append("-" * len(header))
        thetas = list(dict.fromkeys((r.theta1, r.theta2, r.theta3) for r in rows if r.weight == weight))
        alphas = sorted({r.alpha for r in rows if r.weight == weight}, reverse=True)
        for th in thetas:
            for k, a in enumerate(alphas):
                label = "({:g},{:g},{:g})".format(*th) if k == 0 else ""
                vals = "".join(
                    f"{cell[(weight, th, a, n)]:>9.1f}" if (weight, th, a, n) in cell else f"{'':>9}"
                    for n in ns
                )
                lines.append(f"{label:<24}{100 * a:>7g}{vals}")
        lines.append("")
    return "\n".join(lines)


def simulated_bandwidth_search(params: BivPoissonParams, n: int, reps: int = 20,
                               seed: int = 0) -> BandwidthSearch:
    """MSE-optimal bandwidth for data from this generator, whose true cause
    rates are the constants ``theta_j + theta3``."""
    design = SimDesign(n=n, params=params)
    datasets = [generate_panel_dataset(design, RngStream(derive_seed(seed, 2), r)) for r in range(reps)]
    truth = np.array(params.rates)

    def true_rates(t):
        return np.repeat(truth[:, None], len(t), axis=1)

    return bandwidth_search(datasets, true_rates, n)

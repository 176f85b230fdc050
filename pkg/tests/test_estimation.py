import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from panelrate.dataset import PanelCountDataset, SubjectRecord, time_grid
from panelrate.errors import BoundsOutsideGrid, EmptyRiskSet, NonPositiveBandwidth
from panelrate.estimation import (
    bandwidth_search,
    default_bandwidth,
    dense_grid,
    empirical_cause_rate,
    empirical_overall_rate,
    kernel_weights,
    smooth,
    step_estimate,
)

from conftest import make_dataset, panel_datasets


def brute_force_rate(ds, j, t):
    """Direct double loop over subjects and visits."""
    total = 0.0
    at_risk = 0
    for s in ds.subjects:
        inner = 0.0
        prev_t, prev_c = 0.0, 0
        for p in range(s.num_visits):
            tp, cp = float(s.times[p]), int(s.cumulative_counts[j, p])
            if prev_t < t <= tp:
                inner += (cp - prev_c) / (tp - prev_t)
            prev_t, prev_c = tp, cp
        total += inner
        if t <= s.times[-1]:
            at_risk += 1
    return total / at_risk


def test_hand_computed_examples(two_subjects):
    assert empirical_cause_rate(two_subjects, 0, 1.0) == pytest.approx(7 / 12, abs=1e-15)
    assert empirical_cause_rate(two_subjects, 0, 3.5) == 1.0


def test_zero_counts_give_zero_rate():
    ds = make_dataset([([1.0, 2.5], [0, 0], [1, 4]), ([2.0], [0], [3])])
    assert np.all(empirical_cause_rate(ds, 0, np.array([0.5, 1.5, 2.2])) == 0)


def test_empty_risk_set_and_bounds(two_subjects):
    with pytest.raises(EmptyRiskSet):
        empirical_cause_rate(two_subjects, 0, 4.5)
    with pytest.raises(BoundsOutsideGrid):
        empirical_cause_rate(two_subjects, 0, 0.0)


def test_overall_examples(two_subjects):
    one = make_dataset([([2.0, 4.0], [1, 3]), ([3.0], [2])])
    ts = np.array([0.5, 1.0, 2.5, 3.5])
    assert np.array_equal(empirical_overall_rate(one, ts), empirical_cause_rate(one, 0, ts))
    twin = make_dataset([([2.0, 4.0], [1, 3], [1, 3]), ([3.0], [2], [2])])
    assert np.allclose(empirical_overall_rate(twin, ts), 2 * empirical_cause_rate(twin, 0, ts), rtol=1e-15)
    with_zero = make_dataset([([2.0, 4.0], [1, 3], [0, 0]), ([3.0], [2], [0])])
    assert empirical_overall_rate(with_zero, 1.0) == pytest.approx(7 / 12, abs=1e-15)


def _exhaustive_small_datasets():
    """Every dataset with up to 3 subjects, up to 3 visits on times {1,2,3},
    one cause and per-visit counts in {0,1,2}, subject to a size cap."""
    subjects = []
    for m in (1, 2, 3):
        for times in itertools.combinations((1.0, 2.0, 3.0), m):
            for inc in itertools.product((0, 1, 2), repeat=m):
                subjects.append((times, list(np.cumsum(inc))))
    yield from ([s] for s in subjects)
    for a, b in itertools.combinations_with_replacement(range(len(subjects)), 2):
        yield [subjects[a], subjects[b]]
    rng = np.random.default_rng(0)
    for _ in range(3000):
        yield [subjects[k] for k in rng.integers(0, len(subjects), 3)]


def test_oracle_equivalence_small():
    checked = 0
    for subs in _exhaustive_small_datasets():
        ds = make_dataset(subs)
        ts = np.array([0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
        ts = ts[ts <= ds.last_times.max()]
        got = empirical_cause_rate(ds, 0, ts)
        want = [brute_force_rate(ds, 0, t) for t in ts]
        assert list(got) == want
        checked += 1
    assert checked > 3000


@settings(max_examples=150, deadline=None)
@given(panel_datasets())
def test_additivity(ds):
    step = step_estimate(ds)
    assert np.max(np.abs(step.overall_values - step.values_per_cause.sum(axis=0))) == 0
    collapsed = empirical_overall_rate(ds, step.grid.points)
    assert np.allclose(collapsed, step.overall_values, rtol=0, atol=1e-12)
    sm = smooth(step, 0.7, dense_grid(ds, 50))
    assert np.max(np.abs(sm.overall_values - sm.values_per_cause.sum(axis=0))) <= 1e-12


@settings(max_examples=100, deadline=None)
@given(panel_datasets(), st.integers(2, 5))
def test_scale_equivariance(ds, k):
    scaled = PanelCountDataset(
        tuple(SubjectRecord(s.id, s.times, s.cumulative_counts * k) for s in ds.subjects),
        ds.num_causes,
    )
    a = step_estimate(ds).values_per_cause
    b = step_estimate(scaled).values_per_cause
    assert np.allclose(b, k * a, rtol=1e-14, atol=0)


@settings(max_examples=100, deadline=None)
@given(panel_datasets(), st.floats(0.05, 50))
def test_smoothing_within_step_range(ds, h):
    step = step_estimate(ds)
    sm = smooth(step, h, dense_grid(ds, 40))
    lo = step.values_per_cause.min(axis=1, keepdims=True)
    hi = step.values_per_cause.max(axis=1, keepdims=True)
    tol = 1e-12 * max(1.0, float(np.abs(step.values_per_cause).max()))
    assert np.all(sm.values_per_cause >= lo - tol)
    assert np.all(sm.values_per_cause <= hi + tol)


def test_kernel_weights_examples():
    assert list(kernel_weights([5.0], 1.0, 0.3)) == [1.0]
    assert np.allclose(kernel_weights([1.0, 3.0], 2.0, 0.8), [0.5, 0.5], atol=1e-15)
    # direct evaluation of exp(-u^2 / 2) at u = -1, 0, 1
    e = math.exp(-0.5)
    want = np.array([e, 1.0, e]) / (1 + 2 * e)
    got = kernel_weights([1.0, 2.0, 3.0], 2.0, 1.0)
    assert np.allclose(got, want, atol=1e-15)
    assert np.allclose(got, [0.27406862, 0.45186276, 0.27406862], atol=1e-8)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(0.1, 100), min_size=1, max_size=20, unique=True),
       st.floats(-10, 120), st.floats(0.01, 100))
def test_kernel_weights_normalised_positive(points, t, h):
    grid = np.sort(points)
    w = kernel_weights(grid, t, h)
    assert abs(w.sum() - 1) <= 1e-12
    assert np.all(w >= 0)
    # proportional to the Gaussian density wherever it does not underflow
    dens = np.exp(-0.5 * ((t - grid) / h) ** 2)
    if dens.min() > 1e-250:
        assert np.allclose(w, dens / dens.sum(), rtol=1e-10)


def test_bandwidth_must_be_positive(two_subjects):
    step = step_estimate(two_subjects)
    for bad in (0.0, -1.0, float("nan")):
        with pytest.raises(NonPositiveBandwidth):
            smooth(step, bad)
        with pytest.raises(NonPositiveBandwidth):
            kernel_weights([1.0], 1.0, bad)


def test_constant_step_smooths_to_constant():
    ds = make_dataset([([1.0, 2.0, 4.0], [2, 4, 8]), ([3.0], [6])])
    step = step_estimate(ds)
    assert np.allclose(step.values_per_cause, 2.0)
    sm = smooth(step, 0.9, [0.0, 0.5, 2.2, 4.0])
    assert np.allclose(sm.values_per_cause, 2.0, rtol=1e-15)


def test_huge_bandwidth_gives_mean(warranty):
    step = step_estimate(warranty)
    span = step.grid.points[-1] - step.grid.points[0]
    sm = smooth(step, 1e6 * span, [1000.0, 2000.0, 3000.0])
    mean = step.values_per_cause.mean(axis=1, keepdims=True)
    assert np.max(np.abs(sm.values_per_cause - mean)) < 1e-6


def test_warranty_curves_distinct(warranty):
    step = step_estimate(warranty)
    sm = smooth(step, 1.67, dense_grid(warranty, 200))
    assert sm.values_per_cause.shape == (3, 200)
    assert sm.points[-1] == 3000
    assert len({tuple(np.round(r, 12)) for r in sm.values_per_cause}) == 3


def test_warranty_step_values_from_raw_table(warranty):
    # oracle straight from the table rows: each row is the claim count in the
    # window ending at its mileage, spread over the gap since the previous row
    import csv
    from importlib import resources
    text = resources.files("panelrate.resources").joinpath("warranty.csv").read_text()
    rows = list(csv.DictReader(text.splitlines()))
    by_vehicle = {}
    for r in rows:
        by_vehicle.setdefault(r["id"], []).append(r)
    step = step_estimate(warranty)
    for q, t in enumerate((1000, 2000, 3000)):
        at_risk = sum(int(v[-1]["mil"]) >= t for v in by_vehicle.values())
        for j, col in enumerate(("fm1", "fm2", "fm3")):
            num = 0.0
            for v in by_vehicle.values():
                prev = 0
                for r in v:
                    m = int(r["mil"])
                    if prev < t <= m:
                        num += int(r[col]) / (m - prev)
                    prev = m
            assert step.values_per_cause[j, q] == pytest.approx(num / at_risk, rel=1e-13)


def test_default_bandwidth():
    assert default_bandwidth(290) == pytest.approx(290 ** 0.1, rel=1e-15)
    assert default_bandwidth(172) == pytest.approx(1.67322, abs=1e-5)
    assert default_bandwidth(1) == 1.0
    assert round(default_bandwidth(290), 2) == 1.76
    assert round(default_bandwidth(172), 2) == 1.67


def test_bandwidth_search_prefers_smoothing_constant_truth():
    from panelrate.simulation import BivPoissonParams, simulated_bandwidth_search
    res = simulated_bandwidth_search(BivPoissonParams(1, 2, 1), n=50, reps=4, seed=3)
    assert res.bandwidths.size == 20
    h0 = default_bandwidth(50)
    assert res.bandwidths[0] == pytest.approx(0.1 * h0)
    assert res.bandwidths[-1] == pytest.approx(10 * h0)
    assert res.best == res.bandwidths[np.argmin(res.mse)]
    # constant true rates: more smoothing never hurts much, the minimum is not the smallest h
    assert res.best > res.bandwidths[0]


def test_bandwidth_search_generic():
    ds = make_dataset([([1.0, 2.0], [1, 2]), ([1.5], [1])])
    res = bandwidth_search([ds], lambda t: np.ones((1, len(t))), n=2, num=5)
    assert res.mse.shape == (5,)

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delayed_impulses.schedule import (
    AdtParams,
    ExplicitSchedule,
    HorizonError,
    PeriodicSchedule,
    check_adt,
    check_reverse_adt,
    count_impulses,
    minimal_mu,
    pair_supremum,
    schedule_from_dict,
    uniform_schedule,
    window_counts,
)

from oracles import brute_pairs, dense_sup, direct_count

EX1 = PeriodicSchedule([1.0, 3.0, 6.0, 10.0], 10.0)
C3 = PeriodicSchedule([0.04, 0.08, 0.12, 0.52], 0.52)
EX3 = PeriodicSchedule([0.05, 0.08], 0.08)


def test_count_uniform():
    assert count_impulses(uniform_schedule(1.0), 0.0, 5.5) == 5


def test_count_ex1_first_period():
    assert count_impulses(EX1, 0.0, 10.0) == 4
    np.testing.assert_allclose(EX1.times_until(20.0), [1, 3, 6, 10, 11, 13, 16, 20])


def test_count_empty_interval():
    assert count_impulses(EX1, 3.0, 3.0) == 0
    with pytest.raises(ValueError):
        count_impulses(EX1, 3.0, 2.0)


def test_count_half_open():
    assert count_impulses(EX1, 1.0, 3.0) == 1
    assert count_impulses(EX1, 0.999, 3.0) == 2


def test_explicit_horizon():
    sched = ExplicitSchedule([0.5, 1.5], horizon=2.0)
    assert count_impulses(sched, 0.0, 2.0) == 2
    with pytest.raises(HorizonError):
        count_impulses(sched, 0.0, 2.5)


def test_schedule_validation():
    with pytest.raises(ValueError):
        ExplicitSchedule([1.0, 1.0])
    with pytest.raises(ValueError):
        PeriodicSchedule([0.0, 1.0], 1.0)
    with pytest.raises(ValueError):
        PeriodicSchedule([1.5], 1.0)
    with pytest.raises(ValueError):
        PeriodicSchedule([0.5], 0.0)


def test_serialization_round_trip():
    for sched in (EX1, C3, ExplicitSchedule([0.1, 0.4], 3.0)):
        back = schedule_from_dict(sched.to_dict())
        np.testing.assert_array_equal(back.times_until(3.0), sched.times_until(3.0))
    with pytest.raises(ValueError):
        schedule_from_dict({"nothing": 1})


def test_window_counts_ex3_all_one():
    wc = window_counts(EX3, 0.02, 2.0)
    assert {n for _, n in wc.counts} == {1}
    assert wc.supremum == 1 and not wc.horizon_limited


def test_window_counts_c3_sup_three():
    assert window_counts(C3, 0.1, 6.0).supremum == 3


def test_window_counts_uniform_long_period():
    wc = window_counts(uniform_schedule(0.5), 0.3, 10.0)
    assert {n for _, n in wc.counts} == {1}


def test_window_counts_explicit_is_horizon_limited():
    wc = window_counts(ExplicitSchedule([0.1, 0.15, 0.5], 1.0), 0.1, 1.0)
    assert wc.counts == [(1, 1), (2, 2), (3, 1)] and wc.horizon_limited


def test_window_counts_needs_impulse():
    with pytest.raises(ValueError):
        window_counts(EX1, 1.0, 0.5)


def test_adt_ex1_holds():
    assert check_adt(EX1, AdtParams(2.1789, 4.0), 0.0, 200.0).holds


def test_adt_single_impulse():
    sched = ExplicitSchedule([3.0], 10.0)
    assert check_adt(sched, AdtParams(0.01, 1.0), 0.0, 10.0).holds


def test_adt_uniform_too_fast_fails_with_witness():
    p, t_star = 1.0, 3.5
    v = check_adt(uniform_schedule(p), AdtParams(t_star, 0.0), 0.0, 20.0)
    assert not v.holds
    # brute force: the worst pair starts just before an impulse and ends at one
    expected = brute_pairs(uniform_schedule(p).times_until(20.0), 0.0, 20.0, 1.0, -1.0 / t_star)
    assert v.worst_slack == pytest.approx(expected)
    n_inside = count_impulses(uniform_schedule(p), v.witness.s, v.witness.t) + (1 if v.witness.s_before else 0)
    assert n_inside >= math.ceil(t_star / p)


def test_reverse_adt_c3_holds():
    assert check_reverse_adt(C3, AdtParams(0.2264, 3.0), 0.0, 60.0).holds


def test_reverse_adt_empty_schedule_fails():
    v = check_reverse_adt(ExplicitSchedule([], 10.0), AdtParams(1.0, 0.0), 0.0, 10.0)
    assert not v.holds and v.worst_slack == pytest.approx(10.0)


def test_reverse_adt_uniform_equal_period():
    p = 0.7
    v = check_reverse_adt(uniform_schedule(p), AdtParams(p, 1.0), 0.0, 20.0)
    expected = brute_pairs(uniform_schedule(p).times_until(20.0), 0.0, 20.0, -1.0, 1.0 / p) - 1.0
    assert v.holds and v.worst_slack == pytest.approx(expected)


def test_minimal_mu_zero_case():
    assert minimal_mu(EX1, 0.0, 0.5, 0.5, 0.0, 30.0) == 0.0


def test_minimal_mu_ex1_finite_and_bounded():
    sigma, c = -1.7431, 0.8
    lam = c - abs(sigma) / 2.5
    mu = minimal_mu(EX1, sigma, c, lam, 0.0, 200.0)
    assert math.isfinite(mu) and mu <= 4 * abs(sigma)


def test_minimal_mu_drift_flag():
    # drift per period: 1 - 0.5 > 0
    assert minimal_mu(uniform_schedule(1.0), -1.0, 0.5 + 1e-3, 1e-3, 0.0, 20.0) == math.inf


def test_minimal_mu_monotone_in_lambda():
    # larger lambda makes the inequality harder, so mu never decreases
    lams = np.linspace(1e-6, 0.3, 12)
    mus = [minimal_mu(EX1, -1.7431, 0.8, lam, 0.0, 100.0) for lam in lams]
    assert all(b >= a - 1e-12 for a, b in zip(mus, mus[1:]))


def test_mu_from_minimal_mu_passes_adt():
    sigma, c, lam = -1.7431, 0.8, 0.05
    mu = minimal_mu(EX1, sigma, c, lam, 0.0, 100.0)
    assert check_adt(EX1, AdtParams(abs(sigma) / (c - lam), mu / abs(sigma)), 0.0, 100.0).worst_slack <= 1e-12


def test_pair_supremum_matches_brute_on_small_cases():
    rng = np.random.default_rng(7)
    for _ in range(30):
        times = np.sort(rng.uniform(0.0, 5.0, rng.integers(0, 7)))
        times = np.unique(times)
        a, b = rng.uniform(-2, 2), rng.uniform(-2, 2)
        sched = ExplicitSchedule(times, 5.0)
        got, _ = pair_supremum(sched, 0.0, 5.0, a, b)
        assert got == pytest.approx(brute_pairs(times, 0.0, 5.0, a, b), abs=1e-12)


# --- properties -----------------------------------------------------------


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 10.0), min_size=0, max_size=15, unique=True),
       st.floats(0, 10), st.floats(0, 10), st.floats(0, 10))
def test_additivity(times, x, y, z):
    s, u, t = sorted((x, y, z))
    sched = ExplicitSchedule(sorted(times), 10.0)
    assert count_impulses(sched, s, t) == count_impulses(sched, s, u) + count_impulses(sched, u, t)
    assert count_impulses(sched, s, t) == direct_count(times, s, t)


@settings(max_examples=100, deadline=None)
@given(st.floats(0, 5), st.floats(0, 5))
def test_periodic_shift(x, y):
    s, t = sorted((x, y))
    for sched in (EX1, C3, EX3):
        p = sched.period
        assert count_impulses(sched, s + p, t + p) == count_impulses(sched, s, t)


def random_schedule(rng, horizon=20.0):
    if rng.random() < 0.3:
        period = rng.uniform(0.3, 3.0)
        offs = np.sort(rng.uniform(0.0, period, rng.integers(1, 4)))
        offs = np.unique(np.round(offs, 6))
        offs = offs[offs > 0]
        if offs.size == 0:
            offs = np.array([period])
        return ExplicitSchedule(PeriodicSchedule(offs, period).times_until(horizon), horizon)
    n = rng.integers(0, 40)
    return ExplicitSchedule(np.unique(np.round(rng.uniform(0.0, horizon, n), 6)), horizon)


def dense_grid_disagreements(seed=2024, trials=50):
    """Event-aligned search against a dense grid scan (spacing 1e-3 T*) on random schedules."""
    rng = np.random.default_rng(seed)
    horizon = 20.0
    disagreements = []
    for trial in range(trials):
        sched = random_schedule(rng, horizon)
        times = sched.times
        t_star = rng.uniform(0.3, 3.0)
        n_star = rng.uniform(0.0, 3.0)
        h = 1e-3 * t_star
        adt = AdtParams(t_star, n_star)
        for label, fn, a, b in (("adt", check_adt, 1.0, -1.0 / t_star),
                                ("reverse", check_reverse_adt, -1.0, 1.0 / t_star)):
            v = fn(sched, adt, 0.0, horizon)
            ref = dense_sup(times, 0.0, horizon, a, b, h)
            gap = v.worst_slack + n_star - ref
            if not (-1e-9 <= gap <= 2 * abs(b) * h + 1e-9):
                disagreements.append((trial, label, gap))
            elif (v.worst_slack <= 0) != (ref - n_star <= 0) and abs(ref - n_star) > 2 * abs(b) * h:
                disagreements.append((trial, label, "verdict"))
        sigma = rng.uniform(-2.0, 2.0)
        c = rng.uniform(-2.0, 2.0)
        lam = rng.uniform(1e-6, 0.5)
        mu = minimal_mu(sched, sigma, c, lam, 0.0, horizon)
        ref = dense_sup(times, 0.0, horizon, -sigma, -(c - lam), h)
        if not (-1e-9 <= mu - ref <= 2 * abs(c - lam) * h + 1e-9):
            disagreements.append((trial, "mu", mu - ref))
    return disagreements


def test_dense_grid_oracle_agreement():
    assert dense_grid_disagreements() == []

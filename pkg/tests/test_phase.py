import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rosenblatt_nii.phase import (
    DivergentTailError,
    ExponentialTail,
    ExponentialWeight,
    HistorySegment,
    ImpulseSchedule,
    PhaseConstants,
    PiecewisePath,
    PolynomialWeight,
    ScheduleError,
    fit_phase_constants,
    inequality31_check,
    lemma21_check,
    make_trial_paths,
    make_weight,
    phase_norm,
    segment,
)
from rosenblatt_nii.phase import tail_norm

T = np.linspace(0.0, 1.0, 129)
W = ExponentialWeight(2.0)


def random_path(rng, N=2):
    k = int(rng.integers(0, 3))
    tail = ExponentialTail(rng.uniform(0, 3, k), rng.normal(size=(k, N))) if k else ExponentialTail.zero(N)
    vals = np.cumsum(rng.normal(scale=0.2, size=(T.size, N)), axis=0)
    vals += tail.at0() - vals[0]
    return PiecewisePath(T, vals, tail)


def combine(p, q, a=1.0, b=1.0):
    return PiecewisePath(T, a * p.values + b * q.values, p.tail.scaled(a) + q.tail.scaled(b))


def test_constant_history_norm():
    p = PiecewisePath(T, np.ones(T.size), ExponentialTail.constant([1.0]))
    for tau in (0.0, 0.5, 1.0):
        assert phase_norm(segment(p, tau), W) == pytest.approx(1.0 + math.sqrt(0.5), abs=1e-10)


def test_tau_zero_is_tail_norm():
    tail = ExponentialTail([1.0, 3.0], [[1.0], [-0.5]])
    p = PiecewisePath(T, np.full(T.size, 0.5), tail)
    # ||eta(0)|| + (int e^{2s} (e^s - 0.5 e^{3s})^2 ds)^{1/2}
    l2 = 1 / 4 - 2 * 0.5 / 6 + 0.25 / 8
    assert phase_norm(segment(p, 0.0), W) == pytest.approx(0.5 + math.sqrt(l2), abs=1e-12)
    assert tail_norm(tail, W) == pytest.approx(0.5 + math.sqrt(l2), abs=1e-12)


def test_grid_part_matches_quadrature():
    from scipy import integrate
    p = PiecewisePath(T, np.sin(3 * T) + 1.0, ExponentialTail.constant([1.0]))
    tau = 0.75
    val, _ = integrate.quad(lambda s: math.exp(2 * s) * float(p(tau + s)[0, 0]) ** 2, -tau, 0, limit=400,
                            points=list(T[T <= tau] - tau))
    exact = abs(p.values[96, 0]) + math.sqrt(val + math.exp(-2 * tau) / 2)
    # product rule is exact for the interpolated ||chi||^2, so only interpolation error remains
    assert phase_norm(segment(p, tau), W) == pytest.approx(exact, rel=1e-4)


def test_seminorm_properties_on_random_pairs():
    rng = np.random.default_rng(0)
    for _ in range(100):
        p, q = random_path(rng), random_path(rng)
        c = rng.normal() * 3
        tau = float(T[int(rng.integers(0, T.size))])
        n_p = phase_norm(segment(p, tau), W)
        n_q = phase_norm(segment(q, tau), W)
        assert phase_norm(segment(combine(p, q, c, 0.0), tau), W) == pytest.approx(abs(c) * n_p, abs=1e-10)
        assert phase_norm(segment(combine(p, q), tau), W) <= n_p + n_q + 1e-10


def test_segment_reads_tail_and_grid():
    tail = ExponentialTail([2.0], [[1.0]])
    p = PiecewisePath(T, np.exp(-T)[:, None] + 0.0, tail)
    seg = segment(p, 0.5)
    assert seg(-0.25)[0, 0] == pytest.approx(float(p(0.25)[0, 0]))
    assert seg(-0.75)[0, 0] == pytest.approx(math.exp(-0.5))
    assert seg(0.0)[0, 0] == pytest.approx(seg.at0()[0])
    with pytest.raises(ValueError):
        seg(0.1)


def test_segment_of_segment_composes():
    # chi_{0.75}(theta - 0.25) = chi_{0.5}(theta)
    p = random_path(np.random.default_rng(3), N=1)
    s1, s2 = segment(p, 0.75), segment(p, 0.5)
    th = np.linspace(-2.0, 0.0, 9)
    np.testing.assert_allclose(s1(th - 0.25), s2(th), atol=1e-14)


def test_splice_violation():
    with pytest.raises(ValueError, match="splice"):
        PiecewisePath(T, np.zeros(T.size), ExponentialTail.constant([1.0]))


def test_off_grid_and_beyond_horizon():
    p = PiecewisePath(T, np.zeros(T.size), ExponentialTail.zero(1))
    with pytest.raises(ValueError):
        segment(p, 0.5001)
    with pytest.raises(ValueError):
        segment(p, 1.5)


def test_tail_defined_only_on_negative_axis():
    with pytest.raises(ValueError):
        ExponentialTail.constant([1.0])(0.5)


def test_divergent_tail():
    w = ExponentialWeight(2.0)
    bad = ExponentialTail([-1.5], [[1.0]])
    with pytest.raises(DivergentTailError):
        tail_norm(bad, w)


def test_polynomial_weight_constant_history():
    w = PolynomialWeight(3.0)
    p = PiecewisePath(T, np.ones(T.size), ExponentialTail.constant([1.0]))
    # int_{-inf}^0 (1 + |s|)^{-3} ds = 1/2; the grid part is a plain trapezoid, O(dt^2)
    assert phase_norm(segment(p, 0.5), w) == pytest.approx(1.0 + math.sqrt(0.5), rel=1e-5)
    with pytest.raises(ValueError):
        make_weight({"kind": "mystery"})


@pytest.mark.parametrize("r,t", [((0.5,), (0.4,)), ((0.3, 0.35), (0.4, 0.6)), ((0.5,), (1.2,)), ((0.2,), ())])
def test_schedule_interleaving(r, t):
    with pytest.raises(ScheduleError):
        ImpulseSchedule(r, t, 1.0)


def test_schedule_kinds():
    s = ImpulseSchedule((0.375, 0.75), (0.5, 0.875), 1.0)
    assert s.kind(0.2) == ("base", 0)
    assert s.kind(0.375) == ("base", 0)
    assert s.kind(0.4) == ("impulse", 1)
    assert s.kind(0.5) == ("impulse", 1)
    assert s.kind(0.6) == ("post", 1)
    assert s.kind(0.9) == ("post", 2)
    assert s.M == 2 and s.r_all == [0.0, 0.375, 0.75, 1.0]


def test_fit_constants_and_lemma_on_trials():
    trials = make_trial_paths(T, 100, seed=0)
    c = fit_phase_constants(W, 1.0, trials)
    assert c.provenance == "fitted"
    assert 1.0 <= c.K_beta <= c.diagnostics["analytic_K_envelope"] + 1e-3
    assert c.L_beta == 1.0
    for p in trials:
        assert lemma21_check(p, c, W)["worst_margin"] <= 0.0
        assert inequality31_check(p, c, W)["pass"]


def test_fit_needs_enough_trials():
    with pytest.raises(ValueError):
        fit_phase_constants(W, 1.0, make_trial_paths(T, 10))


def test_supplied_constants_validated():
    with pytest.raises(ValueError):
        PhaseConstants(0.5, 1.0, 1.0)
    with pytest.raises(ValueError):
        PhaseConstants(1.0, 1.0, 1.0, provenance="guessed")


def test_lemma_fails_for_too_small_constants():
    spike = np.zeros((T.size, 1))
    spike[64] = 5.0
    q = PiecewisePath(T, spike, ExponentialTail.zero(1))
    r = lemma21_check(q, PhaseConstants(1.0, 1.0, 1.0, "supplied"), W)
    assert not r["pass"] and r["worst_margin"] > 0


@settings(max_examples=30, deadline=None)
@given(st.floats(0.1, 6.0), st.floats(0.01, 3))
def test_exponential_tail_norm_closed_form(lam, c):
    tail = ExponentialTail([lam], [[c]])
    expected = abs(c) + abs(c) / math.sqrt(2 * lam + 2)
    assert tail_norm(tail, W) == pytest.approx(expected, rel=1e-12)


def test_csv_sidecar(tmp_path):
    p = PiecewisePath(T, np.ones(T.size), ExponentialTail.constant([1.0]), ImpulseSchedule((0.5,), (0.75,)))
    p.to_csv(tmp_path / "h.csv")
    assert (tmp_path / "h.csv.tail.json").exists()
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "t,x1"

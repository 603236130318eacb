import math

import numpy as np
import pytest

from rosenblatt_nii.cli import noise_for
from rosenblatt_nii.evolution import GalerkinSpace, IdentityPropagator, PropagatorPair, assemble_generator
from rosenblatt_nii.evolution import propagate_E, propagate_G
from rosenblatt_nii.noise import BrownianGrid, simulate_rosenblatt
from rosenblatt_nii.problem import apply_overrides, default_config, parse_config
from rosenblatt_nii.solver import (
    GridMismatchError,
    deterministic_convolution,
    picard_solve,
    prepare,
    stochastic_convolution,
    theta_apply,
)

GEN1 = assemble_generator(GalerkinSpace(1))


@pytest.fixture(scope="module")
def example():
    pb = parse_config(default_config())
    noise = noise_for(pb)
    ctx = prepare(pb, noise)
    path, trace = picard_solve(pb, noise, ctx=ctx)
    return pb, noise, ctx, path, trace


def conv_error(n):
    times = np.linspace(0.0, math.pi / 2, n + 1)
    pair = PropagatorPair(GEN1, times)
    val = deterministic_convolution(pair, np.ones((n + 1, 1)), 0.0, times[-1])[0]
    return abs(val - 1.0)


def test_deterministic_convolution_oracle():
    assert conv_error(64) < 1e-4
    assert 3.5 < conv_error(32) / conv_error(64) < 4.5


def test_zero_selection_gives_zero():
    pair = PropagatorPair(GEN1, np.linspace(0.0, 1.0, 9))
    assert np.all(deterministic_convolution(pair, np.zeros((9, 1)), 0.0, 1.0) == 0.0)
    assert np.all(stochastic_convolution(pair, np.zeros((1, 1)), np.arange(9.0), 0.0, 1.0) == 0.0)


def test_telescoping_with_identity_stub():
    times = np.linspace(0.0, 1.0, 65)
    z = simulate_rosenblatt(0.75, BrownianGrid.from_seed(4, 64))
    ip = IdentityPropagator(times, 1)
    got = stochastic_convolution(ip, np.eye(1), z, 0.25, 0.75)[0]
    assert got == pytest.approx(z.values[48] - z.values[16], abs=1e-14)


def test_grid_mismatch():
    pair = PropagatorPair(GEN1, np.linspace(0.0, 1.0, 33))
    z = simulate_rosenblatt(0.75, BrownianGrid.from_seed(0, 64))
    with pytest.raises(GridMismatchError):
        stochastic_convolution(pair, np.eye(1), z, 0.0, 1.0)
    with pytest.raises(GridMismatchError):
        deterministic_convolution(pair, np.ones((33, 1)), 0.0, 0.51)


def test_young_order_of_left_point_sums():
    ns = (16, 32, 64, 128, 256)
    pairs = {n: PropagatorPair(GEN1, np.linspace(0.0, 1.0, n + 1)) for n in ns}
    logs = []
    for seed in range(20):
        Z = simulate_rosenblatt(0.75, BrownianGrid.from_seed(seed, 512)).values
        S = {n: stochastic_convolution(pairs[n], np.eye(1), Z[:: 512 // n], 0.0, 1.0)[0] for n in ns}
        logs.append(np.log([abs(S[n] - S[2 * n]) for n in ns[:-1]]))
    dts = np.log(1.0 / np.array(ns[:-1]))
    pooled = np.polyfit(dts, np.mean(logs, axis=0), 1)[0]
    per_seed = [np.polyfit(dts, lg, 1)[0] for lg in logs]
    assert pooled >= 0.5
    assert np.median(per_seed) >= 0.5


def test_zero_data_converges_in_one_iteration():
    pb = parse_config({"galerkin_dim": 4, "checks": ["m0"]})
    path, trace = picard_solve(pb)
    assert trace.verdict == "converged" and trace.iterations == 1
    assert np.all(path.values == 0.0)


def test_cosine_instance():
    pb = parse_config({"galerkin_dim": 1, "n_w": 8, "beta": 1.0, "delta": 1e-3,
                       "eta": {"kind": "constant", "coeffs": [1.0]}, "checks": ["m0"]})
    path, trace = picard_solve(pb)
    assert trace.verdict == "converged"
    assert np.max(np.abs(path.values[:, 0] - np.cos(pb.times))) <= 1e-4


def test_deterministic_reduction_matches_propagators():
    cfg = {"galerkin_dim": 3, "beta": 1.0, "delta": 1 / 64, "v": {"kind": "sqrt", "scale": 0.2},
           "eta": {"kind": "exponential_sum", "rates": [1.0], "coeffs": [[1.0, 0.5, -0.25]]},
           "xi": [0.0, 1.0, 0.0], "checks": ["m0"]}
    pb = parse_config(cfg)
    path, trace = picard_solve(pb)
    e = propagate_E(pb.gen, 0.0, pb.times, pb.tail.at0(), 1e-3).values
    g = propagate_G(pb.gen, 0.0, pb.times, pb.xi, 1e-3).values
    # different RK4 step sizes (pair substeps vs 1e-3), so agreement is at integrator accuracy
    np.testing.assert_allclose(path.values, e + g, atol=1e-7)


def test_theta_apply_impulse_branch_is_exact(example):
    pb, noise, ctx, path, _ = example
    chi = path.values + 0.1  # any input; keep the splice
    chi[0] = pb.tail.at0()
    out = theta_apply(ctx, chi)
    for k, (r, t) in enumerate(zip(pb.schedule.r, pb.schedule.t), start=1):
        J = np.arange(pb.index(r) + 1, pb.index(t) + 1)
        np.testing.assert_array_equal(out.values[J], ctx.maps["f"][k - 1].all_values(chi)[J])


def test_converged_path_properties(example):
    pb, noise, ctx, path, trace = example
    assert trace.verdict == "converged"
    assert path.branch_coverage()["kinds"] == ["base", "impulse", "post"]
    again = theta_apply(ctx, path.values)
    assert np.max(np.linalg.norm(again.values - path.values, axis=1)) <= 2 * pb.abs_tol
    for k, (r, t) in enumerate(zip(pb.schedule.r, pb.schedule.t), start=1):
        J = np.arange(pb.index(r) + 1, pb.index(t) + 1)
        f = ctx.maps["f"][k - 1].all_values(path.values)[J]
        assert np.max(np.abs(path.values[J] - f)) <= 10 * pb.abs_tol


def test_continuity_at_impulse_ends(example):
    pb, _, _, path, _ = example
    x = path.values
    for t in pb.schedule.t:
        j = pb.index(t)
        jump = np.linalg.norm(x[j + 1] - x[j])
        slope = max(np.linalg.norm(x[i + 1] - x[i]) for i in range(j + 1, j + 4)) / pb.delta
        assert jump <= 2 * pb.delta * slope


def test_theta1_ratios_below_contraction_bound(example):
    _, _, _, _, trace = example
    assert trace.theta1_ratios and max(trace.theta1_ratios) <= 0.3394 + 0.05


def test_seed_determinism():
    pb = parse_config(apply_overrides(default_config(), ["max_iter=3"]))
    a, _ = picard_solve(pb, noise_for(pb))
    b, _ = picard_solve(pb, noise_for(pb))
    c, _ = picard_solve(pb, noise_for(pb, seed=1))
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_noise_grid_must_match():
    pb = parse_config({"galerkin_dim": 2, "checks": ["m0"]})
    bad = simulate_rosenblatt(0.75, BrownianGrid.from_seed(0, 64))
    with pytest.raises(GridMismatchError):
        prepare(pb, bad)


def test_trace_serializes(example, tmp_path):
    _, _, _, _, trace = example
    trace.to_json(tmp_path / "t.json")
    d = trace.as_dict()
    assert len(d["ratios"]) == len(d["distances"]) - 1

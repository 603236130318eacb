import math

import numpy as np
import pytest

from rosenblatt_nii.kernels import (
    DelayMap,
    DivergentKernelError,
    ExponentialKernel,
    PolynomialKernel,
    ZeroKernel,
    make_kernel,
)
from rosenblatt_nii.phase import ExponentialTail, ExponentialWeight, PolynomialWeight

W = ExponentialWeight(2.0)


def test_weighted_norm_closed_form():
    assert ExponentialKernel(1.0, 2.0).weighted_L2(W) == pytest.approx(1 / math.sqrt(2), rel=1e-15)
    assert ExponentialKernel(0.3, 5.0).weighted_L2(W) == pytest.approx(0.3 / math.sqrt(8))
    assert ZeroKernel().weighted_L2(W) == 0.0


def test_divergent_kernels_named():
    with pytest.raises(DivergentKernelError, match="L_u"):
        ExponentialKernel(1.0, 1.0).weighted_L2(W, "L_u")
    with pytest.raises(DivergentKernelError):
        PolynomialKernel(1.0, 2.0).weighted_L2(W)
    with pytest.raises(DivergentKernelError):
        PolynomialKernel(1.0, 1.0).weighted_L2(PolynomialWeight(2.0))


def test_polynomial_kernel_against_polynomial_weight():
    # int (1+|s|)^{-2p + q} ds = 1 / (2p - q - 1)
    assert PolynomialKernel(2.0, 3.0).weighted_L2(PolynomialWeight(2.0)) == pytest.approx(2.0 / math.sqrt(3))


def test_delay_map_on_constant_history():
    # eta = 1 everywhere: F(tau) = int_{-inf}^0 A e^{k t} dt = A / k for every tau
    times = np.linspace(0.0, 1.0, 257)
    tail = ExponentialTail.constant([1.0])
    F = DelayMap(ExponentialKernel(1.0, 2.0), times, tail)
    vals = F.all_values(np.ones((times.size, 1)))
    np.testing.assert_allclose(vals[:, 0], 0.5, atol=5e-6)
    assert F.at(128, np.ones((times.size, 1)))[0] == pytest.approx(vals[128, 0])


def test_tail_part_exact():
    tail = ExponentialTail([1.0], [[2.0]])
    k = ExponentialKernel(1.5, 3.0)
    tau = 0.4
    # int_{-inf}^{-tau} 1.5 e^{3t} 2 e^{tau + t} dt
    expected = 1.5 * 2.0 * math.exp(tau) * math.exp(-4 * tau) / 4
    assert k.tail_against(tail, [tau])[0, 0] == pytest.approx(expected, rel=1e-14)


def test_make_kernel():
    assert isinstance(make_kernel(None), ZeroKernel)
    assert make_kernel({"kind": "polynomial", "power": 3}).power == 3.0
    with pytest.raises(ValueError):
        make_kernel({"kind": "gaussian"})

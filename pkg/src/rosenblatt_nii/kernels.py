"""Delay kernels and the infinite-delay maps built from them.

A map F(tau, chi_tau) = scale * int_{-inf}^0 k(t) chi(tau + t) dt splits into
the part against the analytic tail (t < -tau) and a trapezoid sum over the
grid part, so on a uniform grid all values F(t_j, chi_{t_j}) come from one
lower-triangular Toeplitz product.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .phase import ExponentialTail, ExponentialWeight, PolynomialWeight

__all__ = [
    "DivergentKernelError",
    "ExponentialKernel",
    "PolynomialKernel",
    "ZeroKernel",
    "make_kernel",
    "DelayMap",
]


class DivergentKernelError(ValueError):
    pass


class _Kernel:
    symbol = "L"

    def weighted_L2(self, weight, symbol: str = "L") -> float:
        """(int_{-inf}^0 k(s)^2 / l(s) ds)^{1/2}."""
        raise NotImplementedError

    def tail_against(self, tail: ExponentialTail, taus) -> np.ndarray:
        """int_{-inf}^{-tau} k(t) eta(tau + t) dt for each tau, shape (len(taus), N)."""
        raise NotImplementedError

    def toeplitz(self, times) -> np.ndarray:
        """T[j, l] = trapezoid weight of int_0^{t_j} k(s - t_j) chi(s) ds at node l."""
        t = np.asarray(times, dtype=float)
        dt = t[1] - t[0]
        n1 = t.size
        lag = t[:, None] - t[None, :]
        T = np.where(lag >= -1e-12 * dt, self(-np.maximum(lag, 0.0)), 0.0) * dt
        T[:, 0] *= 0.5
        T[np.arange(n1), np.arange(n1)] *= 0.5
        T[0, 0] = 0.0
        return T


@dataclass(frozen=True)
class ExponentialKernel(_Kernel):
    """k(t) = amplitude * exp(rate t), t <= 0."""

    amplitude: float = 1.0
    rate: float = 2.0

    def __call__(self, t):
        return self.amplitude * np.exp(self.rate * np.asarray(t, dtype=float))

    def weighted_L2(self, weight, symbol: str = "L") -> float:
        if self.amplitude == 0:
            return 0.0
        if isinstance(weight, ExponentialWeight):
            den = 2.0 * self.rate - weight.rate
            if den <= 0:
                raise DivergentKernelError(f"{symbol} diverges: need 2*rate > weight rate")
            return abs(self.amplitude) / math.sqrt(den)
        return _quad_L2(self, weight, symbol)

    def tail_against(self, tail, taus) -> np.ndarray:
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        if tail.rates.size == 0 or self.amplitude == 0:
            return np.zeros((taus.size, tail.N))
        den = self.rate + tail.rates
        if np.any(den <= 0):
            raise DivergentKernelError("kernel integral against the initial history diverges")
        return (self.amplitude * np.exp(-self.rate * taus))[:, None] * (tail.coeffs / den[:, None]).sum(0)[None, :]

    def describe(self) -> dict:
        return {"kind": "exponential", "amplitude": self.amplitude, "rate": self.rate}


@dataclass(frozen=True)
class PolynomialKernel(_Kernel):
    """k(t) = amplitude * (1 + |t|)^{-power}."""

    amplitude: float = 1.0
    power: float = 2.0

    def __call__(self, t):
        return self.amplitude * (1.0 + np.abs(np.asarray(t, dtype=float))) ** (-self.power)

    def weighted_L2(self, weight, symbol: str = "L") -> float:
        if self.amplitude == 0:
            return 0.0
        if isinstance(weight, ExponentialWeight):
            raise DivergentKernelError(f"{symbol} diverges: polynomial kernel against an exponential weight")
        if isinstance(weight, PolynomialWeight):
            e = 2.0 * self.power - weight.power
            if e <= 1:
                raise DivergentKernelError(f"{symbol} diverges: need 2*power - weight power > 1")
            return abs(self.amplitude) / math.sqrt(e - 1.0)
        return _quad_L2(self, weight, symbol)

    def tail_against(self, tail, taus) -> np.ndarray:
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        out = np.zeros((taus.size, tail.N))
        if tail.rates.size == 0 or self.amplitude == 0:
            return out
        if np.any(tail.rates <= 0) and self.power <= 1:
            raise DivergentKernelError("kernel integral against the initial history diverges")
        for j, tau in enumerate(taus):
            for lam, c in zip(tail.rates, tail.coeffs):
                val, _ = integrate.quad(lambda t: float(self(t)) * math.exp(lam * (tau + t)),
                                        -np.inf, -tau, epsabs=1e-14, epsrel=1e-12, limit=200)
                out[j] += val * c
        return out

    def describe(self) -> dict:
        return {"kind": "polynomial", "amplitude": self.amplitude, "power": self.power}


@dataclass(frozen=True)
class ZeroKernel(_Kernel):
    def __call__(self, t):
        return np.zeros_like(np.asarray(t, dtype=float))

    def weighted_L2(self, weight, symbol: str = "L") -> float:
        return 0.0

    def tail_against(self, tail, taus) -> np.ndarray:
        return np.zeros((np.atleast_1d(taus).size, tail.N))

    def describe(self) -> dict:
        return {"kind": "zero"}


def _quad_L2(k, weight, symbol):
    val, err = integrate.quad(lambda s: float(k(s)) ** 2 / float(weight(s)), -np.inf, 0.0, limit=200)
    if not math.isfinite(val) or err > 1e-6 * max(1.0, abs(val)):
        raise DivergentKernelError(f"{symbol} diverges (quadrature did not converge)")
    return math.sqrt(val)


def make_kernel(desc: dict | None):
    if desc is None:
        return ZeroKernel()
    kind = desc.get("kind", "exponential")
    if kind == "exponential":
        return ExponentialKernel(float(desc.get("amplitude", 1.0)), float(desc.get("rate", 2.0)))
    if kind == "polynomial":
        return PolynomialKernel(float(desc.get("amplitude", 1.0)), float(desc.get("power", 2.0)))
    if kind == "zero":
        return ZeroKernel()
    raise ValueError(f"unknown kernel kind {kind!r}")


class DelayMap:
    """F(tau, Xi) = scale * int_{-inf}^0 k(t) Xi(t) dt on a fixed grid and tail."""

    def __init__(self, kernel, times, tail: ExponentialTail, scale: float = 1.0):
        self.kernel = kernel
        self.scale = float(scale)
        self.times = np.asarray(times, dtype=float)
        self.T = kernel.toeplitz(self.times)
        self.tail_part = kernel.tail_against(tail, self.times)

    def all_values(self, values) -> np.ndarray:
        """F(t_j, chi_{t_j}) for every grid index j; ``values`` is (n+1, N) with values[0] = eta(0)."""
        return self.scale * (self.tail_part + self.T @ np.asarray(values, dtype=float))

    def at(self, j: int, values) -> np.ndarray:
        return self.scale * (self.tail_part[j] + self.T[j] @ np.asarray(values, dtype=float))

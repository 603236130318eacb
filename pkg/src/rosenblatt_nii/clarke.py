"""Clarke directional derivatives, subdifferentials and selections.

The exact family is Sigma(x) = min(w1(x), w2(x)) with w_i(x) = a_i x^2 + b_i x + c_i,
a_i >= 0.  Its Clarke set at x is the hull of the gradients of the branches
attaining the minimum.  Anything else is a ``GenericLipschitz`` function, for
which only a sampled (lower) estimate of the directional derivative exists.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .io import write_path_csv

__all__ = [
    "QuadraticMin",
    "GenericLipschitz",
    "SubdifferentialSet",
    "Selection",
    "UnsupportedExactnessError",
    "directional_derivative",
    "subdifferential",
    "minimal_norm_selection",
    "branch_following_selection",
    "growth_check",
    "growth_constants",
    "nemytskii_selection",
]

TIE_RTOL = 1e-12


class UnsupportedExactnessError(TypeError):
    pass


@dataclass(frozen=True)
class QuadraticMin:
    a1: float
    b1: float
    c1: float
    a2: float
    b2: float
    c2: float

    def __post_init__(self):
        if self.a1 < 0 or self.a2 < 0:
            raise ValueError("quadratic branches must be convex (a_i >= 0)")

    @classmethod
    def from_coeffs(cls, w1, w2) -> "QuadraticMin":
        return cls(*map(float, w1), *map(float, w2))

    def branches(self, x):
        x = np.asarray(x, dtype=float)
        w1 = self.a1 * x * x + self.b1 * x + self.c1
        w2 = self.a2 * x * x + self.b2 * x + self.c2
        return w1, w2

    def gradients(self, x):
        x = np.asarray(x, dtype=float)
        return 2 * self.a1 * x + self.b1, 2 * self.a2 * x + self.b2

    def __call__(self, x):
        w1, w2 = self.branches(x)
        return np.minimum(w1, w2)

    def active(self, x):
        """(branch-1 active, branch-2 active) with the relative tie tolerance."""
        w1, w2 = self.branches(x)
        tie = np.abs(w1 - w2) <= TIE_RTOL * (1.0 + np.abs(w1))
        return tie | (w1 < w2), tie | (w2 < w1)

    def is_constant(self) -> bool:
        return self.a1 == self.a2 == self.b1 == self.b2 == 0.0


@dataclass(frozen=True)
class GenericLipschitz:
    fn: Callable[[float], float]
    lipschitz: float

    def __call__(self, x):
        return self.fn(x)


@dataclass(frozen=True)
class SubdifferentialSet:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("empty interval")

    def contains(self, g: float) -> bool:
        return self.lo <= g <= self.hi

    def support(self, w: float) -> float:
        return max(self.lo * w, self.hi * w)

    @property
    def sup_norm(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    @property
    def is_singleton(self) -> bool:
        return self.lo == self.hi

    def project(self, g: float = 0.0) -> float:
        return min(max(g, self.lo), self.hi)


def _exact_interval(f: QuadraticMin, z):
    g1, g2 = f.gradients(z)
    act1, act2 = f.active(z)
    lo = np.where(act1 & act2, np.minimum(g1, g2), np.where(act1, g1, g2))
    hi = np.where(act1 & act2, np.maximum(g1, g2), np.where(act1, g1, g2))
    return lo, hi


def subdifferential(f, z: float) -> SubdifferentialSet:
    if not isinstance(f, QuadraticMin):
        raise UnsupportedExactnessError(
            "exact Clarke sets are only available for QuadraticMin; "
            "use directional_derivative for a sampled estimate")
    lo, hi = _exact_interval(f, float(z))
    return SubdifferentialSet(float(lo), float(hi))


def directional_derivative(f, z: float, w: float, budget: int = 10_000,
                           radius: float = 1e-4, seed: int = 0) -> float:
    """Clarke generalized directional derivative Sigma^0(z; w).

    Exact for ``QuadraticMin``.  Otherwise the largest difference quotient
    (f(x + e w) - f(x)) / e over ``budget`` samples with |x - z| <= radius and
    e log-uniform in [radius * 1e-4, radius]; this underestimates the limsup.
    """
    if w == 0:
        return 0.0
    if isinstance(f, QuadraticMin):
        return subdifferential(f, z).support(w)
    return sampled_directional_derivative(f, z, w, budget, radius, seed)


def sampled_directional_derivative(f, z, w, budget=10_000, radius=1e-4, seed=0) -> float:
    if budget < 10_000:
        raise ValueError("sampling budget must be at least 1e4")
    if w == 0:
        return 0.0
    rng = np.random.default_rng(seed)
    x = z + radius * rng.uniform(-1.0, 1.0, budget)
    eps = np.exp(rng.uniform(math.log(radius * 1e-4), math.log(radius), budget))
    fx = np.array([f(v) for v in x]) if isinstance(f, GenericLipschitz) else f(x)
    fxe = np.array([f(v) for v in x + eps * w]) if isinstance(f, GenericLipschitz) else f(x + eps * w)
    return float(np.max((fxe - fx) / eps))


@dataclass
class Selection:
    times: np.ndarray
    rho: np.ndarray
    strategy: str

    def to_csv(self, path) -> None:
        write_path_csv(path, self.times, self.rho, ["rho"], time_col="s")


def minimal_norm_selection(f: QuadraticMin, times, chi) -> Selection:
    """rho(s) = projection of 0 onto the Clarke set at chi(s)."""
    lo, hi = _exact_interval(f, np.asarray(chi, dtype=float))
    rho = np.clip(0.0, lo, hi)
    return Selection(np.asarray(times, dtype=float), np.asarray(rho, dtype=float), "minimal-norm")


def branch_following_selection(f: QuadraticMin, times, chi) -> Selection:
    """Keep the previously used branch while it stays active."""
    chi = np.asarray(chi, dtype=float)
    g1, g2 = f.gradients(chi)
    act1, act2 = f.active(chi)
    rho = np.empty_like(chi)
    branch = 1
    for k in range(chi.size):
        if branch == 1 and not act1[k]:
            branch = 2
        elif branch == 2 and not act2[k]:
            branch = 1
        rho[k] = g1[k] if branch == 1 else g2[k]
    return Selection(np.asarray(times, dtype=float), rho, "branch-following")


def nemytskii_selection(f: QuadraticMin, space, coeffs, rule: str = "minimal-norm") -> np.ndarray:
    """Pointwise-in-w selection of a Galerkin vector, projected back to coefficients."""
    vals = space.to_grid(coeffs)
    lo, hi = _exact_interval(f, vals)
    if rule != "minimal-norm":
        raise ValueError(f"unknown selection rule {rule!r}")
    return space.from_grid(np.clip(0.0, lo, hi))


def growth_constants(f: QuadraticMin) -> tuple[float, float]:
    """(b1, b2) with |g|^2 <= b1 + b2 x^2 for every g in the Clarke set.

    |2 a x + b|^2 <= 8 a^2 x^2 + 2 b^2 on each branch.
    """
    a = max(f.a1, f.a2)
    b = max(abs(f.b1), abs(f.b2))
    return 2.0 * b * b, 8.0 * a * a


def growth_check(f: QuadraticMin, b1, b2: float, box=(-10.0, 10.0), n_x: int = 4001,
                 times=(0.0,)) -> dict:
    """Grid search of sup|g|^2 - (b1(s) + b2 x^2) over the box; pass iff <= 0."""
    b1f = b1 if callable(b1) else (lambda s, _b=float(b1): _b)
    x = np.linspace(box[0], box[1], n_x)
    x = np.union1d(x, [0.0, -1.0, 1.0])
    lo, hi = _exact_interval(f, x)
    sup2 = np.maximum(lo**2, hi**2)
    worst, witness = -math.inf, None
    for s in times:
        env = b1f(s) + b2 * x * x
        margin = sup2 - env
        tol = 1e-12 * (1.0 + np.abs(env))
        k = int(np.argmax(margin - tol))
        if margin[k] - tol[k] > worst or witness is None:
            worst, witness = float(margin[k] - tol[k]), {"s": float(s), "x": float(x[k]),
                                                         "sup_g2": float(sup2[k]), "envelope": float(env[k])}
    raw = witness["sup_g2"] - witness["envelope"]
    return {"check": "growth", "pass": bool(worst <= 0.0), "worst_margin": raw, "witness": witness,
            "b2": b2, "box": list(box)}

"""Infinite-delay phase space PC_0 x L^2(l, X): weights, histories, segments.

A history is an analytic tail eta(theta) = sum_k exp(lam_k theta) c_k on
(-inf, 0] spliced to grid values on [0, beta].  The seminorm

    ||Pi|| = ||Pi(0)|| + ( int_{-inf}^0 l(s) ||Pi(s)||^2 ds )^{1/2}

is evaluated with the closed-form tail integral plus, on the grid part, a
product rule that is exact for the weight times the piecewise-linear
interpolant of ||Pi||^2 (plain trapezoid for weights without that form).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate

from .io import write_path_csv, to_jsonable

__all__ = [
    "DivergentTailError",
    "ExponentialWeight",
    "PolynomialWeight",
    "make_weight",
    "ExponentialTail",
    "ImpulseSchedule",
    "ScheduleError",
    "PiecewisePath",
    "HistorySegment",
    "PhaseConstants",
    "segment",
    "phase_norm",
    "fit_phase_constants",
    "lemma21_check",
    "inequality31_check",
    "make_trial_paths",
]


class DivergentTailError(ValueError):
    pass


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class ExponentialWeight:
    """l(s) = exp(rate s); T(a) = exp(rate a) / rate."""

    rate: float = 2.0

    def __post_init__(self):
        if self.rate <= 0:
            raise DivergentTailError("T(0) diverges for a non-positive exponential rate")

    def __call__(self, s):
        return np.exp(self.rate * np.asarray(s, dtype=float))

    def T(self, a: float = 0.0) -> float:
        return math.exp(self.rate * a) / self.rate

    def tail_quadratic(self, tail: "ExponentialTail", shift: float) -> float:
        """int_{-inf}^0 l(u - shift) ||eta(u)||^2 du."""
        lam = tail.rates
        if lam.size == 0:
            return 0.0
        den = self.rate + lam[:, None] + lam[None, :]
        if np.any(den <= 0):
            raise DivergentTailError("weighted tail integral diverges: T against eta is infinite")
        gram = tail.coeffs @ tail.coeffs.T
        return float(math.exp(-self.rate * shift) * np.sum(gram / den))

    def quadrature_weights(self, t, tau: float) -> np.ndarray:
        """Weights integrating l(t - tau) g(t) exactly for piecewise-linear g on grid t."""
        h = np.diff(t)
        z = self.rate * h
        a = np.exp(self.rate * (t[:-1] - tau))
        small = np.abs(z) < 1e-4
        ez = np.exp(z)
        zz = np.where(small, 1.0, z)
        phi0 = np.where(small, 0.5 + z / 6 + z * z / 24, (ez - 1 - z) / zz**2)
        phi1 = np.where(small, 0.5 + z / 3 + z * z / 8, (z * ez - ez + 1) / zz**2)
        w = np.zeros(t.size)
        w[:-1] += a * h * phi0
        w[1:] += a * h * phi1
        return w

    def describe(self) -> dict:
        return {"kind": "exponential", "rate": self.rate}


@dataclass(frozen=True)
class PolynomialWeight:
    """l(s) = (1 + |s|)^{-power}, power > 1; T(a) = (1 + |a|)^{1-power} / (power - 1)."""

    power: float = 2.0

    def __post_init__(self):
        if self.power <= 1:
            raise DivergentTailError("T(0) diverges for polynomial power <= 1")

    def __call__(self, s):
        return (1.0 + np.abs(np.asarray(s, dtype=float))) ** (-self.power)

    def T(self, a: float = 0.0) -> float:
        return (1.0 + abs(a)) ** (1.0 - self.power) / (self.power - 1.0)

    def tail_quadratic(self, tail: "ExponentialTail", shift: float) -> float:
        lam = tail.rates
        if lam.size == 0:
            return 0.0
        if np.any(lam < 0):
            raise DivergentTailError("growing tail against a polynomial weight: T against eta is infinite")

        def integrand(u):
            return float(self(u - shift) * np.sum(tail(np.array([u]))[0] ** 2))

        val, _ = integrate.quad(integrand, -np.inf, 0.0, epsabs=1e-14, epsrel=1e-12, limit=200)
        return float(val)

    def quadrature_weights(self, t, tau: float) -> np.ndarray:
        """Composite trapezoid weights for l(t - tau) g(t)."""
        h = np.diff(t)
        w = np.zeros(t.size)
        w[:-1] += 0.5 * h
        w[1:] += 0.5 * h
        return w * self(t - tau)

    def describe(self) -> dict:
        return {"kind": "polynomial", "power": self.power}


def make_weight(desc: dict):
    kind = desc.get("kind", "exponential")
    if kind == "exponential":
        return ExponentialWeight(float(desc.get("rate", 2.0)))
    if kind == "polynomial":
        return PolynomialWeight(float(desc.get("power", 2.0)))
    raise ValueError(f"unknown weight kind {kind!r}")


@dataclass
class ExponentialTail:
    """eta(theta) = sum_k exp(rates[k] theta) coeffs[k], theta <= 0."""

    rates: np.ndarray
    coeffs: np.ndarray  # (K, N)

    def __post_init__(self):
        self.rates = np.atleast_1d(np.asarray(self.rates, dtype=float))
        c = np.asarray(self.coeffs, dtype=float)
        self.coeffs = c.reshape(0, c.shape[-1]) if self.rates.size == 0 else c.reshape(self.rates.size, -1)

    @classmethod
    def zero(cls, N: int) -> "ExponentialTail":
        return cls(np.zeros(0), np.zeros((0, N)))

    @classmethod
    def constant(cls, c) -> "ExponentialTail":
        c = np.atleast_1d(np.asarray(c, dtype=float))
        return cls(np.zeros(1), c[None, :])

    @property
    def N(self) -> int:
        return self.coeffs.shape[1]

    def __call__(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.size and theta.max() > 1e-12:
            raise ValueError("the tail is only defined for theta <= 0")
        return np.exp(np.multiply.outer(theta, self.rates)) @ self.coeffs

    def at0(self) -> np.ndarray:
        return self.coeffs.sum(axis=0) if self.rates.size else np.zeros(self.N)

    def scaled(self, c: float) -> "ExponentialTail":
        return ExponentialTail(self.rates.copy(), c * self.coeffs)

    def __add__(self, other: "ExponentialTail") -> "ExponentialTail":
        return ExponentialTail(np.concatenate([self.rates, other.rates]),
                               np.vstack([self.coeffs, other.coeffs]))

    def describe(self) -> dict:
        return {"kind": "exponential_sum", "rates": self.rates.tolist(),
                "coeffs": self.coeffs.tolist()}


@dataclass(frozen=True)
class ImpulseSchedule:
    """Breakpoints 0 = r_0 <= t_0 <= r_1 < t_1 < r_2 < ... < t_M < r_{M+1} = beta.

    ``r`` and ``t`` hold r_1..r_M and t_1..t_M; on (r_k, t_k] the state is
    prescribed by f_k.  ``t0`` defaults to 0 so that [0, r_1] is the first
    equation interval.
    """

    r: tuple = ()
    t: tuple = ()
    beta: float = 1.0
    t0: float = 0.0

    def __post_init__(self):
        r, t = tuple(map(float, self.r)), tuple(map(float, self.t))
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "t", t)
        if len(r) != len(t):
            raise ScheduleError("impulse schedule needs as many r_k as t_k")
        if not 0.0 <= self.t0 < self.beta:
            raise ScheduleError("interleaving invariant violated: need 0 <= t_0 < beta")
        seq = [self.t0]
        for a, b in zip(r, t):
            seq += [a, b]
        seq.append(float(self.beta))
        for k in range(1, len(seq)):
            if not seq[k] > seq[k - 1] and not (k == 1 and seq[k] >= seq[k - 1]):
                raise ScheduleError(
                    "interleaving invariant violated: need t_0 <= r_1 < t_1 < r_2 < ... < t_M < r_{M+1} = beta; "
                    f"got {seq}")

    @property
    def M(self) -> int:
        return len(self.r)

    @property
    def r_all(self) -> list:
        return [0.0, *self.r, float(self.beta)]

    @property
    def t_all(self) -> list:
        return [self.t0, *self.t]

    def kind(self, tau: float, tol: float = 1e-12) -> tuple[str, int]:
        """('base', 0) on [0, r_1]; ('impulse', k) on (r_k, t_k]; ('post', k) on (t_k, r_{k+1}]."""
        for k in range(1, self.M + 1):
            if self.r[k - 1] + tol < tau <= self.t[k - 1] + tol:
                return "impulse", k
            if self.t[k - 1] + tol < tau <= self.r_all[k + 1] + tol:
                return "post", k
        return "base", 0

    def describe(self) -> dict:
        return {"r": list(self.r), "t": list(self.t), "beta": self.beta, "t0": self.t0}


@dataclass
class PiecewisePath:
    """Grid values on [0, beta] with an analytic tail before 0."""

    times: np.ndarray
    values: np.ndarray  # (n+1, N)
    tail: ExponentialTail
    schedule: ImpulseSchedule | None = None
    check_splice: bool = True

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float).reshape(self.times.size, -1)
        if self.values.shape[1] != self.tail.N:
            raise ValueError("tail and path dimensions differ")
        if self.times[0] != 0.0:
            raise ValueError("computed part must start at 0")
        if self.check_splice:
            e0 = self.tail.at0()
            if np.max(np.abs(self.values[0] - e0)) > 1e-12 * (1.0 + np.max(np.abs(e0))):
                raise ValueError("splice violated: path value at 0 must equal eta(0)")

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def index(self, tau: float) -> int:
        j = int(round(tau / self.dt))
        if tau > self.horizon + 1e-12 or j > self.times.size - 1:
            raise ValueError(f"tau = {tau} beyond path horizon {self.horizon}")
        if abs(self.times[j] - tau) > 1e-9 * max(1.0, abs(tau)):
            raise ValueError(f"tau = {tau} is not a grid point")
        return j

    def __call__(self, s) -> np.ndarray:
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.empty((s.size, self.tail.N))
        neg = s < 0
        if neg.any():
            out[neg] = self.tail(s[neg])
        pos = ~neg
        if pos.any():
            if s[pos].max() > self.horizon + 1e-12:
                raise ValueError("evaluation beyond path horizon")
            for d in range(self.tail.N):
                out[pos, d] = np.interp(s[pos], self.times, self.values[:, d])
        return out

    def norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    def to_csv(self, path, sidecar: bool = True) -> None:
        cols = [f"x{k + 1}" for k in range(self.tail.N)]
        write_path_csv(path, self.times, self.values, cols)
        if sidecar:
            side = Path(str(path) + ".tail.json")
            side.write_text(json.dumps(to_jsonable({"tail": self.tail.describe(),
                                                     "schedule": None if self.schedule is None
                                                     else self.schedule.describe()}),
                                       indent=2, sort_keys=True) + "\n")


@dataclass
class HistorySegment:
    """chi_tau(theta) = chi(tau + theta), theta <= 0 (a read-only view)."""

    path: PiecewisePath
    j: int

    @property
    def tau(self) -> float:
        return float(self.path.times[self.j])

    def __call__(self, theta) -> np.ndarray:
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if theta.size and theta.max() > 1e-12:
            raise ValueError("segments are defined for theta <= 0")
        return self.path(self.tau + theta)

    def at0(self) -> np.ndarray:
        return self.path.values[self.j]

    def sup_norm(self, include_zero: bool = True) -> float:
        """sup over [0, tau] (or (0, tau]) of ||chi(s)||."""
        lo = 0 if include_zero else 1
        v = self.path.values[lo:self.j + 1]
        return float(np.max(np.linalg.norm(v, axis=1))) if len(v) else 0.0


def segment(path: PiecewisePath, tau: float) -> HistorySegment:
    return HistorySegment(path, path.index(tau))


def weighted_l2_sq(seg: HistorySegment, weight) -> float:
    """int_{-inf}^0 l(theta) ||chi_tau(theta)||^2 dtheta."""
    p = seg.path
    tail = weight.tail_quadratic(p.tail, seg.tau)
    if seg.j == 0:
        return tail
    t = p.times[: seg.j + 1]
    g = np.sum(p.values[: seg.j + 1] ** 2, axis=1)
    return tail + float(weight.quadrature_weights(t, seg.tau) @ g)


def phase_norm(seg: HistorySegment, weight) -> float:
    return float(np.linalg.norm(seg.at0())) + math.sqrt(max(weighted_l2_sq(seg, weight), 0.0))


def tail_norm(tail: ExponentialTail, weight) -> float:
    """||eta||_W for the bare initial history."""
    return float(np.linalg.norm(tail.at0())) + math.sqrt(weight.tail_quadratic(tail, 0.0))


@dataclass
class PhaseConstants:
    K_beta: float
    L_beta: float
    J: float
    provenance: str = "fitted"
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.K_beta < 1 or self.L_beta < 1:
            raise ValueError("K_beta and L_beta must be >= 1")
        if self.provenance not in ("fitted", "supplied"):
            raise ValueError("provenance must be 'fitted' or 'supplied'")

    def as_dict(self) -> dict:
        return {"K_beta": self.K_beta, "L_beta": self.L_beta, "J": self.J,
                "provenance": self.provenance}


def _taus(path: PiecewisePath, max_taus: int):
    n = path.times.size - 1
    stride = max(1, int(math.ceil(n / max(1, max_taus - 1))))
    idx = list(range(0, n + 1, stride))
    if idx[-1] != n:
        idx.append(n)
    return idx


def _triples(paths, weight, max_taus):
    rows = []
    for p in paths:
        eta = tail_norm(p.tail, weight)
        for j in _taus(p, max_taus):
            seg = HistorySegment(p, j)
            rows.append((phase_norm(seg, weight), seg.sup_norm(), eta,
                         float(np.linalg.norm(seg.at0()))))
    return np.array(rows).reshape(-1, 4)


def _ceil_grid(x: float, step: float) -> float:
    if x <= 1.0:
        return 1.0
    k = math.ceil((x - 1.0) / step - 1e-9)
    return round(1.0 + k * step, 12)


def fit_phase_constants(weight, beta: float, trials: Sequence[PiecewisePath], grid_step: float = 1e-3,
                        K_max: float = 100.0, L_max: float = 100.0, max_taus: int = 33,
                        min_trials: int = 100) -> PhaseConstants:
    """Smallest (K, L) on a grid of step ``grid_step`` (K first, then L) with

        ||chi_tau||_W <= K sup_{[0,tau]} ||chi|| + L ||chi_0||_W

    on every trial path and sampled tau.  Also reports J = max ||chi(tau)|| / ||chi_tau||_W.
    """
    if len(trials) < min_trials:
        raise ValueError(f"need at least {min_trials} trial paths, got {len(trials)}")
    for p in trials:
        if p.horizon < beta - 1e-12:
            raise ValueError("trial path shorter than beta")
    tr = _triples(trials, weight, max_taus)
    P, S, E, X = tr.T
    zero_tail = E <= 0
    K_req = 1.0
    if zero_tail.any():
        with np.errstate(divide="ignore", invalid="ignore"):
            need = np.where(S[zero_tail] > 0, P[zero_tail] / S[zero_tail],
                            np.where(P[zero_tail] > 0, np.inf, 0.0))
        K_req = max(K_req, float(np.max(need)))
    if not math.isfinite(K_req) or K_req > K_max:
        raise ValueError("no feasible (K, L) grid point: weight likely violates the phase-space axioms")
    K = _ceil_grid(K_req, grid_step)

    def L_needed(K):
        if (~zero_tail).any():
            return max(1.0, float(np.max((P[~zero_tail] - K * S[~zero_tail]) / E[~zero_tail])))
        return 1.0

    while np.any(P[zero_tail] - K * S[zero_tail] > 0):
        K = round(K + grid_step, 12)
    L = _ceil_grid(L_needed(K), grid_step)
    while np.any(P - (K * S + L * E) > 0) and L <= L_max:
        L = round(L + grid_step, 12)
    if L > L_max:
        raise ValueError("no feasible (K, L) grid point: weight likely violates the phase-space axioms")
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(P > 0, X / P, 0.0)
    J = float(np.max(ratio)) if np.any(P > 0) else 1.0
    diag = {"n_trials": len(trials), "n_constraints": int(P.size),
            "worst_margin": float(np.max(P - (K * S + L * E))), "grid_step": grid_step,
            "analytic_K_envelope": 1.0 + math.sqrt(weight.T(0.0))}
    return PhaseConstants(K, L, J if J > 0 else 1.0, "fitted", diag)


def lemma21_check(path: PiecewisePath, constants: PhaseConstants, weight, max_taus: int = 65) -> dict:
    """Worst ||chi_tau|| - (K sup ||chi|| + L ||eta||) over sampled tau; pass iff <= 0."""
    tr = _triples([path], weight, max_taus)
    P, S, E, _ = tr.T
    margin = P - (constants.K_beta * S + constants.L_beta * E)
    k = int(np.argmax(margin))
    idx = _taus(path, max_taus)
    return {"check": "lemma21", "pass": bool(margin[k] <= 0.0), "worst_margin": float(margin[k]),
            "tau": float(path.times[idx[k]]), "constants": constants.as_dict()}


def inequality31_check(path: PiecewisePath, constants: PhaseConstants, weight, max_taus: int = 65) -> dict:
    """||y_tau + etabar_tau||^2 <= 4 {K^2 sup_{(0,tau]} ||y||^2 + L^2 ||eta||^2}.

    Here chi = y + etabar with etabar the zero extension of eta past 0, so
    y = chi on (0, beta] and y(0) = 0.
    """
    eta = tail_norm(path.tail, weight)
    worst, at = -math.inf, 0.0
    for j in _taus(path, max_taus):
        seg = HistorySegment(path, j)
        lhs = phase_norm(seg, weight) ** 2
        sup_y = seg.sup_norm(include_zero=False)
        rhs = 4.0 * (constants.K_beta**2 * sup_y**2 + constants.L_beta**2 * eta**2)
        if lhs - rhs > worst:
            worst, at = lhs - rhs, seg.tau
    return {"check": "inequality31", "pass": bool(worst <= 0.0), "worst_margin": float(worst), "tau": at}


def make_trial_paths(times, n_paths: int = 100, seed: int = 0, N: int = 1) -> list[PiecewisePath]:
    """Spiky, smooth, impulse-bearing, constant and zero-tail test histories."""
    rng = np.random.default_rng(seed)
    times = np.asarray(times, dtype=float)
    beta = times[-1]
    out = []
    kinds = ["spiky", "smooth", "impulse", "constant", "zero_spiky", "zero_smooth", "zero_ramp"]
    for i in range(n_paths):
        kind = kinds[i % len(kinds)]
        zero = kind.startswith("zero")
        if zero:
            tail = ExponentialTail.zero(N)
        elif kind == "constant":
            tail = ExponentialTail.constant(rng.normal(size=N))
        else:
            k = int(rng.integers(1, 3))
            tail = ExponentialTail(rng.uniform(0.0, 4.0, k), rng.normal(size=(k, N)))
        base = np.broadcast_to(tail.at0(), (times.size, N)).copy()
        if kind in ("spiky", "zero_spiky"):
            g = np.zeros((times.size, N))
            for _ in range(int(rng.integers(1, 4))):
                c, w = rng.uniform(0.05, beta), rng.uniform(0.005, 0.03)
                g += np.exp(-0.5 * ((times - c) / w) ** 2)[:, None] * rng.normal(scale=3.0, size=N)
            g -= g[0]
        elif kind in ("smooth", "zero_smooth"):
            g = sum(np.sin(np.pi * m * times / beta)[:, None] * rng.normal(scale=1.0 / m, size=N)
                    for m in range(1, 5))
            g = np.asarray(g)
        elif kind == "impulse":
            g = np.zeros((times.size, N))
            for _ in range(int(rng.integers(1, 3))):
                a = rng.uniform(0.1, 0.9 * beta)
                b = a + rng.uniform(0.05, 0.2)
                g += ((times > a) & (times <= b))[:, None] * rng.normal(scale=2.0, size=N)
        elif kind == "zero_ramp":
            rise = rng.uniform(0.005, 0.1)
            g = np.minimum(times / rise, 1.0)[:, None] * rng.normal(scale=2.0, size=N)
        else:
            g = np.zeros((times.size, N))
        out.append(PiecewisePath(times, base + g, tail))
    return out

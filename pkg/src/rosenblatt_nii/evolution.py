"""Galerkin generator family and the evolution operators G(tau, s), E(tau, s).

On the sine basis of L^2(0, pi) with Dirichlet conditions the generator is
A(tau) = Lambda + v(tau) D, where Lambda = diag(-n^2) and D is the Galerkin
matrix of d/dw.  G(., s)x solves y'' = A(tau) y with y(s) = 0, y'(s) = x and
E(., s)x solves it with y(s) = x, y'(s) = 0.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "GalerkinSpace",
    "GeneratorFamily",
    "assemble_generator",
    "PropagationResult",
    "propagate_G",
    "propagate_E",
    "PropagatorPair",
    "IdentityPropagator",
    "verify_kozak_axioms",
    "estimate_M",
]


@dataclass(frozen=True)
class GalerkinSpace:
    """Span of e_n(w) = sqrt(2/pi) sin(n w), n = 1..N_dim, on [0, pi].

    ``n_w`` midpoint nodes carry pointwise (Nemytskii) operations; the
    midpoint rule is exact for the basis products as long as n_w >= N_dim + 1.
    """

    N_dim: int
    n_w: int = 0

    def __post_init__(self):
        if self.N_dim < 1:
            raise ValueError("N_dim must be >= 1")
        if self.n_w == 0:
            object.__setattr__(self, "n_w", max(64, 4 * self.N_dim))
        if self.n_w <= self.N_dim:
            raise ValueError("n_w must exceed N_dim")

    @property
    def modes(self) -> np.ndarray:
        return np.arange(1, self.N_dim + 1, dtype=float)

    @property
    def nodes(self) -> np.ndarray:
        return (np.arange(self.n_w) + 0.5) * math.pi / self.n_w

    def basis(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return math.sqrt(2.0 / math.pi) * np.sin(np.multiply.outer(w, self.modes))

    @property
    def eval_matrix(self) -> np.ndarray:
        return self.basis(self.nodes)

    @property
    def projection_matrix(self) -> np.ndarray:
        return (math.pi / self.n_w) * self.eval_matrix.T

    def to_grid(self, coeffs) -> np.ndarray:
        return np.asarray(coeffs) @ self.eval_matrix.T

    def from_grid(self, values) -> np.ndarray:
        return np.asarray(values) @ self.projection_matrix.T

    def gram(self) -> np.ndarray:
        return self.projection_matrix @ self.eval_matrix

    def laplacian(self) -> np.ndarray:
        return np.diag(-self.modes**2)

    def derivative_matrix(self) -> np.ndarray:
        """d_mn = int_0^pi e_m e_n' dw = (4/pi) m n / (m^2 - n^2) for m + n odd."""
        m = self.modes[:, None]
        n = self.modes[None, :]
        odd = ((m + n) % 2) == 1
        with np.errstate(divide="ignore", invalid="ignore"):
            d = np.where(odd, 4.0 / math.pi * m * n / (m**2 - n**2), 0.0)
        return d


def _zero(tau):
    return 0.0


@dataclass
class GeneratorFamily:
    space: GalerkinSpace
    v: Callable[[float], float] = _zero
    drift: str = "spatial"
    Lambda: np.ndarray = field(init=False)
    D: np.ndarray = field(init=False)

    def __post_init__(self):
        if self.drift not in ("spatial", "temporal"):
            raise ValueError(f"drift must be 'spatial' or 'temporal', got {self.drift!r}")
        self.Lambda = self.space.laplacian()
        self.D = self.space.derivative_matrix()

    @property
    def N(self) -> int:
        return self.space.N_dim

    def A(self, tau: float) -> np.ndarray:
        if self.drift == "spatial":
            return self.Lambda + self.v(tau) * self.D
        return self.Lambda.copy()

    def system_matrix(self, tau: float) -> np.ndarray:
        """First-order form [y, y']' = B(tau) [y, y']."""
        N = self.N
        B = np.zeros((2 * N, 2 * N))
        B[:N, N:] = np.eye(N)
        B[N:, :N] = self.A(tau)
        if self.drift == "temporal":
            B[N:, N:] = self.v(tau) * np.eye(N)
        return B

    def spectral_radius(self, tau: float) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.system_matrix(tau)))))


def assemble_generator(space: GalerkinSpace, v: Callable[[float], float] | None = None,
                       drift: str = "spatial") -> GeneratorFamily:
    return GeneratorFamily(space, v if v is not None else _zero, drift)


def _rk4(gen: GeneratorFamily, t: float, Y: np.ndarray, h: float) -> np.ndarray:
    B1 = gen.system_matrix(t)
    Bm = gen.system_matrix(t + 0.5 * h)
    B4 = gen.system_matrix(t + h)
    k1 = B1 @ Y
    k2 = Bm @ (Y + 0.5 * h * k1)
    k3 = Bm @ (Y + 0.5 * h * k2)
    k4 = B4 @ (Y + h * k3)
    return Y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class PropagationResult:
    taus: np.ndarray
    values: np.ndarray  # (len(taus), N) or (len(taus), N, k)
    h: float
    stability_warning: bool


def _propagate(gen, s, taus, Y0, h):
    if h <= 0:
        raise ValueError("step h must be positive")
    taus = np.atleast_1d(np.asarray(taus, dtype=float))
    if np.any(taus < s):
        raise ValueError("propagation requires s <= min(tau_list)")
    horizon = float(taus.max())
    rho = max(gen.spectral_radius(s), gen.spectral_radius(horizon))
    warn = rho * h > 1.0
    order = np.argsort(taus, kind="stable")
    out = np.empty((taus.size,) + Y0.shape)
    Y, t, k = Y0.copy(), s, 0
    for idx in order:
        target = taus[idx]
        while s + (k + 1) * h <= target + 1e-12 * h:
            Y = _rk4(gen, t, Y, h)
            k += 1
            t = s + k * h
        rem = target - t
        out[idx] = Y if abs(rem) <= 1e-12 * max(h, 1.0) else _rk4(gen, t, Y, rem)
    return out, warn


def _initial(gen, x, which):
    x = np.asarray(x, dtype=float)
    N = gen.N
    if x.shape[0] != N:
        raise ValueError(f"vector has length {x.shape[0]}, space has N_dim = {N}")
    Y0 = np.zeros((2 * N,) + x.shape[1:])
    if which == "G":
        Y0[N:] = x
    else:
        Y0[:N] = x
    return Y0


def propagate_G(gen: GeneratorFamily, s: float, tau_list, x, h: float = 1e-3) -> PropagationResult:
    """G(tau, s) x for every tau in ``tau_list`` by RK4 on the first-order system.

    ``x`` may be a vector or an (N, k) matrix of columns.
    """
    out, warn = _propagate(gen, s, tau_list, _initial(gen, x, "G"), h)
    out = out[:, : gen.N]
    return PropagationResult(np.atleast_1d(np.asarray(tau_list, float)), out, h, warn)


def propagate_E(gen: GeneratorFamily, s: float, tau_list, x, h: float = 1e-3) -> PropagationResult:
    """E(tau, s) x = -d/ds G(tau, s) x.

    For the spatial drift this is the solution with y(s) = x, y'(s) = 0; the
    temporal variant adds v(s) G(tau, s) x.
    """
    out, warn = _propagate(gen, s, tau_list, _initial(gen, x, "E"), h)
    vals = out[:, : gen.N]
    if gen.drift == "temporal":
        g, _ = _propagate(gen, s, tau_list, _initial(gen, x, "G"), h)
        vals = vals + gen.v(s) * g[:, : gen.N]
    return PropagationResult(np.atleast_1d(np.asarray(tau_list, float)), vals, h, warn)


class PropagatorPair:
    """G and E on every pair of points of a uniform grid.

    Built from the fundamental matrix Phi(t_j) = U(t_j, 0) of the first-order
    system, integrated once by RK4 with ``substeps`` steps per grid cell, so
    U(t_j, t_i) = Phi_j Phi_i^{-1}.
    """

    def __init__(self, gen: GeneratorFamily, times, h: float = 1e-3):
        self.gen = gen
        self.times = np.asarray(times, dtype=float)
        dt = np.diff(self.times)
        if dt.size == 0 or not np.allclose(dt, dt[0], rtol=1e-9, atol=1e-14):
            raise ValueError("PropagatorPair needs a uniform grid")
        self.dt = float(dt[0])
        self.substeps = max(1, int(math.ceil(self.dt / h - 1e-9)))
        self.h = self.dt / self.substeps
        N = gen.N
        Phi = np.empty((self.times.size, 2 * N, 2 * N))
        Y = np.eye(2 * N)
        Phi[0] = Y
        for j in range(self.times.size - 1):
            t = self.times[j]
            for k in range(self.substeps):
                Y = _rk4(gen, t + k * self.h, Y, self.h)
            Phi[j + 1] = Y
        self.Phi = Phi
        self.Phi_inv = np.linalg.inv(Phi)
        self.stability_warning = gen.spectral_radius(self.times[-1]) * self.h > 1.0

    @property
    def N(self) -> int:
        return self.gen.N

    @property
    def n(self) -> int:
        return self.times.size - 1

    def U(self, j, i) -> np.ndarray:
        return self.Phi[j] @ self.Phi_inv[i]

    def G_many(self, j: int, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=int)
        N = self.N
        out = self.Phi[j][None, :N, :] @ self.Phi_inv[idx][:, :, N:]
        out[idx == j] = 0.0
        return out

    def E_many(self, j: int, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=int)
        N = self.N
        out = self.Phi[j][None, :N, :] @ self.Phi_inv[idx][:, :, :N]
        if self.gen.drift == "temporal":
            vs = np.array([self.gen.v(self.times[i]) for i in idx])
            out = out + vs[:, None, None] * (self.Phi[j][None, :N, :] @ self.Phi_inv[idx][:, :, N:])
        out[idx == j] = np.eye(N)
        return out

    def G(self, j: int, i: int) -> np.ndarray:
        return self.G_many(j, [i])[0]

    def E(self, j: int, i: int) -> np.ndarray:
        return self.E_many(j, [i])[0]

    def index(self, tau: float) -> int:
        k = int(round(tau / self.dt))
        if not math.isclose(self.times[k], tau, rel_tol=0, abs_tol=1e-9 * max(1.0, tau)):
            raise ValueError(f"tau = {tau} is not on the propagator grid")
        return k

    def snapshot(self, j: int, i: int, which: str = "G") -> dict:
        mat = self.G(j, i) if which == "G" else self.E(j, i)
        return {
            "operator": which,
            "s": float(self.times[i]),
            "tau": float(self.times[j]),
            "matrix": mat.ravel(order="C").tolist(),
            "h": self.h,
            "N_dim": self.N,
        }


class IdentityPropagator:
    """Stub with G = E = I on a grid; only for convolution identities."""

    def __init__(self, times, N: int = 1):
        self.times = np.asarray(times, dtype=float)
        self.dt = float(self.times[1] - self.times[0])
        self._N = N

    @property
    def N(self) -> int:
        return self._N

    @property
    def n(self) -> int:
        return self.times.size - 1

    def G_many(self, j, idx):
        return np.broadcast_to(np.eye(self._N), (len(idx), self._N, self._N)).copy()

    E_many = G_many

    def G(self, j, i):
        return np.eye(self._N)

    E = G


def estimate_M(pair, pairs: Sequence[tuple[int, int]] | None = None, max_points: int = 65) -> float:
    """max over sampled (tau >= s) of max(||G||_2, ||E||_2).

    Without an explicit list of (j, i) index pairs the grid is subsampled to at
    most ``max_points`` points and every ordered pair i <= j is used.
    """
    if pairs is None:
        n = pair.n
        stride = max(1, int(math.ceil(n / (max_points - 1))))
        pts = list(range(0, n + 1, stride))
        if pts[-1] != n:
            pts.append(n)
        pairs = [(j, i) for j in pts for i in pts if i <= j]
    pairs = list(pairs)
    if not pairs:
        raise ValueError("estimate_M needs a non-empty (tau, s) sample")
    best = 0.0
    by_j: dict[int, list[int]] = {}
    for j, i in pairs:
        if i > j:
            raise ValueError("estimate_M samples must satisfy s <= tau")
        by_j.setdefault(j, []).append(i)
    for j, idx in by_j.items():
        g = np.linalg.norm(pair.G_many(j, idx), ord=2, axis=(1, 2))
        e = np.linalg.norm(pair.E_many(j, idx), ord=2, axis=(1, 2))
        best = max(best, float(g.max()), float(e.max()))
    return best


def verify_kozak_axioms(pair: PropagatorPair, gen: GeneratorFamily | None = None,
                        tol: float = 1e-4, n_probe: int = 12, seed: int = 0) -> dict:
    """Finite-difference residuals of the evolution-operator axioms.

    Differences use the grid step of ``pair``.  Residuals are absolute; the
    ``scaled`` entry divides by max(1, size of the right-hand side), which is
    what ``pass`` is judged on.  Third-order axioms are not checked.
    """
    gen = gen or pair.gen
    n = pair.n
    if n < 4:
        raise ValueError("grid too coarse for second differences")
    eps = pair.dt
    rng = np.random.default_rng(seed)
    N = pair.N
    res = {k: [0.0, 0.0] for k in ("B1_i", "B1_ii_tau", "B1_ii_s", "B2_i", "B2_ii", "B2_iii")}

    def upd(key, r, scale):
        res[key][0] = max(res[key][0], r)
        res[key][1] = max(res[key][1], scale)

    for _ in range(n_probe):
        x = rng.standard_normal(N)
        x /= np.linalg.norm(x)
        j = int(rng.integers(1, n))
        i = int(rng.integers(1, j + 1)) if j > 1 else 1
        G = pair.G
        upd("B1_i", float(np.linalg.norm(G(j, j) @ x)), 0.0)
        d_tau = (G(j + 1, j) - G(j - 1, j)) @ x / (2 * eps)
        upd("B1_ii_tau", float(np.linalg.norm(d_tau - x)), 1.0)
        d_s = (G(j, j + 1) - G(j, j - 1)) @ x / (2 * eps)
        upd("B1_ii_s", float(np.linalg.norm(d_s + x)), 1.0)
        if gen.drift == "spatial":
            lhs = (G(j + 1, i) - 2 * G(j, i) + G(j - 1, i)) @ x / eps**2
            rhs = gen.A(pair.times[j]) @ (G(j, i) @ x)
            upd("B2_i", float(np.linalg.norm(lhs - rhs)), float(np.linalg.norm(rhs)))
            ii = min(max(i, 1), j - 1) if j > 1 else 1
            lhs = (G(j, ii + 1) - 2 * G(j, ii) + G(j, ii - 1)) @ x / eps**2
            rhs = G(j, ii) @ (gen.A(pair.times[ii]) @ x)
            upd("B2_ii", float(np.linalg.norm(lhs - rhs)), float(np.linalg.norm(rhs)))
            mixed = (G(j + 1, j + 1) - G(j + 1, j - 1) - G(j - 1, j + 1) + G(j - 1, j - 1)) @ x / (4 * eps**2)
            upd("B2_iii", float(np.linalg.norm(mixed)), 0.0)

    report = {"tol": tol, "eps": eps, "h": pair.h, "axioms": {}, "B3": "not checked (out of scope)"}
    ok = True
    for key, (r, scale) in res.items():
        if gen.drift == "temporal" and key.startswith("B2"):
            report["axioms"][key] = {"status": "not applicable to a first-order time drift"}
            continue
        scaled = r / max(1.0, scale)
        passed = scaled <= tol
        ok &= passed
        report["axioms"][key] = {"residual": r, "scaled": scaled, "pass": bool(passed)}
    report["pass"] = bool(ok)
    return report

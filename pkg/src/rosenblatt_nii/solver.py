"""Mild-solution map with non-instantaneous impulses and its Picard iteration.

On [0, r_1] and on every (t_k, r_{k+1}] the state is given by the
variation-of-constants formula; on (r_k, t_k] it is assigned by f_k.  The
stochastic integral is a left-point Riemann-Stieltjes sum against the
Rosenblatt path (Young regime, H > 1/2).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clarke import QuadraticMin
from .evolution import IdentityPropagator, PropagatorPair
from .io import to_jsonable, write_path_csv
from .noise import RosenblattPath

__all__ = [
    "GridMismatchError",
    "SelectionError",
    "deterministic_convolution",
    "stochastic_convolution",
    "SolverContext",
    "prepare",
    "MildSolutionPath",
    "ConvergenceTrace",
    "theta_apply",
    "picard_solve",
]


class GridMismatchError(ValueError):
    pass


class SelectionError(RuntimeError):
    pass


def _index(times, tau):
    dt = times[1] - times[0]
    j = int(round((tau - times[0]) / dt))
    if j < 0 or j >= times.size or abs(times[j] - tau) > 1e-9 * max(1.0, abs(tau)):
        raise GridMismatchError(f"time {tau} is not on the solver grid")
    return j


def deterministic_convolution(pair, rho, t_lo: float, tau: float) -> np.ndarray:
    """Composite trapezoid rule for int_{t_lo}^tau G(tau, s) rho(s) ds.

    ``rho`` holds grid values (n+1, N) or is a ``Selection`` with a 1-D rho.
    """
    rho = np.asarray(getattr(rho, "rho", rho), dtype=float)
    if rho.ndim == 1:
        rho = rho[:, None]
    a, j = _index(pair.times, t_lo), _index(pair.times, tau)
    if j <= a:
        return np.zeros(rho.shape[1])
    idx = np.arange(a, j + 1)
    w = np.full(idx.size, pair.dt)
    w[0] = w[-1] = 0.5 * pair.dt
    G = pair.G_many(j, idx)
    return np.einsum("i,ikl,il->k", w, G, rho[idx])


def stochastic_convolution(pair, q_eval, noise, t_lo: float, tau: float) -> np.ndarray:
    """Left-point sum  sum_i G(tau, s_i) q(s_i) (Z(s_{i+1}) - Z(s_i)).

    ``q_eval(i)`` returns the (N, m) operator at grid index i; an array is
    either one constant (N, m) operator or a stack of them; ``noise`` is a RosenblattPath or an (n+1, m) array that
    must share the grid of ``pair``.
    """
    if isinstance(noise, RosenblattPath):
        if noise.times.size != pair.times.size or not np.allclose(noise.times, pair.times, atol=1e-12):
            raise GridMismatchError("noise path and propagator grid differ")
        z = noise.values
    else:
        z = np.asarray(noise, dtype=float)
        if z.shape[0] != pair.times.size:
            raise GridMismatchError("noise path and propagator grid differ")
    if z.ndim == 1:
        z = z[:, None]
    dz = np.diff(z, axis=0)
    a, j = _index(pair.times, t_lo), _index(pair.times, tau)
    if j <= a:
        return np.zeros(pair.N)
    if callable(q_eval):
        qf = q_eval
    else:
        qa = np.asarray(q_eval, dtype=float)
        qf = (lambda i: qa) if qa.ndim <= 2 else (lambda i: qa[i])
    idx = np.arange(a, j)
    G = pair.G_many(j, idx)
    out = np.zeros(pair.N)
    for k, i in enumerate(idx):
        qi = np.atleast_2d(np.asarray(qf(i), dtype=float))
        if qi.shape[0] != pair.N:
            qi = qi.T
        out += G[k] @ (qi @ dz[i])
    return out


def _factors(pair):
    """G(j, i) = L[j] @ RG[i] and E(j, i) = L[j] @ RE[i]."""
    if isinstance(pair, PropagatorPair):
        N = pair.N
        L = pair.Phi[:, :N, :]
        RG = pair.Phi_inv[:, :, N:]
        RE = pair.Phi_inv[:, :, :N]
        if pair.gen.drift == "temporal":
            v = np.array([pair.gen.v(t) for t in pair.times])
            RE = RE + v[:, None, None] * RG
        return L, RG, RE
    if isinstance(pair, IdentityPropagator):
        eye = np.broadcast_to(np.eye(pair.N), (pair.times.size, pair.N, pair.N))
        return eye, eye, eye
    raise TypeError("unsupported propagator type")


@dataclass
class SolverContext:
    problem: object
    pair: object
    L: np.ndarray
    RG: np.ndarray
    RE: np.ndarray
    maps: dict
    zeta: np.ndarray  # effective scalar noise increments (n,)
    noise_seed: int | None = None

    @property
    def times(self):
        return self.pair.times


def _effective_noise(noise, times):
    if noise is None:
        return np.zeros(times.size - 1), None
    z = noise.values if isinstance(noise, RosenblattPath) else np.asarray(noise, dtype=float)
    tz = noise.times if isinstance(noise, RosenblattPath) else times
    if z.shape[0] != times.size or not np.allclose(tz, times, atol=1e-12):
        raise GridMismatchError(f"noise has {z.shape[0] - 1} steps, solver grid has {times.size - 1}")
    if z.ndim == 2:
        z = z.sum(axis=1)
    return np.diff(z), getattr(noise, "seed", None)


def prepare(problem, noise=None, pair=None) -> SolverContext:
    """Propagators, delay maps and noise increments for one run."""
    if pair is None:
        pair = PropagatorPair(problem.gen, problem.times, problem.ode_h)
    if pair.times.size != problem.times.size:
        raise GridMismatchError("propagator grid differs from the problem grid")
    L, RG, RE = _factors(pair)
    zeta, seed = _effective_noise(noise, problem.times)
    return SolverContext(problem, pair, L, RG, RE, problem.build_maps(), zeta, seed)


@dataclass
class MildSolutionPath:
    times: np.ndarray
    values: np.ndarray  # (n+1, N)
    tail: object
    theta1: np.ndarray
    theta2: np.ndarray
    rho: np.ndarray
    provenance: list
    seed: int | None = None

    def to_csv(self, path) -> None:
        cols = [f"x{k + 1}" for k in range(self.values.shape[1])]
        write_path_csv(path, self.times, self.values, cols)

    def branch_coverage(self) -> dict:
        kinds = sorted({p["kind"] for p in self.provenance})
        return {"kinds": kinds, "base_only": kinds == ["base"]}


@dataclass
class ConvergenceTrace:
    distances: list = field(default_factory=list)
    theta1_ratios: list = field(default_factory=list)
    verdict: str = "stalled"
    iterations: int = 0
    abs_tol: float = 0.0

    @property
    def ratios(self) -> list:
        d = self.distances
        return [d[k + 1] / d[k] if d[k] > 0 else (0.0 if d[k + 1] == 0 else math.inf)
                for k in range(len(d) - 1)]

    def as_dict(self) -> dict:
        return {"distances": self.distances, "ratios": self.ratios, "theta1_ratios": self.theta1_ratios,
                "verdict": self.verdict, "iterations": self.iterations, "abs_tol": self.abs_tol}

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(to_jsonable(self.as_dict()), indent=2, sort_keys=True) + "\n")


def _segments(problem):
    """(kind, k, start index a, indices) covering 0..n."""
    sch, times = problem.schedule, problem.times
    idx = problem.index
    segs = []
    r1 = sch.r_all[1]
    segs.append(("base", 0, 0, np.arange(0, idx(r1) + 1)))
    for k in range(1, sch.M + 1):
        rk, tk, rk1 = sch.r[k - 1], sch.t[k - 1], sch.r_all[k + 1]
        segs.append(("impulse", k, idx(rk), np.arange(idx(rk) + 1, idx(tk) + 1)))
        segs.append(("post", k, idx(tk), np.arange(idx(tk) + 1, idx(rk1) + 1)))
    return segs


def _select(problem, chi):
    f = problem.sigma
    if not isinstance(f, QuadraticMin):
        raise SelectionError("the solver needs an exact Clarke family for Sigma")
    sp = problem.space
    vals = chi @ sp.eval_matrix.T
    g1, g2 = f.gradients(vals)
    act1, act2 = f.active(vals)
    lo = np.where(act1 & act2, np.minimum(g1, g2), np.where(act1, g1, g2))
    hi = np.where(act1 & act2, np.maximum(g1, g2), np.where(act1, g1, g2))
    bad = ~(act1 | act2) | ~np.isfinite(lo) | ~np.isfinite(hi)
    if bad.any():
        j, w = np.argwhere(bad)[0]
        raise SelectionError(f"no admissible selection at tau = {problem.times[j]}, w = {sp.nodes[w]}")
    return np.clip(0.0, lo, hi) @ sp.projection_matrix.T


def theta_apply(ctx: SolverContext, chi, selection_rule: str = "minimal-norm"):
    """One application of the solution map to grid values ``chi`` (chi[0] = eta(0)).

    Returns a MildSolutionPath whose ``theta1`` holds the contraction part
    (initial/impulse terms and stochastic convolution) and ``theta2`` the
    deterministic convolution of the selection.
    """
    if selection_rule != "minimal-norm":
        raise SelectionError(f"unknown selection rule {selection_rule!r}")
    pb = ctx.problem
    chi = np.asarray(chi, dtype=float)
    n1, N = chi.shape
    dt = pb.delta
    rho = _select(pb, chi)
    qv = ctx.maps["q"].all_values(chi)
    f_all = [m.all_values(chi) for m in ctx.maps["f"]]
    g_all = [m.all_values(chi) for m in ctx.maps["g"]]
    L, RG, RE = ctx.L, ctx.RG, ctx.RE
    th1 = np.zeros((n1, N))
    th2 = np.zeros((n1, N))
    prov = []
    eta0 = pb.tail.at0()
    r_det = np.einsum("ikl,il->ik", RG, rho)
    r_sto = np.einsum("ikl,il->ik", RG[:-1], qv[:-1] * ctx.zeta[:, None])
    for kind, k, a, J in _segments(pb):
        prov.append({"kind": kind, "k": k, "start": float(pb.times[a]),
                     "lo": float(pb.times[J[0]]) if J.size else None,
                     "hi": float(pb.times[J[-1]]) if J.size else None})
        if J.size == 0:
            continue
        if kind == "impulse":
            th1[J] = f_all[k - 1][J]
            continue
        if kind == "base":
            x0, v0 = eta0, pb.xi
        else:
            x0, v0 = f_all[k - 1][a], g_all[k - 1][a]
        init = np.einsum("jkl,l->jk", L[J], RE[a] @ x0 + RG[a] @ v0)
        cd = np.cumsum(r_det[a:], axis=0)[J - a]
        det = dt * (cd - 0.5 * (r_det[a][None, :] + r_det[J]))
        cs = np.vstack([np.zeros(r_sto.shape[1]), np.cumsum(r_sto[a:], axis=0)])[J - a]
        th1[J] = init + np.einsum("jkl,jl->jk", L[J], cs)
        th2[J] = np.einsum("jkl,jl->jk", L[J], det)
        if kind == "base":
            th1[0], th2[0] = eta0, 0.0
    values = th1 + th2
    return MildSolutionPath(pb.times, values, pb.tail, th1, th2, rho, prov, ctx.noise_seed)


def zero_extension(problem) -> np.ndarray:
    y = np.zeros((problem.n + 1, problem.N))
    y[0] = problem.tail.at0()
    return y


def picard_solve(problem, noise=None, selection_rule: str = "minimal-norm", max_iter: int | None = None,
                 abs_tol: float | None = None, ctx: SolverContext | None = None):
    """Iterate the solution map from the zero extension of eta.

    Returns (path, trace).  ``trace.iterations`` counts applications until the
    first sup-distance <= abs_tol; the run always records at least two.
    """
    ctx = ctx or prepare(problem, noise)
    max_iter = problem.max_iter if max_iter is None else max_iter
    abs_tol = problem.abs_tol if abs_tol is None else abs_tol
    trace = ConvergenceTrace(abs_tol=abs_tol)
    chi = zero_extension(problem)
    prev_chi, prev_th1 = None, None
    first_hit, grow = None, 0
    out = None
    for it in range(max(max_iter, 2)):
        out = theta_apply(ctx, chi, selection_rule)
        d = float(np.max(np.linalg.norm(out.values - chi, axis=1)))
        if not math.isfinite(d):
            trace.verdict = "diverged"
            break
        if prev_chi is not None:
            den = float(np.max(np.sum((chi - prev_chi) ** 2, axis=1)))
            if den > 0:
                num = float(np.max(np.sum((out.theta1 - prev_th1) ** 2, axis=1)))
                trace.theta1_ratios.append(num / den)
        if trace.distances and d > trace.distances[-1]:
            grow += 1
        else:
            grow = 0
        trace.distances.append(d)
        if d <= abs_tol and first_hit is None:
            first_hit = it
        prev_chi, prev_th1 = chi, out.theta1
        chi = out.values
        if first_hit is not None and len(trace.distances) >= 2:
            trace.verdict = "converged"
            break
        if grow >= 3:
            trace.verdict = "diverged"
            break
    trace.iterations = (first_hit + 1) if first_hit is not None else len(trace.distances)
    return out, trace

"""Hypothesis constants, contraction constants, the Bihari-type test and
Monte Carlo certificates for the stochastic convolution bound."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, stats

from .clarke import growth_check, growth_constants
from .evolution import IdentityPropagator, PropagatorPair, estimate_M, verify_kozak_axioms
from .noise import InsufficientPathsError, hurst_constants, increment_stream, projected_kernel
from .phase import (ExponentialTail, PiecewisePath, fit_phase_constants, inequality31_check,
                    lemma21_check, make_trial_paths, tail_norm)

__all__ = [
    "CertificationRefused",
    "HypothesisReport",
    "compute_M0",
    "check_bihari_condition",
    "bihari_rhs",
    "lemma23_certificate",
    "fit_coefficient_constants",
    "build_hypothesis_report",
    "run_checks",
]


class CertificationRefused(ValueError):
    pass


def compute_M0(K_beta: float, M: float, gammas, cs, beta: float, H: float, TrQ: float, M_q: float) -> dict:
    """The three contraction constants; certification needs the largest < 1.

    lemma: max_k 4K^2 [(1 + 3M) gamma_k + 3M (c_k + beta^{2H} c(H) TrQ M_q)]
    thm:   max_k 4K^2 [gamma_k + 3M (c_k + beta^{2H} c(H) TrQ M_q)]
    hat:   4K^2 max_k {gamma_k (1 + 4M) + 4M c_k}
    With no impulses the lists are empty and gamma = c = 0 is used.
    """
    g = np.atleast_1d(np.asarray(gammas, dtype=float))
    c = np.atleast_1d(np.asarray(cs, dtype=float))
    if g.size == 0:
        g = c = np.zeros(1)
    if g.shape != c.shape:
        raise ValueError("need one c_k per gamma_k")
    vals = [K_beta, M, beta, TrQ, M_q, *g, *c]
    if any(v < 0 for v in vals):
        raise ValueError("all constants must be nonnegative")
    if K_beta < 1:
        raise ValueError("K_beta must be >= 1")
    cH = hurst_constants(H)[1]
    noise = beta ** (2 * H) * cH * TrQ * M_q
    K2 = 4.0 * K_beta**2
    lemma = float(np.max(K2 * ((1 + 3 * M) * g + 3 * M * (c + noise))))
    thm = float(np.max(K2 * (g + 3 * M * (c + noise))))
    hat = float(K2 * np.max(g * (1 + 4 * M) + 4 * M * c))
    worst = max(lemma, thm, hat)
    return {"M0_lemma": lemma, "M0_thm": thm, "M0_hat": hat, "max": worst, "pass": bool(worst < 1.0),
            "c_H": cH}


def bihari_rhs(m_q, c_star: float) -> float:
    """int_{c*}^inf ds / m_q(s).

    ``m_q`` is {"kind": "affine", "a0", "a1"}, {"kind": "power", "a0", "a1", "p"}
    (meaning (a0 + a1 s)^p) or a callable, integrated on doubling windows
    until the increments die out or stop shrinking.
    """
    if isinstance(m_q, dict):
        kind = m_q.get("kind")
        a0, a1 = float(m_q.get("a0", 1.0)), float(m_q.get("a1", 1.0))
        if a0 + a1 * c_star <= 0 or a1 < 0:
            raise ValueError("m_q must be positive and nondecreasing")
        if kind == "affine":
            return math.inf
        if kind == "power":
            p = float(m_q["p"])
            if p <= 1 or a1 == 0:
                return math.inf
            return (a0 + a1 * c_star) ** (1 - p) / (a1 * (p - 1))
        raise ValueError(f"unknown m_q kind {kind!r}")
    total, lo, width = 0.0, c_star, 1.0
    prev = None
    for _ in range(200):
        piece, _ = integrate.quad(lambda s: 1.0 / m_q(s), lo, lo + width, epsabs=1e-15, epsrel=1e-12, limit=200)
        total += piece
        if piece < 1e-14 * max(1.0, total):
            return total
        if prev is not None and piece > 0.95 * prev and width > 1e6:
            return math.inf
        prev = piece
        lo, width = lo + width, 2 * width
    return math.inf


def check_bihari_condition(inputs: dict, m, m_q, b1_L1: float, b2: float, c_star: float | None = None) -> dict:
    """Compare int_0^beta max{c1* m(t), c2* b2} dt against int_{c*}^inf ds / m_q(s).

    ``inputs`` carries M0_hat, K_beta, L_beta, eta_norm, M_hat, beta, M, H, TrQ.
    The sum reading c1* m + c2* b2 of the left side is reported as well.
    """
    M0h = float(inputs["M0_hat"])
    if M0h >= 1:
        raise CertificationRefused(f"M0_hat = {M0h} >= 1: c*, c1*, c2* are undefined")
    K, L = float(inputs["K_beta"]), float(inputs["L_beta"])
    beta, M, H, TrQ = (float(inputs[k]) for k in ("beta", "M", "H", "TrQ"))
    cH = hurst_constants(H)[1]
    d = 1.0 - M0h
    c1 = 4 * K**2 * beta ** (2 * H) * cH * M * TrQ / d
    c2 = beta * M / d
    if c_star is None:
        c_star = (4 * L**2 * float(inputs["eta_norm"]) ** 2 + 4 * K**2 * float(inputs["M_hat"])
                  + beta * M * b1_L1) / d
    mf = m if callable(m) else (lambda t, _m=float(m): _m)
    lhs_comma, _ = integrate.quad(lambda t: max(c1 * mf(t), c2 * b2), 0.0, beta, limit=200)
    lhs_sum, _ = integrate.quad(lambda t: c1 * mf(t) + c2 * b2, 0.0, beta, limit=200)
    rhs = bihari_rhs(m_q, c_star)
    margin = rhs - lhs_comma
    return {"check": "bihari", "pass": bool(margin > 0), "lhs": lhs_comma, "lhs_sum_reading": lhs_sum,
            "rhs": rhs, "rhs_infinite": bool(math.isinf(rhs)), "margin": margin,
            "margin_sum_reading": rhs - lhs_sum, "pass_sum_reading": bool(rhs - lhs_sum > 0),
            "c_star": c_star, "c1_star": c1, "c2_star": c2}


def _path_seeds(seed: int, n_paths: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(n_paths, dtype=np.uint64)]


def lemma23_certificate(pair, phi, H: float, eigenvalues, tau: float, n_paths: int = 2000, seed: int = 0,
                        n_boot: int = 2000, diagonal: str = "wick") -> dict:
    """Monte Carlo check of E||int_0^tau G(tau, s) phi(s) dZ(s)||^2 against
    c(H) M tau^{2H} TrQ sup ||phi||^2 with a one-sided 99% bootstrap limit.

    ``phi`` is an (N, m) matrix or a callable of the grid index; M is the
    largest ||G(t, s)||^2 over grid pairs in [0, tau].
    """
    if n_paths < 500:
        raise InsufficientPathsError(f"{n_paths} paths; the certificate needs >= 500")
    nu = np.atleast_1d(np.asarray(eigenvalues, dtype=float))
    m = nu.size
    times = pair.times
    j = int(round(tau / pair.dt))
    if abs(times[j] - tau) > 1e-9:
        raise ValueError("tau must be a grid point of the propagator")
    phif = phi if callable(phi) else (lambda i, _p=np.atleast_2d(np.asarray(phi, float)): _p)
    ph = np.stack([phif(i) for i in range(j)])  # (j, N, m)
    sup_phi = float(max(np.linalg.norm(p, 2) ** 2 for p in ph)) if j else 0.0
    idx = np.arange(j)
    G = pair.G_many(j, idx) if j else np.zeros((0, pair.N, pair.N))
    if isinstance(pair, IdentityPropagator):
        M_G = 1.0
    else:
        M_G = max(1e-300, max(float(np.max(np.linalg.norm(pair.G_many(k, np.arange(k + 1)), 2, axis=(1, 2)) ** 2))
                              for k in range(j + 1)))
    cH = hurst_constants(H)[1]
    bound_tr = cH * M_G * tau ** (2 * H) * nu.sum() * sup_phi
    bound_plain = cH * M_G * tau ** (2 * H) * sup_phi
    if sup_phi == 0.0:
        X = np.zeros(n_paths)
    else:
        n = pair.n
        kern = projected_kernel(float(H), n, float(times[-1]))
        seeds = _path_seeds(seed, n_paths)
        dt = float(times[1] - times[0])
        Zinc = np.empty((n_paths, n, m))
        for mode in range(m):
            W = np.stack([increment_stream(s, mode).standard_normal(n) for s in seeds]) * math.sqrt(dt)
            Z = kern.synthesize(W, diagonal)
            Zinc[:, :, mode] = np.diff(Z, axis=1) * math.sqrt(nu[mode])
        A = np.einsum("ikl,ilm->ikm", G, ph)  # (j, N, m)
        Y = np.einsum("ikm,pim->pk", A, Zinc[:, :j, :])
        X = np.sum(Y**2, axis=1)
    est = float(X.mean())
    if np.ptp(X) == 0:
        ucl = est
    else:
        res = stats.bootstrap((X,), np.mean, n_resamples=n_boot, confidence_level=0.99, alternative="less",
                              method="percentile", rng=np.random.default_rng(seed))
        ucl = float(res.confidence_interval.high)
    return {"check": "lemma23", "pass": bool(ucl <= bound_tr), "estimate": est, "ucl99": ucl,
            "std_error": float(X.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0,
            "bound": bound_tr, "bound_without_trace": bound_plain, "margin": bound_tr - ucl,
            "margin_without_trace": bound_plain - ucl, "pass_without_trace": bool(ucl <= bound_plain),
            "M_G": M_G, "sup_phi_sq": sup_phi, "c_H": cH, "tau": tau, "H": H, "n_paths": n_paths,
            "seed": seed, "trace_Q": float(nu.sum())}


def _random_history(rng, times, N):
    k = int(rng.integers(0, 3))
    tail = ExponentialTail(rng.uniform(0.0, 3.0, k), rng.normal(size=(k, N))) if k else ExponentialTail.zero(N)
    vals = np.cumsum(rng.normal(scale=0.3, size=(times.size, N)), axis=0)
    vals += rng.normal(size=N) * np.sin(np.pi * rng.integers(1, 5) * times / times[-1])[:, None]
    vals = vals - vals[0] + tail.at0()
    return PiecewisePath(times, vals, tail)


def fit_coefficient_constants(problem, n_probe: int = 200, seed: int = 0) -> dict:
    """Envelopes M_q = (b L_u)^2, gamma_k = A_k^2, c_k = At_k^2 plus probe maxima.

    The delay maps are linear, so difference quotients reduce to
    ||F(Xi)||^2 / ||Xi||_W^2 on random histories Xi.  Probe values are
    clamped to the envelopes; certification uses the envelopes.
    """
    from .kernels import DelayMap
    from .phase import phase_norm, HistorySegment

    w = problem.weight
    k = problem.kernels
    L_u = k["u"].weighted_L2(w, "L_u")
    A = [mu.weighted_L2(w, f"A_{i + 1}") for i, mu in enumerate(k["mu"])]
    At = [mu.weighted_L2(w, f"At_{i + 1}") for i, mu in enumerate(k["mu_tilde"])]
    env = {"M_q": (abs(problem.b_tilde) * L_u) ** 2, "gamma": [a * a for a in A], "c": [a * a for a in At]}
    rng = np.random.default_rng(seed)
    times = problem.times
    probe = {"M_q": 0.0, "gamma": [0.0] * len(A), "c": [0.0] * len(At)}
    Tq = k["u"].toeplitz(times)
    Tf = [m.toeplitz(times) for m in k["mu"]]
    Tg = [m.toeplitz(times) for m in k["mu_tilde"]]
    for _ in range(n_probe):
        h = _random_history(rng, times, problem.N)
        j = int(rng.integers(0, times.size))
        nrm = phase_norm(HistorySegment(h, j), w) ** 2
        if nrm == 0:
            continue

        def val(kern, T, scale=1.0):
            return scale * (kern.tail_against(h.tail, [times[j]])[0] + T[j] @ h.values)

        probe["M_q"] = max(probe["M_q"], float(np.sum(val(k["u"], Tq, problem.b_tilde) ** 2)) / nrm)
        for i in range(len(A)):
            probe["gamma"][i] = max(probe["gamma"][i], float(np.sum(val(k["mu"][i], Tf[i]) ** 2)) / nrm)
            probe["c"][i] = max(probe["c"][i], float(np.sum(val(k["mu_tilde"][i], Tg[i]) ** 2)) / nrm)
    fitted = {"M_q": min(probe["M_q"], env["M_q"]),
              "gamma": [min(a, b) for a, b in zip(probe["gamma"], env["gamma"])],
              "c": [min(a, b) for a, b in zip(probe["c"], env["c"])]}
    return {"L_u": L_u, "A": A, "A_tilde": At, "b_tilde": problem.b_tilde, "envelope": env,
            "probe_max": probe, "fitted": fitted, "n_probe": n_probe}


@dataclass
class HypothesisReport:
    M: float
    gammas: list
    cs: list
    M_q: float
    m_desc: dict
    m_q_desc: dict
    b1: float
    b2: float
    K_beta: float
    L_beta: float
    J: float
    constants_provenance: str
    M0: dict
    c_star: float | None = None
    c1_star: float | None = None
    c2_star: float | None = None
    bihari: dict | None = None
    coefficient_fit: dict = field(default_factory=dict)
    eta_norm: float = 0.0
    M_hat: float = 0.0
    phi: float | None = None
    upsilon0: float | None = None

    @property
    def passed(self) -> bool:
        ok = self.M0["pass"]
        if self.bihari is not None:
            ok = ok and self.bihari["pass"]
        return bool(ok)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = self.passed
        return d


def _phase_constants(problem, n_trials=100, seed=0):
    trials = make_trial_paths(problem.times, n_trials, seed)
    return fit_phase_constants(problem.weight, problem.beta, trials)


def build_hypothesis_report(problem, pair=None, phase_constants=None, coeff=None) -> HypothesisReport:
    pair = pair or PropagatorPair(problem.gen, problem.times, problem.ode_h)
    M = estimate_M(pair)
    pc = phase_constants or _phase_constants(problem)
    coeff = coeff or fit_coefficient_constants(problem)
    env = coeff["envelope"]
    H, TrQ, beta = problem.H.H, problem.Q.trace, problem.beta
    M0 = compute_M0(pc.K_beta, M, env["gamma"], env["c"], beta, H, TrQ, env["M_q"])
    b1s, b2 = growth_constants(problem.sigma)
    b1 = math.pi * b1s
    eta_norm = tail_norm(problem.tail, problem.weight)
    g = np.asarray(env["gamma"] or [0.0])
    c = np.asarray(env["c"] or [0.0])
    M_hat = float(np.max(4 * M * (eta_norm**2 + float(problem.xi @ problem.xi) + g + c) + g))
    rep = HypothesisReport(M=M, gammas=list(env["gamma"]), cs=list(env["c"]), M_q=env["M_q"],
                           m_desc={"kind": "constant", "value": env["M_q"]},
                           m_q_desc={"kind": "affine", "a0": 1.0, "a1": 1.0},
                           b1=b1, b2=b2, K_beta=pc.K_beta, L_beta=pc.L_beta, J=pc.J,
                           constants_provenance=pc.provenance, M0=M0, coefficient_fit=coeff,
                           eta_norm=eta_norm, M_hat=M_hat)
    inputs = {"M0_hat": M0["M0_hat"], "K_beta": pc.K_beta, "L_beta": pc.L_beta, "eta_norm": eta_norm,
              "M_hat": M_hat, "beta": beta, "M": M, "H": H, "TrQ": TrQ}
    try:
        bi = check_bihari_condition(inputs, env["M_q"], rep.m_q_desc, b1 * beta, b2)
        rep.bihari = bi
        rep.c_star, rep.c1_star, rep.c2_star = bi["c_star"], bi["c1_star"], bi["c2_star"]
        rep.upsilon0 = bi["c_star"]
    except CertificationRefused as e:
        rep.bihari = {"check": "bihari", "pass": False, "refused": str(e)}
    return rep


def _unit_phi(N, m):
    p = np.zeros((N, m))
    p[0, :] = 1.0 / math.sqrt(m)
    return p


def run_checks(problem, checks: Sequence[str], pair=None, solution=None, report=None) -> dict:
    """Run the named certificates; every requested name appears exactly once."""
    out = {}
    pair = pair or PropagatorPair(problem.gen, problem.times, problem.ode_h)
    report = report or build_hypothesis_report(problem, pair)
    for name in sorted(set(checks)):
        if name == "kozak":
            fine = PropagatorPair(problem.gen, np.linspace(0.0, problem.beta, int(round(problem.beta / 1e-3)) + 1),
                                  problem.ode_h)
            out[name] = verify_kozak_axioms(fine, tol=1e-4)
        elif name == "m0":
            out[name] = {"check": "m0", **report.M0, "inputs": {
                "K_beta": report.K_beta, "M": report.M, "gammas": report.gammas, "cs": report.cs,
                "M_q": report.M_q, "beta": problem.beta, "H": problem.H.H, "TrQ": problem.Q.trace}}
        elif name == "bihari":
            out[name] = report.bihari
        elif name == "growth":
            b1s, b2 = growth_constants(problem.sigma)
            g = growth_check(problem.sigma, b1s, b2)
            if solution is not None:
                rho2 = np.sum(solution.rho**2, axis=1)
                env = report.b1 + report.b2 * np.sum(solution.values**2, axis=1)
                g["selection_margin"] = float(np.max(rho2 - env))
                g["pass"] = bool(g["pass"] and g["selection_margin"] <= 0)
            g["b1_scalar"], g["b1_space"] = b1s, report.b1
            out[name] = g
        elif name == "lemma21":
            pc = _phase_constants(problem)
            per = []
            if solution is not None:
                sol = PiecewisePath(problem.times, solution.values, problem.tail)
                per.append(("solution", sol))
            spike = np.zeros((problem.times.size, 1))
            spike[problem.times.size // 2] = 5.0
            per.append(("spike", PiecewisePath(problem.times, spike, ExponentialTail.zero(1))))
            res = {}
            ok = True
            refit = None
            for label, p in per:
                r = lemma21_check(p, pc, problem.weight)
                if not r["pass"] and label == "spike":
                    trials = make_trial_paths(problem.times, 100, 0) + [p]
                    refit = fit_phase_constants(problem.weight, problem.beta, trials)
                    r["refit"] = refit.as_dict()
                    r["refit_pass"] = lemma21_check(p, refit, problem.weight)["pass"]
                    r["pass"] = r["refit_pass"]
                r31 = inequality31_check(p, pc, problem.weight)
                res[label] = {"lemma21": r, "inequality31": r31}
                ok = ok and r["pass"] and r31["pass"]
            out[name] = {"check": "lemma21", "pass": bool(ok), "constants": pc.as_dict(),
                         "diagnostics": pc.diagnostics, "paths": res}
        elif name == "lemma23":
            m = problem.Q.n_modes
            out[name] = lemma23_certificate(pair, _unit_phi(problem.N, m), problem.H.H, problem.Q.eigenvalues,
                                            problem.beta, problem.n_paths, problem.seed)
        else:
            raise ValueError(f"unknown check {name!r}")
    return out

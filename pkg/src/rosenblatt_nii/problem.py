"""Problem instances: configuration parsing, validation and assembly."""
from __future__ import annotations

import copy
import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .clarke import QuadraticMin
from .evolution import GalerkinSpace, GeneratorFamily, assemble_generator
from .kernels import DelayMap, make_kernel
from .noise import HurstParameter, TraceClassCovariance
from .phase import ExponentialTail, ImpulseSchedule, ScheduleError, make_weight

__all__ = ["ConfigError", "ProblemSpec", "load_config", "parse_config", "default_config",
           "apply_overrides", "make_v", "make_tail"]

KNOWN_KEYS = {
    "hurst", "q_modes", "galerkin_dim", "n_w", "beta", "delta", "impulses", "t0", "weight", "kernels",
    "sigma", "eta", "xi", "v", "drift", "seed", "max_iter", "abs_tol", "ode_h", "n_paths", "checks",
    "report_dir", "selection", "name",
}
KNOWN_CHECKS = ("kozak", "lemma21", "lemma23", "m0", "bihari", "growth")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        self.line, self.key = line, key
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


def _line_of(text: str | None, key: str) -> int | None:
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def make_v(desc) -> Callable[[float], float]:
    """Named coefficient functions v(tau)."""
    if desc is None:
        return lambda t: 0.0
    if isinstance(desc, (int, float)):
        c = float(desc)
        return lambda t: c
    kind = desc.get("kind", "zero")
    s = float(desc.get("scale", 0.0))
    if kind == "zero":
        return lambda t: 0.0
    if kind == "constant":
        return lambda t: s
    if kind == "linear":
        return lambda t: s * t
    if kind == "sqrt":
        return lambda t: s * math.sqrt(max(t, 0.0))
    if kind == "holder":
        a = float(desc.get("exponent", 0.5))
        return lambda t: s * max(t, 0.0) ** a
    raise ValueError(f"unknown v kind {kind!r}")


def make_tail(desc, N: int) -> ExponentialTail:
    if desc is None or desc.get("kind") == "zero":
        return ExponentialTail.zero(N)
    kind = desc.get("kind")
    if kind == "exponential_mode":
        c = np.zeros(N)
        mode = int(desc.get("mode", 1))
        if not 1 <= mode <= N:
            raise ValueError(f"eta mode {mode} outside 1..{N}")
        c[mode - 1] = float(desc.get("amplitude", 1.0))
        return ExponentialTail([float(desc.get("rate", 1.0))], c[None, :])
    if kind == "constant":
        c = np.zeros(N)
        v = np.asarray(desc.get("coeffs", [1.0]), dtype=float)
        c[: v.size] = v
        return ExponentialTail.constant(c)
    if kind == "exponential_sum":
        rates = np.asarray(desc["rates"], dtype=float)
        coeffs = np.zeros((rates.size, N))
        for k, row in enumerate(desc["coeffs"]):
            row = np.asarray(row, dtype=float)
            coeffs[k, : row.size] = row
        return ExponentialTail(rates, coeffs)
    raise ValueError(f"unknown eta kind {kind!r}")


def _pad(v, N):
    out = np.zeros(N)
    v = np.asarray(v if v is not None else [], dtype=float).ravel()
    if v.size > N:
        raise ValueError(f"vector of length {v.size} exceeds galerkin_dim = {N}")
    out[: v.size] = v
    return out


@dataclass
class ProblemSpec:
    """Everything needed to run the solver and the certificates on one instance."""

    config: dict
    H: HurstParameter
    Q: TraceClassCovariance
    space: GalerkinSpace
    gen: GeneratorFamily
    schedule: ImpulseSchedule
    weight: Any
    sigma: QuadraticMin
    tail: ExponentialTail
    xi: np.ndarray
    beta: float
    delta: float
    times: np.ndarray
    kernels: dict
    b_tilde: float
    seed: int
    max_iter: int
    abs_tol: float
    ode_h: float
    n_paths: int
    checks: list
    selection: str = "minimal-norm"
    maps: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.times.size - 1

    @property
    def N(self) -> int:
        return self.space.N_dim

    @property
    def M_impulses(self) -> int:
        return self.schedule.M

    def index(self, tau: float) -> int:
        return int(round(tau / self.delta))

    def build_maps(self) -> dict:
        """Delay maps on the solver grid: q (vector part), f_k, g_k."""
        if self.maps:
            return self.maps
        k = self.kernels
        self.maps["q"] = DelayMap(k["u"], self.times, self.tail, self.b_tilde)
        self.maps["f"] = [DelayMap(m, self.times, self.tail) for m in k["mu"]]
        self.maps["g"] = [DelayMap(m, self.times, self.tail) for m in k["mu_tilde"]]
        return self.maps

    def describe(self) -> dict:
        return copy.deepcopy(self.config)


def default_config() -> dict:
    text = resources.files("rosenblatt_nii").joinpath("data/example4.json").read_text()
    return json.loads(text)


def load_config(path) -> ProblemSpec:
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"malformed JSON: {e.msg} (column {e.colno})", e.lineno) from None
    return parse_config(cfg, text)


def _per_impulse(desc, M, name):
    if isinstance(desc, list):
        if len(desc) != M:
            raise ConfigError(f"kernels.{name} lists {len(desc)} kernels for {M} impulses", key=name)
        return [make_kernel(d) for d in desc]
    return [make_kernel(desc) for _ in range(M)]


def parse_config(cfg: dict, text: str | None = None) -> ProblemSpec:
    """Validate a configuration tree and assemble a ``ProblemSpec``."""
    def fail(msg, key):
        raise ConfigError(msg, _line_of(text, key), key)

    if not isinstance(cfg, dict):
        raise ConfigError("configuration must be a JSON object", 1)
    for key in cfg:
        if key not in KNOWN_KEYS:
            fail(f"unknown key {key!r}", key)
    try:
        H = HurstParameter(float(cfg.get("hurst", 0.75)))
    except ValueError as e:
        fail(str(e), "hurst")
    qm = cfg.get("q_modes", {"eigenvalues": [1.0]})
    try:
        if isinstance(qm, dict) and "eigenvalues" in qm:
            Q = TraceClassCovariance(np.asarray(qm["eigenvalues"], dtype=float))
        elif isinstance(qm, dict):
            base = TraceClassCovariance.power_law(int(qm.get("n", 1)), float(qm.get("decay", 2.0)))
            Q = TraceClassCovariance(float(qm.get("scale", 1.0)) * base.eigenvalues)
        else:
            Q = TraceClassCovariance(np.ones(int(qm)))
    except (ValueError, TypeError) as e:
        fail(f"q_modes: {e}", "q_modes")
    N = int(cfg.get("galerkin_dim", 16))
    if N < 1:
        fail("galerkin_dim must be >= 1", "galerkin_dim")
    try:
        space = GalerkinSpace(N, int(cfg.get("n_w", 0)))
    except ValueError as e:
        fail(str(e), "n_w")
    beta = float(cfg.get("beta", 1.0))
    if beta <= 0:
        fail("beta must be positive", "beta")
    delta = float(cfg.get("delta", 1.0 / 128))
    n = int(round(beta / delta))
    if n < 1 or abs(n * delta - beta) > 1e-9 * beta:
        fail("delta must divide beta", "delta")
    times = np.linspace(0.0, beta, n + 1)
    imp = cfg.get("impulses", [])
    try:
        r = [float(d["r"]) for d in imp]
        t = [float(d["t"]) for d in imp]
    except (KeyError, TypeError):
        fail("each impulse needs numeric 'r' and 't'", "impulses")
    try:
        schedule = ImpulseSchedule(tuple(r), tuple(t), beta, float(cfg.get("t0", 0.0)))
    except ScheduleError as e:
        fail(str(e), "impulses")
    for x in [*r, *t]:
        if abs(x / delta - round(x / delta)) > 1e-6:
            fail(f"impulse breakpoint {x} is not a multiple of delta = {delta}", "impulses")
    try:
        weight = make_weight(cfg.get("weight", {"kind": "exponential", "rate": 2.0}))
    except ValueError as e:
        fail(str(e), "weight")
    sig = cfg.get("sigma", {"w1": [0, 0, 0], "w2": [0, 0, 0]})
    try:
        sigma = QuadraticMin.from_coeffs(sig["w1"], sig["w2"])
    except (KeyError, TypeError, ValueError) as e:
        fail(f"sigma: {e}", "sigma")
    try:
        tail = make_tail(cfg.get("eta"), N)
        xi = _pad(cfg.get("xi"), N)
    except (ValueError, KeyError) as e:
        fail(str(e), "eta")
    kcfg = cfg.get("kernels", {})
    try:
        kernels = {
            "u": make_kernel(kcfg.get("u")),
            "mu": _per_impulse(kcfg.get("mu"), schedule.M, "mu"),
            "mu_tilde": _per_impulse(kcfg.get("mu_tilde"), schedule.M, "mu_tilde"),
        }
        b_tilde = float(kcfg.get("b_tilde", 0.0))
    except ConfigError as e:
        fail(str(e), e.key or "kernels")
    except ValueError as e:
        fail(str(e), "kernels")
    drift = cfg.get("drift", "spatial")
    try:
        gen = assemble_generator(space, make_v(cfg.get("v")), drift)
    except (ValueError, AttributeError) as e:
        fail(str(e), "v" if "v" in cfg else "drift")
    checks = cfg.get("checks", list(KNOWN_CHECKS))
    for c in checks:
        if c not in KNOWN_CHECKS:
            fail(f"unknown check {c!r}; known: {', '.join(KNOWN_CHECKS)}", "checks")
    selection = cfg.get("selection", "minimal-norm")
    if selection != "minimal-norm":
        fail("only the minimal-norm selection is available in the solver", "selection")
    return ProblemSpec(
        config=copy.deepcopy(cfg), H=H, Q=Q, space=space, gen=gen, schedule=schedule, weight=weight,
        sigma=sigma, tail=tail, xi=xi, beta=beta, delta=delta, times=times, kernels=kernels,
        b_tilde=b_tilde, seed=int(cfg.get("seed", 0)), max_iter=int(cfg.get("max_iter", 60)),
        abs_tol=float(cfg.get("abs_tol", 1e-10)), ode_h=float(cfg.get("ode_h", 1e-3)),
        n_paths=int(cfg.get("n_paths", 2000)), checks=list(checks), selection=selection)


def _coerce(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


ALIASES = {"H": "hurst", "M": "n_impulses", "N": "galerkin_dim"}


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``key=value`` strings; dotted keys reach into nested objects.

    ``M=0`` (or ``n_impulses=k``) keeps only the first k impulses.
    """
    cfg = copy.deepcopy(cfg)
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, value = item.split("=", 1)
        key = ALIASES.get(key.strip(), key.strip())
        val = _coerce(value.strip())
        if key == "n_impulses":
            k = int(val)
            cfg["impulses"] = cfg.get("impulses", [])[:k]
            for name in ("mu", "mu_tilde"):
                if isinstance(cfg.get("kernels", {}).get(name), list):
                    cfg["kernels"][name] = cfg["kernels"][name][:k]
            continue
        node = cfg
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = val
    return cfg

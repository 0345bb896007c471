"""Saddlepoint tail probabilities with the Barndorff-Nielsen correction.

Conditional backends work on the per-pair scale: with K the averaged CGF,
W = sign(t) sqrt(-2 K(t, u)), Psi = W / (t sqrt(K20)), W+ = W - log(Psi)/(m W)
and the tail is Phi-bar(sqrt(m) W+). The unconditional Gaussian CGF is on
the total scale, which is the same recipe with m = 1.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np

from .ar1 import ErrorDistribution, OddConditioning, TailEstimate, simulate_paths
from .cgf import (
    GaussianConditionalCgf,
    GaussianUnconditionalCgf,
    GeneralConditionalCgf,
    ar1_quadratic_forms,
    compute_u0,
)
from .errors import InvalidArgument, NoRootError, SaddleError
from .numerics import RootBracket, normal_upper_tail, solve_increasing
from .streams import chunk_sizes, parallel_map, stream

__all__ = [
    "SaddleResult",
    "Ar1Model",
    "SMALL_R",
    "bn_tail",
    "conditional_tail",
    "gaussian_unconditional_tail",
    "expected_conditional_tail",
    "expected_conditional_tails",
    "critical_value",
]

# below this |sqrt(m) W| log(Psi)/W is replaced by its series in t_hat
SMALL_R = 1e-3
MAX_DOUBLINGS = 60
_COND_CHUNK = 2_000


@dataclass(frozen=True)
class SaddleResult:
    u: float
    u0: float
    t_hat: float
    w: float
    psi: float
    w_plus: float
    tail: float
    feasible: bool

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Ar1Model:
    n: int
    rho0: float
    dist: ErrorDistribution = ErrorDistribution()

    def __post_init__(self):
        if self.n < 3 or self.n % 2 == 0:
            raise InvalidArgument(f"n must be odd and >= 3, got {self.n}")
        if not -1.0 < self.rho0 < 1.0:
            raise InvalidArgument("|rho0| must be < 1")


def _small_r_shift(t_hat: float, k20: float, k30: float, k40: float, m: float) -> float:
    """log(v / r) / r expanded to first order in t_hat.

    With total cumulants kj = m * Kj at the saddlepoint, a = k3/(3 k2) and
    b = k4/(12 k2), the shift is (a/2 + t_hat (a^2 - b)/2) / sqrt(k2). Its
    value at t_hat = 0 is the skewness term k3 / (6 k2^1.5).
    """
    a = k30 / (3.0 * k20)
    b = k40 / (12.0 * k20)
    return (0.5 * a + 0.5 * t_hat * (a * a - b)) / math.sqrt(m * k20)


def bn_tail(t_hat: float, k: float, k20: float, m: float, higher=None) -> tuple[float, float, float, float]:
    """(W, Psi, W+, tail) from the CGF at the saddlepoint.

    ``higher`` returns (K30, K40) at ``t_hat``; it is only called when
    sqrt(m)|W| < SMALL_R, where log(Psi)/W is replaced by its expansion
    so the tail stays continuous through u0.
    """
    w = math.copysign(math.sqrt(max(-2.0 * k, 0.0)), t_hat)
    r = math.sqrt(m) * w
    if t_hat == 0.0 or abs(r) < SMALL_R:
        shift = 0.0
        if higher is not None:
            k30, k40 = higher(t_hat)
            shift = _small_r_shift(t_hat, k20, k30, k40, m)
        # Psi -> 1 as t -> 0
        return w, 1.0, w + shift / math.sqrt(m), normal_upper_tail(r + shift)
    psi = w / (t_hat * math.sqrt(k20))
    w_plus = w - math.log(psi) / (m * w)
    return w, psi, w_plus, normal_upper_tail(math.sqrt(m) * w_plus)


def _k20_differences(k20_at, t: float, lower: float, h: float) -> tuple[float, float]:
    """K30 and K40 at t from finite differences of K20."""
    if t - h > lower:
        lo, mid, hi = k20_at(t - h), k20_at(t), k20_at(t + h)
        return (hi - lo) / (2.0 * h), (hi - 2.0 * mid + lo) / (h * h)
    f0, f1, f2 = k20_at(t), k20_at(t + h), k20_at(t + 2.0 * h)
    return (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h), (f0 - 2.0 * f1 + f2) / (h * h)


class _Memo:
    """Caches CGF evaluations so K10 and K20 share one call per t."""

    def __init__(self, fn):
        self.fn = fn
        self.t = None
        self.value = None

    def __call__(self, t):
        if t != self.t:
            self.t, self.value = t, self.fn(t)
        return self.value


def _bracket_above(k10, start: float, diag: dict) -> tuple[float, float]:
    lo, hi = 0.0, start
    for _ in range(MAX_DOUBLINGS):
        if k10(hi) > 0.0:
            return lo, hi
        lo, hi = hi, 2.0 * hi
    raise SaddleError("no sign change of K10 after doubling", bracket=(0.0, hi), **diag)


def _bracket_below(k10, lower: float, diag: dict) -> tuple[float, float]:
    if lower == 0.0:
        raise SaddleError("negative saddlepoint needed but t < 0 is outside the CGF domain", **diag)
    if math.isinf(lower):
        lo, hi = -1.0, 0.0
        for _ in range(MAX_DOUBLINGS):
            if k10(lo) < 0.0:
                return lo, hi
            lo, hi = 2.0 * lo, lo
    else:
        hi = 0.0
        for j in range(1, MAX_DOUBLINGS + 1):
            lo = lower * (1.0 - 0.5**j)
            if k10(lo) < 0.0:
                return lo, hi
            hi = lo
    raise SaddleError("no sign change of K10 below zero", bracket=(lower, 0.0), **diag)


def _solve(evaluate, bracket_fn, k10_0: float, diag: dict) -> float:
    memo = _Memo(evaluate)

    def k10(t):
        e = memo(t)
        return e.k10 if e.feasible else (math.inf if t > 0 else -math.inf)

    lo, hi = bracket_fn(k10)
    tol = 1e-11 * (1.0 + abs(k10_0))
    try:
        return solve_increasing(k10, RootBracket(lo, hi), tol=tol, fprime=lambda t: memo(t).k20)
    except NoRootError as exc:
        raise SaddleError(str(exc), bracket=(lo, hi), **diag) from exc


def conditional_tail(cgf, u: float, m: int | None = None) -> SaddleResult:
    """P(R > u | odd observations) for any conditional backend."""
    if not u > 0:
        raise InvalidArgument("conditional tails need u > 0")
    m = cgf.m if m is None else int(m)
    u0 = compute_u0(cgf).u0
    if not cgf.gap(u) > 0.0:
        return SaddleResult(u, u0, math.nan, math.nan, math.nan, math.nan, 0.0, False)

    e0 = cgf.evaluate(0.0, u)
    diag = {"u": u, "u0": u0}
    if e0.k10 == 0.0:
        t_hat = 0.0
    elif e0.k10 < 0.0:
        b_bar = cgf.conditioning.b_bar if getattr(cgf, "conditioning", None) is not None else cgf.b_bar
        start = 1.0 / (4.0 * u * b_bar + 1e-12)
        t_hat = _solve(lambda t: cgf.evaluate(t, u), lambda f: _bracket_above(f, start, diag), e0.k10, diag)
    else:
        lower = cgf.t_lower(u)
        t_hat = _solve(lambda t: cgf.evaluate(t, u), lambda f: _bracket_below(f, lower, diag), e0.k10, diag)

    e = cgf.evaluate(t_hat, u)
    if not e.feasible:
        raise SaddleError("CGF not finite at the saddlepoint", t_hat=t_hat, **diag)
    lower = cgf.t_lower(u)
    h = 1e-3 if math.isinf(lower) or lower == 0.0 else 1e-3 * min(1.0, abs(lower))

    def higher(t):
        return _k20_differences(lambda s: cgf.evaluate(s, u).k20, t, lower, h)

    w, psi, w_plus, tail = bn_tail(t_hat, e.k, e.k20, m, higher)
    return SaddleResult(u, u0, t_hat, w, psi, w_plus, tail, True)


def _unconditional_u0(n: int, rho: float) -> float:
    a, b = ar1_quadratic_forms(n)
    lags = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    sigma = rho**lags
    return float(np.sum(a * sigma) / np.sum(b * sigma))


def gaussian_unconditional_tail(n: int, rho: float, u: float) -> SaddleResult:
    """P(R > u) for Gaussian AR(1) errors from the exact eigenvalue CGF."""
    if not -1.0 < u < 1.0:
        raise InvalidArgument("u must lie in (-1, 1)")
    cgf = GaussianUnconditionalCgf(n, rho, u)
    u0 = _unconditional_u0(n, rho)
    lam = cgf.lambdas
    if lam[-1] <= 0.0:
        return SaddleResult(u, u0, math.nan, math.nan, math.nan, math.nan, 0.0, False)
    if lam[0] >= 0.0:
        return SaddleResult(u, u0, math.nan, math.nan, math.nan, math.nan, 1.0, True)

    lo_dom, hi_dom = cgf.t_domain
    k10_0 = float(np.sum(lam))
    if abs(k10_0) <= 64 * np.finfo(float).eps * float(np.sum(np.abs(lam))):
        k10_0 = 0.0  # symmetric spectrum, e.g. rho = u = 0
    diag = {"u": u, "u0": u0, "domain": (lo_dom, hi_dom)}

    def bracket(k10):
        if k10_0 < 0.0:
            lo = 0.0
            for j in range(1, MAX_DOUBLINGS + 1):
                hi = hi_dom * (1.0 - 0.5**j)
                if k10(hi) > 0.0:
                    return lo, hi
                lo = hi
        else:
            hi = 0.0
            for j in range(1, MAX_DOUBLINGS + 1):
                lo = lo_dom * (1.0 - 0.5**j)
                if k10(lo) < 0.0:
                    return lo, hi
                hi = lo
        raise SaddleError("saddlepoint at the CGF domain boundary", **diag)

    t_hat = 0.0 if k10_0 == 0.0 else _solve(cgf.evaluate, bracket, k10_0, diag)
    e = cgf.evaluate(t_hat)
    w, psi, w_plus, tail = bn_tail(t_hat, e.k, e.k20, 1, lambda t: (cgf.k30(t), cgf.k40(t)))
    return SaddleResult(u, u0, t_hat, w, psi, w_plus, tail, True)


def _conditional_backend(cond: OddConditioning, model: Ar1Model, backend: str):
    if backend == "gaussian":
        return GaussianConditionalCgf.from_conditioning(cond, model.rho0)
    if backend == "general":
        return GeneralConditionalCgf(cond, model.dist, model.rho0)
    raise InvalidArgument(f"unknown conditional backend {backend!r}")


def _expected_chunk(task):
    model, us, backend, size, seed, key = task
    paths = simulate_paths(model.n, model.rho0, model.dist, size, stream(seed, key))
    total = np.zeros(len(us))
    total_sq = np.zeros(len(us))
    failures = np.zeros(len(us), dtype=np.int64)
    for path in paths:
        cgf = _conditional_backend(OddConditioning.from_odd(path[0::2]), model, backend)
        for j, u in enumerate(us):
            try:
                p = conditional_tail(cgf, u).tail
            except SaddleError:
                failures[j] += 1
                continue
            total[j] += p
            total_sq[j] += p * p
    return total, total_sq, failures


def expected_conditional_tails(
    model: Ar1Model,
    us: Sequence[float],
    backend: str = "gaussian",
    n_cond: int = 100_000,
    seed: int = 0,
    workers: int = 1,
    max_failure_rate: float = 1e-3,
) -> list[TailEstimate]:
    """E[P(R > u | C)] over simulated conditioning sets, one estimate per u.

    The same conditioning draws are shared by every u. Infeasible draws
    contribute zero. Replicates whose saddlepoint fails are left out of the
    average and counted; more than ``max_failure_rate`` of them is an error.
    """
    us = [float(u) for u in us]
    if n_cond < 1:
        raise InvalidArgument("n_cond must be at least 1")
    tasks = [(model, us, backend, size, seed, j) for j, size in enumerate(chunk_sizes(n_cond, _COND_CHUNK))]
    parts = parallel_map(_expected_chunk, tasks, workers)
    total = sum(p[0] for p in parts)
    total_sq = sum(p[1] for p in parts)
    failures = sum(p[2] for p in parts)
    out = []
    for j, u in enumerate(us):
        if failures[j] > max_failure_rate * n_cond:
            raise SaddleError(f"{failures[j]} of {n_cond} saddlepoint solves failed", u=u)
        used = n_cond - int(failures[j])
        mean = total[j] / used
        var = max(total_sq[j] / used - mean * mean, 0.0)
        se = math.sqrt(var / used)
        out.append(TailEstimate(float(min(max(mean, 0.0), 1.0)), used, se, seed, {"failures": int(failures[j]), "u": u}))
    return out


def expected_conditional_tail(model: Ar1Model, u: float, backend: str = "gaussian", n_cond: int = 100_000,
                              seed: int = 0, workers: int = 1) -> TailEstimate:
    return expected_conditional_tails(model, [u], backend, n_cond, seed, workers)[0]


def critical_value(
    tail_fn: Callable[[float], float],
    level: float,
    lower: float,
    upper: float,
    grid: int = 21,
    xtol: float = 1e-9,
) -> float:
    """u* with tail_fn(u*) = level for a nonincreasing tail function.

    A grid scan over [lower, upper] locates the first crossing; bisection
    then narrows it to ``xtol``. Raises :class:`NoRootError` if the level is
    not attained on the interval.
    """
    if not 0.0 < level < 1.0:
        raise InvalidArgument("level must lie in (0, 1)")
    if not upper > lower:
        raise InvalidArgument("need lower < upper")
    pts = np.linspace(lower, upper, grid)
    vals = [tail_fn(float(p)) for p in pts]
    for a, b, fa, fb in zip(pts[:-1], pts[1:], vals[:-1], vals[1:]):
        if fb > fa + 1e-12:
            raise InvalidArgument(f"tail function increases between {a} and {b}")
    if not vals[0] >= level >= vals[-1]:
        raise NoRootError(f"level {level} outside achieved range [{vals[-1]}, {vals[0]}]")
    j = next(i for i in range(1, grid) if vals[i] <= level)
    return solve_increasing(lambda x: level - tail_fn(x), RootBracket(float(pts[j - 1]), float(pts[j])),
                            tol=0.0, xtol=xtol)

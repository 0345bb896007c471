"""Residual bootstraps for testing rho = rho0 with the serial correlation.

Three schemes:

* unconditional: resample standardised residuals, rebuild whole series;
* smoothed: as above with Gaussian kernel noise of width tau, evaluated
  conditionally on each resampled series' odd observations (Monte Carlo
  and saddlepoint);
* conditional: keep the observed odd values fixed and redraw the even
  ones from the kernel mixture built on the raw residuals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .ar1 import (
    Ar1Series,
    ErrorDistribution,
    TailEstimate,
    compute_residuals,
    condition_decompose,
    conditional_r,
    serial_correlation_batch,
    simulate_paths,
)
from .cgf import GaussianConditionalCgf, GeneralConditionalCgf, MixtureConditionalCgf
from .errors import InvalidArgument, SaddleError
from .saddlepoint import Ar1Model, conditional_tail
from .streams import chunk_sizes, parallel_map, stream

__all__ = [
    "SCHEMES",
    "BootstrapConfig",
    "residual_paths",
    "unconditional_bootstrap_tails",
    "unconditional_bootstrap_tail",
    "smoothed_bootstrap_tails",
    "smoothed_bootstrap_tail",
    "conditional_bootstrap_tails",
    "conditional_bootstrap_tail",
    "simulated_tails",
    "conditional_mixture",
    "ProbeResult",
    "relative_error_probe",
]

SCHEMES = ("unconditional", "smoothed", "conditional")

# stream keys, kept distinct so schemes never share random numbers
_KEY_UNCOND, _KEY_SMOOTH, _KEY_COND, _KEY_SIM = 1, 2, 3, 4


@dataclass(frozen=True)
class BootstrapConfig:
    """Settings shared by the bootstrap schemes.

    ``tau=None`` means 1/m, fixed once the series length is known.
    ``n_cond`` is the number of outer draws for the smoothed scheme.
    """

    rho0: float
    replicates: int = 10_000
    tau: float | None = None
    seed: int = 0
    scheme: str = "unconditional"
    n_cond: int = 500
    workers: int = 1

    def __post_init__(self):
        if not -1.0 < self.rho0 < 1.0:
            raise InvalidArgument("|rho0| must be < 1")
        if self.replicates < 1 or self.n_cond < 1:
            raise InvalidArgument("replicate counts must be at least 1")
        if self.tau is not None and not self.tau > 0:
            raise InvalidArgument("tau must be positive")
        if self.scheme not in SCHEMES:
            raise InvalidArgument(f"unknown scheme {self.scheme!r}")

    def bandwidth(self, m: int) -> float:
        return 1.0 / m if self.tau is None else float(self.tau)


def _series(series) -> Ar1Series:
    return series if isinstance(series, Ar1Series) else Ar1Series(np.asarray(series, dtype=float))


def _check_scheme(cfg: BootstrapConfig, scheme: str):
    if cfg.scheme != scheme:
        raise InvalidArgument(f"config is for the {cfg.scheme} scheme, not {scheme}")


def residual_paths(eps: np.ndarray, rho0: float) -> np.ndarray:
    """Rows of AR(1) paths driven by the rows of ``eps``; the first value
    is eps_1 / sqrt(1 - rho0^2)."""
    x = np.empty_like(eps)
    x[:, 0] = eps[:, 0] / math.sqrt(1.0 - rho0 * rho0)
    for i in range(1, eps.shape[1]):
        x[:, i] = rho0 * x[:, i - 1] + eps[:, i]
    return x


def _tally(r: np.ndarray, us: np.ndarray) -> np.ndarray:
    return np.sum(r[:, None] > us[None, :], axis=0)


def _estimates(hits: np.ndarray, reps: int, seed, us, **extra) -> list[TailEstimate]:
    return [TailEstimate.from_counts(int(h), reps, seed, u=float(u), **extra) for h, u in zip(hits, us)]


# ---------------------------------------------------------------------------
# Unconditional residual bootstrap


def _uncond_chunk(task):
    pool, rho0, n, size, seed, key, us = task
    rng = stream(seed, _KEY_UNCOND, key)
    eps = pool[rng.integers(0, len(pool), (size, n))]
    return _tally(serial_correlation_batch(residual_paths(eps, rho0)), us)


def unconditional_bootstrap_tails(series, cfg: BootstrapConfig, us: Sequence[float]) -> list[TailEstimate]:
    """P*(R* > u) for each u from one set of resampled series."""
    _check_scheme(cfg, "unconditional")
    series = _series(series)
    res = compute_residuals(series, cfg.rho0)
    us = np.asarray(us, dtype=float)
    tasks = [(res.standardized, cfg.rho0, series.n, size, cfg.seed, j, us)
             for j, size in enumerate(chunk_sizes(cfg.replicates))]
    hits = sum(parallel_map(_uncond_chunk, tasks, cfg.workers))
    return _estimates(hits, cfg.replicates, cfg.seed, us, scheme="unconditional")


def unconditional_bootstrap_tail(series, cfg: BootstrapConfig, u: float) -> TailEstimate:
    return unconditional_bootstrap_tails(series, cfg, [u])[0]


# ---------------------------------------------------------------------------
# Smoothed bootstrap


def _smoothed_outer(task):
    """One smoothed series: inner Monte Carlo and saddlepoint tails."""
    res, n, tau, reps, seed, j, us, methods = task
    rng = stream(seed, _KEY_SMOOTH, j)
    pool = res.standardized
    eps = pool[rng.integers(0, len(pool), n)] + tau * rng.standard_normal(n)
    x = residual_paths(eps[None, :], res.rho0)[0]
    cond = condition_decompose(x)
    mix = MixtureConditionalCgf(cond, pool, res.rho0, tau)
    mc = np.full(len(us), np.nan)
    sp = np.full(len(us), np.nan)
    fails = 0
    if "mc" in methods:
        hits = np.zeros(len(us))
        for k, size in enumerate(chunk_sizes(reps)):
            even = mix.sample_even(stream(seed, _KEY_SMOOTH, j, k + 1), size)
            hits += _tally(conditional_r(cond, even), us)
        mc = hits / reps
    if "sp" in methods:
        for q, u in enumerate(us):
            try:
                sp[q] = conditional_tail(mix, u).tail
            except SaddleError:
                fails += 1
    return mc, sp, fails


def _outer_summary(values: np.ndarray, seed, us, **extra) -> list[TailEstimate]:
    out = []
    for q, u in enumerate(us):
        col = values[:, q]
        col = col[np.isfinite(col)]
        mean = float(np.mean(col))
        se = float(np.std(col, ddof=1) / math.sqrt(len(col))) if len(col) > 1 else 0.0
        out.append(TailEstimate(min(max(mean, 0.0), 1.0), len(col), se, seed, dict(extra, u=float(u))))
    return out


def smoothed_bootstrap_tails(series, cfg: BootstrapConfig, us: Sequence[float],
                             n_cond: int | None = None, methods=("mc", "sp")) -> dict:
    """Smoothed bootstrap tails averaged over ``n_cond`` outer series.

    Returns ``{"mc": [...], "sp": [...]}`` (only the requested methods);
    both use the same outer draws. Standard errors are those of the
    average over outer draws.
    """
    _check_scheme(cfg, "smoothed")
    series = _series(series)
    res = compute_residuals(series, cfg.rho0)
    n_cond = cfg.n_cond if n_cond is None else int(n_cond)
    if n_cond < 1:
        raise InvalidArgument("n_cond must be at least 1")
    tau = cfg.bandwidth(series.m)
    us = np.asarray(us, dtype=float)
    if np.any(us <= 0):
        raise InvalidArgument("smoothed bootstrap tails need u > 0")
    tasks = [(res, series.n, tau, cfg.replicates, cfg.seed, j, us, tuple(methods)) for j in range(n_cond)]
    parts = parallel_map(_smoothed_outer, tasks, cfg.workers)
    out = {}
    fails = sum(p[2] for p in parts)
    if "mc" in methods:
        mc = np.array([p[0] for p in parts])
        out["mc"] = _outer_summary(mc, cfg.seed, us, scheme="smoothed-mc", inner=cfg.replicates)
        # inner binomial error only: the part not shared with the paired saddlepoint average
        inner = np.sqrt(np.mean(mc * (1.0 - mc), axis=0) / cfg.replicates / n_cond)
        for est, se in zip(out["mc"], inner):
            est.extra["inner_se"] = float(se)
    if "sp" in methods:
        if fails > 1e-3 * n_cond * len(us):
            raise SaddleError(f"{fails} smoothed-bootstrap saddlepoint solves failed")
        out["sp"] = _outer_summary(np.array([p[1] for p in parts]), cfg.seed, us, scheme="smoothed-sp",
                                   failures=fails)
    return out


def smoothed_bootstrap_tail(series, cfg: BootstrapConfig, u: float, n_cond: int | None = None,
                            method: str = "mc") -> TailEstimate:
    return smoothed_bootstrap_tails(series, cfg, [u], n_cond, (method,))[method][0]


# ---------------------------------------------------------------------------
# Conditional bootstrap


def conditional_mixture(series, cfg: BootstrapConfig) -> MixtureConditionalCgf:
    """Kernel mixture for the even observations built on raw residuals."""
    series = _series(series)
    res = compute_residuals(series, cfg.rho0)
    return MixtureConditionalCgf(condition_decompose(series), res.raw, cfg.rho0, cfg.bandwidth(series.m))


def _cond_chunk(task):
    mix, size, seed, key, us = task
    even = mix.sample_even(stream(seed, _KEY_COND, key), size)
    return _tally(conditional_r(mix.conditioning, even), us)


def conditional_bootstrap_tails(series, cfg: BootstrapConfig, us: Sequence[float]) -> dict:
    """``{"mc": [TailEstimate], "sp": [SaddleResult]}`` with the odd values held fixed."""
    _check_scheme(cfg, "conditional")
    mix = conditional_mixture(series, cfg)
    us = np.asarray(us, dtype=float)
    if np.any(us <= 0):
        raise InvalidArgument("conditional bootstrap tails need u > 0")
    tasks = [(mix, size, cfg.seed, j, us) for j, size in enumerate(chunk_sizes(cfg.replicates))]
    hits = sum(parallel_map(_cond_chunk, tasks, cfg.workers))
    mc = _estimates(hits, cfg.replicates, cfg.seed, us, scheme="conditional-mc")
    sp = [conditional_tail(mix, float(u)) for u in us]
    flagged = []
    for est, sad in zip(mc, sp):
        if not sad.feasible and est.probability > 3.0 * max(est.std_error, 1.0 / cfg.replicates):
            est.extra["discrepancy"] = "saddlepoint is infeasible but Monte Carlo tail is not zero"
            flagged.append(sad.u)
    return {"mc": mc, "sp": sp, "flagged": flagged}


def conditional_bootstrap_tail(series, cfg: BootstrapConfig, u: float) -> dict:
    out = conditional_bootstrap_tails(series, cfg, [u])
    return {"mc": out["mc"][0], "sp": out["sp"][0]}


# ---------------------------------------------------------------------------
# Direct simulation and the relative-error probe


def _sim_chunk(task):
    model, size, seed, key, us = task
    x = simulate_paths(model.n, model.rho0, model.dist, size, stream(seed, _KEY_SIM, key))
    return _tally(serial_correlation_batch(x), us)


def simulated_tails(model: Ar1Model, us: Sequence[float], sims: int = 1_000_000, seed: int = 0,
                    workers: int = 1) -> list[TailEstimate]:
    """Monte Carlo P(R > u) from ``sims`` simulated series."""
    us = np.asarray(us, dtype=float)
    tasks = [(model, size, seed, j, us) for j, size in enumerate(chunk_sizes(sims))]
    hits = sum(parallel_map(_sim_chunk, tasks, workers))
    return _estimates(hits, sims, seed, us, scheme="simulation")


@dataclass
class ProbeResult:
    rows: list  # (m, offset, mean relative error, its standard error)
    slope: float
    slope_ci: tuple[float, float]
    m_slope: float
    extra: dict = field(default_factory=dict)


def _true_conditional_sampler(cond, model: Ar1Model):
    if model.dist.kind == "normal":
        return GaussianConditionalCgf.from_conditioning(cond, model.rho0)
    return GeneralConditionalCgf(cond, model.dist, model.rho0)


def relative_error_probe(
    dist: ErrorDistribution,
    rho0: float,
    offsets: Sequence[float],
    ms: Sequence[int] = (19, 49),
    samples: int = 20,
    replicates: int = 20_000,
    truth_sims: int = 1_000_000,
    seed: int = 0,
    workers: int = 1,
    scheme: str = "unconditional",
) -> ProbeResult:
    """Empirical relative error of a bootstrap tail.

    For each m, ``samples`` original series are drawn. The unconditional
    scheme compares P*(R* > u) with a large simulation of P(R > u); the
    conditional scheme compares P#(R# > u | C) with a Monte Carlo of the
    true conditional law given the same odd observations. Mean relative
    errors are regressed as log err = a + b log(offset) + c log(m) and
    ``b`` is reported with a 95% interval. Nothing is asserted about it.
    """
    if scheme not in ("unconditional", "conditional"):
        raise InvalidArgument("the probe supports the unconditional and conditional schemes")
    offsets = np.asarray(offsets, dtype=float)
    if np.any(offsets <= 0):
        raise InvalidArgument("offsets must be positive")
    us = rho0 + offsets
    rows = []
    for m in ms:
        model = Ar1Model(2 * m + 1, rho0, dist)
        if scheme == "unconditional":
            truth = np.array([e.probability for e in simulated_tails(model, us, truth_sims, seed, workers)])
        rel = []
        for s in range(samples):
            x = simulate_paths(model.n, rho0, dist, 1, stream(seed, 9, m, s))[0]
            if scheme == "unconditional":
                cfg = BootstrapConfig(rho0, replicates, seed=seed + s + 1, workers=workers)
                boot = np.array([e.probability for e in unconditional_bootstrap_tails(x, cfg, us)])
            else:
                cond = condition_decompose(x)
                sampler = _true_conditional_sampler(cond, model)
                hits = np.zeros(len(us))
                for k, size in enumerate(chunk_sizes(truth_sims)):
                    hits += _tally(conditional_r(cond, sampler.sample_even(stream(seed, 10, m, s, k), size)), us)
                truth = hits / truth_sims
                cfg = BootstrapConfig(rho0, replicates, seed=seed + s + 1, scheme="conditional", workers=workers)
                boot = np.array([e.probability for e in conditional_bootstrap_tails(x, cfg, us)["mc"]])
            with np.errstate(divide="ignore", invalid="ignore"):
                rel.append(np.abs(boot - truth) / truth)
        rel = np.array(rel)
        for q, off in enumerate(offsets):
            col = rel[:, q][np.isfinite(rel[:, q])]
            if len(col) > 1:
                rows.append((m, float(off), float(col.mean()), float(col.std(ddof=1) / math.sqrt(len(col)))))
    data = np.array(rows)
    design = np.column_stack([np.ones(len(data)), np.log(data[:, 1]), np.log(data[:, 0])])
    if len(set(data[:, 0])) < 2:
        design = design[:, :2]
    y = np.log(data[:, 2])
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    dof = max(len(y) - design.shape[1], 1)
    cov = (resid @ resid / dof) * np.linalg.inv(design.T @ design)
    half = 1.96 * math.sqrt(cov[1, 1])
    m_slope = float(coef[2]) if design.shape[1] > 2 else math.nan
    return ProbeResult(rows, float(coef[1]), (float(coef[1] - half), float(coef[1] + half)), m_slope,
                       {"scheme": scheme, "samples": samples, "replicates": replicates, "truth_sims": truth_sims})

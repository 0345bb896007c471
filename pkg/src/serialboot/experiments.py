"""Reproduction protocols for the tail-area tables and power studies.

Each ``cmd_*`` function takes a :class:`RunConfig` and returns a
:class:`ResultTable`; the command-line front end only parses options and
writes the table out.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from . import __version__
from .ar1 import (
    Ar1Series,
    ErrorDistribution,
    TailEstimate,
    condition_decompose,
    conditional_r,
    serial_correlation,
    serial_correlation_batch,
    simulate_ar1,
    simulate_paths,
)
from .bootstrap import (
    BootstrapConfig,
    conditional_bootstrap_tails,
    relative_error_probe,
    simulated_tails,
    smoothed_bootstrap_tails,
    unconditional_bootstrap_tails,
)
from .cgf import GaussianConditionalCgf, GeneralConditionalCgf
from .errors import InvalidArgument, NoRootError, SaddleError
from .saddlepoint import (
    Ar1Model,
    conditional_tail,
    critical_value,
    expected_conditional_tails,
    gaussian_unconditional_tail,
)
from .streams import chunk_sizes, parallel_map, stream

__all__ = [
    "DEFAULT_OFFSETS",
    "COMMANDS",
    "RunConfig",
    "Cell",
    "Row",
    "ResultTable",
    "conditional_simulation_tails",
    "power_study",
    "cmd_table1",
    "cmd_table2",
    "cmd_table3",
    "cmd_table4",
    "cmd_power",
    "cmd_tail",
    "cmd_simulate",
    "cmd_probe_relerr",
    "run",
]

DEFAULT_OFFSETS = (0.05, 0.10, 0.15, 0.20, 0.25)
COMMANDS = ("table1", "table2", "table3", "table4", "power", "tail", "simulate", "probe-relerr")

# fixed per-command seeds so published runs repeat exactly
DEFAULT_SEEDS = {
    "table1": 1001,
    "table2": 1002,
    "table3": 1003,
    "table4": 1004,
    "power": 1005,
    "tail": 1006,
    "simulate": 1007,
    "probe-relerr": 1008,
}

TAIL_METHODS = (
    "gaussian-unconditional",
    "gaussian-conditional",
    "general-conditional",
    "expected-conditional",
    "simulation",
    "unconditional-bootstrap",
    "smoothed-bootstrap",
    "conditional-bootstrap",
)


@dataclass(frozen=True)
class RunConfig:
    """Options for one command. ``None`` budgets mean the command default."""

    command: str
    n: int = 39
    rho0: float = 0.5
    rho1: float | None = None
    dist: str = "normal"
    u: float | None = None
    offsets: tuple = DEFAULT_OFFSETS
    level: float = 0.05
    sims: int | None = None
    boot: int | None = None
    ncond: int | None = None
    tau: float | None = None
    seed: int | None = None
    threads: int = 1
    out: str | None = None
    format: str = "json"
    method: str = "gaussian-unconditional"
    series: str | None = None
    samples: int | None = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise InvalidArgument(f"unknown command {self.command!r}")
        object.__setattr__(self, "offsets", tuple(float(o) for o in self.offsets))
        for name in ("sims", "boot", "ncond", "samples"):
            v = getattr(self, name)
            if v is not None and int(v) < 1:
                raise InvalidArgument(f"{name} must be at least 1")
        if any(o <= 0 for o in self.offsets):
            raise InvalidArgument("offsets must be positive")
        if not 0.0 < self.level < 1.0:
            raise InvalidArgument("level must lie in (0, 1)")
        if not -1.0 < self.rho0 < 1.0:
            raise InvalidArgument("|rho0| must be < 1")
        if self.rho1 is not None and not -1.0 < self.rho1 < 1.0:
            raise InvalidArgument("|rho1| must be < 1")
        if self.tau is not None and not self.tau > 0:
            raise InvalidArgument("tau must be positive")
        if self.threads < 1:
            raise InvalidArgument("threads must be at least 1")
        if self.format not in ("csv", "json"):
            raise InvalidArgument("format must be csv or json")
        if self.method not in TAIL_METHODS:
            raise InvalidArgument(f"unknown tail method {self.method!r}")
        ErrorDistribution.from_name(self.dist)

    @property
    def error_dist(self) -> ErrorDistribution:
        return ErrorDistribution.from_name(self.dist)

    @property
    def run_seed(self) -> int:
        return DEFAULT_SEEDS[self.command] if self.seed is None else int(self.seed)

    def budget(self, name: str, default: int) -> int:
        v = getattr(self, name)
        return default if v is None else int(v)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["offsets"] = list(self.offsets)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise InvalidArgument(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "offsets" in d:
            d["offsets"] = tuple(d["offsets"])
        return cls(**d)


@dataclass
class Cell:
    u: float
    value: float
    se: float | None = None


@dataclass
class Row:
    method: str
    cells: list


@dataclass
class ResultTable:
    """Rows of tail probabilities (or powers) against a shared column grid.

    ``columns`` label the cells (u offsets, or rho1 offsets for power
    tables); each cell also carries its absolute coordinate ``u``.
    """

    title: str
    columns: list
    rows: list
    config: dict
    provenance: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    failures: list = field(default_factory=list)

    def add(self, method: str, us: Sequence[float], values: Sequence[float], ses=None):
        ses = [None] * len(values) if ses is None else ses
        self.rows.append(Row(method, [Cell(float(u), float(v), None if s is None else float(s))
                                      for u, v, s in zip(us, values, ses)]))

    def row(self, method: str) -> Row:
        for r in self.rows:
            if r.method == method:
                return r
        raise KeyError(method)

    def values(self, method: str) -> list[float]:
        return [c.value for c in self.row(method).cells]

    # -- JSON -------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "title": self.title,
            "columns": list(self.columns),
            "config": self.config,
            "rows": [{"method": r.method, "cells": [asdict(c) for c in r.cells]} for r in self.rows],
            "provenance": self.provenance,
            "warnings": list(self.warnings),
            "failures": list(self.failures),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "ResultTable":
        rows = [Row(r["method"], [Cell(**c) for c in r["cells"]]) for r in d["rows"]]
        return cls(d["title"], list(d["columns"]), rows, d["config"], d.get("provenance", {}),
                   list(d.get("warnings", [])), list(d.get("failures", [])))

    @classmethod
    def from_json(cls, text: str) -> "ResultTable":
        return cls.from_dict(json.loads(text))

    # -- CSV --------------------------------------------------------------
    # Metadata goes in leading "# key: json" lines, then a header of the
    # column labels with "_se" companions, then one line per method. The
    # absolute coordinate of each cell is kept in a "# u:" line per row.

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key in ("title", "config", "provenance", "warnings", "failures"):
            buf.write(f"# {key}: {json.dumps(getattr(self, key))}\n")
        buf.write(f"# columns: {json.dumps(list(self.columns))}\n")
        writer = csv.writer(buf, lineterminator="\n")
        header = ["method"]
        for c in self.columns:
            header += [repr(float(c)), f"{float(c)!r}_se"]
        writer.writerow(header)
        for r in self.rows:
            buf.write(f"# u: {json.dumps([c.u for c in r.cells])}\n")
            line = [r.method]
            for c in r.cells:
                line += [repr(c.value), "" if c.se is None else repr(c.se)]
            writer.writerow(line)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ResultTable":
        meta = {}
        rows = []
        pending_u = None
        body = []
        for line in text.splitlines():
            if line.startswith("# "):
                key, _, value = line[2:].partition(": ")
                if key == "u":
                    pending_u = json.loads(value)
                    body.append(("u", pending_u))
                else:
                    meta[key] = json.loads(value)
            elif line:
                body.append(("row", line))
        header_seen = False
        us = None
        for kind, item in body:
            if kind == "u":
                us = item
                continue
            fields_ = next(csv.reader([item]))
            if not header_seen:
                header_seen = True
                continue
            method, rest = fields_[0], fields_[1:]
            cells = []
            for j in range(0, len(rest), 2):
                se = None if rest[j + 1] == "" else float(rest[j + 1])
                cells.append(Cell(float(us[j // 2]), float(rest[j]), se))
            rows.append(Row(method, cells))
        return cls(meta["title"], meta["columns"], rows, meta["config"], meta["provenance"],
                   meta["warnings"], meta["failures"])

    def dumps(self, fmt: str) -> str:
        return self.to_json() if fmt == "json" else self.to_csv()


def _content_hash(payload) -> str:
    text = json.dumps(payload, sort_keys=True)
    return hashlib.sha256(text.encode()).hexdigest()


def _new_table(title: str, cfg: RunConfig, columns, **extra) -> ResultTable:
    config = cfg.to_dict()
    prov = {
        "command": cfg.command,
        "seed": cfg.run_seed,
        "package_version": __version__,
        "numpy_version": np.__version__,
        "input_hash": _content_hash(config),
    }
    prov.update(extra)
    return ResultTable(title, [float(c) for c in columns], [], config, prov)


def _check_precision(table: ResultTable, label: str, estimates: Sequence[TailEstimate], rel: float = 0.1):
    """Warn (inside the table) when a Monte Carlo SE exceeds ``rel`` of its value."""
    for e in estimates:
        if e.probability > 0 and e.std_error > rel * e.probability:
            table.warnings.append(f"{label}: SE {e.std_error:.2g} exceeds {rel:.0%} of {e.probability:.4g} "
                                  f"at u={e.extra.get('u')}; increase the budget")


def _read_series(path: str) -> Ar1Series:
    with open(path) as fh:
        values = [float(line) for line in fh if line.strip() and not line.lstrip().startswith("#")]
    return Ar1Series(np.array(values))


# ---------------------------------------------------------------------------
# Protocol pieces


def _cond_sim_chunk(task):
    model, n_outer, inner, seed, key, us = task
    rng = stream(seed, 20, key)
    paths = simulate_paths(model.n, model.rho0, model.dist, n_outer, rng)
    out = np.zeros((n_outer, len(us)))
    for j, path in enumerate(paths):
        cond = condition_decompose(path)
        if model.dist.kind == "normal":
            sampler = GaussianConditionalCgf.from_conditioning(cond, model.rho0)
        else:
            sampler = GeneralConditionalCgf(cond, model.dist, model.rho0)
        even = sampler.sample_even(rng, inner)
        r = conditional_r(cond, even)
        out[j] = np.mean(r[:, None] > us[None, :], axis=0)
    return out


def conditional_simulation_tails(model: Ar1Model, us: Sequence[float], n_outer: int = 1000,
                                 inner: int = 1000, seed: int = 0, workers: int = 1) -> list[TailEstimate]:
    """Average over simulated odd observations of Monte Carlo tails of
    R given them; SE is that of the outer average."""
    us = np.asarray(us, dtype=float)
    tasks = [(model, size, inner, seed, j, us) for j, size in enumerate(chunk_sizes(n_outer, 100))]
    p = np.vstack(parallel_map(_cond_sim_chunk, tasks, workers))
    se = p.std(axis=0, ddof=1) / math.sqrt(n_outer) if n_outer > 1 else np.zeros(len(us))
    return [TailEstimate(float(p[:, q].mean()), n_outer * inner, float(se[q]), seed,
                         {"u": float(u), "outer": n_outer, "inner": inner}) for q, u in enumerate(us)]


def _conditional_cgf(cond, rho, dist: ErrorDistribution):
    if dist.kind == "normal":
        return GaussianConditionalCgf.from_conditioning(cond, rho)
    return GeneralConditionalCgf(cond, dist, rho)


def _conditional_critical(cond, rho0: float, level: float, dist: ErrorDistribution) -> float:
    cgf = _conditional_cgf(cond, rho0, dist)
    hi = cond.max_feasible_u()
    lo = min(1e-9, 0.5 * hi)
    return critical_value(lambda u: conditional_tail(cgf, u).tail, level, lo, hi)


def _power_chunk(task):
    n, rho0, rho1, level, dist, size, seed, key, u_crit = task
    paths = simulate_paths(n, rho1, dist, size, stream(seed, 30, key))
    r = serial_correlation_batch(paths)
    u_hits = int(np.sum(r > u_crit))
    c_hits, c_sp, fails = 0, 0.0, 0
    for path, rr in zip(paths, r):
        cond = condition_decompose(path)
        try:
            c = _conditional_critical(cond, rho0, level, dist)
            c_sp += conditional_tail(_conditional_cgf(cond, rho1, dist), c).tail
        except (NoRootError, SaddleError):
            fails += 1
            continue
        c_hits += int(rr > c)
    return u_hits, c_hits, c_sp, fails


def power_study(n: int, rho0: float, rho1: float, level: float = 0.05, sims: int = 5000,
                dist: ErrorDistribution | None = None, seed: int = 0, workers: int = 1) -> dict:
    """Rejection rates under rho1 of the level-``level`` tests of rho = rho0.

    U: one critical value from the Gaussian unconditional saddlepoint tail.
    C: a critical value per simulated set of odd observations from the
    conditional law under rho0. Both are applied to the same simulated
    series; ``c_sp`` additionally averages the conditional saddlepoint
    probability of exceeding the critical value under rho1.
    """
    dist = dist or ErrorDistribution()
    u_crit = critical_value(lambda u: gaussian_unconditional_tail(n, rho0, u).tail, level,
                            max(rho0 - 0.5, -0.99), 0.99)
    tasks = [(n, rho0, rho1, level, dist, size, seed, j, u_crit) for j, size in enumerate(chunk_sizes(sims, 500))]
    parts = parallel_map(_power_chunk, tasks, workers)
    u_hits = sum(p[0] for p in parts)
    c_hits = sum(p[1] for p in parts)
    c_sp = sum(p[2] for p in parts)
    fails = sum(p[3] for p in parts)
    used = sims - fails
    pu, pc = u_hits / sims, c_hits / used
    return {
        "u_critical": u_crit,
        "u_power": TailEstimate(pu, sims, math.sqrt(pu * (1 - pu) / sims), seed),
        "c_power": TailEstimate(pc, used, math.sqrt(pc * (1 - pc) / used), seed, {"failures": fails}),
        "c_power_sp": c_sp / used,
        "u_power_sp": gaussian_unconditional_tail(n, rho1, u_crit).tail,
    }


# ---------------------------------------------------------------------------
# Commands


def _us(cfg: RunConfig, rho0: float | None = None) -> list[float]:
    base = cfg.rho0 if rho0 is None else rho0
    return [base + o for o in cfg.offsets]


def cmd_table1(cfg: RunConfig) -> ResultTable:
    """Gaussian saddlepoint vs simulation, unconditional and conditional, n = 39 and 9."""
    if cfg.dist != "normal":
        raise InvalidArgument("table1 is defined for normal errors")
    sims = cfg.budget("sims", 1_000_000)
    ncond = cfg.budget("ncond", 100_000)
    seed = cfg.run_seed
    inner = min(10, sims)
    table = _new_table("Saddlepoint and simulated tail areas, normal errors", cfg, cfg.offsets,
                       sims=sims, ncond=ncond, conditional_simulation=f"{sims // inner} outer x {inner} inner")
    us = _us(cfg)
    for n in (39, 9):
        model = Ar1Model(n, cfg.rho0)
        table.add(f"n={n} U saddlepoint", us, [gaussian_unconditional_tail(n, cfg.rho0, u).tail for u in us])
        sim = simulated_tails(model, us, sims, seed, cfg.threads)
        table.add(f"n={n} U simulation", us, [e.probability for e in sim], [e.std_error for e in sim])
        _check_precision(table, f"n={n} U simulation", sim)
        try:
            csp = expected_conditional_tails(model, us, "gaussian", ncond, seed, cfg.threads)
            table.add(f"n={n} C saddlepoint", us, [e.probability for e in csp], [e.std_error for e in csp])
        except SaddleError as exc:
            table.failures.append(f"n={n} C saddlepoint: {exc}")
            table.add(f"n={n} C saddlepoint", us, [math.nan] * len(us), [math.nan] * len(us))
        csim = conditional_simulation_tails(model, us, max(1, sims // inner), inner, seed, cfg.threads)
        table.add(f"n={n} C simulation", us, [e.probability for e in csim], [e.std_error for e in csim])
        _check_precision(table, f"n={n} C simulation", csim)
    return table


def _agreement(sp: Sequence[float], mc: Sequence[TailEstimate], se_key: str | None = None) -> list[float]:
    """|SP - MC| / (3 SE + 0.02 SP); values <= 1 meet the agreement rule."""
    out = []
    for s, e in zip(sp, mc):
        se = e.extra.get(se_key, e.std_error) if se_key else e.std_error
        out.append(abs(s - e.probability) / (3.0 * se + 0.02 * s) if (3.0 * se + 0.02 * s) > 0 else 0.0)
    return out


def _sample(cfg: RunConfig, dist: ErrorDistribution, key: int) -> Ar1Series:
    if cfg.series:
        return _read_series(cfg.series)
    return simulate_ar1(cfg.n, cfg.rho0, dist, stream(cfg.run_seed, 40, key))


def cmd_table2(cfg: RunConfig) -> ResultTable:
    """One sample: unconditional bootstrap, smoothed bootstrap MC and saddlepoint."""
    dist = ErrorDistribution.from_name(cfg.dist if cfg.dist != "normal" else "t10")
    boot = cfg.budget("boot", 100_000)
    ncond = cfg.budget("ncond", 500)
    inner = cfg.budget("sims", 10_000)
    x = _sample(cfg, dist, 2)
    seed = cfg.run_seed
    table = _new_table(f"Unconditional and smoothed bootstrap, one {dist.name} sample", cfg, cfg.offsets,
                       dist=dist.name, boot=boot, ncond=ncond, inner=inner, series_hash=_content_hash(list(x.x)))
    us = _us(cfg)
    bs = unconditional_bootstrap_tails(x, BootstrapConfig(cfg.rho0, boot, seed=seed, workers=cfg.threads), us)
    table.add("BS", us, [e.probability for e in bs], [e.std_error for e in bs])
    sm = smoothed_bootstrap_tails(x, BootstrapConfig(cfg.rho0, inner, cfg.tau, seed, "smoothed", ncond, cfg.threads),
                                  us)
    table.add("ECBS", us, [e.probability for e in sm["mc"]], [e.std_error for e in sm["mc"]])
    table.add("ECSP", us, [e.probability for e in sm["sp"]], [e.std_error for e in sm["sp"]])
    table.add("ECBS inner SE", us, [e.extra["inner_se"] for e in sm["mc"]])
    table.add("agreement ECSP vs ECBS", us, _agreement([e.probability for e in sm["sp"]], sm["mc"], "inner_se"))
    return table


def cmd_table3(cfg: RunConfig) -> ResultTable:
    """Means and SDs of unconditional bootstrap tails over fresh samples vs simulation."""
    samples = cfg.budget("samples", 40)
    boot = cfg.budget("boot", 100_000)
    sims = cfg.budget("sims", 1_000_000)
    seed = cfg.run_seed
    dists = [cfg.dist] if cfg.dist != "normal" else ["t10", "exp"]
    table = _new_table("Simulated tails vs mean and SD of bootstrap tails over samples", cfg, cfg.offsets,
                       samples=samples, boot=boot, sims=sims)
    us = _us(cfg)
    for d_i, name in enumerate(dists):
        dist = ErrorDistribution.from_name(name)
        model = Ar1Model(cfg.n, cfg.rho0, dist)
        sim = simulated_tails(model, us, sims, seed + d_i, cfg.threads)
        boots = []
        for s in range(samples):
            x = simulate_ar1(cfg.n, cfg.rho0, dist, stream(seed, 50, d_i, s))
            bcfg = BootstrapConfig(cfg.rho0, boot, seed=seed + 1000 * (d_i + 1) + s, workers=cfg.threads)
            boots.append([e.probability for e in unconditional_bootstrap_tails(x, bcfg, us)])
        boots = np.array(boots)
        sd = boots.std(axis=0, ddof=1) if samples > 1 else np.zeros(len(us))
        table.add(f"{dist.name} SIM", us, [e.probability for e in sim], [e.std_error for e in sim])
        table.add(f"{dist.name} EBS", us, boots.mean(axis=0), sd / math.sqrt(samples))
        table.add(f"{dist.name} SDBS", us, sd)
    return table


def cmd_table4(cfg: RunConfig) -> ResultTable:
    """One sample: conditional bootstrap MC vs mixture saddlepoint at rho0 = 0 and 0.5."""
    dist = ErrorDistribution.from_name(cfg.dist if cfg.dist != "normal" else "exp")
    boot = cfg.budget("boot", 100_000)
    seed = cfg.run_seed
    # the default rho0 runs the two-coefficient protocol; anything else runs just that one
    rhos = [0.0, 0.5] if cfg.rho0 == 0.5 and not cfg.series else [cfg.rho0]
    table = _new_table(f"Conditional bootstrap vs conditional saddlepoint, one {dist.name} sample", cfg,
                       cfg.offsets, dist=dist.name, boot=boot)
    for r_i, rho0 in enumerate(rhos):
        x = _read_series(cfg.series) if cfg.series else simulate_ar1(cfg.n, rho0, dist, stream(seed, 60, r_i))
        us = _us(cfg, rho0)
        out = conditional_bootstrap_tails(x, BootstrapConfig(rho0, boot, cfg.tau, seed, "conditional",
                                                             workers=cfg.threads), us)
        sp = [s.tail for s in out["sp"]]
        table.add(f"rho0={rho0:g} CSP", us, sp)
        table.add(f"rho0={rho0:g} CBS", us, [e.probability for e in out["mc"]], [e.std_error for e in out["mc"]])
        table.add(f"rho0={rho0:g} agreement", us, _agreement(sp, out["mc"]))
        for u in out["flagged"]:
            table.warnings.append(f"rho0={rho0:g} u={u}: saddlepoint infeasible but Monte Carlo tail is not zero")
    return table


def cmd_power(cfg: RunConfig) -> ResultTable:
    """Power of the unconditional and conditional tests at rho1 = rho0 + offset."""
    sims = cfg.budget("sims", 5000)
    dist = cfg.error_dist
    seed = cfg.run_seed
    rho0s = [cfg.rho0]
    offsets = list(cfg.offsets) if cfg.offsets != DEFAULT_OFFSETS else [0.1, 0.3, 0.5]
    if cfg.rho1 is not None:
        offsets = [cfg.rho1 - cfg.rho0]
    if any(o <= 0 for o in offsets):
        raise InvalidArgument("power studies need rho1 > rho0")
    table = _new_table(f"Power of level-{cfg.level:g} tests, {dist.name} errors", cfg, offsets,
                       sims=sims, level_assumption="one-sided level 0.05 unless --level is given")
    for rho0 in rho0s:
        rho1s = [rho0 + o for o in offsets]
        u, c, csp, usp, crit = [], [], [], [], None
        for r1 in rho1s:
            if r1 >= 1.0:
                raise InvalidArgument(f"rho1 = {r1} is not a stationary coefficient")
            res = power_study(cfg.n, rho0, r1, cfg.level, sims, dist, seed, cfg.threads)
            u.append(res["u_power"])
            c.append(res["c_power"])
            csp.append(res["c_power_sp"])
            usp.append(res["u_power_sp"])
            crit = res["u_critical"]
            if res["c_power"].extra["failures"]:
                table.warnings.append(f"rho1={r1:g}: {res['c_power'].extra['failures']} conditional critical "
                                      "values could not be found")
        table.add(f"rho0={rho0:g} U", rho1s, [e.probability for e in u], [e.std_error for e in u])
        table.add(f"rho0={rho0:g} C", rho1s, [e.probability for e in c], [e.std_error for e in c])
        table.add(f"rho0={rho0:g} U saddlepoint", rho1s, usp)
        table.add(f"rho0={rho0:g} C saddlepoint", rho1s, csp)
        table.provenance[f"rho0={rho0:g} U critical value"] = crit
    return table


def cmd_tail(cfg: RunConfig) -> dict:
    """One tail query, returned as a flat record."""
    if cfg.u is None:
        raise InvalidArgument("tail needs --u")
    u, seed, dist = float(cfg.u), cfg.run_seed, cfg.error_dist
    method = cfg.method
    record = {"method": method, "u": u}
    if method == "gaussian-unconditional":
        record.update(gaussian_unconditional_tail(cfg.n, cfg.rho0, u).to_dict())
    elif method in ("gaussian-conditional", "general-conditional"):
        x = _sample(cfg, dist, 1)
        cond = condition_decompose(x)
        cgf = (GaussianConditionalCgf.from_conditioning(cond, cfg.rho0) if method == "gaussian-conditional"
               else GeneralConditionalCgf(cond, dist, cfg.rho0))
        record.update(conditional_tail(cgf, u).to_dict())
    elif method == "expected-conditional":
        backend = "gaussian" if dist.kind == "normal" else "general"
        est = expected_conditional_tails(Ar1Model(cfg.n, cfg.rho0, dist), [u], backend,
                                         cfg.budget("ncond", 10_000), seed, cfg.threads)[0]
        record.update(tail=est.probability, se=est.std_error, replicates=est.replicates)
    elif method == "simulation":
        est = simulated_tails(Ar1Model(cfg.n, cfg.rho0, dist), [u], cfg.budget("sims", 1_000_000), seed,
                              cfg.threads)[0]
        record.update(tail=est.probability, se=est.std_error, replicates=est.replicates)
    else:
        x = _sample(cfg, dist, 1)
        scheme = method.split("-")[0]
        bcfg = BootstrapConfig(cfg.rho0, cfg.budget("boot", 100_000), cfg.tau, seed, scheme,
                               cfg.budget("ncond", 500), cfg.threads)
        if scheme == "unconditional":
            est = unconditional_bootstrap_tails(x, bcfg, [u])[0]
            record.update(tail=est.probability, se=est.std_error, replicates=est.replicates)
        elif scheme == "smoothed":
            bcfg = replace(bcfg, replicates=cfg.budget("boot", 10_000))
            out = smoothed_bootstrap_tails(x, bcfg, [u])
            record.update(tail=out["mc"][0].probability, se=out["mc"][0].std_error,
                          sp_tail=out["sp"][0].probability, sp_se=out["sp"][0].std_error)
        else:
            out = conditional_bootstrap_tails(x, bcfg, [u])
            record.update(out["sp"][0].to_dict())
            record.update(mc_tail=out["mc"][0].probability, mc_se=out["mc"][0].std_error)
    record["seed"] = seed
    return record


def cmd_simulate(cfg: RunConfig) -> dict:
    """One simulated series plus its serial correlation."""
    x = simulate_ar1(cfg.n, cfg.rho0, cfg.error_dist, stream(cfg.run_seed, 70))
    return {"n": cfg.n, "rho": cfg.rho0, "dist": cfg.dist, "seed": cfg.run_seed,
            "r": serial_correlation(x), "series": [float(v) for v in x.x]}


def cmd_probe_relerr(cfg: RunConfig) -> ResultTable:
    """Relative error of the bootstrap against the truth as the offset grows."""
    scheme = "conditional" if cfg.method == "conditional-bootstrap" else "unconditional"
    dist = ErrorDistribution.from_name(cfg.dist if cfg.dist != "normal" else "t10")
    samples = cfg.budget("samples", 20)
    boot = cfg.budget("boot", 20_000)
    sims = cfg.budget("sims", 1_000_000)
    res = relative_error_probe(dist, cfg.rho0, cfg.offsets, (19, 49), samples, boot, sims, cfg.run_seed,
                               cfg.threads, scheme)
    table = _new_table(f"Relative error of the {scheme} bootstrap, {dist.name} errors", cfg, cfg.offsets,
                       slope=res.slope, slope_ci=list(res.slope_ci), m_slope=res.m_slope, **res.extra)
    for m in sorted({r[0] for r in res.rows}):
        rows = [r for r in res.rows if r[0] == m]
        table.add(f"m={m}", [cfg.rho0 + r[1] for r in rows], [r[2] for r in rows], [r[3] for r in rows])
    return table


_DISPATCH = {
    "table1": cmd_table1,
    "table2": cmd_table2,
    "table3": cmd_table3,
    "table4": cmd_table4,
    "power": cmd_power,
    "tail": cmd_tail,
    "simulate": cmd_simulate,
    "probe-relerr": cmd_probe_relerr,
}


def run(cfg: RunConfig):
    """Run one command; numerical warnings are collected into tables."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = _DISPATCH[cfg.command](cfg)
    if isinstance(result, ResultTable):
        result.warnings.extend(str(w.message) for w in caught)
    return result


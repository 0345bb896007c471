"""AR(1) data model: error laws, simulation, the serial correlation
coefficient and the odd/even conditioning decomposition."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .errors import DegenerateInput, InvalidArgument
from .streams import as_generator

__all__ = [
    "ErrorDistribution",
    "Ar1Series",
    "OddConditioning",
    "ResidualSet",
    "TailEstimate",
    "simulate_ar1",
    "simulate_paths",
    "serial_correlation",
    "serial_correlation_batch",
    "statistic_s",
    "condition_decompose",
    "conditional_r",
    "compute_residuals",
    "moment_diagnostic",
]

_KINDS = ("normal", "t", "exp")


@dataclass(frozen=True)
class ErrorDistribution:
    """Zero-mean, unit-variance innovation law.

    ``kind`` is ``"normal"``, ``"t"`` (Student t with ``nu`` degrees of
    freedom divided by ``sqrt(nu / (nu - 2))``) or ``"exp"`` (rate-one
    exponential shifted by -1).
    """

    kind: str = "normal"
    nu: int | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InvalidArgument(f"unknown error distribution {self.kind!r}")
        if self.kind == "t":
            if self.nu is None or int(self.nu) != self.nu or self.nu < 9:
                # eighth moment must exist
                raise InvalidArgument("student-t errors need an integer nu >= 9")
        elif self.nu is not None:
            raise InvalidArgument("nu only applies to student-t errors")

    @classmethod
    def from_name(cls, name: str) -> "ErrorDistribution":
        name = name.strip().lower()
        if name in ("normal", "gaussian", "norm"):
            return cls("normal")
        if name in ("exp", "exponential"):
            return cls("exp")
        if name.startswith("t"):
            return cls("t", int(name[1:] or 10))
        raise InvalidArgument(f"unknown error distribution {name!r}")

    @property
    def name(self) -> str:
        return f"t{self.nu}" if self.kind == "t" else self.kind

    @property
    def symmetric(self) -> bool:
        return self.kind != "exp"

    @property
    def _t_scale(self) -> float:
        return math.sqrt(self.nu / (self.nu - 2.0))

    def sample(self, rng, size) -> np.ndarray:
        rng = as_generator(rng)
        if self.kind == "normal":
            return rng.standard_normal(size)
        if self.kind == "t":
            return rng.standard_t(self.nu, size) / self._t_scale
        return rng.standard_exponential(size) - 1.0

    def support(self) -> tuple[float, float]:
        return (-1.0, math.inf) if self.kind == "exp" else (-math.inf, math.inf)

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "normal":
            return -0.5 * x * x - 0.5 * math.log(2.0 * math.pi)
        if self.kind == "t":
            s = self._t_scale
            return stats.t.logpdf(x * s, self.nu) + math.log(s)
        with np.errstate(invalid="ignore"):
            return np.where(x >= -1.0, -(x + 1.0), -np.inf)

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def moment(self, k: int) -> float:
        """E[eps^k] (used by tests and diagnostics)."""
        if self.kind == "normal":
            return 0.0 if k % 2 else float(special.factorial2(k - 1)) if k > 0 else 1.0
        if self.kind == "t":
            if k % 2:
                return 0.0
            return float(stats.t.moment(k, self.nu)) / self._t_scale**k
        # E[(E-1)^k] for E ~ Exp(1): subfactorial-type sum
        return float(sum(math.comb(k, j) * math.factorial(j) * (-1) ** (k - j) for j in range(k + 1)))


@dataclass(frozen=True)
class Ar1Series:
    """An odd-length path ``x`` with its generating coefficient (``None``
    for observed data)."""

    x: np.ndarray
    rho: float | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1:
            raise InvalidArgument("series must be one-dimensional")
        if len(x) < 3 or len(x) % 2 == 0:
            raise InvalidArgument(f"series length must be odd and >= 3, got {len(x)}")
        if not np.all(np.isfinite(x)):
            raise InvalidArgument("series contains non-finite values")
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def m(self) -> int:
        return (len(self.x) - 1) // 2


@dataclass(frozen=True)
class OddConditioning:
    """Quantities fixed by the odd-indexed observations X1, X3, ..., Xn."""

    odd: np.ndarray
    a: np.ndarray
    b: np.ndarray
    m: int
    a_bar_sq: float
    b_bar: float

    @classmethod
    def from_odd(cls, odd) -> "OddConditioning":
        odd = np.asarray(odd, dtype=float)
        if odd.ndim != 1 or len(odd) < 2:
            raise InvalidArgument("need at least two odd-indexed observations")
        a = odd[:-1] + odd[1:]
        b = 0.5 * (odd[:-1] ** 2 + odd[1:] ** 2)
        return cls(odd=odd, a=a, b=b, m=len(a), a_bar_sq=float(np.mean(a * a)), b_bar=float(np.mean(b)))

    def gap(self, u: float) -> float:
        """A-bar^2 - 4 u^2 B-bar; the conditional tail vanishes unless positive."""
        return self.a_bar_sq - 4.0 * u * u * self.b_bar

    def feasible(self, u: float) -> bool:
        return self.gap(u) > 0.0

    def max_feasible_u(self) -> float:
        return math.sqrt(self.a_bar_sq / (4.0 * self.b_bar)) if self.b_bar > 0 else 0.0


@dataclass(frozen=True)
class ResidualSet:
    raw: np.ndarray
    standardized: np.ndarray
    mean: float
    scale: float
    rho0: float


@dataclass(frozen=True)
class TailEstimate:
    """Monte Carlo tail probability with its binomial standard error."""

    probability: float
    replicates: int
    std_error: float
    seed: int | None = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not (0.0 <= self.probability <= 1.0):
            raise InvalidArgument(f"probability out of range: {self.probability}")
        if self.std_error < 0:
            raise InvalidArgument("negative standard error")

    @classmethod
    def from_counts(cls, hits: int, replicates: int, seed=None, **extra) -> "TailEstimate":
        p = hits / replicates
        return cls(p, int(replicates), math.sqrt(p * (1.0 - p) / replicates), seed, dict(extra))


def _check_rho(rho, name="rho"):
    if not (-1.0 < rho < 1.0):
        raise InvalidArgument(f"|{name}| must be < 1, got {rho}")


def simulate_paths(n: int, rho: float, dist: ErrorDistribution, size: int, rng) -> np.ndarray:
    """``size`` independent AR(1) paths of length ``n`` as a (size, n) array.

    X1 = eps0 / sqrt(1 - rho^2) and Xi = rho X(i-1) + eps_i.
    """
    if n < 3 or n % 2 == 0:
        raise InvalidArgument(f"n must be odd and >= 3, got {n}")
    _check_rho(rho)
    rng = as_generator(rng)
    eps = dist.sample(rng, (size, n))
    x = np.empty_like(eps)
    x[:, 0] = eps[:, 0] / math.sqrt(1.0 - rho * rho)
    for i in range(1, n):
        x[:, i] = rho * x[:, i - 1] + eps[:, i]
    return x


def simulate_ar1(n: int, rho: float, dist: ErrorDistribution | None = None, seed=0) -> Ar1Series:
    dist = dist or ErrorDistribution()
    x = simulate_paths(n, rho, dist, 1, seed)[0]
    return Ar1Series(x, rho)


def _values(series) -> np.ndarray:
    return series.x if isinstance(series, Ar1Series) else np.asarray(series, dtype=float)


def serial_correlation(series) -> float:
    """First serial correlation coefficient with half-weighted end squares."""
    x = _values(series)
    den = x[0] ** 2 / 2 + np.dot(x[1:-1], x[1:-1]) + x[-1] ** 2 / 2
    if not den > 0:
        raise DegenerateInput("serial correlation undefined for an all-zero series")
    return float(np.dot(x[1:], x[:-1]) / den)


def serial_correlation_batch(x: np.ndarray) -> np.ndarray:
    """Row-wise serial correlation of a (replicates, n) array."""
    num = np.einsum("ij,ij->i", x[:, 1:], x[:, :-1])
    den = np.einsum("ij,ij->i", x, x) - 0.5 * (x[:, 0] ** 2 + x[:, -1] ** 2)
    if np.any(den <= 0):
        raise DegenerateInput("serial correlation undefined for an all-zero series")
    return num / den


def statistic_s(series, u: float) -> float:
    """S(u) = sum Xi X(i-1) - u * denominator, so that R > u iff S > 0."""
    x = _values(series)
    den = x[0] ** 2 / 2 + np.dot(x[1:-1], x[1:-1]) + x[-1] ** 2 / 2
    return float(np.dot(x[1:], x[:-1]) - u * den)


def condition_decompose(series) -> OddConditioning:
    x = _values(series)
    if len(x) < 3 or len(x) % 2 == 0:
        raise InvalidArgument("conditioning needs an odd-length series")
    return OddConditioning.from_odd(x[0::2])


def conditional_r(conditioning: OddConditioning, even: np.ndarray) -> np.ndarray:
    """Serial correlation rebuilt from odd summaries and draws of the even
    observations (rows of ``even``)."""
    even = np.atleast_2d(even)
    num = even @ conditioning.a
    den = np.einsum("ij,ij->i", even, even) + conditioning.m * conditioning.b_bar
    return num / den


def compute_residuals(series, rho0: float) -> ResidualSet:
    """Residuals X_i - rho0 X_(i-1), i = 2..n, raw and standardised
    (centred, divided by the divisor-(n-1) standard deviation)."""
    _check_rho(rho0, "rho0")
    x = _values(series)
    raw = x[1:] - rho0 * x[:-1]
    mean = float(np.mean(raw))
    scale = float(np.sqrt(np.mean((raw - mean) ** 2)))
    if not scale > 0:
        raise DegenerateInput("residuals have zero spread")
    return ResidualSet(raw=raw, standardized=(raw - mean) / scale, mean=mean, scale=scale, rho0=rho0)


def moment_diagnostic(series) -> dict:
    """Mean eighth and second powers of the odd-indexed observations.

    Thresholds are left to the caller.
    """
    odd = _values(series)[0::2]
    return {
        "eighth_moment_mean": float(np.mean(odd**8)),
        "second_moment_mean": float(np.mean(odd**2)),
    }

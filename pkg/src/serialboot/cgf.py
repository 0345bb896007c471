"""Cumulant generating functions of S(u) = sum X_i X_(i-1) - u * denominator.

Conditional backends return the per-pair average K(t, u) of the CGF of S
given the odd-indexed observations, so that the total CGF is m * K. Each
backend exposes

* ``evaluate(t, u)`` returning K, dK/dt, d2K/dt2,
* ``t_lower(u)``, the open lower end of the t-domain (0.0 when negative t
  is not available),
* ``u0_parts()``, the averaged first-moment and second-moment pieces
  that locate u0.

The unconditional Gaussian CGF works on the total scale through the
eigenvalues of U (A - u B) U^T with Sigma = U^T U.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .ar1 import OddConditioning
from .errors import DegenerateInput, InvalidArgument, QuadratureError
from .numerics import DEFAULT_QUADRATURE, Quadrature, cholesky_upper, integrate, symmetric_eigenvalues

__all__ = [
    "CgfEvaluation",
    "U0Result",
    "GaussianUnconditionalCgf",
    "GaussianConditionalCgf",
    "GeneralConditionalCgf",
    "MixtureConditionalCgf",
    "KernelDensity",
    "ar1_quadratic_forms",
    "eval_gaussian_unconditional",
    "eval_gaussian_conditional",
    "eval_general_conditional",
    "eval_mixture_conditional",
    "compute_u0",
]


@dataclass(frozen=True)
class CgfEvaluation:
    k: float
    k10: float
    k20: float
    feasible: bool = True


INFEASIBLE = CgfEvaluation(math.nan, math.nan, math.nan, False)


@dataclass(frozen=True)
class U0Result:
    u0: float
    numerator: float
    denominator: float


# ---------------------------------------------------------------------------
# Unconditional Gaussian


def ar1_quadratic_forms(n: int):
    """Matrices A, B with x'Ax = sum x_i x_(i-1) and x'Bx = the R denominator."""
    a = np.zeros((n, n))
    idx = np.arange(n - 1)
    a[idx, idx + 1] = 0.5
    a[idx + 1, idx] = 0.5
    b = np.eye(n)
    b[0, 0] = b[-1, -1] = 0.5
    return a, b


@lru_cache(maxsize=256)
def _unconditional_eigenvalues(n: int, rho: float, u: float) -> np.ndarray:
    a, b = ar1_quadratic_forms(n)
    lags = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
    sigma = rho**lags
    up = cholesky_upper(sigma)
    lam = symmetric_eigenvalues(up @ (a - u * b) @ up.T)
    lam.setflags(write=False)
    return lam


class GaussianUnconditionalCgf:
    """kappa(t) = -1/2 sum log(1 - 2 t lambda_i) for fixed (n, rho, u)."""

    def __init__(self, n: int, rho: float, u: float):
        if n < 2:
            raise InvalidArgument("n must be at least 2")
        if not -1.0 < rho < 1.0:
            raise InvalidArgument("|rho| must be < 1")
        self.n, self.rho, self.u = int(n), float(rho), float(u)
        self.lambdas = _unconditional_eigenvalues(self.n, self.rho, self.u)

    @property
    def t_domain(self) -> tuple[float, float]:
        lmin, lmax = self.lambdas[0], self.lambdas[-1]
        lo = 1.0 / (2.0 * lmin) if lmin < 0 else -math.inf
        hi = 1.0 / (2.0 * lmax) if lmax > 0 else math.inf
        return lo, hi

    def evaluate(self, t: float) -> CgfEvaluation:
        q = 1.0 - 2.0 * t * self.lambdas
        if np.any(q <= 0.0):
            return INFEASIBLE
        lam = self.lambdas
        k = -0.5 * float(np.sum(np.log1p(-2.0 * t * lam)))
        k10 = float(np.sum(lam / q))
        k20 = float(np.sum(2.0 * lam * lam / (q * q)))
        return CgfEvaluation(k, k10, k20)

    def k30(self, t: float) -> float:
        q = 1.0 - 2.0 * t * self.lambdas
        return float(np.sum(8.0 * self.lambdas**3 / q**3))

    def k40(self, t: float) -> float:
        q = 1.0 - 2.0 * t * self.lambdas
        return float(np.sum(48.0 * self.lambdas**4 / q**4))


def eval_gaussian_unconditional(n: int, rho: float, u: float, t: float) -> CgfEvaluation:
    return GaussianUnconditionalCgf(n, rho, u).evaluate(t)


# ---------------------------------------------------------------------------
# Conditional backends


class _ConditionalCgf:
    conditioning: OddConditioning

    @property
    def m(self) -> int:
        return self.conditioning.m

    def drift(self, u: float) -> float:
        """Large-t limit of dK/dt, (A-bar^2 - 4 u^2 B-bar) / 4u."""
        return self.conditioning.gap(u) / (4.0 * u)

    def gap(self, u: float) -> float:
        return self.conditioning.gap(u)

    def _check_u(self, u):
        if not u > 0:
            raise InvalidArgument("conditional CGFs need u > 0")


class GaussianConditionalCgf(_ConditionalCgf):
    """Closed-form conditional CGF for normal errors.

    Depends on the conditioning only through A-bar^2 and B-bar.
    """

    def __init__(self, a_bar_sq: float, b_bar: float, rho: float, m: int, conditioning=None):
        if a_bar_sq < 0 or b_bar < 0:
            raise InvalidArgument("A-bar^2 and B-bar must be non-negative")
        self.a_bar_sq, self.b_bar, self.rho = float(a_bar_sq), float(b_bar), float(rho)
        self._m = int(m)
        self.conditioning = conditioning

    @classmethod
    def from_conditioning(cls, cond: OddConditioning, rho: float) -> "GaussianConditionalCgf":
        return cls(cond.a_bar_sq, cond.b_bar, rho, cond.m, cond)

    @property
    def m(self) -> int:
        return self._m

    def drift(self, u: float) -> float:
        return (self.a_bar_sq - 4.0 * u * u * self.b_bar) / (4.0 * u)

    def gap(self, u: float) -> float:
        return self.a_bar_sq - 4.0 * u * u * self.b_bar

    def t_lower(self, u: float) -> float:
        return -(1.0 + self.rho**2) / (2.0 * u)

    def evaluate(self, t: float, u: float) -> CgfEvaluation:
        self._check_u(u)
        rho, a2, bb = self.rho, self.a_bar_sq, self.b_bar
        r2 = 1.0 + rho * rho
        e = r2 + 2.0 * t * u
        if not e > 0.0:
            return INFEASIBLE
        # written so that every term is O(t) and K(0, u) = 0 exactly
        k = (-0.5 * math.log1p(2.0 * t * u / r2) - t * u * bb
             + a2 * t * (r2 * (2.0 * rho + t) - 2.0 * u * rho * rho) / (2.0 * e * r2))
        pt = rho + t
        k10 = -u / e - u * bb + a2 * pt * (e - u * pt) / (e * e)
        k20 = 2.0 * u * u / (e * e) + a2 * (r2 - 2.0 * u * rho) ** 2 / e**3
        return CgfEvaluation(k, k10, k20)

    def sample_even(self, rng, size: int) -> np.ndarray:
        """Draws of (X_2, X_4, ..., X_(n-1)) given the odd observations."""
        if self.conditioning is None:
            raise InvalidArgument("sampling needs the full conditioning, not just its summaries")
        r2 = 1.0 + self.rho**2
        mean = self.rho * self.conditioning.a / r2
        return mean + rng.standard_normal((size, self.m)) / math.sqrt(r2)

    def u0_parts(self) -> tuple[float, float]:
        r2 = 1.0 + self.rho**2
        num = self.rho * self.a_bar_sq / r2
        den = 1.0 / r2 + self.rho**2 * self.a_bar_sq / r2**2 + self.b_bar
        return num, den


def eval_gaussian_conditional(gcc: GaussianConditionalCgf, t: float, u: float) -> CgfEvaluation:
    return gcc.evaluate(t, u)


class KernelDensity:
    """Gaussian-kernel density (1/N) sum_k phi((z - e_k) / tau) / tau."""

    def __init__(self, points, tau: float):
        self.points = np.asarray(points, dtype=float)
        if self.points.ndim != 1 or len(self.points) == 0:
            raise InvalidArgument("kernel density needs a non-empty 1-d point set")
        if not tau > 0:
            raise InvalidArgument("bandwidth must be positive")
        self.tau = float(tau)
        self.resolution = self.tau

    def support(self):
        return -math.inf, math.inf

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        z = (x[..., None] - self.points) / self.tau
        return (logsumexp(-0.5 * z * z, axis=-1) - math.log(len(self.points))
                - 0.5 * math.log(2.0 * math.pi) - math.log(self.tau))

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def sample(self, rng, size):
        idx = rng.integers(0, len(self.points), size)
        return self.points[idx] + self.tau * rng.standard_normal(size)


class GeneralConditionalCgf(_ConditionalCgf):
    """Conditional CGF for an arbitrary error density by quadrature.

    The conditional density of X_2i given its odd neighbours is
    f(z - rho0 X_(2i-1)) f(X_(2i+1) - rho0 z), normalised numerically.
    ``density`` needs ``logpdf`` and ``support``; an optional
    ``resolution`` attribute (smallest feature width) refines the initial
    panel layout.
    """

    def __init__(self, conditioning: OddConditioning, density, rho0: float,
                 quadrature: Quadrature = DEFAULT_QUADRATURE):
        if not -1.0 < rho0 < 1.0:
            raise InvalidArgument("|rho0| must be < 1")
        self.conditioning = conditioning
        self.density = density
        self.rho0 = float(rho0)
        self.quadrature = quadrature
        odd = conditioning.odd
        self._prev, self._next = odd[:-1], odd[1:]
        self._setup()

    # support of z for pair i from the support of the error law
    def _window(self, i):
        lo_e, hi_e = self.density.support()
        p, q, r = self._prev[i], self._next[i], self.rho0
        lo, hi = lo_e + r * p, hi_e + r * p
        if r != 0.0:
            # lo_e <= q - r z <= hi_e
            b1, b2 = (q - hi_e) / r, (q - lo_e) / r
            if r < 0:
                b1, b2 = b2, b1
            lo, hi = max(lo, b1), min(hi, b2)
        elif not (lo_e <= q <= hi_e):
            lo, hi = 0.0, 0.0
        return lo, hi

    def _log_unnorm(self, i, z):
        return (self.density.logpdf(z - self.rho0 * self._prev[i])
                + self.density.logpdf(self._next[i] - self.rho0 * z))

    def _setup(self):
        r = self.rho0
        r2 = 1.0 + r * r
        m = self.m
        self._lo = np.empty(m)
        self._hi = np.empty(m)
        self._center = np.empty(m)
        self._scale = np.empty(m)
        self._logz = np.empty(m)
        self._mean = np.empty(m)
        self._second = np.empty(m)
        res = getattr(self.density, "resolution", None)
        hw = self.quadrature.half_width
        for i in range(m):
            lo, hi = self._window(i)
            if not hi > lo:
                raise DegenerateInput(f"conditional density for pair {i} has empty support")
            c0 = r * (self._prev[i] + self._next[i]) / r2
            s0 = 1.0 / math.sqrt(r2)
            c0 = min(max(c0, lo), hi) if math.isfinite(lo) or math.isfinite(hi) else c0
            a, b = max(lo, c0 - hw * s0), min(hi, c0 + hw * s0)
            brk = self._grid_breaks(a, b, c0, s0, res)
            # reference log-density keeps the normaliser in range
            probe = np.linspace(a, b, 201)
            ref = float(np.max(self._log_unnorm(i, probe)))

            def f(z, i=i, ref=ref):
                w = np.exp(self._log_unnorm(i, z) - ref)
                return np.stack([w, z * w, z * z * w], axis=-1)

            try:
                tot = integrate(f, self.quadrature, c0, s0, a, b, brk)
            except QuadratureError as exc:
                exc.index = i
                raise
            z0 = tot[0]
            mean = tot[1] / z0
            var = max(tot[2] / z0 - mean * mean, 0.0)
            self._logz[i] = ref + math.log(z0)
            self._mean[i] = mean
            self._second[i] = tot[2] / z0
            sd = math.sqrt(var) if var > 0 else s0
            self._center[i] = mean
            self._scale[i] = sd
            self._lo[i], self._hi[i] = max(lo, mean - hw * sd), min(hi, mean + hw * sd)
        self._res = res

    @staticmethod
    def _grid_breaks(a, b, c, s, res):
        if res is None or not res < s:
            return ()
        lo, hi = max(a, c - 12 * s), min(b, c + 12 * s)
        k = int(math.ceil((hi - lo) / res))
        return tuple(np.linspace(lo, hi, k + 1)) if k > 1 else ()

    def g(self, i: int, z):
        """Normalised conditional density of X_2i at z."""
        z = np.asarray(z, dtype=float)
        lo, hi = self._window(i)
        with np.errstate(divide="ignore"):
            val = np.exp(self._log_unnorm(i, z) - self._logz[i])
        return np.where((z >= lo) & (z <= hi), val, 0.0)

    def t_lower(self, u: float) -> float:
        bounded = all(math.isfinite(self._window(i)[0]) and math.isfinite(self._window(i)[1])
                      for i in range(self.m))
        return -math.inf if bounded else 0.0

    def _pair_integrals(self, i, t, u):
        b = self.conditioning.a[i] / (2.0 * u)
        lz = self._logz[i]

        def f(z):
            y = u * (z - b) ** 2
            g = np.exp(self._log_unnorm(i, z) - lz)
            e = np.exp(-t * y)
            return np.stack([np.expm1(-t * y) * g, y * e * g, y * y * e * g], axis=-1)

        lo, hi = self._lo[i], self._hi[i]
        brk = [b]
        if t > 0:
            w = 1.0 / math.sqrt(2.0 * t * u)
            brk += [b + k * w for k in (-8, -4, -2, -1, 1, 2, 4, 8)]
        if self._res is not None:
            brk += list(self._grid_breaks(lo, hi, self._center[i], self._scale[i], self._res))
        if t < 0:
            lo, hi = self._window(i)
        elif t > 0:
            s_lo, s_hi = self._window(i)
            lo, hi = max(s_lo, min(lo, b - 40.0 * w)), min(s_hi, max(hi, b + 40.0 * w))
        try:
            return integrate(f, self.quadrature, self._center[i], self._scale[i], lo, hi, brk)
        except QuadratureError as exc:
            exc.index = i
            raise

    def evaluate(self, t: float, u: float) -> CgfEvaluation:
        self._check_u(u)
        if t < 0 and self.t_lower(u) == 0.0:
            return INFEASIBLE
        logs = np.empty(self.m)
        ki = np.empty(self.m)
        vi = np.empty(self.m)
        for i in range(self.m):
            j0, j1, j2 = self._pair_integrals(i, t, u)
            i0 = 1.0 + j0
            if not i0 > 0:
                return INFEASIBLE
            logs[i] = math.log1p(j0)
            ki[i] = j1 / i0
            vi[i] = j2 / i0 - ki[i] ** 2
        k = float(np.mean(logs)) + t * self.drift(u)
        return CgfEvaluation(k, -float(np.mean(ki)) + self.drift(u), float(np.mean(vi)))

    def sample_even(self, rng, size: int, grid: int = 4001) -> np.ndarray:
        """Draws of the even observations by inverse-CDF on a fine grid."""
        out = np.empty((size, self.m))
        for i in range(self.m):
            z = np.linspace(self._lo[i], self._hi[i], grid)
            dens = self.g(i, z)
            cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(z))])
            cdf /= cdf[-1]
            keep = np.concatenate([[True], np.diff(cdf) > 0])
            out[:, i] = np.interp(rng.random(size), cdf[keep], z[keep])
        return out

    def u0_parts(self) -> tuple[float, float]:
        num = float(np.mean(self._mean * self.conditioning.a))
        den = float(np.mean(self._second)) + self.conditioning.b_bar
        return num, den


def eval_general_conditional(gc: GeneralConditionalCgf, t: float, u: float) -> CgfEvaluation:
    return gc.evaluate(t, u)


class MixtureConditionalCgf(_ConditionalCgf):
    """Conditional CGF when the error law is a Gaussian-kernel smoothing
    of a residual set (smoothed and conditional bootstraps).

    Given the odd neighbours, X_2i is a normal mixture over residual pairs
    (k, l) with means rho0 (X_(2i-1) + X_(2i+1)) / (1 + rho0^2)
    + (e_k - rho0 e_l) / (1 + rho0^2), common variance tau^2 / (1 + rho0^2)
    and weights proportional to
    exp(-(X_(2i+1) - rho0^2 X_(2i-1) - rho0 e_k - e_l)^2 / (2 tau^2 (1 + rho0^2))).
    Every inner integral is then an exact sum of Gaussian integrals.
    """

    #: components more than this many log-units below the largest weight
    #: are dropped when there are more than PRUNE_AFTER residuals
    PRUNE_LOG_GAP = 40.0
    PRUNE_AFTER = 60

    def __init__(self, conditioning: OddConditioning, residuals, rho0: float, tau: float):
        if not -1.0 < rho0 < 1.0:
            raise InvalidArgument("|rho0| must be < 1")
        if not tau > 0:
            raise InvalidArgument("tau must be positive")
        e = np.asarray(residuals, dtype=float)
        if e.ndim != 1 or len(e) == 0:
            raise InvalidArgument("need a non-empty residual vector")
        self.conditioning = conditioning
        self.residuals = e
        self.rho0, self.tau = float(rho0), float(tau)
        r2 = 1.0 + rho0 * rho0
        self.var = tau * tau / r2
        prev, nxt = conditioning.odd[:-1], conditioning.odd[1:]
        ek, el = e[:, None], e[None, :]
        shift = ((ek - rho0 * el) / r2).ravel()
        resid = (rho0 * ek + el).ravel()
        logw = -((nxt - rho0 * rho0 * prev)[:, None] - resid[None, :]) ** 2 / (2.0 * tau * tau * r2)
        logw -= logsumexp(logw, axis=1, keepdims=True)
        means = (rho0 * (prev + nxt) / r2)[:, None] + shift[None, :]
        if len(e) > self.PRUNE_AFTER:
            logw, means = self._prune(logw, means)
        self.log_weights = logw
        self.weights = np.exp(logw)
        self.weights /= self.weights.sum(axis=1, keepdims=True)
        self.means = means

    def _prune(self, logw, means):
        keep = logw >= logw.max(axis=1, keepdims=True) - self.PRUNE_LOG_GAP
        width = int(keep.sum(axis=1).max())
        order = np.argsort(~keep, axis=1, kind="stable")[:, :width]
        lw = np.take_along_axis(logw, order, axis=1)
        mu = np.take_along_axis(means, order, axis=1)
        kept = np.take_along_axis(keep, order, axis=1)
        lw = np.where(kept, lw, -np.inf)
        lw -= logsumexp(lw, axis=1, keepdims=True)
        return lw, mu

    def t_lower(self, u: float) -> float:
        return -1.0 / (2.0 * u * self.var)

    def evaluate(self, t: float, u: float) -> CgfEvaluation:
        self._check_u(u)
        c = 2.0 * u * self.var
        d_ = 1.0 + t * c
        if not d_ > 0.0:
            return INFEASIBLE
        b = self.conditioning.a / (2.0 * u)
        d = u * (b[:, None] - self.means) ** 2
        dl = -0.5 * math.log1p(t * c) - t * d / d_
        w = self.weights
        big = np.max(np.abs(np.where(w > 0, dl, 0.0)))
        if big <= 1.0:
            s = np.sum(w * np.expm1(dl), axis=1)
            logs = np.log1p(s)
            post = w * np.exp(dl) / (1.0 + s)[:, None]
        else:
            z = self.log_weights + dl
            logs = logsumexp(z, axis=1)
            post = np.exp(z - logs[:, None])
        g1 = -c / (2.0 * d_) - d / (d_ * d_)
        g2 = c * c / (2.0 * d_ * d_) + 2.0 * d * c / d_**3
        m1 = np.sum(post * g1, axis=1)
        var1 = np.sum(post * (g1 - m1[:, None]) ** 2, axis=1)
        m2 = np.sum(post * g2, axis=1)
        drift = self.drift(u)
        return CgfEvaluation(float(np.mean(logs)) + t * drift,
                             float(np.mean(m1)) + drift,
                             float(np.mean(m2 + var1)))

    def cumulative_weights(self) -> np.ndarray:
        cw = np.cumsum(self.weights, axis=1)
        cw /= cw[:, -1:]
        return cw

    def sample_components(self, rng, size: int) -> np.ndarray:
        """Component indices (size, m) drawn with the mixture weights."""
        cw = self.cumulative_weights()
        draws = rng.random((size, self.m))
        idx = np.empty((size, self.m), dtype=np.int64)
        for i in range(self.m):
            idx[:, i] = np.searchsorted(cw[i], draws[:, i], side="right")
        np.minimum(idx, cw.shape[1] - 1, out=idx)
        return idx

    def sample_even(self, rng, size: int) -> np.ndarray:
        """Pick (k, l) with the mixture weights, then add the normal kernel."""
        idx = self.sample_components(rng, size)
        mu = np.take_along_axis(self.means, idx.T, axis=1).T
        return mu + math.sqrt(self.var) * rng.standard_normal((size, self.m))

    def pair_moments(self):
        """First and second moments of each conditional mixture."""
        first = np.sum(self.weights * self.means, axis=1)
        second = np.sum(self.weights * (self.means**2 + self.var), axis=1)
        return first, second

    def u0_parts(self) -> tuple[float, float]:
        first, second = self.pair_moments()
        return (float(np.mean(first * self.conditioning.a)),
                float(np.mean(second)) + self.conditioning.b_bar)


def eval_mixture_conditional(mc: MixtureConditionalCgf, t: float, u: float) -> CgfEvaluation:
    return mc.evaluate(t, u)


def compute_u0(cgf) -> U0Result:
    """u0 with dK/dt(0, u0) = 0, from the conditional first and second moments."""
    num, den = cgf.u0_parts()
    if not den > 0:
        raise DegenerateInput("u0 denominator is not positive")
    return U0Result(num / den, num, den)

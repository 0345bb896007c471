"""Small numerical kernels: Cholesky, Jacobi eigenvalues, adaptive
Gauss-Kronrod quadrature, a safeguarded Newton solver and the normal tail.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numba import njit
from scipy import special

from .errors import FactorizationError, InvalidArgument, NoRootError, QuadratureError

__all__ = [
    "Quadrature",
    "RootBracket",
    "cholesky_upper",
    "symmetric_eigenvalues",
    "integrate",
    "solve_increasing",
    "normal_upper_tail",
    "log_normal_upper_tail",
]


# ---------------------------------------------------------------------------
# Linear algebra


def cholesky_upper(sigma) -> np.ndarray:
    """Return upper-triangular ``U`` with ``sigma = U.T @ U``."""
    a = np.array(sigma, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgument("cholesky_upper needs a square matrix")
    n = a.shape[0]
    scale = max(np.max(np.abs(a)), 1.0)
    if np.max(np.abs(a - a.T)) > 1e-12 * scale:
        raise InvalidArgument("cholesky_upper needs a symmetric matrix")
    u = np.zeros_like(a)
    for j in range(n):
        # column j of U: sigma[:j+1, j] = U[:j+1, :j+1].T @ U[:j+1, j]
        s = a[j, j] - np.dot(u[:j, j], u[:j, j])
        if not s > 0.0:
            raise FactorizationError(f"matrix is not positive definite (pivot {j} = {s!r})")
        u[j, j] = math.sqrt(s)
        if j + 1 < n:
            u[j, j + 1:] = (a[j, j + 1:] - u[:j, j] @ u[:j, j + 1:]) / u[j, j]
    return u


@njit(cache=True)
def _jacobi_sweeps(a, tol, max_sweeps):
    n = a.shape[0]
    for sweep in range(max_sweeps):
        off = 0.0
        total = 0.0
        for i in range(n):
            for j in range(n):
                v = a[i, j] * a[i, j]
                total += v
                if i != j:
                    off += v
        if off <= tol * tol * total or off == 0.0:
            return sweep
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if theta >= 0.0:
                    t = 1.0 / (theta + math.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + math.sqrt(1.0 + theta * theta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = t * c
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
    return -1


def symmetric_eigenvalues(mat, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a real symmetric matrix by cyclic Jacobi rotations.

    Returns the eigenvalues sorted ascending.
    """
    a = np.array(mat, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgument("symmetric_eigenvalues needs a square matrix")
    scale = max(np.max(np.abs(a)), np.finfo(float).tiny) if a.size else 1.0
    if a.size and np.max(np.abs(a - a.T)) > 1e-10 * scale:
        raise InvalidArgument("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    if a.shape[0] <= 1:
        return np.diag(a).copy()
    status = _jacobi_sweeps(a, 1e-17, max_sweeps)
    if status < 0:
        raise FactorizationError("Jacobi iteration did not converge")
    return np.sort(np.diag(a))


# ---------------------------------------------------------------------------
# Quadrature

# Gauss-Kronrod abscissae on [-1, 1] (non-negative half, ascending index = descending x)
_XGK15 = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000])
_WGK15 = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714])
_WG7 = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327])

_XGK21 = np.array([
    0.995657163025808080735527280689003, 0.973906528517171720077964012084452,
    0.930157491355708226001207180059508, 0.865063366688984510732096688423493,
    0.780817726586416897063717578345042, 0.679409568299024406234327365114874,
    0.562757134668604683339000099272694, 0.433395394129247190799265943165784,
    0.294392862701460198131126603103866, 0.148874338981631210884826001129720,
    0.000000000000000000000000000000000])
_WGK21 = np.array([
    0.011694638867371874278064396062192, 0.032558162307964727478818972459390,
    0.054755896574351996031381300244580, 0.075039674810919952767043140916190,
    0.093125454583697605535065465083366, 0.109387158802297641899210590325805,
    0.123491976262065851077208626542720, 0.134709217311473325928054001771707,
    0.142775938577060080797094273138717, 0.147739104901338491374841515972068,
    0.149445554002916905664936468389821])
_WG10 = np.array([
    0.066671344308688137593568809893332, 0.149451349150580593145776339657697,
    0.219086362515982043995534934228163, 0.269266719309996355091226921569469,
    0.295524224714752870173892994651338])


def _make_rule(nodes):
    """Full node/weight vectors on [-1, 1] from the tabulated half rules."""
    if nodes == 15:
        xgk, wgk, wg = _XGK15, _WGK15, _WG7
    elif nodes == 21:
        xgk, wgk, wg = _XGK21, _WGK21, _WG10
    else:
        raise InvalidArgument(f"unsupported Kronrod rule with {nodes} nodes (use 15 or 21)")
    # embedded Gauss nodes sit at the odd positions of the half rule
    wg_half = np.zeros_like(xgk)
    wg_half[1::2] = wg
    x = np.concatenate([-xgk[:-1], xgk[::-1]])
    wk = np.concatenate([wgk[:-1], wgk[::-1]])
    wgf = np.concatenate([wg_half[:-1], wg_half[::-1]])
    return x, wk, wgf


_RULES = {15: _make_rule(15), 21: _make_rule(21)}


@dataclass(frozen=True)
class Quadrature:
    """Settings for :func:`integrate`.

    ``half_width`` is measured in units of the ``scale`` passed to
    :func:`integrate` and sets the default window when no explicit limits
    are given.
    """

    nodes: int = 15
    max_panels: int = 4000
    abs_tol: float = 1e-14
    rel_tol: float = 1e-10
    half_width: float = 40.0

    def __post_init__(self):
        if self.nodes < 7:
            raise InvalidArgument("quadrature node count must be at least 7")
        if self.nodes not in _RULES:
            raise InvalidArgument(f"unsupported Kronrod rule with {self.nodes} nodes")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise InvalidArgument("quadrature tolerances must be positive")
        if self.max_panels < 1:
            raise InvalidArgument("max_panels must be positive")


DEFAULT_QUADRATURE = Quadrature()


def _eval_panels(f, rule, lo, hi):
    x, wk, wg = rule
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    vals = np.asarray(f(pts), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    vals = vals.reshape(len(lo), len(x), -1)
    kron = np.einsum("pnk,n->pk", vals, wk) * half[:, None]
    gauss = np.einsum("pnk,n->pk", vals, wg) * half[:, None]
    if not np.all(np.isfinite(kron)):
        raise QuadratureError("integrand produced non-finite values")
    return kron, np.abs(kron - gauss)


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    quadrature: Quadrature = DEFAULT_QUADRATURE,
    center: float = 0.0,
    scale: float = 1.0,
    lower: float | None = None,
    upper: float | None = None,
    breakpoints: Sequence[float] = (),
):
    """Adaptive Gauss-Kronrod integration of a vectorised integrand.

    ``f`` maps an array of abscissae to values of shape ``(len(x),)`` or
    ``(len(x), k)``; the vector case integrates all ``k`` components over a
    shared panel set and returns an array. Without explicit limits the
    window is ``center +/- quadrature.half_width * scale``. Initial panels
    are laid at ``center + scale * {0, +-1, +-2, +-4, +-8}`` plus any
    ``breakpoints``.

    Raises
    ------
    QuadratureError
        When the panel budget is exhausted; carries the best estimate.
    """
    if not scale > 0:
        raise InvalidArgument("scale must be positive")
    a = center - quadrature.half_width * scale if lower is None else float(lower)
    b = center + quadrature.half_width * scale if upper is None else float(upper)
    if not b > a:
        if b == a:
            return 0.0
        raise InvalidArgument("upper limit must exceed lower limit")
    grid = [a, b]
    grid += [center + scale * k for k in (-8, -4, -2, -1, 0, 1, 2, 4, 8)]
    grid += list(breakpoints)
    edges = np.unique(np.clip(np.asarray(grid, dtype=float), a, b))
    rule = _RULES[quadrature.nodes]

    lo, hi = edges[:-1], edges[1:]
    keep = hi > lo
    lo, hi = lo[keep], hi[keep]
    vals, errs = _eval_panels(f, rule, lo, hi)
    scalar = vals.shape[1] == 1
    for _ in range(200):
        total = vals.sum(axis=0)
        err = errs.sum(axis=0)
        target = np.maximum(quadrature.abs_tol, quadrature.rel_tol * np.abs(total))
        if np.all(err <= target):
            return float(total[0]) if scalar else total
        if len(lo) >= quadrature.max_panels:
            break
        # split every panel carrying more than its share of the budget
        share = np.max(errs / target[None, :], axis=1)
        bad = share > 1.0 / len(lo)
        if not np.any(bad):
            bad = share >= share.max()
        mid = 0.5 * (lo[bad] + hi[bad])
        if np.any((mid <= lo[bad]) | (mid >= hi[bad])):
            break
        new_lo = np.concatenate([lo[bad], mid])
        new_hi = np.concatenate([mid, hi[bad]])
        nv, ne = _eval_panels(f, rule, new_lo, new_hi)
        good = ~bad
        lo = np.concatenate([lo[good], new_lo])
        hi = np.concatenate([hi[good], new_hi])
        vals = np.concatenate([vals[good], nv])
        errs = np.concatenate([errs[good], ne])
    total = vals.sum(axis=0)
    err = errs.sum(axis=0)
    raise QuadratureError(
        "adaptive quadrature did not converge",
        estimate=float(total[0]) if scalar else total,
        error=float(err[0]) if scalar else err,
    )


# ---------------------------------------------------------------------------
# Root finding


@dataclass(frozen=True)
class RootBracket:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.upper >= self.lower:
            raise InvalidArgument("bracket upper must not be below lower")


def solve_increasing(
    f: Callable[[float], float],
    bracket: RootBracket | tuple[float, float],
    tol: float = 1e-11,
    fprime: Callable[[float], float] | None = None,
    xtol: float = 1e-15,
    maxiter: int = 500,
) -> float:
    """Root of a continuous nondecreasing ``f`` inside ``bracket``.

    Newton steps (when ``fprime`` is given) are accepted only if they land
    strictly inside the current bracket and at least halve ``|f|``;
    otherwise the step bisects. Stops once ``|f| <= tol`` (followed by one
    polishing Newton step if it stays in the bracket) or once the bracket
    is narrower than ``xtol * (1 + |x|)``.
    """
    if not isinstance(bracket, RootBracket):
        bracket = RootBracket(*bracket)
    lo, hi = float(bracket.lower), float(bracket.upper)
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if not (flo < 0.0 < fhi):
        raise NoRootError(f"no sign change on [{lo!r}, {hi!r}]: f = ({flo!r}, {fhi!r})")

    x = 0.5 * (lo + hi)
    prev = math.inf
    for _ in range(maxiter):
        fx = f(x)
        if fx == 0.0:
            return x
        if fx < 0.0:
            lo = x
        else:
            hi = x
        if abs(fx) <= tol:
            if fprime is not None:
                d = fprime(x)
                if d > 0.0:
                    xn = x - fx / d
                    if lo <= xn <= hi:
                        return xn
            return x
        if hi - lo <= xtol * (1.0 + abs(x)):
            return x
        xn = math.nan
        if fprime is not None and abs(fx) < 0.5 * prev:
            d = fprime(x)
            if d > 0.0:
                xn = x - fx / d
        elif fprime is not None and prev == math.inf:
            d = fprime(x)
            if d > 0.0:
                xn = x - fx / d
        if not (lo < xn < hi):
            xn = 0.5 * (lo + hi)
        prev = abs(fx)
        x = xn
    raise NoRootError(f"solver did not converge in {maxiter} iterations (bracket [{lo}, {hi}])")


# ---------------------------------------------------------------------------
# Normal tail


def normal_upper_tail(z):
    """P(Z >= z) for standard normal Z.

    Past z of about 37.5 the value leaves the normal double range; there it
    is formed as exp(log P) and is only as precise as a subnormal allows.
    """
    z = np.asarray(z, dtype=float)
    out = np.where(z > 37.0, np.exp(special.log_ndtr(-z)), special.ndtr(-z))
    return out if out.ndim else float(out)


def log_normal_upper_tail(z):
    """log P(Z >= z), stable far into the upper tail."""
    return special.log_ndtr(-np.asarray(z, dtype=float)) if np.ndim(z) else float(special.log_ndtr(-z))

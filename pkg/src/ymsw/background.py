"""Schwarzschild exterior geometry in tortoise coordinates.

All functions are pure and accept scalars or numpy arrays.  Radii close to
the horizon lose their distance to ``2m`` in floating point, so the
inversion also exposes the gap ``r - 2m`` directly (``horizon_gap``); the
lapse is computed from that gap rather than from ``1 - 2m/r``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError

TOL_INV = 1e-13
MAX_NEWTON = 100


@dataclass(frozen=True)
class BackgroundSample:
    """Background scalars at one tortoise point."""

    r: float
    r_star: float
    N: float
    mu: float
    P: float
    V: float
    f: float


def _check_mass(m):
    if not np.isfinite(m) or m <= 0:
        raise DomainError(f"black hole mass must be positive, got {m!r}")


def _scalar_or_array(values, like):
    if np.ndim(like) == 0:
        return float(values)
    return values


def r_star_of_r(r, m=1.0):
    """Tortoise coordinate ``r + 2m log(r - 2m) - 3m - 2m log m``."""
    _check_mass(m)
    r_arr = np.asarray(r, dtype=float)
    if np.any(~(r_arr > 2 * m)):
        raise DomainError(f"r must exceed the horizon radius 2m = {2 * m!r}")
    out = r_arr + 2 * m * np.log(r_arr - 2 * m) - 3 * m - 2 * m * np.log(m)
    return _scalar_or_array(out, r)


def r_star_of_gap(gap, m=1.0):
    """Tortoise coordinate from the horizon gap ``u = r - 2m`` (exact near 2m)."""
    _check_mass(m)
    u = np.asarray(gap, dtype=float)
    if np.any(~(u > 0)):
        raise DomainError("horizon gap r - 2m must be positive")
    out = u + 2 * m * np.log(u) - m - 2 * m * np.log(m)
    return _scalar_or_array(out, gap)


def _log_gap(x, m):
    """Solve ``exp(s) + 2m s = x + m + 2m log m`` for ``s = log(r - 2m)``.

    Safeguarded Newton: the left side is convex and increasing, so a
    bracket is kept and any iterate leaving it is replaced by bisection.
    """
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)):
        raise DomainError("tortoise coordinate must be finite")
    c = x + m + 2 * m * np.log(m)
    two_m = 2 * m

    hi = c / two_m
    big = c >= 1.0
    hi = np.where(big, np.minimum(hi, np.log(np.where(big, c, 1.0))), hi)
    with np.errstate(over="ignore", under="ignore"):
        lo = (c - np.exp(hi)) / two_m
    lo = np.minimum(lo, hi - 1.0)

    s = np.where(x > 10 * m, np.log(np.maximum(x + m, 1e-300)), (x + m) / two_m + np.log(m))
    s = np.clip(s, lo, hi)
    done = np.zeros(s.shape, dtype=bool)
    for _ in range(MAX_NEWTON):
        with np.errstate(over="ignore", under="ignore"):
            es = np.exp(s)
        g = es + two_m * s - c
        lo = np.where(g < 0, np.maximum(lo, s), lo)
        hi = np.where(g > 0, np.minimum(hi, s), hi)
        step = g / (es + two_m)
        s_new = s - step
        outside = (s_new <= lo) | (s_new >= hi)
        s_new = np.where(outside & ~done, 0.5 * (lo + hi), s_new)
        s_new = np.where(done, s, s_new)
        conv = np.abs(s_new - s) <= 1e-15 * np.maximum(1.0, np.abs(s_new))
        conv |= hi - lo <= 4e-16 * np.maximum(1.0, np.abs(s_new))
        s = s_new
        done |= conv
        if np.all(done):
            break
    with np.errstate(over="ignore", under="ignore"):
        es = np.exp(s)
    resid = np.abs(es + two_m * s - c)
    scale = np.maximum(np.maximum(es, two_m * np.abs(s)), np.abs(c))
    bad = ~done & (resid > TOL_INV * np.maximum(scale, 1.0))
    if np.any(bad):
        idx = np.flatnonzero(np.atleast_1d(bad))[0]
        xv = np.atleast_1d(x)[idx]
        raise NumericalError(
            f"tortoise inversion did not converge at x={xv!r} (residual {np.atleast_1d(resid)[idx]!r})"
        )
    return s


def horizon_gap(x, m=1.0):
    """Return ``r(x) - 2m`` with full relative accuracy."""
    _check_mass(m)
    with np.errstate(under="ignore"):
        u = np.exp(_log_gap(x, m))
    return _scalar_or_array(u, x)


def r_of_r_star(x, m=1.0):
    """Invert the tortoise map; returns the areal radius ``r > 2m``."""
    _check_mass(m)
    return _scalar_or_array(2 * m + np.asarray(horizon_gap(x, m)), x)


def background_fields(x, m=1.0):
    """Vectorised background: dict of arrays r, gap, N, mu, P, V, f."""
    _check_mass(m)
    x = np.asarray(x, dtype=float)
    u = np.asarray(horizon_gap(x, m), dtype=float)
    r = 2 * m + u
    N = u / r
    mu = 2 * m / r
    P = N / r**2
    V = (3 * mu - 2) / r
    f = 1 / (3 * m) - 1 / r
    return {"r_star": x, "r": r, "gap": u, "N": N, "mu": mu, "P": P, "V": V, "f": f}


def background_sample(x, m=1.0) -> BackgroundSample:
    """All background scalars at one tortoise point ``x``."""
    b = background_fields(float(x), m)
    return BackgroundSample(
        r=float(b["r"]),
        r_star=float(x),
        N=float(b["N"]),
        mu=float(b["mu"]),
        P=float(b["P"]),
        V=float(b["V"]),
        f=float(b["f"]),
    )


def kruskal_map(v, w, m=1.0):
    """Kruskal coordinates ``(t', x')`` of the null pair ``(v, w)``."""
    _check_mass(m)
    a = np.asarray(v, dtype=float) / (4 * m)
    b = -np.asarray(w, dtype=float) / (4 * m)
    if np.any(np.abs(a) > 700) or np.any(np.abs(b) > 700):
        raise OverflowError("null coordinate too large for the Kruskal map (|v|/4m or |w|/4m > 700)")
    vp = np.exp(a)
    wp = -np.exp(b)
    t = (vp + wp) / 2
    xp = (vp - wp) / 2
    if np.ndim(v) == 0 and np.ndim(w) == 0:
        return float(t), float(xp)
    return t, xp


def dP_dx(b):
    """P' = P V."""
    return b["P"] * b["V"]


def dV_dx(b):
    """V' = 2 P (1 - 3 mu)."""
    return 2 * b["P"] * (1 - 3 * b["mu"])


def d2P_dx2(b):
    """P'' = P V^2 + 2 P^2 (1 - 3 mu)."""
    return b["P"] * b["V"] ** 2 + 2 * b["P"] ** 2 * (1 - 3 * b["mu"])

"""Multiplier weights and dense-sampling checks of the pointwise inequalities.

Each check evaluates a margin (left side minus right side, possibly divided
by a factor known to be positive) on a sample set and reports its minimum,
the minimiser, and the largest difference quotient between neighbouring
samples as an empirical Lipschitz constant.  ``certified_min`` subtracts,
cell by cell, half the cell width times the largest nearby difference
quotient: an estimate of how low the margin can dip between samples.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .background import background_fields, d2P_dx2, dV_dx, r_star_of_gap, r_star_of_r

CHI1_BOUND = 2.0 + 1e-12
CHI2_BOUND = 9.85


# Bump function ---------------------------------------------------------------

def _phi_parts(y):
    """phi, phi', phi'' of phi(y) = exp(-1/y) for y > 0 (zero otherwise)."""
    y = np.asarray(y, dtype=float)
    pos = y > 0
    yy = np.where(pos, y, 1.0)
    # subnormal y overflows -1/y to -inf, and exp then gives the correct 0
    with np.errstate(under="ignore", over="ignore"):
        p0 = np.where(pos, np.exp(-1 / yy), 0.0)
        p1 = np.where(pos, np.exp(-1 / yy - 2 * np.log(yy)), 0.0)
        p2 = np.where(pos, np.exp(-1 / yy - 4 * np.log(yy)) * (1 - 2 * yy), 0.0)
    return p0, p1, p2


def smooth_step(y):
    """The transition s(y): 0 for y <= 0, 1 for y >= 1, and s, s', s''."""
    a0, a1, a2 = _phi_parts(y)
    b0, b1, b2 = _phi_parts(1 - np.asarray(y, dtype=float))
    # derivatives of B(y) = phi(1 - y)
    b1, b2 = -b1, b2
    d = a0 + b0
    s = a0 / d
    u = a1 * b0 - a0 * b1
    s1 = u / d**2
    du = a2 * b0 - a0 * b2
    s2 = (du * d - 2 * u * (a1 + b1)) / d**3
    return s, s1, s2


@dataclass(frozen=True)
class BumpFunction:
    """chi(x) = s(2 + x) s(2 - x): one on [-1, 1], zero outside (-2, 2)."""

    def derivatives(self, x):
        x = np.asarray(x, dtype=float)
        p, p1, p2 = smooth_step(2 + x)
        q, q1, q2 = smooth_step(2 - x)
        return p * q, p1 * q - p * q1, p2 * q - 2 * p1 * q1 + p * q2

    def __call__(self, x):
        return self.derivatives(x)[0]

    def scaled(self, x, a):
        """chi_a and the unscaled derivatives (chi')(x/a), (chi'')(x/a)."""
        return self.derivatives(np.asarray(x, dtype=float) / a)


CHI = BumpFunction()


@dataclass(frozen=True)
class MorawetzWeights:
    """h = (1 - delta) P chi_a / 4 and its r*-derivatives."""

    a: float
    delta: float

    def h_derivatives(self, x, b):
        c, c1, c2 = CHI.scaled(x, self.a)
        k = (1 - self.delta) / 4
        P, Pp, Ppp = b["P"], b["P"] * b["V"], d2P_dx2(b)
        h = k * P * c
        hp = k * (Pp * c + P * c1 / self.a)
        hpp = k * Ppp * c + 2 * k * Pp * c1 / self.a + k * P * c2 / self.a**2
        return h, hp, hpp

    def __call__(self, x, m=1.0):
        return self.h_derivatives(x, background_fields(x, m))[0]


@dataclass(frozen=True)
class HorizonWeight:
    """Near-horizon weight on r <= r1, cut off smoothly to zero on [r1, 1.2 r1].

    ``profile='lapse'`` (default): h = exp(kappa N), so h -> 1 at the horizon
    and h' = kappa mu N h / r.  ``profile='tortoise'``: h = (N / N(r1))**delta_H,
    the exact antiderivative of delta_H mu / r in r*, anchored at r1; it obeys
    h' = delta_H mu h / r but tends to 0 at the horizon.
    """

    r1: float
    m: float = 1.0
    profile: str = "lapse"
    kappa: float = 6.0
    delta_H: float = 0.5

    def __post_init__(self):
        if self.profile not in ("lapse", "tortoise"):
            raise ValueError("profile must be 'lapse' or 'tortoise'")
        if not self.r1 > 2 * self.m:
            raise ValueError("r1 must exceed 2m")

    def derivatives(self, x, b=None):
        """(h, dh/dr*) at tortoise points ``x``."""
        if b is None:
            b = background_fields(x, self.m)
        r, N, mu = b["r"], b["N"], b["mu"]
        width = 0.2 * self.r1
        s, s1, _ = smooth_step((r - self.r1) / width)
        cut, dcut_dr = 1 - s, -s1 / width
        if self.profile == "lapse":
            core = np.exp(self.kappa * N)
            dcore = self.kappa * mu * N / r * core
        else:
            n1 = 1 - 2 * self.m / self.r1
            core = (N / n1) ** self.delta_H
            dcore = self.delta_H * mu / r * core
        h = core * cut
        hp = dcore * cut + core * dcut_dr * N
        return h, hp

    def __call__(self, x):
        return self.derivatives(x)[0]


# Reports ---------------------------------------------------------------------

@dataclass
class InequalityReport:
    id: str
    params: dict
    domain: tuple
    n_samples: int
    min_margin: float
    argmin: float
    lipschitz_bound: float
    passed: bool
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"id": self.id, "params": self.params, "n_samples": self.n_samples,
               "min_margin": self.min_margin, "argmin": self.argmin,
               "lipschitz_bound": self.lipschitz_bound, "pass": self.passed,
               "domain": list(self.domain)}
        out.update(self.extra)
        return out


def _report(id_, params, z, margin, domain=None, extra=None, mask=None, variable="x"):
    z = np.asarray(z, dtype=float)
    margin = np.asarray(margin, dtype=float)
    idx = np.arange(z.size)
    if mask is not None:
        zs, ms, idx = z[mask], margin[mask], idx[mask]
    else:
        zs, ms = z, margin
    if zs.size == 0:
        raise ValueError(f"{id_}: empty scan")
    k = int(np.argmin(ms))
    # only neighbours in the original scan form cells (masks may cut holes)
    cell = np.diff(idx) == 1
    if np.any(cell):
        dz = np.diff(zs)
        q = np.where(cell, np.abs(np.diff(ms)) / dz, 0.0)
        lip = float(np.max(q))
        spacing = float(np.max(dz[cell]))
        # local bound per cell: largest quotient among the cell and its neighbours
        qloc = q.copy()
        qloc[1:] = np.maximum(qloc[1:], q[:-1])
        qloc[:-1] = np.maximum(qloc[:-1], q[1:])
        low = np.minimum(ms[:-1], ms[1:]) - 0.5 * qloc * dz
        cert = float(min(np.min(low[cell]), ms[k]))
    else:
        lip, spacing, cert = 0.0, 0.0, float(ms[k])
    info = {"variable": variable, "certified_min": cert, "max_spacing": spacing}
    if extra:
        info.update(extra)
    if domain is None:
        domain = (float(z[0]), float(z[-1]))
    return InequalityReport(id_, params, tuple(float(d) for d in domain), int(zs.size), float(ms[k]),
                            float(zs[k]), lip, bool(ms[k] > 0), info)


def g_poly(r, m=1.0):
    return 8 * r**3 - 66 * m * r**2 + 192 * m**2 * r - 180 * m**3


def g_prime(r, m=1.0):
    return 24 * (r**2 - 5.5 * m * r + 8 * m**2)


def check_g_positivity(m=1.0, r_range=None, n_samples=1_000_000) -> InequalityReport:
    """g(r) > 0 and g'(r) > 0 on the range (default [2m, 100m])."""
    lo, hi = r_range if r_range is not None else (2 * m, 100 * m)
    if lo < 2 * m:
        raise ValueError("range must lie in [2m, inf)")
    r = np.linspace(lo, hi, n_samples)
    g = g_poly(r, m)
    gp = g_prime(r, m)
    extra = {"g_at_2m": float(g_poly(2 * m, m)), "g_at_3m": float(g_poly(3 * m, m)),
             "min_g_prime": float(gp.min())}
    rep = _report("g_positivity", {"m": m}, r, g, (lo, hi), extra, variable="r")
    rep.passed = rep.passed and bool(gp.min() > 0)
    return rep


def pos_expression(r, m=1.0):
    """-4 V f - V^2 - 2 N (1 - 3 mu) / r^2 evaluated directly."""
    r = np.asarray(r, dtype=float)
    N = (r - 2 * m) / r
    mu = 2 * m / r
    V = (3 * mu - 2) / r
    f = 1 / (3 * m) - 1 / r
    return -4 * V * f - V**2 - 2 * N / r**2 * (1 - 3 * mu)


def check_pos_inequality(m=1.0, r_range=None, n_samples=200_000) -> InequalityReport:
    """Direct evaluation on log-spaced radii, cross-checked against g(r) / (3 m r^4)."""
    lo, hi = r_range if r_range is not None else (2 * m, 1e4 * m)
    if lo < 2 * m:
        raise ValueError("range must lie in [2m, inf)")
    r = np.geomspace(lo, hi, n_samples)
    direct = pos_expression(r, m)
    poly = g_poly(r, m) / (3 * m * r**4)
    rel = float(np.max(np.abs(direct - poly) / np.abs(poly)))
    limit = float(pos_expression(2 * m, m))
    extra = {"value_at_2m": limit, "expected_at_2m": 1 / (12 * m**2),
             "polynomial_max_rel_dev": rel}
    rep = _report("pos_inequality", {"m": m}, r, direct, (lo, hi), extra, variable="r")
    rep.passed = rep.passed and rel < 1e-9
    return rep


def weight_scan(a, m=1.0, n_core=100_001, n_tail=20_001):
    """Tortoise sample points: dense on |x| <= 2a + 10m, geometric tails to the far zone."""
    core = np.linspace(-2 * a - 10 * m, 2 * a + 10 * m, n_core)
    left = -(2 * a + 10 * m) - np.geomspace(1e-3 * m, 200 * m, n_tail)[::-1]
    right = (2 * a + 10 * m) + np.geomspace(1e-3 * m, 1e5 * m, n_tail)
    return np.concatenate([left, core[1:-1], right])


def weight_margins(x, b, a, delta, eps):
    """The four normalised margins and their masks."""
    c, c1, c2 = CHI.scaled(x, a)
    V, f, P, r = b["V"], b["f"], b["P"], b["r"]
    mVf = -V * f
    Vp = dV_dx(b)
    chi_terms = -(1 - delta) / (2 * a) * V * c1 - (1 - delta) / (4 * a**2) * c2
    plateau = np.abs(x) <= a
    with np.errstate(divide="ignore", invalid="ignore"):
        m1 = np.where(plateau, eps, eps + chi_terms / mVf)
    m2 = r * (-eps * V * f - P)
    m3 = -(1 - eps) * V * f - delta * P - (1 - delta) * (V**2 + Vp) / 4
    combined = (c * (mVf - delta * P - 0.25 * (1 - delta) * V**2 - 0.25 * (1 - delta) * Vp)
                + (1 - c) * (mVf - P) + chi_terms)
    m4 = r * combined
    return {"i": (m1, None), "ii": (m2, ~plateau), "iii": (m3, np.abs(x) < 2 * a), "iv": (m4, None)}


def check_multiplier_weights(a, delta, eps, m=1.0, scan=None, b=None) -> list:
    """Reports (i)-(iv); (iii) and (iv) carry the constants c3 and c4."""
    if not (a > 0 and 0 < delta < 0.5 and 0 < eps < 0.5):
        raise ValueError("need a > 0, 0 < delta < 1/2, 0 < eps < 1/2")
    x = weight_scan(a, m) if scan is None else np.asarray(scan, dtype=float)
    if b is None:
        b = background_fields(x, m)
    params = {"a": a, "delta": delta, "eps": eps, "m": m}
    mg = weight_margins(x, b, a, delta, eps)
    out = []
    for key, label in (("i", "weights_transition"), ("ii", "weights_exterior"),
                       ("iii", "weights_support"), ("iv", "weights_combined")):
        margin, mask = mg[key]
        rep = _report(label, params, x, margin, extra=None, mask=mask)
        if key == "iii":
            rep.extra["c3"] = rep.min_margin
        if key == "iv":
            rep.extra["c4"] = rep.min_margin
        out.append(rep)
    return out


@dataclass
class SearchSpec:
    a_values: tuple = (10.0, 20.0, 40.0, 80.0, 160.0, 320.0, 640.0)
    delta_values: tuple = (0.1, 0.05, 0.02, 0.01, 0.005)
    eps_values: tuple = (0.25, 0.2, 0.1, 0.05, 0.02)


@dataclass
class SearchResult:
    found: bool
    a: Optional[float]
    delta: Optional[float]
    eps: Optional[float]
    constants: dict
    reports: list
    tried: int


def find_admissible_parameters(m=1.0, search: SearchSpec = SearchSpec()) -> SearchResult:
    """First (a, delta, eps) in search order passing all four weight checks.

    ``a`` values are in units of m.  On exhaustion the reports with the best
    worst-case margin are returned.
    """
    best, best_score, tried = None, -np.inf, 0
    for a_unit in search.a_values:
        a = a_unit * m
        x = weight_scan(a, m)
        b = background_fields(x, m)
        for eps, delta in itertools.product(search.eps_values, search.delta_values):
            tried += 1
            reps = check_multiplier_weights(a, delta, eps, m, scan=x, b=b)
            if all(r.passed for r in reps):
                consts = {"c3": reps[2].extra["c3"], "c4": reps[3].extra["c4"]}
                return SearchResult(True, a, delta, eps, consts, reps, tried)
            score = min(r.min_margin for r in reps)
            if score > best_score:
                best, best_score = reps, score
    return SearchResult(False, None, None, None, {}, best or [], tried)


def horizon_scan(r1, m=1.0, n_samples=200_001):
    """Tortoise samples from very near the horizon up to r1."""
    x_lo = r_star_of_gap(1e-12 * m, m)
    x_hi = r_star_of_r(r1, m)
    return np.linspace(x_lo, x_hi, n_samples)


def check_horizon_weight(r1, m=1.0, n_samples=200_001, profile="lapse", kappa=6.0, delta_H=0.5) -> list:
    """Positivity, monotonicity and the two coercivity conditions on (2m, r1], plus h -> 1."""
    w = HorizonWeight(r1=r1, m=m, profile=profile, kappa=kappa, delta_H=delta_H)
    x = horizon_scan(r1, m, n_samples)
    b = background_fields(x, m)
    h, hp = w.derivatives(x, b)
    N, mu, r = b["N"], b["mu"], b["r"]
    params = {"r1": r1, "m": m, "profile": profile}
    params.update({"kappa": kappa} if profile == "lapse" else {"delta_H": delta_H})
    reps = [
        _report("horizon_h_positive", params, x, h),
        _report("horizon_h_increasing", params, x, hp),
        _report("horizon_log_slope", params, x, mu / r - hp / h),
        _report("horizon_coercive", params, x, mu * (hp / (N * h) - 3 / r)),
    ]
    reps[2].extra["c_a"] = reps[2].min_margin
    reps[3].extra["c_b"] = reps[3].min_margin
    x_far = r_star_of_gap(1e-200 * m, m)
    h_far = float(w.derivatives(np.array([x_far]))[0][0])
    gap = abs(h_far - 1.0)
    lim = InequalityReport("horizon_limit", params, (float(x_far), float(x_far)), 1, 1e-6 - gap,
                           float(x_far), 0.0, bool(gap < 1e-6), {"h_at_far_left": h_far})
    reps.append(lim)
    return reps

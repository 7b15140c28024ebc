"""Decay checks on recorded run output.

Every check reports an empirical constant ``C_emp``, the supremum of a
weighted and normalized series.  A finite run cannot show a t -> infinity
bound, so "bounded" means: C_emp moves by less than ``STABILITY`` when the
series is extended from half its time span to the full span (or, across two
runs, when t_end doubles).
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import NumericalError
from .evolve import Observer
from .grid import FieldState, TortoiseGrid

STABILITY = 0.05


@dataclass(frozen=True)
class TimeSeries:
    """Ordered ``(parameter, value)`` pairs; ``time`` is the coordinate time of each sample."""

    parameter: np.ndarray
    value: np.ndarray
    name: str = "series"
    meta: dict = field(default_factory=dict)
    time: Optional[np.ndarray] = None

    def __post_init__(self):
        p = np.asarray(self.parameter, dtype=float)
        v = np.asarray(self.value, dtype=float)
        if p.shape != v.shape or p.ndim != 1:
            raise ValueError(f"{self.name}: parameter and value must be 1-d arrays of equal length")
        if p.size > 1 and np.any(np.diff(p) <= 0):
            raise ValueError(f"{self.name}: parameter must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError(f"{self.name}: non-finite values")
        object.__setattr__(self, "parameter", p)
        object.__setattr__(self, "value", v)
        t = p if self.time is None else np.asarray(self.time, dtype=float)
        if t.shape != p.shape:
            raise ValueError(f"{self.name}: time must match parameter")
        object.__setattr__(self, "time", t)

    def __len__(self):
        return self.parameter.size

    def prefix(self, t_max: float) -> "TimeSeries":
        keep = self.time <= t_max
        return TimeSeries(self.parameter[keep], self.value[keep], self.name, dict(self.meta), self.time[keep])


@dataclass
class BoundCheckReport:
    id: str
    normalizer: float
    c_emp: float
    sup_location: float
    n_samples: int
    c_emp_half: Optional[float]
    relative_change: Optional[float]
    passed: bool
    verdict: str
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {k: (float(v) if isinstance(v, (np.floating,)) else v) for k, v in asdict(self).items()}


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    residual: float
    window: tuple
    n_points: int


def _normalized_sup(param, weighted, normalizer):
    if weighted.size == 0:
        raise ValueError("no samples in the requested range")
    k = int(np.argmax(weighted))
    top = float(weighted[k])
    if normalizer == 0:
        if top == 0:
            return 0.0, float(param[k])
        raise NumericalError("zero normalizer with nonzero weighted values")
    return top / normalizer, float(param[k])


def relative_change(c_short: float, c_long: float) -> float:
    """|C_long - C_short| / C_long, with 0 when both vanish."""
    if c_long == 0 and c_short == 0:
        return 0.0
    return abs(c_long - c_short) / max(abs(c_long), abs(c_short))


def _verdict(id_, normalizer, c, loc, n, c_half, extra=None):
    change = None if c_half is None else relative_change(c_half, c)
    if change is None:
        ok, verdict = True, "bounded (no stability data)"
    elif change < STABILITY:
        ok, verdict = True, f"bounded with C_emp={c!r}"
    else:
        ok, verdict = False, "unbounded-trend"
    return BoundCheckReport(id_, float(normalizer), float(c), float(loc), int(n), c_half, change, ok, verdict,
                            extra or {})


def compare_runs(short: BoundCheckReport, long: BoundCheckReport) -> BoundCheckReport:
    """Re-judge ``long`` against the same check on a run with half the final time."""
    rep = _verdict(long.id, long.normalizer, long.c_emp, long.sup_location, long.n_samples, short.c_emp,
                   dict(long.extra))
    rep.extra["compared_with"] = "baseline run"
    rep.extra["nested_half_c_emp"] = long.c_emp_half
    if "plateau" in rep.extra:
        rep.extra["plateau"] = long.extra["plateau"]
    return rep


def check_local_energy_decay(series: TimeSeries, normalizer: float, t_min: float = 10.0, m: float = 1.0,
                             id_: str = "local_energy") -> BoundCheckReport:
    """sup_t t * E_loc(t) / normalizer over t >= t_min (in units of m).

    The stability figure compares the sup over the first half of the time
    span with the sup over all of it.
    """
    t, e = series.parameter, series.value
    keep = t >= t_min * m
    if not np.any(keep):
        raise ValueError(f"{series.name}: no samples with t >= {t_min * m!r}")
    tt, ww = t[keep], t[keep] * e[keep]
    c, loc = _normalized_sup(tt, ww, normalizer)
    half = tt <= 0.5 * t[-1]
    c_half = _normalized_sup(tt[half], ww[half], normalizer)[0] if np.any(half) else None
    return _verdict(id_, normalizer, c, loc, int(keep.sum()), c_half, {"t_min": t_min * m, "t_end": float(t[-1])})


def check_pointwise_decay(series: TimeSeries, normalizer: float, id_: str = "pointwise",
                          t_end: Optional[float] = None) -> BoundCheckReport:
    """sup sqrt(max(1, p)) * Q(p) / normalizer over slice parameters p.

    ``series.time`` holds the time at which each slice maximum was attained;
    the stability figure uses the samples taken up to half of ``t_end``.
    """
    if len(series) == 0:
        raise ValueError(f"{series.name}: region never sampled")
    p, q = series.parameter, series.value
    weighted = np.sqrt(np.maximum(1.0, p)) * q
    c, loc = _normalized_sup(p, weighted, normalizer)
    t_end = float(series.time.max()) if t_end is None else t_end
    half = series.time <= 0.5 * t_end
    c_half = _normalized_sup(p[half], weighted[half], normalizer)[0] if np.any(half) else None
    return _verdict(id_, normalizer, c, loc, len(series), c_half, {"t_end": t_end})


def fit_power_law(series: TimeSeries, window: Optional[tuple] = None) -> ExponentFit:
    """Least-squares slope of log(value) against log(parameter) inside ``window``."""
    p, v = series.parameter, series.value
    lo, hi = window if window is not None else (p[0], p[-1])
    keep = (p >= lo) & (p <= hi)
    if keep.sum() < 10:
        raise ValueError(f"{series.name}: need at least 10 points in the fit window, got {int(keep.sum())}")
    if np.any(v[keep] <= 0) or np.any(p[keep] <= 0):
        raise ValueError(f"{series.name}: power-law fit needs positive parameters and values")
    X, Y = np.log(p[keep]), np.log(v[keep])
    (slope, icpt), res, *_ = np.polyfit(X, Y, 1, full=True)
    resid = float(math.sqrt(res[0])) if len(res) else 0.0
    return ExponentFit(float(slope), float(icpt), resid, (float(lo), float(hi)), int(keep.sum()))


def check_morawetz_ratio(series: TimeSeries, energy0: float, id_: str = "morawetz") -> BoundCheckReport:
    """sup_t cumulative(t) / E(0), with a plateau test over the last half of the run."""
    t, cum = series.parameter, series.value
    if len(series) == 0:
        raise ValueError(f"{series.name}: empty series")
    if energy0 == 0:
        if np.any(cum != 0):
            raise NumericalError("zero initial energy but nonzero Morawetz bulk: inconsistent input")
        return _verdict(id_, 0.0, 0.0, float(t[-1]), len(series), 0.0, {"plateau": True})
    ratio = cum / energy0
    k = int(np.argmax(ratio))
    c = float(ratio[k])
    half = t <= 0.5 * t[-1]
    c_half = float(ratio[half].max()) if np.any(half) else None
    rep = _verdict(id_, energy0, c, float(t[k]), len(series), c_half)
    rep.extra["plateau"] = rep.passed
    return rep


# Pointwise sampling along null slices ---------------------------------------

@dataclass(frozen=True)
class PointwiseRegion:
    """Nodes with ``r_lo <= r <= r_hi`` (in units of m); ``quantity`` 'far' uses |W^2-1|/r^2, 'near' |W^2-1|."""

    name: str
    family: str
    r_lo: float
    r_hi: float
    quantity: str

    def __post_init__(self):
        if self.family not in ("v", "w"):
            raise ValueError("family must be 'v' or 'w'")
        if self.quantity not in ("far", "near"):
            raise ValueError("quantity must be 'far' or 'near'")


DEFAULT_REGIONS = (
    PointwiseRegion("pointwise", "v", 3.0, math.inf, "far"),
    PointwiseRegion("pointwise_w", "w", 3.0, math.inf, "far"),
    PointwiseRegion("pointwise_horizon", "v", 2.0, 2.1, "near"),
)


class PointwiseObserver(Observer):
    """Slice suprema Q(p) = max |W^2-1| (/r^2) over p-bins of width ``bin_width``.

    Only nodes farther than ``t + margin`` from both grid edges are sampled,
    so the boundary treatment cannot have reached them.  Each bin keeps the
    point where its maximum was attained.
    """

    name = "pointwise"

    def __init__(self, regions: Sequence[PointwiseRegion] = DEFAULT_REGIONS, bin_width: float = 0.5,
                 margin: float = 5.0):
        super().__init__()
        if not bin_width > 0:
            raise ValueError("bin_width must be positive")
        self.regions = tuple(regions)
        self.bin_width = bin_width
        self.margin = margin
        self.bins: dict = {reg.name: {} for reg in self.regions}
        self._masks: dict = {}

    def _mask(self, reg, grid):
        key = (reg.name, id(grid))
        if key not in self._masks:
            m = grid.mass
            self._masks[key] = (grid.r >= reg.r_lo * m) & (grid.r <= reg.r_hi * m)
        return self._masks[key]

    def observe(self, state: FieldState, grid: TortoiseGrid) -> None:
        self.times.append(state.t)
        t = state.t
        clean = (grid.x >= grid.x_min + t + self.margin) & (grid.x <= grid.x_max - t - self.margin)
        dev = np.abs(state.W**2 - 1)
        for reg in self.regions:
            idx = np.flatnonzero(clean & self._mask(reg, grid))
            if idx.size == 0:
                continue
            q = dev[idx] / grid.r[idx] ** 2 if reg.quantity == "far" else dev[idx]
            p = t + grid.x[idx] if reg.family == "v" else t - grid.x[idx]
            keys = np.floor(p / self.bin_width).astype(np.int64)
            table = self.bins[reg.name]
            # keys are monotone in the node index, so bins are contiguous runs
            starts = np.flatnonzero(np.r_[True, keys[1:] != keys[:-1]])
            ends = np.r_[starts[1:], keys.size]
            for s, e in zip(starts, ends):
                j = s + int(np.argmax(q[s:e]))
                k = int(keys[s])
                old = table.get(k)
                if old is None or q[j] > old[3]:
                    i = idx[j]
                    table[k] = (t + grid.x[i], t - grid.x[i], float(grid.r[i]), float(q[j]), t)

    def record(self):
        out = {}
        for reg in self.regions:
            rows = [self.bins[reg.name][k] for k in sorted(self.bins[reg.name])]
            arr = np.array(rows, dtype=float).reshape(-1, 5)
            out[reg.name] = {"v": arr[:, 0], "w": arr[:, 1], "r": arr[:, 2], "Q": arr[:, 3], "t": arr[:, 4],
                             "family": reg.family}
        return out


def pointwise_series(rows: dict, name: str) -> TimeSeries:
    """Slice-maximum rows (columns v, w, r, Q[, t]) as a series in the slice parameter."""
    fam = rows.get("family", "w" if name.endswith("_w") else "v")
    p = np.asarray(rows[fam], dtype=float)
    q = np.asarray(rows["Q"], dtype=float)
    t = np.asarray(rows["t"], dtype=float) if "t" in rows else 0.5 * (np.asarray(rows["v"]) + np.asarray(rows["w"]))
    order = np.argsort(p, kind="stable")
    return TimeSeries(p[order], q[order], name, {"family": fam}, t[order])

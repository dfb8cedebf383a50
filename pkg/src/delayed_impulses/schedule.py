"""Impulse time sequences, counting and dwell-time conditions.

``N(t, s)`` counts impulse times in the half-open interval ``(s, t]``.  All
suprema over pairs ``t0 <= s < t <= horizon`` are taken over event-aligned
candidates: the left-hand sides are piecewise linear in ``s`` and ``t`` with
breaks only at impulse times, so each endpoint sits either at an event or
infinitesimally before it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, NamedTuple

import numpy as np


class HorizonError(ValueError):
    """Query beyond the declared horizon of an explicit schedule."""


class ImpulseSchedule:
    """Base class.  Subclasses provide :meth:`times_until`."""

    horizon: float = math.inf
    periodic: bool = False

    def times_until(self, t: float) -> np.ndarray:
        raise NotImplementedError

    def times_between(self, a: float, b: float) -> np.ndarray:
        """Impulse times in ``(a, b]``."""
        ts = self.times_until(b)
        return ts[ts > a]

    def count(self, s: float, t: float) -> int:
        return count_impulses(self, s, t)

    def min_gap(self) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


class PeriodicSchedule(ImpulseSchedule):
    """Times ``origin + k * period + offset`` for ``k = 0, 1, 2, ...``.

    Offsets lie in ``[0, period]`` and are strictly increasing; ``0`` and
    ``period`` may not both appear.
    """

    periodic = True

    def __init__(self, offsets: Iterable[float], period: float, origin: float = 0.0):
        offs = np.asarray(sorted(float(o) for o in offsets), dtype=float)
        period = float(period)
        if not period > 0:
            raise ValueError("period must be positive")
        if offs.size == 0:
            raise ValueError("a periodic pattern needs at least one offset")
        if np.any(np.diff(offs) <= 0):
            raise ValueError("offsets must be distinct")
        if offs[0] < 0 or offs[-1] > period:
            raise ValueError("offsets must lie in [0, period]")
        if offs[0] == 0.0 and offs[-1] == period:
            raise ValueError("offsets 0 and period coincide across periods")
        self.offsets = offs
        self.period = period
        self.origin = float(origin)

    def __repr__(self):
        return f"PeriodicSchedule(offsets={self.offsets.tolist()}, period={self.period}, origin={self.origin})"

    @property
    def per_period(self) -> int:
        return int(self.offsets.size)

    def times_until(self, t: float) -> np.ndarray:
        if t < self.origin:
            return np.empty(0)
        kmax = int(math.floor((t - self.origin) / self.period)) + 1
        k = np.arange(kmax + 1, dtype=float)
        ts = (self.origin + k[:, None] * self.period + self.offsets[None, :]).ravel()
        return ts[ts <= t]

    def min_gap(self) -> float:
        gaps = np.diff(np.concatenate((self.offsets, [self.offsets[0] + self.period])))
        return float(gaps.min())

    def average_interval(self) -> float:
        return self.period / self.per_period

    def to_dict(self) -> dict:
        return {"pattern": {"offsets": self.offsets.tolist(), "period": self.period, "origin": self.origin}}


class ExplicitSchedule(ImpulseSchedule):
    """Finite list of impulse times valid up to ``horizon``."""

    def __init__(self, times: Iterable[float], horizon: float | None = None):
        ts = np.asarray([float(t) for t in times], dtype=float)
        if ts.ndim != 1:
            raise ValueError("times must be a flat list")
        if np.any(np.diff(ts) <= 0):
            raise ValueError("impulse times must be strictly increasing")
        if horizon is None:
            horizon = float(ts[-1]) if ts.size else 0.0
        if ts.size and ts[-1] > horizon:
            raise ValueError("impulse times exceed the declared horizon")
        self.times = ts
        self.horizon = float(horizon)

    def __repr__(self):
        return f"ExplicitSchedule(times={self.times.tolist()}, horizon={self.horizon})"

    def times_until(self, t: float) -> np.ndarray:
        if t > self.horizon:
            raise HorizonError(f"time {t} beyond schedule horizon {self.horizon}")
        return self.times[self.times <= t]

    def min_gap(self) -> float:
        if self.times.size < 2:
            return math.inf
        return float(np.diff(self.times).min())

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "horizon": self.horizon}


def schedule_from_dict(data: dict) -> ImpulseSchedule:
    if "pattern" in data:
        p = data["pattern"]
        return PeriodicSchedule(p["offsets"], p["period"], p.get("origin", 0.0))
    if "times" in data:
        return ExplicitSchedule(data["times"], data.get("horizon"))
    raise ValueError("schedule needs either a 'pattern' or a 'times' section")


def uniform_schedule(period: float, origin: float = 0.0) -> PeriodicSchedule:
    return PeriodicSchedule([period], period, origin)


def count_impulses(sched: ImpulseSchedule, s: float, t: float) -> int:
    """``N(t, s)``: number of impulse times in ``(s, t]``."""
    if t < s:
        raise ValueError("count_impulses needs t >= s")
    if t == s:
        return 0
    ts = sched.times_until(t)
    return int(ts.size - np.searchsorted(ts, s, side="right"))


@dataclass(frozen=True)
class WindowCounts:
    counts: list[tuple[int, int]]
    supremum: int
    horizon_limited: bool


def window_counts(sched: ImpulseSchedule, tau: float, horizon: float) -> WindowCounts:
    """``N(t_k, t_k - tau)`` for each impulse ``t_k <= horizon``.

    For periodic patterns ``supremum`` is exact over all ``k``: windows near
    the origin see a subset of the steady-state pattern, so scanning up to
    the first fully periodic window suffices.
    """
    ts = sched.times_until(horizon)
    if ts.size == 0:
        raise ValueError("horizon covers no impulse")
    counts = _windows(ts, tau)
    rows = [(k + 1, int(n)) for k, n in enumerate(counts)]
    if sched.periodic:
        reach = sched.origin + (math.ceil(tau / sched.period) + 2) * sched.period
        steady = _windows(sched.times_until(reach), tau)
        return WindowCounts(rows, int(max(steady.max(), counts.max())), False)
    return WindowCounts(rows, int(counts.max()), True)


def _windows(ts: np.ndarray, tau: float) -> np.ndarray:
    lo = np.searchsorted(ts, ts - tau, side="right")
    return np.arange(1, ts.size + 1) - lo


@dataclass(frozen=True)
class AdtParams:
    t_star: float
    n_star: float

    def __post_init__(self):
        if not self.t_star > 0:
            raise ValueError("t_star must be positive")
        if self.n_star < 0:
            raise ValueError("n_star must be nonnegative")


class Witness(NamedTuple):
    """Pair attaining a supremum; ``*_before`` marks a left-limit endpoint."""

    s: float
    t: float
    s_before: bool
    t_before: bool


@dataclass(frozen=True)
class DwellVerdict:
    holds: bool
    worst_slack: float
    witness: Witness | None
    horizon_limited: bool = False


def pair_supremum(sched: ImpulseSchedule, t0: float, horizon: float,
                  a: float, b: float) -> tuple[float, Witness | None]:
    """``sup a*N(t, s) + b*(t - s)`` over ``t0 <= s < t <= horizon``.

    Endpoint candidates are every event ``P`` in ``{t0} | impulses | {horizon}``
    taken at ``P`` or at ``P^-``; ``s = t0^-`` is excluded.  A sweep in
    increasing ``(P, side)`` order keeps the best ``s`` seen so far.  The
    degenerate limit of a vanishing empty window contributes 0.
    """
    if not horizon > t0:
        raise ValueError("horizon must exceed t0")
    imp = sched.times_until(horizon)
    imp = imp[imp > t0]
    pts = np.unique(np.concatenate(([t0], imp, [horizon])))
    cnt_le = np.searchsorted(imp, pts, side="right")
    cnt_lt = np.searchsorted(imp, pts, side="left")

    best_s = -math.inf
    best_s_at: tuple[float, bool] | None = None
    sup = 0.0
    wit: Witness | None = None
    for p, le, lt in zip(pts.tolist(), cnt_le.tolist(), cnt_lt.tolist()):
        for before, cnt in ((True, lt), (False, le)):
            if before and p == t0:
                continue
            if best_s_at is not None:
                val = a * cnt + b * p + best_s
                if val > sup:
                    sup = val
                    wit = Witness(best_s_at[0], p, best_s_at[1], before)
            cand = -a * cnt - b * p
            if cand > best_s:
                best_s = cand
                best_s_at = (p, before)
    return sup, wit


def _round_off(adt: AdtParams, t0: float, horizon: float) -> float:
    """Allowance for rounding in ``(t - s)/T*`` when a pair meets the bound exactly."""
    return 1e-12 * max(1.0, adt.n_star, (horizon - t0) / adt.t_star)


def check_adt(sched: ImpulseSchedule, adt: AdtParams, t0: float, horizon: float) -> DwellVerdict:
    """``N(t, s) <= (t - s)/T* + N*`` for all ``t0 <= s < t <= horizon``."""
    sup, wit = pair_supremum(sched, t0, horizon, 1.0, -1.0 / adt.t_star)
    slack = sup - adt.n_star
    return DwellVerdict(slack <= _round_off(adt, t0, horizon), slack, wit, not sched.periodic)


def check_reverse_adt(sched: ImpulseSchedule, adt: AdtParams, t0: float, horizon: float) -> DwellVerdict:
    """``N(t, s) >= (t - s)/T* - N*`` for all ``t0 <= s < t <= horizon``."""
    sup, wit = pair_supremum(sched, t0, horizon, -1.0, 1.0 / adt.t_star)
    slack = sup - adt.n_star
    return DwellVerdict(slack <= _round_off(adt, t0, horizon), slack, wit, not sched.periodic)


def periodic_drift(sched: PeriodicSchedule, sigma: float, rate: float) -> float:
    """Per-period growth of ``-sigma*N - rate*(t - s)``."""
    return -sigma * sched.per_period - rate * sched.period


def minimal_mu(sched: ImpulseSchedule, sigma: float, c: float, lam: float,
               t0: float, horizon: float) -> float:
    """Least ``mu >= 0`` with ``-sigma*N(t,s) - (c-lam)(t-s) <= mu`` on the horizon.

    Returns ``inf`` for a periodic pattern whose per-period drift is positive,
    since the supremum then grows without bound.
    """
    rate = c - lam
    if sched.periodic:
        drift = periodic_drift(sched, sigma, rate)
        scale = abs(sigma) * sched.per_period + abs(rate) * sched.period
        if drift > 1e-12 * scale:
            return math.inf
    sup, _ = pair_supremum(sched, t0, horizon, -sigma, -rate)
    return max(0.0, sup)

"""Method-of-steps RK4 for impulsive delay systems.

Steps run on a uniform grid merged with the impulse times, so every ``t_k``
is a node.  Delayed reads inside a step are served from the stored solution
by linear interpolation; reads that fall inside the step being computed use
the Euler predictor ``x_n + (q - t_n) * k1``.  At ``t_k`` the jump map sees the
``x_{t_k^-}`` window and its output is added, not integrated.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import SNAP_TOL, CoverageError, HistoryFunction, PiecewiseLinear, SystemDefinition, Trajectory
from .schedule import ImpulseSchedule

DIVERGENCE_LIMIT = 1e12


class DivergenceError(RuntimeError):
    def __init__(self, t: float, message: str = ""):
        super().__init__(message or f"solution diverged at t = {t!r}")
        self.t = t


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class SimConfig:
    base_step: float
    t_end: float
    record_stride: int = 1

    def __post_init__(self):
        if not self.base_step > 0:
            raise ValueError("base_step must be positive")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


class _Buffer:
    """Growing node store: times, right values, left limits."""

    __slots__ = ("ts", "xs", "xls")

    def __init__(self, phi: HistoryFunction, t0: float):
        self.ts = (phi.grid + t0).tolist()
        self.ts[-1] = t0
        self.xs = list(phi.values)
        self.xls = list(phi.left_values)

    def _snap(self, q: float) -> int | None:
        """Index of a stored node within rounding distance of ``q``."""
        ts = self.ts
        eps = SNAP_TOL * max(1.0, abs(q))
        i = bisect_left(ts, q - eps)
        if i < len(ts) and ts[i] <= q + eps:
            return i
        return None

    def value(self, q: float) -> np.ndarray:
        ts = self.ts
        j = self._snap(q)
        if j is not None:
            return self.xs[j]
        i = bisect_right(ts, q) - 1
        if i < 0:
            raise CoverageError(f"read at {q} precedes the initial history")
        if i == len(ts) - 1:
            return self.xs[i]
        w = (q - ts[i]) / (ts[i + 1] - ts[i])
        return self.xs[i] + w * (self.xls[i + 1] - self.xs[i])

    def left(self, q: float) -> np.ndarray:
        ts = self.ts
        j = self._snap(q)
        if j is not None:
            return self.xls[j]
        i = bisect_left(ts, q)
        if i >= len(ts):
            return self.xs[-1]
        if i == 0:
            raise CoverageError(f"read at {q} precedes the initial history")
        w = (q - ts[i - 1]) / (ts[i] - ts[i - 1])
        return self.xs[i - 1] + w * (self.xls[i] - self.xs[i - 1])

    def integral(self, a: float, b: float) -> np.ndarray:
        ts = self.ts
        lo = bisect_right(ts, a)
        hi = bisect_left(ts, b)
        grid = [a] + ts[lo:hi] + [b]
        right = [self.value(a)] + self.xs[lo:hi]
        left = self.xls[lo:hi] + [self.left(b)]
        dt = np.diff(grid)
        return 0.5 * (dt @ (np.asarray(right) + np.asarray(left)))


class _LiveWindow:
    """``x_t`` during integration; offset 0 is the stage state ``y``.

    Reads past the last stored node ``t_n`` use the step's Euler predictor.
    With ``from_left`` set (the stage at the end of a step), stored reads
    take left limits, so a delayed read landing exactly on a past jump sees
    the branch the step integrated along.
    """

    __slots__ = ("buf", "t", "y", "tau", "tn", "xn", "k1", "pre_jump", "_left0", "from_left")

    def __init__(self, buf: _Buffer, t: float, y: np.ndarray, tau: float,
                 tn: float, xn: np.ndarray, k1, pre_jump: bool = False, left0=None,
                 from_left: bool = False):
        self.buf = buf
        self.t = t
        self.y = y
        self.tau = tau
        self.tn = tn
        self.xn = xn
        self.k1 = k1
        self.pre_jump = pre_jump
        self._left0 = left0
        self.from_left = from_left

    @property
    def current(self) -> np.ndarray:
        return self.y

    def _at(self, q: float) -> np.ndarray:
        if q <= self.tn:
            return self.buf.left(q) if self.from_left else self.buf.value(q)
        return self.xn + (q - self.tn) * self.k1

    def __call__(self, s: float) -> np.ndarray:
        if s == 0.0:
            return self.y
        if not -self.tau <= s < 0.0:
            raise CoverageError(f"offset {s} outside [-{self.tau}, 0]")
        return self._at(self.t + s)

    def left(self, s: float) -> np.ndarray:
        if s == 0.0:
            return self._left0 if self._left0 is not None else self.y
        q = self.t + s
        if q <= self.tn:
            return self.buf.left(q)
        return self._at(q)

    def integral(self, lo: float | None = None, hi: float = 0.0) -> np.ndarray:
        lo = -self.tau if lo is None else lo
        a, b = self.t + lo, self.t + hi
        if b <= self.tn or self.t == self.tn:
            return self.buf.integral(a, b)
        # stored part up to t_n, then the straight segment to the stage state
        head = self.buf.integral(a, self.tn) if a < self.tn else 0.0
        end = self.y if hi == 0.0 else self._at(b)
        start = self.xn if a <= self.tn else self._at(a)
        return head + 0.5 * (b - max(a, self.tn)) * (start + end)


def _absorb(base: np.ndarray, special: np.ndarray, h: float, keep_first: bool) -> np.ndarray:
    """Merge ``special`` into ``base``, dropping base points within ``1e-9 h`` of one."""
    if special.size == 0:
        return base
    idx = np.searchsorted(special, base)
    near = np.zeros(base.size, dtype=bool)
    for j in (idx - 1, idx):
        ok = (j >= 0) & (j < special.size)
        near[ok] |= np.abs(special[j[ok]] - base[ok]) <= 1e-9 * h
    if keep_first:
        near[0] = False
    return np.union1d(base[~near], special)


def step_grid(t0: float, t_end: float, h: float, events: np.ndarray,
              breakpoints: np.ndarray | None = None) -> np.ndarray:
    """Uniform grid merged with event times and breakpoints.

    Grid points within ``1e-9 h`` of an event are absorbed by the event;
    breakpoints (where a delayed read crosses a jump) are absorbed by events
    and absorb nearby uniform points in turn.
    """
    n = int(math.floor((t_end - t0) / h + 1e-9))
    base = t0 + h * np.arange(n + 1)
    if t_end - base[-1] > 1e-9 * h:
        base = np.append(base, t_end)
    else:
        base[-1] = t_end
    ev = events[(events > t0) & (events <= t_end)]
    if breakpoints is not None and breakpoints.size:
        bp = np.unique(breakpoints[(breakpoints > t0) & (breakpoints < t_end)])
        bp = bp[np.abs(bp - base[0]) > 1e-9 * h]
        if ev.size:
            bp = _absorb(bp, ev, h, False)
            bp = bp[~np.isin(bp, ev)]
        base = _absorb(base, bp, h, True)
    return _absorb(base, ev, h, True)


def simulate(sys: SystemDefinition, sched: ImpulseSchedule | None, phi: HistoryFunction,
             t0: float, cfg: SimConfig) -> Trajectory:
    """Integrate the impulsive delay system from the history ``phi`` at ``t0``."""
    tau = sys.tau
    if abs(phi.tau - tau) > 1e-12 * tau:
        raise ValueError(f"history spans {phi.tau}, system delay is {tau}")
    if phi.dimension != sys.dimension:
        raise ValueError("history dimension does not match the system")
    if not cfg.t_end > t0:
        raise ValueError("t_end must exceed t0")
    h = cfg.base_step
    if h > tau / 4 * (1 + 1e-12):
        raise ValueError(f"base_step {h} exceeds tau/4 = {tau / 4}")

    events = np.empty(0)
    if sched is not None:
        events = sched.times_until(cfg.t_end)
        gap = sched.min_gap()
        if 0 < gap < math.inf and h > gap / 2 * (1 + 1e-12):
            raise ValueError(f"base_step {h} exceeds half the minimal impulse gap {gap}")
    if events.size and events.min() < t0:
        raise ScheduleError(f"impulse time {events.min()} precedes t0 = {t0}")
    event_set = set(events.tolist())

    buf = _Buffer(phi, t0)
    f, g = sys.field_f, sys.jump_g
    impulse_nodes: list[float] = []

    def jump(t: float) -> None:
        xl = buf.xls[-1]
        win = _LiveWindow(buf, t, xl, tau, t, xl, None, pre_jump=True, left0=xl)
        dx = np.asarray(g(t, win), dtype=float)
        xr = xl + dx
        _guard(t, xr)
        buf.xs[-1] = xr
        impulse_nodes.append(t)

    if t0 in event_set:
        jump(t0)

    kinks = np.concatenate(([t0], events, t0 + phi.grid[phi.jump_mask]))
    lags = np.asarray(sys.lags, dtype=float)
    grid = step_grid(t0, cfg.t_end, h, events, (kinks[:, None] + lags[None, :]).ravel())
    ts, xs, xls = buf.ts, buf.xs, buf.xls
    for t_next in grid[1:].tolist():
        tn = ts[-1]
        xn = xs[-1]
        dt = t_next - tn
        k1 = np.asarray(f(tn, _LiveWindow(buf, tn, xn, tau, tn, xn, None)), dtype=float)
        tm = tn + 0.5 * dt
        y2 = xn + 0.5 * dt * k1
        k2 = f(tm, _LiveWindow(buf, tm, y2, tau, tn, xn, k1))
        y3 = xn + 0.5 * dt * k2
        k3 = f(tm, _LiveWindow(buf, tm, y3, tau, tn, xn, k1))
        y4 = xn + dt * k3
        k4 = f(t_next, _LiveWindow(buf, t_next, y4, tau, tn, xn, k1, from_left=True))
        x_new = xn + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
        _guard(t_next, x_new)
        ts.append(t_next)
        xs.append(x_new)
        xls.append(x_new)
        if t_next in event_set:
            jump(t_next)

    times = np.asarray(ts)
    vals = np.vstack(xs)
    lefts = np.vstack(xls)
    if cfg.record_stride > 1:
        n_hist = phi.grid.size
        keep = np.zeros(times.size, dtype=bool)
        keep[:n_hist] = True
        sol = np.arange(n_hist - 1, times.size)
        keep[sol[::cfg.record_stride]] = True
        keep[-1] = True
        keep[np.isin(times, np.asarray(impulse_nodes))] = True
        times, vals, lefts = times[keep], vals[keep], lefts[keep]
    path = PiecewiseLinear(times, vals, lefts)
    return Trajectory(
        t0=t0, tau=tau, path=path, impulse_times=np.asarray(impulse_nodes),
        initial_history=phi, meta={"base_step": h, "system": sys.name},
    )


def _guard(t: float, x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > DIVERGENCE_LIMIT:
        raise DivergenceError(t)


def distributed_integral(traj: Trajectory, t: float, tau: float) -> np.ndarray:
    """Trapezoid ``int_{t-tau}^t x(s) ds`` over stored nodes, exact at jumps."""
    return traj.integral(t - tau, t)


def convergence_probe(sys: SystemDefinition, sched: ImpulseSchedule | None, phi: HistoryFunction,
                      t0: float, t_end: float, steps: Sequence[float]) -> list[float]:
    """Observed orders at ``t_end`` from runs at decreasing step sizes.

    Errors are measured against the finest run; the order between runs ``i``
    and ``i+1`` is ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``.
    """
    steps = sorted(steps, reverse=True)
    if len(steps) < 3:
        raise ValueError("need at least three step sizes")
    finals = [simulate(sys, sched, phi, t0, SimConfig(h, t_end)).states[-1] for h in steps]
    ref = finals[-1]
    errs = [float(np.linalg.norm(x - ref)) for x in finals[:-1]]
    return [
        math.log(errs[i] / errs[i + 1]) / math.log(steps[i] / steps[i + 1])
        for i in range(len(errs) - 1)
    ]


def write_trajectory_csv(traj: Trajectory, path, solution_only: bool = True) -> None:
    """Columns ``t, x_1..x_n, is_impulse``; impulses give two rows, left limit first."""
    n = traj.path.dimension
    imp = set(traj.impulse_times.tolist())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x_{i + 1}" for i in range(n)] + ["is_impulse"])
        for t, x, xl in zip(traj.times, traj.states, traj.left_states):
            if solution_only and t < traj.t0:
                continue
            if t in imp:
                w.writerow([_fmt(t)] + [_fmt(v) for v in xl] + [1])
            w.writerow([_fmt(t)] + [_fmt(v) for v in x] + [1 if t in imp else 0])


def read_trajectory_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Inverse of :func:`write_trajectory_csv`: ``(times, states, left_states, impulse_times)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = rows[1:]
    times, states, lefts, impulses = [], [], [], []
    i = 0
    while i < len(body):
        row = body[i]
        t = float(row[0])
        x = np.array([float(v) for v in row[1:-1]])
        if row[-1] == "1":
            nxt = body[i + 1]
            times.append(t)
            lefts.append(x)
            states.append(np.array([float(v) for v in nxt[1:-1]]))
            impulses.append(t)
            i += 2
        else:
            times.append(t)
            states.append(x)
            lefts.append(x)
            i += 1
    return np.array(times), np.vstack(states), np.vstack(lefts), np.array(impulses)


def _fmt(v: float) -> str:
    return format(float(v), ".17g")

"""Histories, trajectories and system definitions.

A sampled piecewise-right-continuous function is stored as strictly increasing
nodes carrying two values each: the right value ``x(t_i)`` and the left limit
``x(t_i^-)``.  The two differ only at jump nodes.  Between nodes the function
is the straight line joining ``x(t_i)`` to ``x(t_{i+1}^-)``, so a jump never
leaks into the neighbouring cell.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np


# queries this close (relative) to a node are answered at the node, so that
# offsets such as 1.0 - 1.3 still find the jump stored at -0.3
SNAP_TOL = 1e-12


class DomainError(ValueError):
    """Offset outside the domain of a history."""


class CoverageError(ValueError):
    """Requested window is not covered by a trajectory."""


class PiecewiseLinear:
    """Sampled piecewise-right-continuous function ``R -> R^n``.

    Parameters
    ----------
    grid : array_like, shape (m,)
        Strictly increasing nodes.
    values : array_like, shape (m, n)
        Right-continuous values at the nodes.
    left_values : array_like, shape (m, n), optional
        Left limits at the nodes.  Defaults to ``values`` (no jumps).
    """

    __slots__ = ("grid", "values", "left_values", "_grid_list")

    def __init__(self, grid, values, left_values=None):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if grid.ndim != 1 or grid.size == 0:
            raise ValueError("grid must be a non-empty 1-d array")
        if values.shape[0] != grid.size:
            raise ValueError("values must have one row per grid node")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("grid must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        if left_values is None:
            left_values = values
        else:
            left_values = np.asarray(left_values, dtype=float)
            if left_values.ndim == 1:
                left_values = left_values[:, None]
            if left_values.shape != values.shape:
                raise ValueError("left_values must match values in shape")
        self.grid = grid
        self.values = values
        self.left_values = left_values
        self._grid_list = None

    def _nodes(self) -> list:
        if self._grid_list is None:
            self._grid_list = self.grid.tolist()
        return self._grid_list

    @property
    def dimension(self) -> int:
        return self.values.shape[1]

    @property
    def jump_mask(self) -> np.ndarray:
        return np.any(self.values != self.left_values, axis=1)

    def _snap(self, q: float) -> int | None:
        """Index of a node within rounding distance of ``q`` (relative ``SNAP_TOL``)."""
        g = self._nodes()
        eps = SNAP_TOL * max(1.0, abs(q))
        i = bisect_left(g, q - eps)
        if i < len(g) and g[i] <= q + eps:
            return i
        return None

    def value(self, q: float) -> np.ndarray:
        """Right-continuous value at ``q`` (no domain check)."""
        g = self._nodes()
        j = self._snap(q)
        if j is not None:
            return self.values[j].copy()
        i = bisect_right(g, q) - 1
        if i < 0:
            i = 0
        if i == len(g) - 1:
            return self.values[i].copy()
        w = (q - g[i]) / (g[i + 1] - g[i])
        return self.values[i] + w * (self.left_values[i + 1] - self.values[i])

    def left(self, q: float) -> np.ndarray:
        """Left limit at ``q`` (no domain check)."""
        g = self._nodes()
        j = self._snap(q)
        if j is not None:
            return self.left_values[j].copy()
        i = bisect_left(g, q)
        if i >= len(g):
            return self.values[-1].copy()
        if i == 0:
            return self.left_values[0].copy()
        w = (q - g[i - 1]) / (g[i] - g[i - 1])
        return self.values[i - 1] + w * (self.left_values[i] - self.values[i - 1])

    def restrict(self, a: float, b: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Nodes of the restriction to ``[a, b]``, with interpolated endpoints.

        The node at ``b`` carries the left limit as its left value and the right
        value as its value; the node at ``a`` carries the right value in both.
        """
        g = self.grid
        if a == g[0] and b == g[-1]:
            return g, self.values, self.left_values
        lo = int(np.searchsorted(g, a, side="right"))
        hi = int(np.searchsorted(g, b, side="left"))
        inner = slice(lo, hi)
        ts = np.concatenate(([a], g[inner], [b]))
        va = self.value(a)
        vb = self.value(b)
        lb = self.left(b)
        vals = np.vstack((va, self.values[inner], vb))
        lefts = np.vstack((va, self.left_values[inner], lb))
        return ts, vals, lefts

    def integral(self, a: float, b: float) -> np.ndarray:
        """Trapezoid integral over ``[a, b]``; jump cells are split exactly."""
        if b <= a:
            return np.zeros(self.dimension)
        ts, vals, lefts = self.restrict(a, b)
        dt = np.diff(ts)[:, None]
        return np.sum(0.5 * dt * (vals[:-1] + lefts[1:]), axis=0)

    def integrate(self, integrand: Callable[[np.ndarray, np.ndarray], np.ndarray], a: float, b: float) -> float:
        """Trapezoid integral of ``integrand(t, x)`` over ``[a, b]``.

        ``integrand`` is called with node times of shape (m,) and states of
        shape (m, n) and must return shape (m,).
        """
        if b <= a:
            return 0.0
        ts, vals, lefts = self.restrict(a, b)
        fr = integrand(ts[:-1], vals[:-1])
        fl = integrand(ts[1:], lefts[1:])
        return float(np.sum(0.5 * np.diff(ts) * (fr + fl)))


class HistoryFunction(PiecewiseLinear):
    """Element of ``PC_tau``: a sampled function on ``[-tau, 0]``.

    Offsets are relative; ``h(s)`` is the right-continuous value at ``s`` and
    ``h.left(s)`` the left limit.  A jump stored at offset 0 realizes the
    ``x_{t^-}`` convention: ``h(0)`` returns the left limit there.
    """

    __slots__ = ("tau", "pre_jump")

    def __init__(self, grid, values, left_values=None, pre_jump: bool = False):
        super().__init__(grid, values, left_values)
        if self.grid[-1] != 0.0:
            raise ValueError("history grid must end at offset 0")
        if self.grid[0] >= 0.0:
            raise ValueError("history grid must start at -tau < 0")
        self.tau = -float(self.grid[0])
        self.pre_jump = pre_jump

    @classmethod
    def _trusted(cls, grid, values, left_values, pre_jump: bool) -> "HistoryFunction":
        """Skip validation for windows cut from an already validated path."""
        h = object.__new__(cls)
        h.grid, h.values, h.left_values, h._grid_list = grid, values, left_values, None
        h.tau = -float(grid[0])
        h.pre_jump = pre_jump
        return h

    @classmethod
    def constant(cls, value, tau: float) -> "HistoryFunction":
        v = np.atleast_1d(np.asarray(value, dtype=float))
        return cls([-float(tau), 0.0], np.vstack((v, v)))

    @classmethod
    def from_callable(cls, fn: Callable[[float], object], tau: float, step: float) -> "HistoryFunction":
        """Sample ``fn`` on a uniform grid over ``[-tau, 0]``."""
        m = max(1, int(np.ceil(tau / step - 1e-9)))
        grid = np.linspace(-tau, 0.0, m + 1)
        vals = np.vstack([np.atleast_1d(np.asarray(fn(s), dtype=float)) for s in grid])
        return cls(grid, vals)

    def _check(self, s: float) -> None:
        if not (-self.tau <= s <= 0.0):
            raise DomainError(f"offset {s!r} outside [-{self.tau}, 0]")

    def __call__(self, s: float) -> np.ndarray:
        self._check(s)
        if s == 0.0 and self.pre_jump:
            return self.left_values[-1].copy()
        return self.value(s)

    def left(self, s: float) -> np.ndarray:
        if not (-self.tau < s <= 0.0):
            raise DomainError(f"left limit undefined at offset {s!r}")
        return PiecewiseLinear.left(self, s)

    @property
    def current(self) -> np.ndarray:
        return self(0.0)

    def integral(self, lo: float | None = None, hi: float = 0.0) -> np.ndarray:
        lo = -self.tau if lo is None else lo
        self._check(lo)
        self._check(hi)
        return PiecewiseLinear.integral(self, lo, hi)

    def integrate(self, integrand, lo: float | None = None, hi: float = 0.0) -> float:
        lo = -self.tau if lo is None else lo
        return PiecewiseLinear.integrate(self, integrand, lo, hi)

    def node_states(self) -> np.ndarray:
        """All stored states including both limits at jumps (for sup checks)."""
        mask = self.jump_mask
        return np.vstack((self.values, self.left_values[mask]))


def history_eval(h: HistoryFunction, s: float) -> np.ndarray:
    return h(s)


def history_left_limit(h: HistoryFunction, s: float) -> np.ndarray:
    return h.left(s)


class History(Protocol):
    """What field and jump maps may read from a state window."""

    tau: float

    def __call__(self, s: float) -> np.ndarray: ...

    def left(self, s: float) -> np.ndarray: ...

    @property
    def current(self) -> np.ndarray: ...

    def integral(self, lo: float | None = None, hi: float = 0.0) -> np.ndarray: ...


@dataclass(frozen=True)
class SystemDefinition:
    """Impulsive delay system ``x' = f(t, x_t)``, ``dx = g(t, x_{t^-})`` at ``t_k``.

    ``field_f`` and ``jump_g`` take ``(t, window)`` where ``window`` follows the
    :class:`History` protocol and return arrays of length ``dimension``.
    ``lags`` lists the discrete delays at which ``field_f`` reads the past;
    the integrator places grid nodes where those reads cross a jump.
    """

    dimension: int
    tau: float
    field_f: Callable[[float, History], np.ndarray]
    jump_g: Callable[[float, History], np.ndarray]
    name: str = ""
    lags: tuple[float, ...] = ()

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be positive")
        if not (self.tau > 0 and np.isfinite(self.tau)):
            raise ValueError("tau must be positive and finite")
        object.__setattr__(self, "lags", tuple(sorted({float(v) for v in self.lags})))
        if any(not 0 < v <= self.tau for v in self.lags):
            raise ValueError("lags must lie in (0, tau]")
        zero = HistoryFunction.constant(np.zeros(self.dimension), self.tau)
        for label, fn in (("field", self.field_f), ("jump", self.jump_g)):
            out = np.asarray(fn(0.0, zero), dtype=float)
            if out.shape != (self.dimension,):
                raise ValueError(f"{label} map returns shape {out.shape}, expected ({self.dimension},)")
            if np.any(out != 0.0):
                raise ValueError(f"{label} map does not vanish on the zero history")


@dataclass(frozen=True)
class Trajectory:
    """Solution record over ``[t0 - tau, t_end]``.

    ``path`` holds every node including the initial history (at times
    ``t0 + s``).  Impulse nodes keep the pre-jump state as left value.
    """

    t0: float
    tau: float
    path: PiecewiseLinear
    impulse_times: np.ndarray
    initial_history: HistoryFunction
    meta: dict = field(default_factory=dict)

    @property
    def times(self) -> np.ndarray:
        return self.path.grid

    @property
    def states(self) -> np.ndarray:
        return self.path.values

    @property
    def left_states(self) -> np.ndarray:
        return self.path.left_values

    @property
    def t_end(self) -> float:
        return float(self.path.grid[-1])

    def solution_mask(self) -> np.ndarray:
        """Nodes at or after ``t0``."""
        return self.path.grid >= self.t0

    def __call__(self, t: float) -> np.ndarray:
        self._cover(t, t)
        return self.path.value(t)

    def left(self, t: float) -> np.ndarray:
        self._cover(t, t)
        return self.path.left(t)

    def _cover(self, a: float, b: float) -> None:
        lo = self.t0 - self.tau
        if a < lo - 1e-12 * max(1.0, abs(lo)) or b > self.t_end:
            raise CoverageError(f"[{a}, {b}] not covered by trajectory on [{lo}, {self.t_end}]")

    def window(self, t: float, before: bool = False) -> HistoryFunction:
        return trajectory_window(self, t, before)

    def integral(self, a: float, b: float) -> np.ndarray:
        self._cover(a, b)
        return self.path.integral(max(a, float(self.path.grid[0])), b)


def trajectory_window(traj: Trajectory, t: float, before: bool = False) -> HistoryFunction:
    """``x_t`` (or ``x_{t^-}`` with ``before=True``) as a history on ``[-tau, 0]``."""
    tau = traj.tau
    if t < traj.t0:
        raise CoverageError(f"window time {t} precedes t0 = {traj.t0}")
    traj._cover(t - tau, t)
    a = max(t - tau, float(traj.path.grid[0]))
    ts, vals, lefts = traj.path.restrict(a, t)
    offsets = ts - t
    offsets[0] = -tau
    offsets[-1] = 0.0
    keep = np.concatenate(([True], np.diff(offsets) > 0))
    if not keep.all():
        offsets, vals, lefts = offsets[keep], vals[keep], lefts[keep]
    return HistoryFunction._trusted(offsets, vals, lefts, before)


def embed_history(phi: HistoryFunction, t0: float = 0.0) -> Trajectory:
    """Trajectory consisting only of the initial history (no dynamics)."""
    path = PiecewiseLinear(phi.grid + t0, phi.values, phi.left_values)
    return Trajectory(t0=t0, tau=phi.tau, path=path, impulse_times=np.empty(0), initial_history=phi)

"""Lyapunov-Krasovskii pairs evaluated along simulated trajectories.

``W1(t) = V1(t, x(t))``, ``W2(t) = V2(t, x_t)`` and ``W = W1 + W2``.  The
checks here compare sampled ``W`` against the decay envelope implied by the
certificate and against the resulting bound on ``||x(t)||``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import HistoryFunction, Trajectory, trajectory_window
from .schedule import ImpulseSchedule


@dataclass(frozen=True)
class LyapunovPair:
    v1: Callable[[float, np.ndarray], float]
    v2: Callable[[float, HistoryFunction], float]
    alpha1_inv: Callable[[float], float]


@dataclass(frozen=True)
class WSeries:
    """``W`` sampled at the solution nodes; ``*_left`` hold pre-jump values."""

    t: np.ndarray
    w1: np.ndarray
    w1_left: np.ndarray
    w2: np.ndarray
    is_impulse: np.ndarray

    @property
    def w(self) -> np.ndarray:
        return self.w1 + self.w2

    @property
    def w_left(self) -> np.ndarray:
        return self.w1_left + self.w2


@dataclass(frozen=True)
class CheckResult:
    holds: bool
    max_violation: float
    at_time: float | None


def evaluate_W(pair: LyapunovPair, traj: Trajectory, t: float, before: bool = False) -> tuple[float, float, float]:
    win = trajectory_window(traj, t, before)
    w1 = float(pair.v1(t, win(0.0)))
    w2 = float(pair.v2(t, win))
    return w1, w2, w1 + w2


def w_series(pair: LyapunovPair, traj: Trajectory) -> WSeries:
    mask = traj.solution_mask()
    ts = traj.times[mask]
    xs = traj.states[mask]
    xls = traj.left_states[mask]
    imp = np.isin(ts, traj.impulse_times)
    w1 = np.array([pair.v1(t, x) for t, x in zip(ts, xs)], dtype=float)
    w1l = w1.copy()
    for i in np.flatnonzero(imp):
        w1l[i] = pair.v1(ts[i], xls[i])
    # V2 sees the window only through an integral, identical for x_t and x_{t^-}
    w2 = np.array([pair.v2(t, trajectory_window(traj, t)) for t in ts], dtype=float)
    return WSeries(ts, w1, w1l, w2, imp)


def _counts_since(sched: ImpulseSchedule, t0: float, ts: np.ndarray) -> np.ndarray:
    imp = sched.times_until(float(ts[-1]))
    imp = imp[imp > t0]
    return np.searchsorted(imp, ts, side="right")


def envelope(ws: WSeries, sched: ImpulseSchedule, t0: float, sigma: float, c: float) -> tuple[np.ndarray, np.ndarray]:
    """``W(t0) exp(-sigma N(t, t0) - c (t - t0))`` at right values and left limits."""
    n = _counts_since(sched, t0, ws.t)
    n_left = n - (ws.is_impulse & (ws.t > t0))
    w0 = ws.w[0]
    el = ws.t - t0
    return w0 * np.exp(-sigma * n - c * el), w0 * np.exp(-sigma * n_left - c * el)


def check_envelope(pair: LyapunovPair, traj: Trajectory, sched: ImpulseSchedule,
                   sigma: float, c: float, tol: float = 0.05, ws: WSeries | None = None) -> CheckResult:
    """Assert ``W(t) <= (1 + tol) W(t0) e^{-sigma N(t, t0) - c (t - t0)}`` at every node."""
    ws = ws or w_series(pair, traj)
    bound, bound_left = envelope(ws, sched, traj.t0, sigma, c)
    return _ratio_check(np.concatenate((ws.w, ws.w_left)), np.concatenate((bound, bound_left)),
                        np.concatenate((ws.t, ws.t)), tol)


def norm_bound(ws: WSeries, pair: LyapunovPair, t0: float, mu: float, lam: float) -> np.ndarray:
    z = math.exp(mu) * ws.w[0] * np.exp(-lam * (ws.t - t0))
    return np.array([pair.alpha1_inv(v) for v in z])


def check_final_bound(pair: LyapunovPair, traj: Trajectory, mu: float, lam: float,
                      tol: float = 0.05, ws: WSeries | None = None) -> CheckResult:
    """``||x(t)|| <= alpha1^{-1}(e^mu W(t0) e^{-lam (t - t0)})`` at every node."""
    ws = ws or w_series(pair, traj)
    mask = traj.solution_mask()
    norms = np.linalg.norm(traj.states[mask], axis=1)
    norms_left = np.linalg.norm(traj.left_states[mask], axis=1)
    nb = norm_bound(ws, pair, traj.t0, mu, lam)
    return _ratio_check(np.concatenate((norms, norms_left)), np.concatenate((nb, nb)),
                        np.concatenate((ws.t, ws.t)), tol)


def _ratio_check(value: np.ndarray, bound: np.ndarray, ts: np.ndarray, tol: float) -> CheckResult:
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(bound > 0, value / bound - 1.0, np.where(value > 0, np.inf, -1.0))
    i = int(np.argmax(rel))
    worst = float(rel[i])
    return CheckResult(worst <= tol, worst, float(ts[i]))


def dini_rate_check(pair: LyapunovPair, traj: Trajectory, sched: ImpulseSchedule | None, c: float,
                    tol: float = 1e-2, ws: WSeries | None = None) -> CheckResult:
    """Forward differences of ``W`` along flow cells must not exceed ``-c W``.

    Each cell ``[t_i, t_{i+1}]`` uses the right value at ``t_i`` and the left
    limit at ``t_{i+1}``, so jumps never enter a difference quotient.  The
    reported violation is the largest ``dW/dt + c W - tol (1 + W)``.
    """
    ws = ws or w_series(pair, traj)
    w = ws.w
    dt = np.diff(ws.t)
    dq = (ws.w_left[1:] - w[:-1]) / dt
    excess = dq + c * w[:-1] - tol * (1.0 + w[:-1])
    i = int(np.argmax(excess))
    return CheckResult(bool(excess[i] <= 0.0), float(excess[i]), float(ws.t[i]))


def condition_iv_check(pair: LyapunovPair, traj: Trajectory, kappa: float, times) -> CheckResult:
    """Spot check ``V2(t, x_t) <= kappa * sup_s V1(t + s, x(t + s))`` on stored nodes."""
    worst, at = -math.inf, None
    for t in times:
        win = trajectory_window(traj, t)
        sup_v1 = max(pair.v1(t + s, x) for s, x in zip(win.grid, win.values))
        lefts = win.left_values[win.jump_mask]
        if lefts.size:
            sup_v1 = max(sup_v1, max(pair.v1(t, x) for x in lefts))
        gap = pair.v2(t, win) - kappa * sup_v1
        if gap > worst:
            worst, at = gap, t
    return CheckResult(worst <= 1e-12, float(worst), at)


def write_diagnostic_csv(path, ws: WSeries, env: tuple[np.ndarray, np.ndarray], nb: np.ndarray) -> None:
    """Columns ``t, W1, W2, W, envelope_bound, norm_bound``; impulses give two rows."""
    bound, bound_left = env
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t", "W1", "W2", "W", "envelope_bound", "norm_bound"])
        for i, t in enumerate(ws.t):
            if ws.is_impulse[i]:
                out.writerow([_f(t), _f(ws.w1_left[i]), _f(ws.w2[i]), _f(ws.w_left[i]), _f(bound_left[i]), _f(nb[i])])
            out.writerow([_f(t), _f(ws.w1[i]), _f(ws.w2[i]), _f(ws.w[i]), _f(bound[i]), _f(nb[i])])


def read_diagnostic_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    return {name: body[:, j] for j, name in enumerate(header)}


def _f(v: float) -> str:
    return format(float(v), ".17g")

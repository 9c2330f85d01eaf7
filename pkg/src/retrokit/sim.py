"""Deterministic ODE integration of assembled loops plus trajectory metrics.

Fixed-step RK4 is the default (bit-reproducible given identical inputs);
adaptive RK45 is available for long horizons. Events are time-triggered
state resets: integration stops exactly at the event time, applies the
reset, and restarts; the stored sample at the event time is post-reset.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from .errors import DimensionError, DivergenceError

__all__ = [
    "Trajectory",
    "EventSpec",
    "IntegratorConfig",
    "TruncationWarning",
    "integrate",
    "l2_norm",
    "min_pairwise_gap",
    "trajectory_to_csv",
]


class TruncationWarning(UserWarning):
    """The trajectory had not decayed by the end of the horizon."""


@dataclass(frozen=True)
class Trajectory:
    """Time grid plus state (and optional input) samples."""

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    labels: list
    input_labels: list = field(default_factory=list)

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        x = np.asarray(self.states, dtype=float)
        u = np.asarray(self.inputs, dtype=float)
        if t.ndim != 1 or x.shape[0] != t.size:
            raise DimensionError("states must have one row per time sample")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("time grid must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
            raise ValueError("trajectory contains non-finite samples")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "states", x)
        object.__setattr__(self, "inputs", u.reshape(t.size, -1))


@dataclass(frozen=True)
class EventSpec:
    """Time-triggered state reset: coordinate index -> new value."""

    time: float
    set: Dict[int, float]

    def apply(self, x):
        y = x.copy()
        for i, v in self.set.items():
            y[int(i)] = float(v)
        return y


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    dt: float = 1e-3
    horizon: float = 10.0
    rtol: float = 1e-8
    atol: float = 1e-10
    divergence_limit: float = 1e12

    def __post_init__(self):
        method = {"rk4-fixed": "rk4", "rk45-adaptive": "rk45"}.get(self.method, self.method)
        if method not in ("rk4", "rk45"):
            raise ValueError(f"unknown integration method {self.method!r}")
        object.__setattr__(self, "method", method)
        if self.dt <= 0 or self.horizon <= 0 or self.rtol <= 0 or self.atol <= 0:
            raise ValueError("dt, horizon and tolerances must be positive")


def _normalize_system(system, u):
    """Resolve the system argument to (field, linear_pair, input_fn, labels)."""
    labels = None
    input_of = None
    if isinstance(system, np.ndarray):
        m = np.asarray(system, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError("matrix system must be square")
        return None, (m, None), None, labels, input_of
    if isinstance(system, tuple) and len(system) == 2:
        m, b = np.asarray(system[0], dtype=float), np.asarray(system[1], dtype=float)
        if m.shape[0] != m.shape[1] or b.shape[0] != m.shape[0]:
            raise DimensionError("incompatible (a, b) pair")
        return None, (m, b), u, labels, input_of
    if hasattr(system, "vector_field"):
        labels = system.labels() if hasattr(system, "labels") else None
        if getattr(system, "a", None) is not None and u is None:
            lin = (np.asarray(system.a, dtype=float), None)
        else:
            lin = None
        if hasattr(system, "controls_of"):
            input_of = system.controls_of
        return system.vector_field, lin, u, labels, input_of
    if callable(system):
        return system, None, u, labels, input_of
    raise TypeError(f"cannot integrate object of type {type(system).__name__}")


def _grid(horizon, dt, event_times):
    n = int(np.floor(horizon / dt + 1e-9))
    ts = dt * np.arange(n + 1)
    if horizon - ts[-1] > 1e-9 * max(1.0, horizon):
        ts = np.append(ts, horizon)
    for te in sorted(set(event_times)):
        if not 0.0 < te < horizon:
            raise ValueError(f"event time {te} must lie strictly inside the horizon")
        if np.min(np.abs(ts - te)) > 1e-9:
            ts = np.insert(ts, int(np.searchsorted(ts, te)), te)
    event_ix = {}
    for te in set(event_times):
        event_ix.setdefault(int(np.argmin(np.abs(ts - te))), []).append(te)
    return ts, event_ix


def _rk4_step(f, t, x, h):
    k1 = f(t, x)
    k2 = f(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = f(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(system, x0, cfg: IntegratorConfig, events: Sequence[EventSpec] = (),
              u: Optional[Callable[[float], np.ndarray]] = None) -> Trajectory:
    """Integrate a closed loop, linear pair, matrix, or vector field.

    ``system`` may be a ClosedLoop, a square matrix (xdot = a x), a tuple
    (a, b) with input function ``u``, or a callable f(t, x). Events must be
    sorted by time. Raises DivergenceError (carrying the partial trajectory)
    if the state norm exceeds the divergence limit.
    """
    field_fn, lin, u, labels, input_of = _normalize_system(system, u)
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    events = list(events)
    if any(events[i].time > events[i + 1].time for i in range(len(events) - 1)):
        raise ValueError("events must be sorted by time")
    ts, event_ix = _grid(cfg.horizon, cfg.dt, [e.time for e in events])
    by_time = {}
    for e in events:
        by_time.setdefault(e.time, []).append(e)

    if lin is not None:
        m, b = lin
        if b is None:
            field_fn = lambda t, x: m @ x
        else:
            field_fn = lambda t, x: m @ x + b @ np.atleast_1d(u(t))
    if x0.size != np.atleast_1d(field_fn(0.0, x0)).size:
        raise DimensionError("initial state dimension does not match the system")

    if cfg.method == "rk4":
        xs = _run_rk4(field_fn, ts, x0, event_ix, by_time, cfg, labels)
    else:
        xs = _run_rk45(field_fn, ts, x0, event_ix, by_time, cfg, labels)

    if labels is None:
        labels = [f"x[{i}]" for i in range(x0.size)]
    if input_of is not None:
        us = np.array([input_of(x) for x in xs])
        ulabels = system.input_labels() if hasattr(system, "input_labels") else \
            [f"u[{i}]" for i in range(us.shape[1])]
    elif u is not None:
        us = np.array([np.atleast_1d(u(t)) for t in ts])
        ulabels = [f"u[{i}]" for i in range(us.shape[1])]
    else:
        us = np.zeros((ts.size, 0))
        ulabels = []
    return Trajectory(ts, np.asarray(xs), us, labels, ulabels)


def _diverged(x, limit):
    return not np.all(np.isfinite(x)) or np.max(np.abs(x)) > limit


def _partial(ts, xs, labels):
    k = len(xs)
    return Trajectory(ts[:k], np.asarray(xs), np.zeros((k, 0)),
                      labels or [f"x[{i}]" for i in range(xs[0].size)])


def _run_rk4(f, ts, x0, event_ix, by_time, cfg, labels):
    x = x0.copy()
    xs = [x.copy()]
    for k in range(1, ts.size):
        x = _rk4_step(f, ts[k - 1], x, ts[k] - ts[k - 1])
        if k in event_ix:
            for te in event_ix[k]:
                for e in by_time[te]:
                    x = e.apply(x)
        if _diverged(x, cfg.divergence_limit):
            raise DivergenceError(
                f"state exceeded the divergence limit at t={ts[k]:.6g}",
                _partial(ts, xs, labels))
        xs.append(x.copy())
    return xs


def _run_rk45(f, ts, x0, event_ix, by_time, cfg, labels):
    from scipy.integrate import solve_ivp

    breakpoints = sorted(k for k in event_ix if k < ts.size - 1)
    seg_bounds = [0] + breakpoints + [ts.size - 1]
    xs = [x0.copy()]
    x = x0.copy()
    for lo, hi in zip(seg_bounds[:-1], seg_bounds[1:]):
        t_eval = ts[lo: hi + 1]
        sol = solve_ivp(f, (t_eval[0], t_eval[-1]), x, method="RK45",
                        t_eval=t_eval, rtol=cfg.rtol, atol=cfg.atol)
        for xk in sol.y.T[1:]:
            if _diverged(xk, cfg.divergence_limit):
                raise DivergenceError(
                    "state exceeded the divergence limit", _partial(ts, xs, labels))
            xs.append(xk.copy())
        if not sol.success or sol.y.shape[1] < t_eval.size:
            raise DivergenceError(
                f"adaptive integration failed: {sol.message}", _partial(ts, xs, labels))
        x = xs[-1].copy()
        if hi in event_ix:
            for te in event_ix[hi]:
                for e in by_time[te]:
                    x = e.apply(x)
            xs[-1] = x.copy()
    return xs


def l2_norm(traj: Trajectory, selector):
    """Finite-horizon L2 norm of the selected coordinates (trapezoid rule).

    Warns with TruncationWarning when the tail has not decayed below 1e-3 of
    the peak, since the quadrature then underestimates the infinite-horizon
    norm.
    """
    ix = np.asarray(selector, dtype=int).reshape(-1)
    if ix.size == 0:
        raise ValueError("selector must name at least one coordinate")
    sq = np.sum(traj.states[:, ix] ** 2, axis=1)
    peak = float(np.sqrt(np.max(sq))) if sq.size else 0.0
    tail = sq[int(np.floor(0.9 * sq.size)):]
    if peak > 0 and np.sqrt(np.mean(tail)) > 1e-3 * peak:
        warnings.warn("trajectory tail has not decayed; L2 norm is truncated",
                      TruncationWarning, stacklevel=2)
    return float(np.sqrt(np.trapezoid(sq, traj.times)))


def min_pairwise_gap(traj: Trajectory, position_coords):
    """Smallest adjacent gap over time; nonpositive values signal a collision.

    ``position_coords`` lists the position coordinates in platoon order
    (increasing position); the gap between neighbours i and i+1 is
    position[i+1] - position[i].
    """
    ix = np.asarray(position_coords, dtype=int).reshape(-1)
    if ix.size < 2:
        raise DimensionError("need at least two position coordinates")
    p = traj.states[:, ix]
    return float(np.min(p[:, 1:] - p[:, :-1]))


def trajectory_to_csv(traj: Trajectory, path):
    """Write the trajectory as CSV: label header, 17-significant-digit values."""
    cols = ["t"] + list(traj.labels) + list(traj.input_labels)
    data = np.hstack([traj.times[:, None], traj.states, traj.inputs])
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in data:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

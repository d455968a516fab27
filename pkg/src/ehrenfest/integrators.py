"""Explicit time stepping with per-step invariant monitors.

Two methods: classical fixed-step RK4 and the Dormand-Prince embedded 5(4)
pair with a PI step-size controller.  States are numpy arrays of any shape;
the right-hand side has the signature ``rhs(t, y) -> dy``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .core import SimulationAbort, covariance_from_moments, unflatten_moments

__all__ = [
    "StepperConfig",
    "TrajectoryRecord",
    "integrate",
    "monitor_energy",
    "monitor_casimirs",
    "monitor_mass",
    "flat_moment_monitors",
]

METHODS = ("rk4_fixed", "embedded_adaptive")


@dataclass(frozen=True)
class StepperConfig:
    method: str = "embedded_adaptive"
    horizon: float = 1.0
    dt: Optional[float] = None
    rtol: float = 1e-8
    atol: float = 1e-10
    dt_min: float = 1e-12
    dt_max: float = np.inf
    dt_initial: Optional[float] = None
    t0: float = 0.0
    safety: float = 0.9
    max_steps: int = 10_000_000
    max_abs_state: float = 1e10

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not self.horizon > self.t0:
            raise ValueError("horizon must exceed the start time")
        if self.method == "rk4_fixed":
            if self.dt is None or not self.dt > 0:
                raise ValueError("rk4_fixed needs a positive dt")
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not (0 < self.dt_min <= self.dt_max):
            raise ValueError("need 0 < dt_min <= dt_max")


@dataclass
class TrajectoryRecord:
    """Accepted steps.  ``times`` and every monitor series are aligned;
    ``states`` is aligned with ``state_times`` (all steps or a stride)."""

    times: List[float] = field(default_factory=list)
    states: List[np.ndarray] = field(default_factory=list)
    state_times: List[float] = field(default_factory=list)
    monitors: Dict[str, list] = field(default_factory=dict)
    rejected: int = 0

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def series(self, name) -> np.ndarray:
        return np.asarray(self.monitors[name])

    def state_array(self) -> np.ndarray:
        return np.asarray(self.states)

    def _columns(self, state_labels):
        cols = {"t": np.asarray(self.times)[:, None]}
        if self.state_times == self.times and self.states:
            S = np.asarray(self.states).reshape(len(self.states), -1)
            labels = state_labels or [f"y{i}" for i in range(S.shape[1])]
            if len(labels) != S.shape[1]:
                raise ValueError("state label count does not match state size")
            for i, lab in enumerate(labels):
                cols[lab] = S[:, i:i + 1]
        for name, vals in self.monitors.items():
            arr = np.asarray(vals, dtype=float).reshape(len(self.times), -1)
            if arr.shape[1] == 1:
                cols[name] = arr
            else:
                for i in range(arr.shape[1]):
                    cols[f"{name}_{i}"] = arr[:, i:i + 1]
        return cols

    def to_csv(self, path, state_labels: Optional[Sequence[str]] = None):
        """One row per accepted step: t, state components, monitor columns."""
        cols = self._columns(state_labels)
        data = np.hstack(list(cols.values()))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(cols))
            for row in data:
                w.writerow([format(v, ".17g") for v in row])


# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_B_LOW = np.array([5179 / 57600, 0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B - _B_LOW

_BETA = 0.04
_ALPHA = 0.2 - 0.75 * _BETA
_FAC_MIN, _FAC_MAX = 0.2, 10.0


def _finite(dy, t):
    if not np.all(np.isfinite(dy)):
        raise SimulationAbort(f"non-finite right-hand side at t={t:.6g}")
    return dy


def _bounded(y, t, cfg):
    big = float(np.max(np.abs(y)))
    if not big <= cfg.max_abs_state:
        raise SimulationAbort(
            f"state magnitude {big:.3g} exceeded {cfg.max_abs_state:.3g} at t={t:.6g}")


def _rk4_step(rhs, t, y, dt):
    k1 = _finite(rhs(t, y), t)
    k2 = _finite(rhs(t + dt / 2, y + dt / 2 * k1), t)
    k3 = _finite(rhs(t + dt / 2, y + dt / 2 * k2), t)
    k4 = _finite(rhs(t + dt, y + dt * k3), t)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _dp_step(rhs, t, y, dt, k1):
    ks = [k1]
    for i in range(1, 7):
        yi = y + dt * sum(a * k for a, k in zip(_A[i], ks) if a != 0)
        ks.append(_finite(rhs(t + _C[i] * dt, yi), t))
    y_new = y + dt * sum(b * k for b, k in zip(_B, ks) if b != 0)
    err = dt * sum(e * k for e, k in zip(_E, ks))
    return y_new, err, ks[6]


def _error_norm(err, y, y_new, cfg):
    scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(rhs, t, y, f0, cfg):
    scale = cfg.atol + cfg.rtol * np.abs(y)
    d0 = np.sqrt(np.mean((y / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = _finite(rhs(t + h0, y + h0 * f0), t)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    h1 = max(1e-6, h0 * 1e-3) if max(d1, d2) <= 1e-15 else (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1)


MonitorSpec = Union[Mapping[str, Callable], Sequence[Tuple[str, Callable]], None]


def integrate(rhs: Callable, initial, cfg: StepperConfig, monitors: MonitorSpec = None,
              *, guard: Optional[Callable] = None, store_every: int = 1,
              t_eval: Optional[Sequence[float]] = None) -> TrajectoryRecord:
    """Integrate ``rhs`` from ``initial`` over [cfg.t0, cfg.horizon].

    ``monitors`` map names to ``f(t, y)``; they see a read-only view.
    ``guard(t, y)`` may raise SimulationAbort after any accepted step.
    ``store_every`` keeps every k-th state (0 keeps only the endpoints).
    ``t_eval`` (adaptive method only) forces steps to land on the given
    times and stores the state there.  Aborts carry the partial record.
    """
    mons = list(monitors.items()) if isinstance(monitors, Mapping) else list(monitors or [])
    rec = TrajectoryRecord(monitors={name: [] for name, _ in mons})
    y = np.array(initial, dtype=float)
    t = float(cfg.t0)
    count = 0
    stops = sorted(float(s) for s in ([] if t_eval is None else t_eval) if cfg.t0 < s < cfg.horizon)
    if t_eval is not None and cfg.method == "rk4_fixed":
        raise ValueError("t_eval needs the adaptive method")

    def accept(t, y, final=False, forced=False):
        view = y.view()
        view.flags.writeable = False
        rec.times.append(t)
        for name, fn in mons:
            rec.monitors[name].append(fn(t, view))
        keep = (count == 0 or final or forced
                or (store_every > 0 and count % store_every == 0))
        if keep and (not rec.state_times or rec.state_times[-1] != t):
            rec.states.append(y.copy())
            rec.state_times.append(t)
        if guard is not None:
            guard(t, view)

    try:
        accept(t, y)
        if cfg.method == "rk4_fixed":
            nsteps = int(np.ceil((cfg.horizon - t) / cfg.dt - 1e-9))
            for i in range(nsteps):
                dt = min(cfg.dt, cfg.horizon - t)
                y = _rk4_step(rhs, t, y, dt)
                t = cfg.t0 + (i + 1) * cfg.dt if i + 1 < nsteps else cfg.horizon
                _bounded(y, t, cfg)
                count += 1
                accept(t, y, final=i + 1 == nsteps)
            return rec

        k1 = _finite(rhs(t, y), t)
        dt = cfg.dt_initial or _initial_step(rhs, t, y, k1, cfg)
        dt = min(max(dt, cfg.dt_min), cfg.dt_max)
        err_prev = 1.0
        rejected_last = False
        steps = 0
        stop_idx = 0
        while t < cfg.horizon:
            steps += 1
            if steps > cfg.max_steps:
                raise SimulationAbort(f"exceeded {cfg.max_steps} steps at t={t:.6g}")
            target = stops[stop_idx] if stop_idx < len(stops) else cfg.horizon
            clipped = t + dt >= target
            h = target - t if clipped else dt
            y_new, err, k7 = _dp_step(rhs, t, y, h, k1)
            en = _error_norm(err, y, y_new, cfg)
            if en <= 1.0:
                t = target if clipped else t + h
                y, k1 = y_new, k7
                _bounded(y, t, cfg)
                count += 1
                final = t >= cfg.horizon
                forced = clipped and not final
                if forced:
                    stop_idx += 1
                accept(t, y, final=final, forced=forced)
                fac = cfg.safety * max(en, 1e-10) ** -_ALPHA * err_prev ** _BETA
                fac = min(_FAC_MAX, max(_FAC_MIN, fac))
                if rejected_last:
                    fac = min(fac, 1.0)
                rejected_last = False
                err_prev = max(en, 1e-4)
                if not clipped:
                    dt = min(h * fac, cfg.dt_max)
                    if dt < cfg.dt_min and t < cfg.horizon:
                        raise SimulationAbort(
                            f"step size {dt:.3g} fell below dt_min={cfg.dt_min:.3g} at t={t:.6g}")
            else:
                rec.rejected += 1
                rejected_last = True
                fac = max(_FAC_MIN, cfg.safety * en ** -_ALPHA)
                dt = h * min(1.0, fac)
                if dt < cfg.dt_min:
                    raise SimulationAbort(
                        f"step size {dt:.3g} fell below dt_min={cfg.dt_min:.3g} at t={t:.6g}")
        return rec
    except SimulationAbort as exc:
        if exc.record is None:
            exc.record = rec
        raise


# ---------------------------------------------------------------------------
# Monitors
# ---------------------------------------------------------------------------

def monitor_energy(h, state) -> float:
    """h evaluated at a (z, M) pair or a MomentState."""
    if hasattr(state, "z") and hasattr(state, "X"):
        return float(h(state.z, state.X))
    z, M = state
    return float(h(z, M))


def monitor_casimirs(state, max_order: int = 2) -> np.ndarray:
    """[C_1, ..., C_max_order, det(2X - z z^T)] for a (z, X) pair or MomentState."""
    from .brackets import casimir, casimir_det

    if hasattr(state, "z") and hasattr(state, "X"):
        z, X = state.z, state.X
    else:
        z, X = state
    return np.array([casimir(j, z, X) for j in range(1, max_order + 1)]
                    + [casimir_det(z, X)])


def monitor_mass(grid) -> float:
    """Trapezoid-rule integral of a WignerGrid."""
    from .wigner import moments

    return moments(grid)[0]


def flat_moment_monitors(h, n: int, covariance: bool = False) -> List[Tuple[str, Callable]]:
    """Energy and Casimir monitors for flat (z, upper-triangle) states."""

    def to_pair(y):
        z, M = unflatten_moments(y, n)
        if covariance:
            return z, (M + np.outer(z, z)) / 2.0
        return z, M

    def energy(t, y):
        z, M = unflatten_moments(y, n)
        return float(h(z, M))

    def casimirs(t, y):
        return monitor_casimirs(to_pair(y))

    return [("energy", energy), ("casimir", casimirs)]

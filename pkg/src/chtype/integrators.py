"""Adaptive Dormand-Prince 5(4) integrator with exact landing on output times.

Hand-rolled rather than ``scipy.integrate.solve_ivp`` because callers need a
hook after every accepted step (collision and blow-up tripwires) and the
rejected-step / error-estimate statistics that scipy does not expose.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


class StepSizeUnderflow(RuntimeError):
    """Step size collapsed below floating-point resolution of ``t``."""

    def __init__(self, t, y, message="step size underflow"):
        super().__init__(f"{message} at t={t!r}")
        self.t = t
        self.y = y


@dataclass
class StepStats:
    steps: int = 0
    rejected: int = 0
    nfev: int = 0
    max_error: float = 0.0

    def as_dict(self):
        return {"steps": self.steps, "rejected": self.rejected,
                "nfev": self.nfev, "max_error": self.max_error}


@dataclass
class OdeResult:
    t: np.ndarray
    y: np.ndarray
    stats: StepStats
    stopped: bool
    t_last: float
    y_last: np.ndarray


def _error_norm(err, y, y_new, rtol, atol):
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.sqrt(np.mean((err / scale) ** 2)))


def _initial_step(f, t0, y0, f0, rtol, atol, direction):
    # Hairer, Norsett & Wanner, Solving ODEs I, II.4.
    scale = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / scale) ** 2))
    d1 = np.sqrt(np.mean((f0 / scale) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    f1 = f(t0 + direction * h0, y0 + direction * h0 * f0)
    d2 = np.sqrt(np.mean(((f1 - f0) / scale) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1)


def dopri45(
    f: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    y0,
    t_end: float,
    *,
    rtol: float = 1e-8,
    atol: float = 1e-10,
    output_times: Optional[Sequence[float]] = None,
    on_step: Optional[Callable[[float, np.ndarray], bool]] = None,
    h0: Optional[float] = None,
    h_max: float = np.inf,
) -> OdeResult:
    """Integrate ``y' = f(t, y)`` from ``t0`` to ``t_end``.

    Steps are clipped so that every entry of ``output_times`` is hit exactly.
    ``on_step(t, y)`` runs after each accepted step; returning True stops the
    integration (the stopping state is appended to the output).
    """
    if rtol <= 0 or atol <= 0:
        raise ValueError("tolerances must be positive")
    y = np.array(y0, dtype=float)
    t = float(t0)
    direction = 1.0 if t_end >= t0 else -1.0
    if output_times is None:
        output_times = [t_end]
    targets = sorted({float(s) for s in output_times if direction * (s - t0) > 0},
                     key=lambda s: direction * s)
    if not targets or targets[-1] != t_end:
        targets.append(float(t_end))

    ts, ys = [t], [y.copy()]
    stats = StepStats()
    k = np.empty((7,) + y.shape)
    k[0] = f(t, y)
    stats.nfev += 1
    h = abs(h0) if h0 else _initial_step(f, t, y, k[0], rtol, atol, direction)
    stats.nfev += 0 if h0 else 1
    target_index = 0
    stopped = False

    while target_index < len(targets):
        target = targets[target_index]
        h = min(h, h_max)
        remaining = abs(target - t)
        landing = h >= remaining
        step = remaining if landing else h
        if step < 16 * np.spacing(max(abs(t), 1.0)):
            raise StepSizeUnderflow(t, y)
        hs = direction * step
        for i in range(1, 7):
            dy = np.tensordot(_A[i], k[:i], axes=1)
            k[i] = f(t + _C[i] * hs, y + hs * dy)
        stats.nfev += 6
        y_new = y + hs * np.tensordot(_B5[:6], k[:6], axes=1)
        err = hs * np.tensordot(_E, k, axes=1)
        err_norm = _error_norm(err, y, y_new, rtol, atol)
        if not np.all(np.isfinite(y_new)) or not np.isfinite(err_norm):
            stats.rejected += 1
            h = step * _MIN_FACTOR
            continue
        if err_norm > 1.0:
            stats.rejected += 1
            h = step * max(_MIN_FACTOR, _SAFETY * err_norm ** -0.2)
            continue

        stats.steps += 1
        stats.max_error = max(stats.max_error, err_norm)
        t = target if landing else t + hs
        y = y_new
        k[0] = k[6]
        factor = _MAX_FACTOR if err_norm == 0 else min(_MAX_FACTOR, _SAFETY * err_norm ** -0.2)
        if not landing or step >= h:
            h = step * factor
        if landing:
            ts.append(t)
            ys.append(y.copy())
            target_index += 1
        if on_step is not None and on_step(t, y):
            stopped = True
            if not landing:
                ts.append(t)
                ys.append(y.copy())
            break

    return OdeResult(np.array(ts), np.array(ys), stats, stopped, t, y)

"""Incremental (velocity-form) discrete PID with trapezoidal integration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# The control law works in pedal percent; the plant takes a fraction.
CONTROL_NORMALIZATION = 0.01


@dataclass(frozen=True)
class Gains:
    kp: float
    ki: float
    kd: float

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd) < 0:
            raise ValueError(f"PID gains must be non-negative, got {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.kp, self.ki, self.kd], dtype=float)

    @classmethod
    def from_array(cls, values) -> "Gains":
        kp, ki, kd = (float(v) for v in values)
        return cls(kp, ki, kd)


@dataclass(frozen=True)
class PidCoefficients:
    alpha: float
    beta: float
    gamma: float


@dataclass(frozen=True)
class PidState:
    e_prev: float = 0.0
    e_prev2: float = 0.0
    u_prev: float = 0.0


def coefficients(g: Gains, ts: float) -> PidCoefficients:
    if not ts > 0:
        raise ValueError(f"sampling time must be positive, got {ts!r}")
    return PidCoefficients(
        alpha=g.kp + g.kd / ts + g.ki * ts / 2,
        beta=g.ki * ts / 2 - 2 * g.kd / ts - g.kp,
        gamma=g.kd / ts,
    )


def pid_step(
    s: PidState,
    g: Gains,
    e: float,
    ts: float,
    limit: float | None = 1.0,
    normalization: float = CONTROL_NORMALIZATION,
) -> tuple[float, PidState]:
    """One control update: ``u(k) = u(k-1) + du(k)``, clamped to ``[-limit, limit]``.

    Pass ``limit=None`` to disable saturation.  Because only the increment is
    accumulated, anything beyond the clamp is simply dropped and the
    controller cannot wind up.
    """
    c = coefficients(g, ts)
    du = normalization * (c.alpha * e + c.beta * s.e_prev + c.gamma * s.e_prev2)
    u = s.u_prev + du
    if limit is not None:
        u = min(max(u, -limit), limit)
    return u, PidState(e_prev=e, e_prev2=s.e_prev, u_prev=u)


def reset(s: PidState | None = None) -> PidState:
    return PidState()

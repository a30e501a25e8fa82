"""
Rigid-body attitude propagation.

Kinematics ``q_dot = 1/2 [[-[w x], w], [-w^T, 0]] q`` (scalar-last) coupled with
Euler's equation ``w_dot = J^-1 (-w x Jw + M)`` in the principal body frame,
integrated with classical RK4 and renormalized after every step.

The inner loop works on Python floats rather than small numpy arrays: a
control period is 40 derivative evaluations and numpy's per-call overhead
would dominate the cost of a training run.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .so3 import rotate_vec


@dataclass(frozen=True)
class Inertia:
    """Principal moments of inertia in kg m^2 (CAPSTONE defaults)."""
    jx: float = 0.482
    jy: float = 1.094
    jz: float = 1.100

    def __post_init__(self):
        j = (self.jx, self.jy, self.jz)
        if min(j) <= 0:
            raise ValueError(f"inertia must be positive, got {j}")
        if j[0] + j[1] < j[2] or j[1] + j[2] < j[0] or j[0] + j[2] < j[1]:
            raise ValueError(f"inertia {j} violates the triangle inequality")

    def as_array(self):
        return np.array([self.jx, self.jy, self.jz])


@dataclass
class AttitudeState:
    q: np.ndarray
    w: np.ndarray
    t: float = 0.0

    def copy(self):
        return AttitudeState(self.q.copy(), self.w.copy(), self.t)


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.01
    substeps_per_control: int = 10
    inertia: Inertia = field(default_factory=Inertia)
    torque_limit: float = 0.1

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.substeps_per_control < 1:
            raise ValueError("substeps_per_control must be >= 1")
        if self.torque_limit <= 0:
            raise ValueError("torque_limit must be positive")

    @property
    def control_dt(self):
        return self.dt * self.substeps_per_control


class SimulationFault(RuntimeError):
    """The integrated state became non-finite."""


def q_dot(q, w):
    """Quaternion rate for body angular velocity ``w`` (rad/s)."""
    x, y, z, s = q
    p, r, u = w
    return 0.5 * np.array([
        -(r * z - u * y) + p * s,
        -(u * x - p * z) + r * s,
        -(p * y - r * x) + u * s,
        -(p * x + r * y + u * z),
    ])


def w_dot(w, m_applied, inertia):
    """Angular acceleration from Euler's rigid-body equation."""
    jx, jy, jz = inertia.jx, inertia.jy, inertia.jz
    p, r, u = w
    mx, my, mz = m_applied
    return np.array([
        ((jy - jz) * r * u + mx) / jx,
        ((jz - jx) * u * p + my) / jy,
        ((jx - jy) * p * r + mz) / jz,
    ])


def _deriv(s, m, j):
    x, y, z, qs, p, r, u = s
    mx, my, mz = m
    jx, jy, jz = j
    return (
        0.5 * (-(r * z - u * y) + p * qs),
        0.5 * (-(u * x - p * z) + r * qs),
        0.5 * (-(p * y - r * x) + u * qs),
        -0.5 * (p * x + r * y + u * z),
        ((jy - jz) * r * u + mx) / jx,
        ((jz - jx) * u * p + my) / jy,
        ((jx - jy) * p * r + mz) / jz,
    )


def _rk4(s, m, j, dt):
    # unrolled by hand; this loop is the hot path of every training run
    h = 0.5 * dt
    x, y, z, w, p, r, u = s
    a1 = _deriv(s, m, j)
    a2 = _deriv((x + h * a1[0], y + h * a1[1], z + h * a1[2], w + h * a1[3],
                 p + h * a1[4], r + h * a1[5], u + h * a1[6]), m, j)
    a3 = _deriv((x + h * a2[0], y + h * a2[1], z + h * a2[2], w + h * a2[3],
                 p + h * a2[4], r + h * a2[5], u + h * a2[6]), m, j)
    a4 = _deriv((x + dt * a3[0], y + dt * a3[1], z + dt * a3[2], w + dt * a3[3],
                 p + dt * a3[4], r + dt * a3[5], u + dt * a3[6]), m, j)
    c = dt / 6.0
    x += c * (a1[0] + 2.0 * a2[0] + 2.0 * a3[0] + a4[0])
    y += c * (a1[1] + 2.0 * a2[1] + 2.0 * a3[1] + a4[1])
    z += c * (a1[2] + 2.0 * a2[2] + 2.0 * a3[2] + a4[2])
    w += c * (a1[3] + 2.0 * a2[3] + 2.0 * a3[3] + a4[3])
    p += c * (a1[4] + 2.0 * a2[4] + 2.0 * a3[4] + a4[4])
    r += c * (a1[5] + 2.0 * a2[5] + 2.0 * a3[5] + a4[5])
    u += c * (a1[6] + 2.0 * a2[6] + 2.0 * a3[6] + a4[6])
    n = math.sqrt(x * x + y * y + z * z + w * w)
    if not (0.0 < n < math.inf and math.isfinite(p + r + u)):
        raise SimulationFault(f"non-finite state after RK4 step: {(x, y, z, w, p, r, u)}")
    return (x / n, y / n, z / n, w / n, p, r, u)


def _pack(state):
    return tuple(float(v) for v in state.q) + tuple(float(v) for v in state.w)


def _unpack(s, t):
    return AttitudeState(np.array(s[:4]), np.array(s[4:]), t)


def rk4_step(state, m_applied, dt, inertia):
    """One RK4 step of the coupled 7-state system; the quaternion is
    renormalized afterwards. Raises :class:`SimulationFault` on blow-up."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    m = tuple(float(v) for v in m_applied)
    j = (inertia.jx, inertia.jy, inertia.jz)
    return _unpack(_rk4(_pack(state), m, j, dt), state.t + dt)


def advance_control_period(state, m_applied, cfg):
    """Hold ``m_applied`` constant for ``cfg.substeps_per_control`` RK4 steps."""
    m = tuple(float(v) for v in m_applied)
    j = (cfg.inertia.jx, cfg.inertia.jy, cfg.inertia.jz)
    s = _pack(state)
    t = state.t
    for _ in range(cfg.substeps_per_control):
        s = _rk4(s, m, j, cfg.dt)
        t = t + cfg.dt
    return _unpack(s, t)


def angular_momentum_inertial(state, inertia):
    return rotate_vec(state.q, inertia.as_array() * state.w)


def rotational_energy(state, inertia):
    return 0.5 * float(state.w @ (inertia.as_array() * state.w))

"""
Scripted controllers usable anywhere an agent is expected.

``PointingPD`` is a rate-limited proportional-derivative law on the observed
attitude. It is the stand-in expert for desk-scale imitation tests: cheap,
deterministic and reliably stabilizing on the unperturbed satellite.
"""
import math

import numpy as np

from .dynamics import Inertia
from .so3 import quat_to_matrix


class PointingPD:
    kind = "scripted"

    def __init__(self, inertia=None, antenna_axis=(1.0, 0.0, 0.0), target_dir=(0.0, 0.0, 1.0),
                 gain=0.2, max_rate_deg_s=5.0, rate_bandwidth=1.0, torque_limit=0.1):
        self.j = (inertia or Inertia()).as_array()
        self.antenna = np.asarray(antenna_axis, dtype=float)
        self.target = np.asarray(target_dir, dtype=float)
        self.gain = gain
        self.max_rate = math.radians(max_rate_deg_s)
        self.bandwidth = rate_bandwidth
        self.torque_limit = torque_limit

    def act(self, obs, deterministic=True):
        q = obs[:4] / np.linalg.norm(obs[:4])
        w = obs[4:7]
        target_body = quat_to_matrix(q).T @ self.target
        axis = np.cross(self.antenna, target_body)
        s = np.linalg.norm(axis)
        phi = math.atan2(s, float(self.antenna @ target_body))
        if s < 1e-9:
            # aligned (nothing to do) or exactly opposite (any perpendicular axis works)
            axis = np.zeros(3) if phi < 1.0 else np.cross(self.antenna, [0.0, 1.0, 0.0])
            s = max(np.linalg.norm(axis), 1.0)
        w_des = self.max_rate * math.tanh(self.gain * phi / self.max_rate) * axis / s
        u = self.j * self.bandwidth * (w_des - w)
        return self.torque_limit * np.tanh(u / self.torque_limit)

    __call__ = act


class ZeroTorque:
    kind = "scripted"

    def act(self, obs, deterministic=True):
        return np.zeros(3)


class RandomPolicy:
    """Uniform random torques; the reference an RL agent has to beat."""

    kind = "random"

    def __init__(self, seed=0, torque_limit=0.1):
        self.rng = np.random.default_rng(seed)
        self.torque_limit = torque_limit

    def act(self, obs, deterministic=False):
        return self.rng.uniform(-self.torque_limit, self.torque_limit, 3)

"""
Fault models: gyroscope errors, torque failures and attitude misalignment,
plus the experiment matrix that combines them.

Gyro sigmas are given in degrees (deg/s, or deg/s/sqrt(s) for drift) at the
configuration boundary and converted to radians once, in the constructors
below. Everything stored on the model objects is in rad/s.

Randomness comes from per-subsystem numpy ``Generator`` streams spawned from a
single ``SeedSequence`` (see :func:`make_streams`), so adding draws to one
fault type never shifts another's sequence.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from .so3 import IDENTITY, euler321_to_quat, normalize, quat_mul

AXES = "xyz"
STREAMS = ("init", "gyro", "torque")

GYRO_KINDS = ("none", "white_noise", "constant_bias", "drift")
TORQUE_KINDS = ("none", "axis_fail", "axis_noise")

DEFAULT_GAMMA = 0.5
DEFAULT_MISALIGN_DEG = (15.0, 18.0, 21.0)  # roll, pitch, yaw
DEFAULT_GYRO_SIGMA_DEG = {
    "none": 0.0,
    "white_noise": 0.1,
    "constant_bias": 0.1,
    "drift": 0.01,
}


def make_streams(seed):
    """Independent generators keyed by subsystem name.

    Uses PCG64 seeded through ``SeedSequence(seed, spawn_key=(i,))``; the
    stream index is the position of the name in :data:`STREAMS`.
    """
    return {
        name: np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(i,))))
        for i, name in enumerate(STREAMS)
    }


def _axes_to_mask(axes):
    axes = axes or ""
    bad = set(axes) - set(AXES)
    if bad:
        raise ValueError(f"unknown torque axes {sorted(bad)}; use a subset of 'xyz'")
    return np.array([a in axes for a in AXES])


@dataclass
class GyroModel:
    kind: str = "none"
    sigma: float = 0.0  # rad/s (white_noise, constant_bias) or rad/s/sqrt(s) (drift)
    episode_bias: np.ndarray = field(default_factory=lambda: np.zeros(3))
    drift_state: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        if self.kind not in GYRO_KINDS:
            raise ValueError(f"gyro kind must be one of {GYRO_KINDS}, got {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("gyro sigma must be non-negative")

    @classmethod
    def from_degrees(cls, kind, sigma_deg=None):
        if sigma_deg is None:
            sigma_deg = DEFAULT_GYRO_SIGMA_DEG.get(kind, 0.0)
        return cls(kind=kind, sigma=math.radians(sigma_deg))


def reset_gyro(model, rng):
    """Start-of-episode reset: a fresh constant bias, or a drift walk back at
    zero. Other kinds are left untouched. Mutates and returns ``model``."""
    if model.kind == "constant_bias":
        model.episode_bias = rng.normal(0.0, model.sigma, 3)
    elif model.kind == "drift":
        model.drift_state = np.zeros(3)
    return model


def measure_gyro(w_true, model, rng, control_dt=0.1, advance=True):
    """Gyro reading for the true rate ``w_true`` (rad/s).

    For drift, ``advance=True`` first takes one random-walk step of length
    ``control_dt``; the reading taken right after a reset passes
    ``advance=False`` so it reports b(0) = 0.
    """
    w_true = np.asarray(w_true, dtype=float)
    if model.kind == "none":
        return w_true.copy()
    if model.kind == "white_noise":
        return w_true + rng.normal(0.0, model.sigma, 3)
    if model.kind == "constant_bias":
        return w_true + model.episode_bias
    if advance:
        model.drift_state = model.drift_state + model.sigma * rng.normal(0.0, math.sqrt(control_dt), 3)
    return w_true + model.drift_state


@dataclass
class TorqueModel:
    kind: str = "none"
    failed_axes: str = ""
    noisy_axes: str = ""
    gamma: float = DEFAULT_GAMMA

    def __post_init__(self):
        if self.kind not in TORQUE_KINDS:
            raise ValueError(f"torque kind must be one of {TORQUE_KINDS}, got {self.kind!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie in (0, 1)")
        self._fail = _axes_to_mask(self.failed_axes)
        self._noise = _axes_to_mask(self.noisy_axes)
        if np.any(self._fail & self._noise):
            raise ValueError("an axis cannot be both failed and noisy")


def apply_torque_faults(m_cmd, model, rng):
    """Torque actually delivered for the (already clamped) command ``m_cmd``.

    Failed axes deliver nothing; noisy axes deliver ``xi * m`` with a fresh
    ``xi ~ U[gamma, 1]`` per axis per call. Never flips sign or amplifies.
    """
    m = np.array(m_cmd, dtype=float)
    if model.kind == "none":
        return m
    m[model._fail] = 0.0
    if model._noise.any():
        xi = rng.uniform(model.gamma, 1.0, 3)
        m = np.where(model._noise, xi * m, m)
    return m


@dataclass
class MisalignModel:
    enabled: bool = False
    delta_q: np.ndarray = field(default_factory=lambda: IDENTITY.copy())

    def __post_init__(self):
        self.delta_q = normalize(self.delta_q)

    @classmethod
    def from_euler_deg(cls, roll, pitch, yaw, enabled=True):
        return cls(enabled, euler321_to_quat(*np.radians([roll, pitch, yaw])))


def observe_attitude(q_true, model):
    """Reported attitude ``dq ⊗ q`` when the misalignment is enabled."""
    if not model.enabled:
        return np.array(q_true, dtype=float)
    return normalize(quat_mul(model.delta_q, q_true))


@dataclass
class PerturbationSuite:
    gyro: GyroModel = field(default_factory=GyroModel)
    torque: TorqueModel = field(default_factory=TorqueModel)
    misalign: MisalignModel = field(default_factory=MisalignModel)
    label: str = "custom"

    def describe(self):
        t = self.torque
        if t.kind == "axis_fail":
            ctl = f"{t.failed_axes}_fail"
        elif t.kind == "axis_noise":
            ctl = f"{t.noisy_axes}_noise"
        else:
            ctl = "no_control_error"
        mis = "misalignment" if self.misalign.enabled else "no_misalignment"
        gyro = {
            "none": "no_gyro_error",
            "white_noise": "gyro_noise",
            "constant_bias": "gyro_constant",
            "drift": "gyro_drift",
        }[self.gyro.kind]
        return f"{ctl} + {mis} + {gyro}"


# index -> (torque kind, axes, misaligned, gyro kind); mirrors the experiment table
EXPERIMENTS = {
    1: ("none", "", False, "none"),
    2: ("axis_fail", "x", False, "none"),
    3: ("axis_fail", "y", False, "none"),
    4: ("axis_fail", "z", False, "none"),
    5: ("axis_fail", "x", True, "none"),
    6: ("axis_fail", "y", True, "none"),
    7: ("axis_fail", "z", True, "none"),
    8: ("axis_noise", "xyz", True, "none"),
    9: ("none", "", False, "constant_bias"),
    10: ("none", "", False, "white_noise"),
    11: ("none", "", False, "drift"),
    12: ("axis_fail", "xy", False, "none"),
    13: ("axis_fail", "yz", False, "none"),
    14: ("axis_fail", "xz", False, "none"),
}


def suite_for_experiment(index, gamma=DEFAULT_GAMMA, gyro_sigma_deg=None,
                         misalign_euler_deg=DEFAULT_MISALIGN_DEG):
    """Fault suite for experiment ``index`` (1..14)."""
    if index not in EXPERIMENTS:
        raise ValueError(f"experiment index must be in 1..14, got {index!r}")
    tkind, axes, misaligned, gkind = EXPERIMENTS[index]
    torque = TorqueModel(
        kind=tkind,
        failed_axes=axes if tkind == "axis_fail" else "",
        noisy_axes=axes if tkind == "axis_noise" else "",
        gamma=gamma,
    )
    misalign = (MisalignModel.from_euler_deg(*misalign_euler_deg) if misaligned
                else MisalignModel())
    suite = PerturbationSuite(GyroModel.from_degrees(gkind, gyro_sigma_deg), torque, misalign)
    suite.label = f"experiment {index}: {suite.describe()}"
    return suite


def suite_from_config(pert, index=None):
    """Build a suite from a ``perturbation`` config section.

    When ``index`` is given, the experiment row supplies the defaults and only
    keys explicitly present in ``pert`` override it.
    """
    pert = pert or {}
    g = pert.get("gyro", {})
    t = pert.get("torque", {})
    m = pert.get("misalign", {})
    base = suite_for_experiment(index) if index is not None else PerturbationSuite()

    gkind = g.get("kind", base.gyro.kind)
    if "sigma" in g:
        gyro = GyroModel.from_degrees(gkind, g["sigma"])
    elif gkind == base.gyro.kind:
        gyro = base.gyro
    else:
        gyro = GyroModel.from_degrees(gkind)

    tkind = t.get("kind", base.torque.kind)
    base_axes = base.torque.failed_axes or base.torque.noisy_axes
    axes = t.get("axes", base_axes)
    torque = TorqueModel(
        kind=tkind,
        failed_axes=axes if tkind == "axis_fail" else "",
        noisy_axes=axes if tkind == "axis_noise" else "",
        gamma=t.get("gamma", base.torque.gamma),
    )

    enabled = m.get("enabled", base.misalign.enabled)
    if "euler_deg" in m:
        misalign = MisalignModel.from_euler_deg(*m["euler_deg"], enabled=enabled)
    elif enabled and not base.misalign.enabled:
        misalign = MisalignModel.from_euler_deg(*DEFAULT_MISALIGN_DEG)
    else:
        misalign = MisalignModel(enabled, base.misalign.delta_q)

    suite = PerturbationSuite(gyro, torque, misalign)
    prefix = f"experiment {index}: " if index is not None else ""
    suite.label = prefix + suite.describe()
    return suite

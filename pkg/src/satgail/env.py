"""
Episodic antenna-pointing environment.

Each ``step`` holds the commanded torque for one 0.1 s control period:
clamp -> actuator faults -> 10 RK4 substeps -> sensor faults -> reward.
The reward is computed from the TRUE pointing error while the agent only
sees the (possibly misaligned, possibly noisy) observation ``(q_obs, w_meas)``.
"""
import math
from dataclasses import dataclass, field

import numpy as np

from . import so3
from .dynamics import AttitudeState, SimConfig, advance_control_period
from .perturbations import (PerturbationSuite, apply_torque_faults, make_streams,
                            measure_gyro, observe_attitude, reset_gyro)

OBS_DIM = 7
ACT_DIM = 3

# Initial states shared by every agent under evaluation.
EVAL_SEEDS = (20250101, 20250102, 20250103, 20250104, 20250105, 20250106)

REWARD_VARIANTS = ("refined", "no_shaping")


@dataclass(frozen=True)
class EnvConfig:
    s1: float = 1.0
    s2: float = 0.5
    s3: float = 1.0
    s4: float = 9.0
    s5: float = 500.0
    stay_deg: float = 5.0
    oob_deg_s: float = 10.0
    episode_seconds: float = 2500.0
    antenna_axis: tuple = (1.0, 0.0, 0.0)
    target_dir: tuple = (0.0, 0.0, 1.0)
    init_rate_deg_s: float = 3.0
    reward_variant: str = "refined"
    sim: SimConfig = field(default_factory=SimConfig)

    def __post_init__(self):
        if min(self.s1, self.s2, self.s3, self.s4, self.s5) < 0:
            raise ValueError("reward scalers must be non-negative")
        if self.stay_deg <= 0 or self.oob_deg_s <= 0 or self.episode_seconds <= 0:
            raise ValueError("thresholds and episode length must be positive")
        if self.reward_variant not in REWARD_VARIANTS:
            raise ValueError(f"reward variant must be one of {REWARD_VARIANTS}")

    @property
    def max_steps(self):
        return int(round(self.episode_seconds / self.sim.control_dt))


@dataclass
class RewardBreakdown:
    attitude: float
    control: float
    worse_penalty: float
    stay_bonus: float
    oob_penalty: float

    @property
    def total(self):
        return self.attitude + self.control + self.worse_penalty + self.stay_bonus + self.oob_penalty


@dataclass
class Transition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    terminated: bool
    truncated: bool
    info: dict


def reward(phi_t, phi_prev, m_cmd, terminated, cfg, torque_limit=0.1):
    """Five-term shaped reward; angles in radians, torque in N m."""
    # normalizing per axis first makes full torque on all axes exactly -s2
    m_rel = np.asarray(m_cmd, dtype=float) / torque_limit
    shaped = cfg.reward_variant == "refined"
    return RewardBreakdown(
        attitude=math.exp(-phi_t / (0.14 * 2.0 * math.pi)) * cfg.s1,
        control=-(float(np.linalg.norm(m_rel)) / math.sqrt(3.0)) * cfg.s2,
        worse_penalty=-cfg.s3 if (shaped and phi_t > phi_prev) else 0.0,
        stay_bonus=cfg.s4 if (shaped and phi_t <= math.radians(cfg.stay_deg)) else 0.0,
        oob_penalty=-cfg.s5 if terminated else 0.0,
    )


def pointing_error(q, cfg):
    """Angle (rad) between the body antenna axis, rotated to inertial, and the target."""
    return so3.angle_between(so3.rotate_vec(q, cfg.antenna_axis), cfg.target_dir)


def sample_initial_state(rng, rate_deg_s=3.0):
    q = so3.random_unit_quat(rng)
    w = np.radians(rng.uniform(-rate_deg_s, rate_deg_s, 3))
    return AttitudeState(q, w, 0.0)


class AttitudeEnv:
    """Single-owner environment. ``reset`` must precede ``step``."""

    def __init__(self, suite=None, cfg=None, seed=0):
        self.suite = suite if suite is not None else PerturbationSuite()
        self.cfg = cfg if cfg is not None else EnvConfig()
        self._seeder = np.random.Generator(np.random.PCG64(seed))
        self.state = None
        self.steps = 0
        self.done = True
        self.episode_seed = None

    @property
    def control_dt(self):
        return self.cfg.sim.control_dt

    def _observe(self, advance):
        q_obs = observe_attitude(self.state.q, self.suite.misalign)
        w_meas = measure_gyro(self.state.w, self.suite.gyro, self.rng["gyro"],
                              self.control_dt, advance=advance)
        return np.concatenate([q_obs, w_meas])

    def reset(self, seed=None, init_index=None):
        """Start an episode; returns the first observation.

        ``init_index`` (0..5) selects one of the pinned evaluation states,
        together with its fault realization. Otherwise ``seed`` is used, or a
        fresh one is drawn from the environment's own seed stream.
        """
        if init_index is not None:
            seed = EVAL_SEEDS[init_index]
        elif seed is None:
            seed = int(self._seeder.integers(2**63))
        self.episode_seed = seed
        self.rng = make_streams(seed)
        self.state = sample_initial_state(self.rng["init"], self.cfg.init_rate_deg_s)
        reset_gyro(self.suite.gyro, self.rng["gyro"])
        self.phi = pointing_error(self.state.q, self.cfg)
        self.steps = 0
        self.done = False
        self.obs = self._observe(advance=False)
        return self.obs.copy()

    def step(self, action):
        """Apply a torque command (N m) for one control period."""
        if self.done:
            raise RuntimeError("step() called on a finished episode; call reset() first")
        lim = self.cfg.sim.torque_limit
        m_cmd = np.clip(np.asarray(action, dtype=float), -lim, lim)
        m_applied = apply_torque_faults(m_cmd, self.suite.torque, self.rng["torque"])
        self.state = advance_control_period(self.state, m_applied, self.cfg.sim)
        self.steps += 1

        phi_prev = self.phi
        self.phi = pointing_error(self.state.q, self.cfg)
        rate = float(np.linalg.norm(self.state.w))
        terminated = rate > math.radians(self.cfg.oob_deg_s)
        truncated = (not terminated) and self.steps >= self.cfg.max_steps
        rb = reward(self.phi, phi_prev, m_cmd, terminated, self.cfg, lim)

        obs = self.obs
        self.obs = self._observe(advance=True)
        self.done = terminated or truncated
        info = {
            "phi_true_deg": math.degrees(self.phi),
            "phi_obs_deg": math.degrees(pointing_error(self.obs[:4], self.cfg)),
            "m_applied": m_applied,
            "reward_terms": rb,
            "t": self.state.t,
        }
        return Transition(obs, m_cmd, rb.total, self.obs.copy(), terminated, truncated, info)

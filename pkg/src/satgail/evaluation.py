"""
Pointing metrics, the six-initial-state evaluation protocol, and report files.

A trace is the true pointing error sampled at the 0.1 s control cadence, one
sample per control period starting at t = 0. Integrals over [0, T] are left
rectangle sums, so every sample carries the same weight ``dt``.
"""
import copy
import csv
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dynamics import SimulationFault
from .env import EVAL_SEEDS, AttitudeEnv, EnvConfig, pointing_error
from .perturbations import suite_for_experiment

TRACE_COLUMNS = ("t", "phi_true_deg", "phi_obs_deg", "q1", "q2", "q3", "q4",
                 "wx", "wy", "wz", "ax", "ay", "az",
                 "Mx_applied", "My_applied", "Mz_applied", "reward", "terminated")
METRIC_KEYS = ("rms", "duty", "max", "min")
N_EVAL_STATES = len(EVAL_SEEDS)


@dataclass
class AngleTrace:
    theta_deg: np.ndarray
    dt: float = 0.1

    def __post_init__(self):
        self.theta_deg = np.asarray(self.theta_deg, dtype=float)
        if self.theta_deg.size == 0:
            raise ValueError("an angle trace needs at least one sample")

    @property
    def duration(self):
        return self.theta_deg.size * self.dt

    def window(self, t_start, t_end=None):
        """Samples whose time stamps fall in ``[t_start, t_end)``."""
        t = np.arange(self.theta_deg.size) * self.dt
        keep = t >= t_start - 1e-9
        if t_end is not None:
            keep &= t < t_end - 1e-9
        return AngleTrace(self.theta_deg[keep], self.dt)

    def last(self, seconds):
        n = max(1, int(round(seconds / self.dt)))
        return AngleTrace(self.theta_deg[-n:], self.dt)


def _theta(trace):
    return trace.theta_deg if isinstance(trace, AngleTrace) else np.asarray(trace, dtype=float)


def duty_cycle(trace, thr_deg=10.0):
    """Fraction of time with the pointing error at or below ``thr_deg``."""
    th = _theta(trace)
    return float(np.mean(th <= thr_deg))


def rms_error(trace):
    th = _theta(trace)
    # scaling by the peak keeps a constant trace exact and avoids overflow
    peak = float(np.max(np.abs(th)))
    if peak == 0.0:
        return 0.0
    return peak * float(np.sqrt(np.mean((th / peak) ** 2)))


def extreme_errors(trace):
    th = _theta(trace)
    return float(th.max()), float(th.min())


def metrics(trace, thr_deg=10.0):
    mx, mn = extreme_errors(trace)
    return {"rms": rms_error(trace), "duty": duty_cycle(trace, thr_deg), "max": mx, "min": mn}


@dataclass
class StateResult:
    init_index: int
    trace: AngleTrace
    rows: list
    total_reward: float
    terminated_early: bool = False
    failed: bool = False
    error: str = ""

    def summary(self):
        out = {"init_index": self.init_index, "total_reward": self.total_reward,
               "samples": int(self.trace.theta_deg.size),
               "terminated_early": self.terminated_early, "failed": self.failed}
        out.update(metrics(self.trace))
        if self.error:
            out["error"] = self.error
        return out


@dataclass
class EvalReport:
    experiment: int
    agent_kind: str
    T: float
    per_state: list = field(default_factory=list)

    @property
    def average(self):
        rows = [s.summary() for s in self.per_state]
        return {k: float(np.mean([r[k] for r in rows])) for k in METRIC_KEYS}

    @property
    def mean_reward(self):
        return float(np.mean([s.total_reward for s in self.per_state]))

    def to_dict(self):
        return {"experiment": self.experiment, "agent_kind": self.agent_kind, "T": self.T,
                "per_state": [s.summary() for s in self.per_state],
                "average": self.average}

    def write(self, out_dir, prefix=None):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        prefix = prefix or f"exp{self.experiment:02d}_{self.agent_kind}"
        (out / f"{prefix}_report.json").write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        for s in self.per_state:
            write_trace_csv(out / f"{prefix}_state{s.init_index}_trace.csv", s.rows)
        return out / f"{prefix}_report.json"


def write_trace_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in r])


def _policy_fn(agent, deterministic):
    if callable(agent) and not hasattr(agent, "act"):
        return agent
    return lambda obs: agent.act(obs, deterministic=deterministic)


def run_state(agent, env, init_index, deterministic=True):
    """Roll one pinned initial state to the end of the episode."""
    act = _policy_fn(agent, deterministic)
    obs = env.reset(init_index=init_index)
    rows, thetas = [], []
    total = 0.0
    tr = None
    try:
        while True:
            theta = math.degrees(env.phi)
            state = env.state
            a = np.asarray(act(obs), dtype=float)
            tr = env.step(a)
            thetas.append(theta)
            total += tr.reward
            rows.append([round(state.t, 10), theta,
                         float(np.degrees(_obs_angle(obs, env))),
                         *map(float, state.q), *map(float, state.w),
                         *map(float, tr.action), *map(float, tr.info["m_applied"]),
                         float(tr.reward), int(tr.terminated)])
            obs = tr.next_obs
            if tr.terminated or tr.truncated:
                break
    except SimulationFault as exc:
        return StateResult(init_index, AngleTrace(thetas or [math.degrees(env.phi)], env.control_dt),
                           rows, total, True, True, str(exc))
    return StateResult(init_index, AngleTrace(thetas, env.control_dt), rows, total,
                       terminated_early=bool(tr.terminated))


def _obs_angle(obs, env):
    return pointing_error(obs[:4], env.cfg)


def _run_one(args):
    agent, suite, cfg, k, deterministic = args
    return run_state(agent, AttitudeEnv(suite, cfg), k, deterministic)


def evaluate_agent(agent, experiment_index=1, T=2500.0, deterministic=True,
                   agent_kind="expert", env_cfg=None, suite=None, states=None,
                   workers=1, suite_factory=None):
    """Run the six pinned initial states and aggregate the pointing metrics.

    ``agent`` is anything with ``act(obs, deterministic=...)`` or a plain
    callable ``obs -> torque``. A simulation fault marks that state as failed
    instead of aborting the sweep. With ``workers > 1`` the states run in
    separate processes; results are identical to the serial sweep because
    every state owns its seed.
    """
    cfg = env_cfg if env_cfg is not None else EnvConfig()
    if cfg.episode_seconds != T:
        cfg = replace(cfg, episode_seconds=float(T))
    if suite is None:
        suite = suite_factory() if suite_factory else suite_for_experiment(experiment_index)
    # gyro models carry per-episode state, so every initial state gets its own copy
    jobs = [(agent, copy.deepcopy(suite), cfg, k, deterministic)
            for k in (states if states is not None else range(N_EVAL_STATES))]
    report = EvalReport(experiment_index, agent_kind, T)
    if workers and workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            report.per_state.extend(pool.map(_run_one, jobs))
    else:
        report.per_state.extend(map(_run_one, jobs))
    return report


def comparison_table(reports):
    """Markdown table with one row per (label, EvalReport): RMS, duty, max, min."""
    lines = ["|  | RMS | Duty Cycle | Max (deg) | Min (deg) |",
             "|---|---|---|---|---|"]
    for label, rep in reports:
        a = rep.average
        lines.append(f"| {label} | {a['rms']:.4f} | {a['duty']:.4f} | {a['max']:.4f} | {a['min']:.4f} |")
    return "\n".join(lines) + "\n"


def plot_traces(report, path, thr_deg=10.0):
    """Static SVG of the six pointing-error curves with the threshold line."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "satgail"
    fig, ax = plt.subplots(figsize=(8, 4))
    for s in report.per_state:
        t = np.arange(s.trace.theta_deg.size) * s.trace.dt
        ax.plot(t, s.trace.theta_deg, lw=0.8, label=f"initial state {s.init_index + 1}")
    ax.axhline(thr_deg, color="red", lw=1.0)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("pointing error (deg)")
    ax.set_title(f"Experiment {report.experiment} ({report.agent_kind})")
    ax.legend(fontsize=7, loc="upper right")
    fig.tight_layout()
    # fixed metadata keeps repeated runs byte-identical
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path

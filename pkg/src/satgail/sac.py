"""
Soft Actor-Critic with twin critics, soft target updates and an auto-tuned
entropy temperature.

Actions are handled in normalized units (``[-1, 1]^3``) everywhere inside the
agent and scaled to N m only at :meth:`SacAgent.act`. Observations are divided
by :data:`OBS_SCALE` before entering any network so the angular-rate inputs are
O(1) rather than O(0.01).
"""
import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .env import ACT_DIM, OBS_DIM
from .nn import (Adam, MlpNet, gaussian_head_backward, gaussian_head_sample,
                 linear_schedule, load_net, save_net)

log = logging.getLogger(__name__)

# quaternion components as-is, rates in units of the 10 deg/s safety limit
OBS_SCALE = np.array([1.0, 1.0, 1.0, 1.0] + [math.radians(10.0)] * 3)

TRAIN_LOG_COLUMNS = ("step", "episode", "episode_reward", "critic1_loss",
                     "critic2_loss", "policy_loss", "alpha")


@dataclass
class SacConfig:
    batch_size: int = 64
    buffer_size: int = 1_000_000
    learning_starts: int = 1000
    train_freq: int = 1
    gradient_steps: int = 1
    lr_start: float = 1e-3
    lr_end: float = 1e-4
    gamma: float = 0.99
    tau: float = 0.005
    target_entropy: float = -float(ACT_DIM)
    init_alpha: float = 1.0
    hidden: tuple = (256, 256)
    action_scale: float = 0.1
    checkpoint_every: int = 50_000

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        if self.batch_size > self.buffer_size:
            raise ValueError("batch_size cannot exceed buffer_size")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if min(self.batch_size, self.train_freq, self.gradient_steps) < 1:
            raise ValueError("batch_size, train_freq and gradient_steps must be >= 1")


class ReplayBuffer:
    """FIFO ring buffer of (obs, action, reward, next_obs, terminated).

    Storage is allocated lazily with ``np.empty`` so a large capacity costs
    nothing until it is filled.
    """

    def __init__(self, capacity, obs_dim=OBS_DIM, act_dim=ACT_DIM):
        self.capacity = int(capacity)
        self.obs = np.empty((self.capacity, obs_dim))
        self.actions = np.empty((self.capacity, act_dim))
        self.rewards = np.empty(self.capacity)
        self.next_obs = np.empty((self.capacity, obs_dim))
        self.terminated = np.empty(self.capacity)
        self.pos = 0
        self.size = 0

    def __len__(self):
        return self.size

    def add(self, obs, action, reward, next_obs, terminated):
        i = self.pos
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.terminated[i] = float(terminated)
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch_size, rng):
        if batch_size > self.size:
            raise ValueError(f"cannot sample {batch_size} from {self.size} transitions")
        return rng.choice(self.size, size=batch_size, replace=False)

    def sample(self, batch_size, rng):
        idx = self.sample_indices(batch_size, rng)
        return self.batch(idx)

    def batch(self, idx):
        return {
            "obs": self.obs[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_obs": self.next_obs[idx],
            "terminated": self.terminated[idx],
        }


class SacAgent:
    """Policy ``7 -> hidden -> 6`` (mean, log_std) plus twin critics ``10 -> hidden -> 1``."""

    kind = "sac"

    def __init__(self, cfg=None, seed=0):
        self.cfg = cfg if cfg is not None else SacConfig()
        self.seed = seed
        ss = np.random.SeedSequence(seed)
        init_rng, self.rng = (np.random.Generator(np.random.PCG64(s)) for s in ss.spawn(2))
        h = list(self.cfg.hidden)
        self.policy = MlpNet([OBS_DIM] + h + [2 * ACT_DIM], "relu", "gaussian", init_rng)
        self.q1 = MlpNet([OBS_DIM + ACT_DIM] + h + [1], "relu", "linear", init_rng)
        self.q2 = MlpNet([OBS_DIM + ACT_DIM] + h + [1], "relu", "linear", init_rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.log_alpha = np.array([math.log(self.cfg.init_alpha)])
        lr = self.cfg.lr_start
        self.policy_opt = Adam([self.policy.flat], lr)
        self.q1_opt = Adam([self.q1.flat], lr)
        self.q2_opt = Adam([self.q2.flat], lr)
        self.alpha_opt = Adam([self.log_alpha], lr)
        self.updates = 0

    @property
    def alpha(self):
        return float(np.exp(self.log_alpha[0]))

    def set_lr(self, lr):
        for opt in (self.policy_opt, self.q1_opt, self.q2_opt, self.alpha_opt):
            opt.lr = lr

    def _policy_dist(self, obs_scaled):
        out, cache = self.policy.forward(obs_scaled)
        return out[..., :ACT_DIM], out[..., ACT_DIM:], cache

    def act(self, obs, deterministic=False):
        """Torque command in N m for one observation (or a batch)."""
        mean, log_std, _ = self._policy_dist(np.asarray(obs) / OBS_SCALE)
        if deterministic:
            a = np.tanh(mean)
        else:
            _, a, _, _ = gaussian_head_sample(mean, log_std, self.rng)
        return self.cfg.action_scale * a

    def _q(self, net, obs_s, act_n):
        out, cache = net.forward(np.concatenate([obs_s, act_n], axis=1))
        return out[:, 0], cache

    def update(self, batch):
        """One gradient step for critics, policy and temperature, then a soft
        target update. ``batch`` holds normalized actions."""
        cfg = self.cfg
        obs = batch["obs"] / OBS_SCALE
        next_obs = batch["next_obs"] / OBS_SCALE
        act = batch["actions"]
        rew = batch["rewards"]
        notdone = 1.0 - batch["terminated"]
        n = obs.shape[0]

        # current-policy sample, reused for the temperature and policy losses
        mean, log_std, pcache = self._policy_dist(obs)
        _, a_pi, logp_pi, noise = gaussian_head_sample(mean, log_std, self.rng)

        alpha = self.alpha
        ent_gap = logp_pi + cfg.target_entropy
        alpha_loss = -float(self.log_alpha[0] * ent_gap.mean())
        self.alpha_opt.step([np.array([-ent_gap.mean()])])

        # critic targets
        nmean, nlog_std, _ = self._policy_dist(next_obs)
        _, a_next, logp_next, _ = gaussian_head_sample(nmean, nlog_std, self.rng)
        tq1, _ = self._q(self.q1_target, next_obs, a_next)
        tq2, _ = self._q(self.q2_target, next_obs, a_next)
        target = rew + notdone * cfg.gamma * (np.minimum(tq1, tq2) - alpha * logp_next)

        losses = []
        for net, opt in ((self.q1, self.q1_opt), (self.q2, self.q2_opt)):
            q, cache = self._q(net, obs, act)
            err = q - target
            losses.append(float(0.5 * np.mean(err ** 2)))
            grads, _ = net.backward(cache, (err / n)[:, None])
            opt.step([grads.flat])
        mean_q = float(np.mean(q))

        # policy loss through the freshly updated critics
        q1_pi, c1 = self._q(self.q1, obs, a_pi)
        q2_pi, c2 = self._q(self.q2, obs, a_pi)
        use1 = q1_pi <= q2_pi
        policy_loss = float(np.mean(alpha * logp_pi - np.where(use1, q1_pi, q2_pi)))
        g_q = -1.0 / n
        _, gin1 = self.q1.backward(c1, (g_q * use1)[:, None], param_grads=False)
        _, gin2 = self.q2.backward(c2, (g_q * ~use1)[:, None], param_grads=False)
        g_act = gin1[:, OBS_DIM:] + gin2[:, OBS_DIM:]
        g_mean, g_log_std = gaussian_head_backward(mean, log_std, noise, g_act,
                                                   np.full(n, alpha / n))
        pgrads, _ = self.policy.backward(pcache, np.concatenate([g_mean, g_log_std], axis=1))
        self.policy_opt.step([pgrads.flat])

        for net, tgt in ((self.q1, self.q1_target), (self.q2, self.q2_target)):
            tgt.flat *= 1.0 - cfg.tau
            tgt.flat += cfg.tau * net.flat
        self.updates += 1

        report = {
            "critic1": losses[0],
            "critic2": losses[1],
            "policy": policy_loss,
            "temperature": alpha_loss,
            "alpha": alpha,
            "mean_q": mean_q,
            "entropy": float(-logp_pi.mean()),
        }
        if not all(math.isfinite(v) for v in report.values()):
            raise FloatingPointError(f"non-finite SAC loss: {report}")
        return report

    # -------------------------------------------------------------- persistence

    def save(self, directory, extra=None):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for name in ("policy", "q1", "q2", "q1_target", "q2_target"):
            save_net(getattr(self, name), d / f"{name}.bin")
        meta = {
            "kind": self.kind,
            "seed": self.seed,
            "updates": self.updates,
            "log_alpha": float(self.log_alpha[0]),
            "config": asdict(self.cfg),
        }
        meta.update(extra or {})
        (d / "agent.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory):
        d = Path(directory)
        meta = json.loads((d / "agent.json").read_text())
        if meta.get("kind") != cls.kind:
            raise ValueError(f"{d}: checkpoint kind {meta.get('kind')!r} is not {cls.kind!r}")
        agent = cls(SacConfig(**meta["config"]), meta["seed"])
        for name in ("policy", "q1", "q2", "q1_target", "q2_target"):
            getattr(agent, name).load_params(load_net(d / f"{name}.bin"))
        agent.log_alpha[0] = meta["log_alpha"]
        agent.updates = meta["updates"]
        agent.meta = meta
        return agent


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRAIN_LOG_COLUMNS)
            for r in self.rows:
                w.writerow([r[c] for c in TRAIN_LOG_COLUMNS])


def train(env, cfg, total_steps, seed=0, eval_hook=None, eval_every=None,
          checkpoint_dir=None, agent=None, log_every_episode=None):
    """Train a SAC agent on ``env`` for ``total_steps`` environment steps.

    Before ``learning_starts`` actions are uniform random. ``eval_hook(agent,
    step)`` may return a score; the best-scoring policy is checkpointed to
    ``checkpoint_dir/best`` alongside periodic ``step_<n>`` checkpoints.
    Returns ``(agent, TrainLog)``.
    """
    agent = agent if agent is not None else SacAgent(cfg, seed)
    buf = ReplayBuffer(min(cfg.buffer_size, max(total_steps, cfg.batch_size)))
    tlog = TrainLog()
    explore_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(99,))))
    obs = env.reset()
    ep_reward, episode = 0.0, 0
    last = {"critic1": float("nan"), "critic2": float("nan"), "policy": float("nan"), "alpha": agent.alpha}
    best = -math.inf
    ckpt = Path(checkpoint_dir) if checkpoint_dir else None

    for step in range(1, total_steps + 1):
        if step <= cfg.learning_starts:
            a_n = explore_rng.uniform(-1.0, 1.0, ACT_DIM)
        else:
            a_n = agent.act(obs) / cfg.action_scale
        tr = env.step(cfg.action_scale * a_n)
        buf.add(obs, a_n, tr.reward, tr.next_obs, tr.terminated)
        ep_reward += tr.reward
        obs = tr.next_obs

        if step > cfg.learning_starts and len(buf) >= cfg.batch_size and step % cfg.train_freq == 0:
            agent.set_lr(linear_schedule(cfg.lr_start, cfg.lr_end, step / total_steps))
            for _ in range(cfg.gradient_steps):
                last = agent.update(buf.sample(cfg.batch_size, agent.rng))

        if tr.terminated or tr.truncated:
            episode += 1
            tlog.rows.append({
                "step": step, "episode": episode, "episode_reward": ep_reward,
                "critic1_loss": last["critic1"], "critic2_loss": last["critic2"],
                "policy_loss": last["policy"], "alpha": last["alpha"],
            })
            if log_every_episode and episode % log_every_episode == 0:
                log.info("step %d episode %d reward %.1f alpha %.4f",
                         step, episode, ep_reward, last["alpha"])
            ep_reward = 0.0
            obs = env.reset()

        if ckpt is not None and cfg.checkpoint_every and step % cfg.checkpoint_every == 0:
            agent.save(ckpt / f"step_{step}", {"step": step})
        if eval_hook is not None and eval_every and step % eval_every == 0:
            score = eval_hook(agent, step)
            if score is not None and score > best:
                best = score
                if ckpt is not None:
                    agent.save(ckpt / "best", {"step": step, "eval_score": score})
    return agent, tlog

"""
Generative adversarial imitation with an off-policy SAC learner.

Convention (taken literally from the loss as written): the discriminator is
trained towards D -> 1 on LEARNER pairs and D -> 0 on EXPERT pairs,

    L(w) = -E_learner[log D(s, a)] - E_expert[log(1 - D(s, a))],

and the learner is rewarded with r(s, a) = -log D(s, a), which is large for
expert-like pairs. The environment's shaped reward is only ever logged; it is
never written into the learner's replay buffer (see :func:`train_learner`).
"""
import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import ACT_DIM, OBS_DIM
from .evaluation import duty_cycle
from .nn import Adam, MlpNet, linear_schedule, load_net, save_net, sigmoid, softplus
from .sac import OBS_SCALE, ReplayBuffer, SacAgent, SacConfig

log = logging.getLogger(__name__)

D_FLOOR = 1e-8
DEMO_COLUMNS = ("episode", "step", "q1", "q2", "q3", "q4", "wmx", "wmy", "wmz", "ax", "ay", "az")
GAIL_LOG_COLUMNS = ("iteration", "env_steps", "episodes", "env_reward", "implicit_reward",
                    "disc_loss", "disc_accuracy", "d_learner", "d_expert",
                    "critic1_loss", "critic2_loss", "policy_loss", "alpha")


# ---------------------------------------------------------------- demonstrations

@dataclass
class DemoDataset:
    obs: np.ndarray
    actions: np.ndarray  # N m
    episode: np.ndarray
    step: np.ndarray
    experiment: int = 1
    checkpoint_id: str = ""
    seeds: list = field(default_factory=list)
    duties: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.obs) == 0:
            raise ValueError("a demonstration dataset cannot be empty")

    def __len__(self):
        return len(self.obs)

    def sample(self, n, rng):
        idx = rng.integers(0, len(self.obs), n)
        return self.obs[idx], self.actions[idx]

    def episode_slice(self, k):
        keep = self.episode == k
        return self.obs[keep], self.actions[keep]

    def manifest(self, created=None):
        return {
            "experiment": self.experiment,
            "checkpoint_id": self.checkpoint_id,
            "seeds": [int(s) for s in self.seeds],
            "episode_duty": [float(d) for d in self.duties],
            "pairs": len(self),
            "episodes": int(len(self.seeds)),
            "columns": list(DEMO_COLUMNS),
            "created": created if created is not None else time.strftime("%Y-%m-%dT%H:%M:%S"),
        }

    def save(self, path):
        """Write ``<path>.csv`` and ``<path>.json`` (manifest)."""
        path = Path(path)
        with open(path.with_suffix(".csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(DEMO_COLUMNS)
            for e, s, o, a in zip(self.episode, self.step, self.obs, self.actions):
                w.writerow([int(e), int(s)] + [repr(float(v)) for v in o] + [repr(float(v)) for v in a])
        path.with_suffix(".json").write_text(json.dumps(self.manifest(), indent=2) + "\n")

    @classmethod
    def load(cls, path):
        path = Path(path)
        manifest = json.loads(path.with_suffix(".json").read_text())
        data = np.loadtxt(path.with_suffix(".csv"), delimiter=",", skiprows=1, ndmin=2)
        if data.shape[0] != manifest["pairs"]:
            raise ValueError(f"{path}: manifest says {manifest['pairs']} pairs, CSV has {data.shape[0]}")
        return cls(data[:, 2:2 + OBS_DIM], data[:, 2 + OBS_DIM:], data[:, 0].astype(int),
                   data[:, 1].astype(int), manifest["experiment"], manifest["checkpoint_id"],
                   manifest["seeds"], manifest.get("episode_duty", []))


def collect_expert(expert, env, n_episodes, min_duty=0.5, experiment=1, checkpoint_id="",
                   max_attempts=None):
    """Roll the expert deterministically and keep episodes whose duty cycle
    (10 deg threshold, true attitude) is at least ``min_duty``.

    Raises RuntimeError when fewer than ``n_episodes`` qualify within
    ``max_attempts`` (default ``3 * n_episodes``) rollouts.
    """
    max_attempts = max_attempts or 3 * n_episodes
    obs_l, act_l, ep_l, st_l, seeds, duties = [], [], [], [], [], []
    attempts = 0
    while len(seeds) < n_episodes:
        if attempts >= max_attempts:
            raise RuntimeError(f"only {len(seeds)} of {n_episodes} expert episodes reached "
                               f"duty >= {min_duty} in {attempts} attempts")
        attempts += 1
        obs = env.reset()
        seed = env.episode_seed
        o_ep, a_ep, thetas = [], [], []
        while True:
            thetas.append(math.degrees(env.phi))
            tr = env.step(expert.act(obs, deterministic=True))
            o_ep.append(obs)
            a_ep.append(tr.action)
            obs = tr.next_obs
            if tr.terminated or tr.truncated:
                break
        duty = duty_cycle(np.array(thetas))
        if duty < min_duty:
            log.info("discarding expert episode (seed %d) with duty %.3f", seed, duty)
            continue
        k = len(seeds)
        obs_l.append(np.array(o_ep))
        act_l.append(np.array(a_ep))
        ep_l.append(np.full(len(o_ep), k))
        st_l.append(np.arange(len(o_ep)))
        seeds.append(seed)
        duties.append(duty)
    return DemoDataset(np.concatenate(obs_l), np.concatenate(act_l), np.concatenate(ep_l),
                       np.concatenate(st_l), experiment, checkpoint_id, seeds, duties)


# ---------------------------------------------------------------- discriminator

class Discriminator:
    """MLP over (scaled observation, normalized action) with a sigmoid head."""

    def __init__(self, hidden=(64, 64), lr=1e-3, action_scale=0.1, seed=0):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(7,))))
        self.net = MlpNet([OBS_DIM + ACT_DIM, *hidden, 1], "tanh", "sigmoid", rng)
        self.opt = Adam([self.net.flat], lr)
        self.action_scale = action_scale

    def features(self, obs, actions):
        obs = np.atleast_2d(obs)
        actions = np.atleast_2d(actions)
        return np.concatenate([obs / OBS_SCALE, actions / self.action_scale], axis=1)

    def logits(self, obs, actions):
        _, cache = self.net.forward(self.features(obs, actions))
        return cache["z"][:, 0]

    def prob(self, obs, actions):
        return self.net.forward(self.features(obs, actions))[0][:, 0]


def disc_loss_from_logits(z_learner, z_expert):
    """Mean-per-batch loss ``-log D(learner) - log(1 - D(expert))``."""
    return float(np.mean(softplus(-z_learner)) + np.mean(softplus(z_expert)))


def disc_update(d, learner_batch, expert_batch):
    """One Adam step on the discriminator loss.

    Batches are ``(obs, actions_Nm)`` pairs of equal length. The returned
    accuracy is measured before the step: the fraction of learner pairs with
    D > 0.5 and expert pairs with D < 0.5, averaged.
    """
    lo, la = learner_batch
    eo, ea = expert_batch
    n = len(lo)
    if len(eo) != n:
        raise ValueError(f"learner and expert batches differ in size ({n} vs {len(eo)})")
    x = np.concatenate([d.features(lo, la), d.features(eo, ea)])
    _, cache = d.net.forward(x)
    z = cache["z"][:, 0]
    zl, ze = z[:n], z[n:]
    loss = disc_loss_from_logits(zl, ze)
    if not math.isfinite(loss):
        raise FloatingPointError("non-finite discriminator loss")
    p = sigmoid(z)
    # d/dz softplus(-z) = -(1 - p); d/dz softplus(z) = p
    g = np.concatenate([-(1.0 - p[:n]), p[n:]]) / n
    grads, _ = d.net.backward(cache, g[:, None], wrt_logits=True)
    d.opt.step([grads.flat])
    acc = 0.5 * (float(np.mean(zl > 0.0)) + float(np.mean(ze < 0.0)))
    return {"loss": loss, "accuracy": acc,
            "d_learner": float(np.mean(p[:n])), "d_expert": float(np.mean(p[n:]))}


def implicit_reward(d, obs, actions):
    """``-log D(s, a)`` with D floored at 1e-8 (so at most about 18.42)."""
    # -log sigmoid(z) == softplus(-z); the floor on D becomes a ceiling here
    return np.minimum(softplus(-d.logits(obs, actions)), -math.log(D_FLOOR))


# ---------------------------------------------------------------- learner training

@dataclass
class GailConfig:
    expert_episodes: int = 60
    min_expert_duty: float = 0.5
    disc_lr: float = 1e-3
    disc_hidden: tuple = (64, 64)
    disc_batch: int = 64
    disc_steps_per_iter: int = 10
    rollout_steps_per_iter: int = 1000
    policy_steps_per_iter: int = 1000
    total_iters: int = 100
    relabel: str = "insertion"  # or "sample": recompute -log D whenever a batch is drawn
    sac: SacConfig = field(default_factory=SacConfig)

    def __post_init__(self):
        self.disc_hidden = tuple(self.disc_hidden)
        if isinstance(self.sac, dict):
            self.sac = SacConfig(**self.sac)
        if min(self.expert_episodes, self.disc_batch, self.disc_steps_per_iter,
               self.rollout_steps_per_iter, self.total_iters) < 1:
            raise ValueError("GAIL counts must be positive")
        if self.policy_steps_per_iter < 0:
            raise ValueError("policy_steps_per_iter must be non-negative")
        if self.relabel not in ("insertion", "sample"):
            raise ValueError("relabel must be 'insertion' or 'sample'")


@dataclass
class GailLog:
    rows: list = field(default_factory=list)

    def column(self, name):
        return np.array([r[name] for r in self.rows], dtype=float)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(GAIL_LOG_COLUMNS)
            for r in self.rows:
                w.writerow([r[c] for c in GAIL_LOG_COLUMNS])


def train_learner(demo, env, cfg=None, seed=0, learner=None, discriminator=None,
                  iter_hook=None):
    """Alternate learner rollouts, discriminator steps and SAC updates.

    Each iteration: roll ``rollout_steps_per_iter`` env steps with the current
    learner; take ``disc_steps_per_iter`` discriminator steps on those pairs
    against expert pairs; label the new transitions with ``-log D`` and push
    them into the replay buffer; then run ``policy_steps_per_iter`` SAC
    updates. ``env``'s own reward is accumulated only for the log.
    Returns ``(learner, discriminator, GailLog)``.
    """
    cfg = cfg if cfg is not None else GailConfig()
    sac_cfg = cfg.sac
    learner = learner if learner is not None else SacAgent(sac_cfg, seed)
    d = discriminator if discriminator is not None else Discriminator(
        cfg.disc_hidden, cfg.disc_lr, sac_cfg.action_scale, seed)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(11,))))
    explore_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(99,))))
    capacity = min(sac_cfg.buffer_size, cfg.total_iters * cfg.rollout_steps_per_iter)
    buf = ReplayBuffer(max(capacity, sac_cfg.batch_size))
    glog = GailLog()

    obs = env.reset()
    env_steps = 0
    ep_env_reward = 0.0
    last = {"critic1": float("nan"), "critic2": float("nan"), "policy": float("nan"),
            "alpha": learner.alpha}
    scale = sac_cfg.action_scale
    total_updates = max(cfg.total_iters * cfg.policy_steps_per_iter, 1)

    for it in range(cfg.total_iters):
        n = cfg.rollout_steps_per_iter
        r_obs = np.empty((n, OBS_DIM))
        r_act = np.empty((n, ACT_DIM))
        r_next = np.empty((n, OBS_DIM))
        r_term = np.empty(n)
        finished = []
        for i in range(n):
            env_steps += 1
            if env_steps <= sac_cfg.learning_starts:
                a_n = explore_rng.uniform(-1.0, 1.0, ACT_DIM)
            else:
                a_n = learner.act(obs) / scale
            tr = env.step(scale * a_n)
            r_obs[i], r_act[i], r_next[i], r_term[i] = obs, a_n, tr.next_obs, tr.terminated
            ep_env_reward += tr.reward
            obs = tr.next_obs
            if tr.terminated or tr.truncated:
                finished.append(ep_env_reward)
                ep_env_reward = 0.0
                obs = env.reset()

        stats = []
        for _ in range(cfg.disc_steps_per_iter):
            li = rng.integers(0, n, cfg.disc_batch)
            stats.append(disc_update(d, (r_obs[li], scale * r_act[li]),
                                     demo.sample(cfg.disc_batch, rng)))

        rew = implicit_reward(d, r_obs, scale * r_act)
        for i in range(n):
            buf.add(r_obs[i], r_act[i], rew[i], r_next[i], r_term[i])

        if env_steps > sac_cfg.learning_starts and len(buf) >= sac_cfg.batch_size:
            for k in range(cfg.policy_steps_per_iter):
                progress = (it * cfg.policy_steps_per_iter + k) / total_updates
                learner.set_lr(linear_schedule(sac_cfg.lr_start, sac_cfg.lr_end, progress))
                idx = buf.sample_indices(sac_cfg.batch_size, learner.rng)
                batch = buf.batch(idx)
                if cfg.relabel == "sample":
                    batch["rewards"] = implicit_reward(d, batch["obs"], scale * batch["actions"])
                last = learner.update(batch)

        row = {
            "iteration": it + 1, "env_steps": env_steps, "episodes": len(finished),
            "env_reward": float(np.mean(finished)) if finished else float("nan"),
            "implicit_reward": float(np.mean(rew)),
            "disc_loss": float(np.mean([s["loss"] for s in stats])),
            "disc_accuracy": float(np.mean([s["accuracy"] for s in stats])),
            "d_learner": float(np.mean([s["d_learner"] for s in stats])),
            "d_expert": float(np.mean([s["d_expert"] for s in stats])),
            "critic1_loss": last["critic1"], "critic2_loss": last["critic2"],
            "policy_loss": last["policy"], "alpha": last["alpha"],
        }
        glog.rows.append(row)
        log.info("gail iter %d acc %.3f implicit %.3f env %.1f", it + 1,
                 row["disc_accuracy"], row["implicit_reward"], row["env_reward"])
        if iter_hook is not None:
            iter_hook(it + 1, learner, d, row)
    return learner, d, glog


def save_discriminator(d, path):
    save_net(d.net, path)


def load_discriminator(path, lr=1e-3, action_scale=0.1):
    d = Discriminator(lr=lr, action_scale=action_scale)
    net = load_net(path)
    d.net = net
    d.opt = Adam([net.flat], lr)
    return d


def checkpoint_hash(directory):
    """SHA-256 over a checkpoint directory's network files (sorted by name)."""
    h = hashlib.sha256()
    for p in sorted(Path(directory).glob("*.bin")):
        h.update(p.name.encode())
        h.update(p.read_bytes())
    return h.hexdigest()

"""Short SAC training run on the fault-free experiment.

Trains for ``--steps`` environment steps, evaluating every ``--every``
steps on the pinned initial states, and prints a random-policy baseline
for comparison. A meaningful run needs tens of thousands of steps.

    python demos/sac_short_run.py --steps 20000 --every 5000
"""
import argparse

import numpy as np

from satgail.controllers import RandomPolicy
from satgail.env import AttitudeEnv, EnvConfig
from satgail.evaluation import evaluate_agent
from satgail.perturbations import suite_for_experiment
from satgail.sac import SacConfig, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--every", type=int, default=5_000)
    ap.add_argument("--seconds", type=float, default=250.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    base = evaluate_agent(RandomPolicy(args.seed), 1, T=args.seconds, deterministic=False)
    rewards = [s.total_reward for s in base.per_state]
    print(f"random policy: mean reward {np.mean(rewards):.1f} +/- {np.std(rewards, ddof=1):.1f}")

    def hook(agent, step):
        rep = evaluate_agent(agent, 1, T=args.seconds)
        print(f"step {step:7d}  reward {rep.mean_reward:8.1f}  duty {rep.average['duty']:.2f}")
        return rep.mean_reward

    env = AttitudeEnv(suite_for_experiment(1), EnvConfig(episode_seconds=args.seconds), seed=args.seed)
    train(env, SacConfig(), args.steps, seed=args.seed, eval_hook=hook, eval_every=args.every)


if __name__ == "__main__":
    main()

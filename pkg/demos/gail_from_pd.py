"""Imitate the scripted controller with GAIL.

Collects a few PD demonstrations, then trains a SAC learner on the
discriminator's reward only. Prints discriminator accuracy and the
learner's (unseen) environment reward per iteration, then evaluates the
learner on the pinned states.

    python demos/gail_from_pd.py --iters 30 --episodes 4
"""
import argparse
import logging

from satgail.controllers import PointingPD
from satgail.env import AttitudeEnv, EnvConfig
from satgail.evaluation import comparison_table, evaluate_agent
from satgail.gail import GailConfig, collect_expert, train_learner
from satgail.perturbations import suite_for_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--iters", type=int, default=30)
    ap.add_argument("--episodes", type=int, default=4)
    ap.add_argument("--experiment", type=int, default=1)
    ap.add_argument("--seconds", type=float, default=250.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING)

    cfg = EnvConfig(episode_seconds=args.seconds)
    suite = suite_for_experiment(args.experiment)
    demo = collect_expert(PointingPD(), AttitudeEnv(suite, cfg, seed=1000 + args.seed),
                          args.episodes, experiment=args.experiment)
    print(f"{len(demo)} expert pairs, mean duty {sum(demo.duties) / len(demo.duties):.2f}")

    def show(it, learner, d, row):
        print(f"iter {it:3d}  disc acc {row['disc_accuracy']:.3f}  "
              f"-log D {row['implicit_reward']:.3f}  env reward {row['env_reward']:.1f}")

    env = AttitudeEnv(suite, cfg, seed=args.seed)
    learner, _, _ = train_learner(demo, env, GailConfig(total_iters=args.iters), seed=args.seed,
                                  iter_hook=show)
    reports = [("Learner", evaluate_agent(learner, args.experiment, T=args.seconds)),
               ("Expert", evaluate_agent(PointingPD(), args.experiment, T=args.seconds))]
    print(comparison_table(reports))


if __name__ == "__main__":
    main()

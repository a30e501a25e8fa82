"""Scripted PD pointing controller across the fault matrix.

Runs the six pinned initial states for each experiment and prints one
row of metrics per experiment. No training involved, so this finishes in
a minute or two and shows what each fault does to a simple controller.

    python demos/fault_matrix_pd.py --T 300
"""
import argparse

from satgail.controllers import PointingPD
from satgail.evaluation import evaluate_agent
from satgail.perturbations import EXPERIMENTS, suite_for_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--T", type=float, default=300.0, help="episode length in seconds")
    ap.add_argument("--experiments", type=int, nargs="*", default=sorted(EXPERIMENTS))
    args = ap.parse_args()

    print(f"{'exp':>3}  {'rms':>7}  {'duty':>5}  {'max':>7}  {'min':>6}  faults")
    for idx in args.experiments:
        rep = evaluate_agent(PointingPD(), idx, T=args.T)
        m = rep.average
        print(f"{idx:>3}  {m['rms']:7.2f}  {m['duty']:5.2f}  {m['max']:7.2f}  {m['min']:6.2f}  "
              f"{suite_for_experiment(idx).describe()}")


if __name__ == "__main__":
    main()

"""
satgail: attitude control of a tumbling small satellite with soft actor-critic
experts and adversarial imitation.

Modules
-------
so3          quaternion algebra (scalar-last)
dynamics     rigid-body integrator
perturbations  gyro, torque and misalignment fault models
env          episodic control environment and reward
nn           numpy MLPs, analytic gradients, Adam
sac          soft actor-critic agent and replay buffer
gail         demonstrations, discriminator, imitation loop
evaluation   pointing metrics and the six-state protocol
config, cli  run configuration and the ``satgail`` command
"""
from .dynamics import AttitudeState, Inertia, SimConfig, SimulationFault
from .env import EVAL_SEEDS, AttitudeEnv, EnvConfig
from .evaluation import EvalReport, evaluate_agent, metrics
from .perturbations import EXPERIMENTS, PerturbationSuite, suite_for_experiment
from .sac import SacAgent, SacConfig

__version__ = "0.1.0"

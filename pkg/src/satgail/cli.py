"""
Command-line entry points: ``satgail train-expert | collect | train-gail | eval | report``.

Exit codes: 0 success, 2 configuration error, 3 runtime fault (any partially
trained agent is saved under ``<checkpoint_dir>/.../aborted`` first).
"""
import argparse
import json
import logging
import sys
import time
from pathlib import Path


from .config import CONFIG_ENV_VAR, ConfigError, RunConfig
from .controllers import PointingPD
from .dynamics import SimulationFault
from .env import AttitudeEnv
from .evaluation import comparison_table, evaluate_agent, plot_traces
from .gail import DemoDataset, checkpoint_hash, collect_expert, save_discriminator, train_learner
from .perturbations import EXPERIMENTS
from .sac import SacAgent, train

log = logging.getLogger("satgail")

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


class RuntimeFault(RuntimeError):
    pass


def _exp_dir(cfg, kind):
    return Path(cfg["paths"]["checkpoint_dir"]) / f"exp{cfg.experiment:02d}" / kind


def _write_manifest(path, payload):
    payload = dict(payload, created=time.strftime("%Y-%m-%dT%H:%M:%S"))
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _indices(args, cfg):
    return sorted(EXPERIMENTS) if getattr(args, "matrix", False) else [cfg.experiment]


def _for_experiment(cfg, index):
    return cfg.with_overrides(experiment={"index": index})


# ---------------------------------------------------------------- commands

def cmd_train_expert(args, cfg):
    results = []
    for index in _indices(args, cfg):
        c = _for_experiment(cfg, index)
        steps = args.steps or c["sac"]["total_steps"]
        env_cfg = c.env_config(args.episode_seconds)
        env = AttitudeEnv(c.suite(), env_cfg, seed=c.seed)
        out = _exp_dir(c, "expert")
        out.mkdir(parents=True, exist_ok=True)
        agent = SacAgent(c.sac_config(), c.seed)
        log.info("training expert for experiment %d (%s), %d steps", index, c.suite().label, steps)
        try:
            agent, tlog = train(env, c.sac_config(), steps, seed=c.seed, agent=agent,
                                checkpoint_dir=out / "periodic", log_every_episode=10)
        except (SimulationFault, FloatingPointError) as exc:
            agent.save(out / "aborted", {"experiment": index, "error": str(exc)})
            raise RuntimeFault(f"expert training aborted: {exc}") from exc
        agent.save(out / "final", {"experiment": index, "steps": steps,
                                   "episode_seconds": env_cfg.episode_seconds})
        tlog.write_csv(out / "train_log.csv")
        _write_manifest(out / "manifest.json", {"experiment": index, "steps": steps,
                                                "config": c.data})
        results.append(out / "final")
        print(out / "final")
    return results


def _load_agent(path):
    path = Path(path)
    if not (path / "agent.json").exists():
        raise ConfigError(f"{path}: not a checkpoint directory (agent.json missing)")
    return SacAgent.load(path)


def cmd_collect(args, cfg):
    env_cfg = cfg.env_config(args.episode_seconds)
    if args.scripted:
        expert, ckpt_id = PointingPD(cfg.sim_config().inertia, env_cfg.antenna_axis,
                                     env_cfg.target_dir, torque_limit=env_cfg.sim.torque_limit), "scripted:PointingPD"
    else:
        if not args.checkpoint:
            raise ConfigError("collect needs --checkpoint (or --scripted)")
        expert = _load_agent(args.checkpoint)
        trained_on = expert.meta.get("experiment")
        if trained_on is not None and trained_on != cfg.experiment:
            raise ConfigError(f"checkpoint was trained on experiment {trained_on}, "
                              f"config asks for experiment {cfg.experiment}")
        ckpt_id = checkpoint_hash(args.checkpoint)
    n = args.episodes or cfg["gail"]["expert_episodes"]
    env = AttitudeEnv(cfg.suite(), env_cfg, seed=cfg.seed)
    try:
        demo = collect_expert(expert, env, n, cfg["gail"]["min_expert_duty"],
                              experiment=cfg.experiment, checkpoint_id=ckpt_id)
    except (RuntimeError, SimulationFault) as exc:
        raise RuntimeFault(str(exc)) from exc
    out = Path(cfg["paths"]["dataset_dir"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"exp{cfg.experiment:02d}_demo"
    demo.save(path)
    print(path.with_suffix(".csv"))
    return path


def cmd_train_gail(args, cfg):
    path = Path(args.dataset)
    if path.suffix in (".csv", ".json"):
        path = path.with_suffix("")
    try:
        demo = DemoDataset.load(path)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: cannot load demonstration dataset ({exc})") from None
    if demo.experiment != cfg.experiment:
        raise ConfigError(f"dataset is for experiment {demo.experiment}, "
                          f"config asks for experiment {cfg.experiment}")
    gcfg = cfg.gail_config()
    if args.iters:
        gcfg.total_iters = args.iters
    env = AttitudeEnv(cfg.suite(), cfg.env_config(args.episode_seconds), seed=cfg.seed)
    out = _exp_dir(cfg, "learner")
    out.mkdir(parents=True, exist_ok=True)
    learner = SacAgent(gcfg.sac, cfg.seed)
    try:
        learner, disc, glog = train_learner(demo, env, gcfg, seed=cfg.seed, learner=learner)
    except (SimulationFault, FloatingPointError) as exc:
        learner.save(out / "aborted", {"experiment": cfg.experiment, "error": str(exc)})
        raise RuntimeFault(f"GAIL training aborted: {exc}") from exc
    learner.save(out / "final", {"experiment": cfg.experiment, "role": "learner",
                                 "iterations": gcfg.total_iters})
    save_discriminator(disc, out / "final" / "discriminator.bin")
    glog.write_csv(out / "gail_log.csv")
    _write_manifest(out / "manifest.json", {"experiment": cfg.experiment,
                                            "dataset": str(path), "pairs": len(demo),
                                            "config": cfg.data})
    print(out / "final")
    return out / "final"


def _evaluate(agent, cfg, T, kind, workers):
    return evaluate_agent(agent, cfg.experiment, T, cfg["eval"]["deterministic"], kind,
                          cfg.env_config(T), workers=workers, suite_factory=cfg.suite)


def cmd_eval(args, cfg):
    T = args.T or cfg["eval"]["T"]
    out = Path(cfg["paths"]["report_dir"])
    out.mkdir(parents=True, exist_ok=True)
    if args.scripted:
        env_cfg = cfg.env_config()
        agent = PointingPD(cfg.sim_config().inertia, env_cfg.antenna_axis, env_cfg.target_dir,
                           torque_limit=env_cfg.sim.torque_limit)
    else:
        if not args.checkpoint:
            raise ConfigError("eval needs --checkpoint (or --scripted)")
        agent = _load_agent(args.checkpoint)
    kind = args.kind
    reports = [(kind.capitalize(), _evaluate(agent, cfg, T, kind, args.workers))]
    if args.compare:
        other = "expert" if kind == "learner" else "learner"
        reports.append((other.capitalize(), _evaluate(_load_agent(args.compare), cfg, T, other,
                                                      args.workers)))
        reports.sort(key=lambda r: r[0] != "Learner")
    for _, rep in reports:
        rep.write(out)
        plot_traces(rep, out / f"exp{rep.experiment:02d}_{rep.agent_kind}_angles.svg")
    table = comparison_table(reports)
    (out / f"exp{cfg.experiment:02d}_table.md").write_text(
        f"Quantitative evaluation for experiment {cfg.experiment}\n\n" + table)
    print(table, end="")
    return reports


def cmd_report(args, cfg):
    out = Path(cfg["paths"]["report_dir"])
    files = sorted(out.glob("exp*_report.json"))
    if not files:
        raise ConfigError(f"{out}: no evaluation reports found")
    lines = ["| Experiment | Agent | RMS | Duty Cycle | Max (deg) | Min (deg) |",
             "|---|---|---|---|---|---|"]
    for f in files:
        rep = json.loads(f.read_text())
        a = rep["average"]
        lines.append(f"| {rep['experiment']} | {rep['agent_kind'].capitalize()} | {a['rms']:.4f} | "
                     f"{a['duty']:.4f} | {a['max']:.4f} | {a['min']:.4f} |")
    text = "\n".join(lines) + "\n"
    (out / "summary.md").write_text(text)
    print(text, end="")
    return text


# ---------------------------------------------------------------- parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help=f"YAML config file (default: ${CONFIG_ENV_VAR})")
    common.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config key; repeatable")
    common.add_argument("--experiment", type=int, help="shorthand for --set experiment.index=N")
    common.add_argument("--seed", type=int, help="shorthand for --set seed=N")
    common.add_argument("--episode-seconds", type=float, help="episode length override")
    common.add_argument("--workers", type=int, default=1, help="parallel evaluation workers")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="satgail", description=__doc__.splitlines()[1])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("train-expert", parents=[common], help="train a SAC expert")
    s.add_argument("--steps", type=int, help="environment steps (default sac.total_steps)")
    s.add_argument("--matrix", action="store_true", help="run experiments 1-14 in turn")
    s.set_defaults(func=cmd_train_expert)

    s = sub.add_parser("collect", parents=[common], help="record expert demonstrations")
    s.add_argument("--checkpoint", help="expert checkpoint directory")
    s.add_argument("--scripted", action="store_true", help="use the scripted PD controller")
    s.add_argument("--episodes", type=int, help="qualifying episodes (default gail.expert_episodes)")
    s.set_defaults(func=cmd_collect)

    s = sub.add_parser("train-gail", parents=[common], help="train a GAIL learner")
    s.add_argument("--dataset", required=True, help="demonstration dataset (.csv/.json stem)")
    s.add_argument("--iters", type=int, help="GAIL iterations (default gail.total_iters)")
    s.set_defaults(func=cmd_train_gail)

    s = sub.add_parser("eval", parents=[common], help="evaluate on the six pinned initial states")
    s.add_argument("--checkpoint", help="agent checkpoint directory")
    s.add_argument("--scripted", action="store_true", help="evaluate the scripted PD controller")
    s.add_argument("--kind", choices=("expert", "learner"), default="expert")
    s.add_argument("--compare", help="second checkpoint (the other role) for a comparison table")
    s.add_argument("--T", type=float, help="evaluation horizon in seconds (2500 or 5000)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", parents=[common], help="summarize all reports in report_dir")
    s.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        overrides = list(args.set)
        if args.experiment is not None:
            overrides.append(f"experiment.index={args.experiment}")
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = RunConfig.load(args.config, overrides)
        args.func(args, cfg)
    except ConfigError as exc:
        print(f"satgail: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeFault, SimulationFault, FloatingPointError) as exc:
        print(f"satgail: runtime fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())

"""
Run configuration: a YAML file validated against a fixed schema, plus
``section.key=value`` overrides.

Every key the pipeline understands appears in :data:`DEFAULTS`; anything else
is rejected with the file and line it came from. ``None`` defaults under
``perturbation`` mean "take the value from the experiment table row".
"""
import copy
import os
from dataclasses import replace

import yaml

from .dynamics import Inertia, SimConfig
from .env import EnvConfig, REWARD_VARIANTS
from .gail import GailConfig
from .perturbations import GYRO_KINDS, TORQUE_KINDS, suite_from_config
from .sac import SacConfig

CONFIG_ENV_VAR = "SATGAIL_CONFIG"
ALGORITHMS = ("sac",)

DEFAULTS = {
    "experiment": {"index": 1},
    "seed": 0,
    "paths": {"checkpoint_dir": "runs/checkpoints", "dataset_dir": "runs/datasets",
              "report_dir": "runs/reports"},
    "sim": {"dt": 0.01, "substeps_per_control": 10, "torque_limit": 0.1,
            "inertia": [0.482, 1.094, 1.100]},
    "env": {"episode_seconds": 2500.0, "antenna_axis": [1.0, 0.0, 0.0],
            "target_dir": [0.0, 0.0, 1.0], "init_rate_deg_s": 3.0},
    "reward": {"s1": 1.0, "s2": 0.5, "s3": 1.0, "s4": 9.0, "s5": 500.0,
               "stay_deg": 5.0, "oob_deg_s": 10.0, "variant": "refined"},
    "perturbation": {
        "gyro": {"kind": None, "sigma": None},
        "torque": {"kind": None, "axes": None, "gamma": None},
        "misalign": {"enabled": None, "euler_deg": None},
    },
    "sac": {"algorithm": "sac", "total_steps": 2_000_000, "batch_size": 64,
            "buffer_size": 1_000_000, "learning_starts": 1000, "train_freq": 1,
            "gradient_steps": 1, "lr_start": 1e-3, "lr_end": 1e-4, "gamma": 0.99,
            "tau": 0.005, "target_entropy": -3.0, "init_alpha": 1.0, "hidden": [256, 256],
            "checkpoint_every": 50_000},
    "gail": {"algorithm": "sac", "expert_episodes": 60, "min_expert_duty": 0.5,
             "disc_lr": 1e-3, "disc_hidden": [64, 64], "disc_batch": 64,
             "disc_steps_per_iter": 10, "rollout_steps_per_iter": 1000,
             "policy_steps_per_iter": 1000, "total_iters": 2000, "relabel": "insertion"},
    "eval": {"T": 2500.0, "deterministic": True},
}

# optional keys: expected python types when the default is None
_OPTIONAL_TYPES = {
    ("perturbation", "gyro", "kind"): str,
    ("perturbation", "gyro", "sigma"): float,
    ("perturbation", "torque", "kind"): str,
    ("perturbation", "torque", "axes"): str,
    ("perturbation", "torque", "gamma"): float,
    ("perturbation", "misalign", "enabled"): bool,
    ("perturbation", "misalign", "euler_deg"): list,
}

_CHOICES = {
    ("perturbation", "gyro", "kind"): GYRO_KINDS,
    ("perturbation", "torque", "kind"): TORQUE_KINDS,
    ("reward", "variant"): REWARD_VARIANTS,
    ("sac", "algorithm"): ALGORITHMS,
    ("gail", "algorithm"): ALGORITHMS,
    ("gail", "relabel"): ("insertion", "sample"),
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending file:line or override."""


def _where(source, node):
    if node is None:
        return source
    return f"{source}:{node.start_mark.line + 1}"


def _to_python(node, source, path=()):
    """Turn a composed YAML node into plain data, remembering key locations."""
    if isinstance(node, yaml.MappingNode):
        out, marks = {}, {}
        for knode, vnode in node.value:
            key = knode.value
            if key in out:
                raise ConfigError(f"{_where(source, knode)}: duplicate key {'.'.join(path + (key,))!r}")
            out[key], sub = _to_python(vnode, source, path + (key,))
            marks[path + (key,)] = knode
            marks.update(sub)
        return out, marks
    return yaml.safe_load(yaml.serialize(node)), {}


def _load_yaml(text, source):
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = f":{mark.line + 1}" if mark is not None else ""
        raise ConfigError(f"{source}{line}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    if root is None:
        return {}, {}
    if not isinstance(root, yaml.MappingNode):
        raise ConfigError(f"{_where(source, root)}: top level must be a mapping")
    return _to_python(root, source)


def _check_value(path, value, default, where):
    key = ".".join(path)
    if value is None:
        if default is None:
            return None
        raise ConfigError(f"{where}: {key} cannot be null")
    expected = type(default) if default is not None else _OPTIONAL_TYPES.get(path)
    if expected is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if expected is not None and not isinstance(value, expected) or (
            expected in (int, float) and isinstance(value, bool)):
        raise ConfigError(f"{where}: {key} must be {expected.__name__}, got {value!r}")
    if path in _CHOICES and value not in _CHOICES[path]:
        raise ConfigError(f"{where}: {key} must be one of {list(_CHOICES[path])}, got {value!r}")
    if isinstance(default, list) and len(value) != len(default):
        raise ConfigError(f"{where}: {key} needs {len(default)} entries, got {len(value)}")
    return value


def _merge(base, update, marks, source, path=()):
    for key, value in update.items():
        p = path + (key,)
        where = _where(source, marks.get(p))
        if key not in base:
            raise ConfigError(f"{where}: unknown key {'.'.join(p)!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: {'.'.join(p)} must be a mapping")
            _merge(base[key], value, marks, source, p)
        else:
            base[key] = _check_value(p, value, DEFAULTS_FLAT.get(p), where)


def _flatten(d, path=()):
    out = {}
    for k, v in d.items():
        if isinstance(v, dict):
            out.update(_flatten(v, path + (k,)))
        else:
            out[path + (k,)] = v
    return out


DEFAULTS_FLAT = _flatten(DEFAULTS)


def parse_override(text):
    """``'section.key=value'`` -> (path tuple, parsed YAML value)."""
    if "=" not in text:
        raise ConfigError(f"--set {text!r}: expected section.key=value")
    key, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"--set {text!r}: cannot parse value ({exc})") from None
    return tuple(key.strip().split(".")), value


class RunConfig:
    """Validated configuration tree with typed accessors for each module."""

    def __init__(self, data=None):
        self.data = copy.deepcopy(DEFAULTS)
        if data:
            _merge(self.data, data, {}, "<dict>")
        self._validate()

    @classmethod
    def load(cls, path=None, overrides=()):
        """Read ``path`` (or ``$SATGAIL_CONFIG``; defaults if neither) and apply overrides."""
        cfg = cls()
        path = path or os.environ.get(CONFIG_ENV_VAR)
        if path:
            try:
                text = open(path).read()
            except OSError as exc:
                raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
            data, marks = _load_yaml(text, str(path))
            _merge(cfg.data, data, marks, str(path))
        for item in overrides:
            p, value = parse_override(item)
            nested = value
            for k in reversed(p):
                nested = {k: nested}
            _merge(cfg.data, nested, {}, f"--set {item}")
        cfg._validate()
        return cfg

    def _validate(self):
        idx = self.data["experiment"]["index"]
        if not 1 <= idx <= 14:
            raise ConfigError(f"experiment.index must be in 1..14, got {idx}")
        try:
            self.env_config()
            self.suite()
            self.sac_config()
            self.gail_config()
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from None

    def __getitem__(self, key):
        return self.data[key]

    @property
    def experiment(self):
        return self.data["experiment"]["index"]

    @property
    def seed(self):
        return self.data["seed"]

    def with_overrides(self, **sections):
        data = copy.deepcopy(self.data)
        for section, values in sections.items():
            data[section].update(values)
        out = RunConfig.__new__(RunConfig)
        out.data = data
        out._validate()
        return out

    def sim_config(self):
        s = self.data["sim"]
        return SimConfig(dt=s["dt"], substeps_per_control=s["substeps_per_control"],
                         inertia=Inertia(*s["inertia"]), torque_limit=s["torque_limit"])

    def env_config(self, episode_seconds=None):
        e, r = self.data["env"], self.data["reward"]
        cfg = EnvConfig(s1=r["s1"], s2=r["s2"], s3=r["s3"], s4=r["s4"], s5=r["s5"],
                        stay_deg=r["stay_deg"], oob_deg_s=r["oob_deg_s"],
                        reward_variant=r["variant"],
                        episode_seconds=e["episode_seconds"],
                        antenna_axis=tuple(e["antenna_axis"]), target_dir=tuple(e["target_dir"]),
                        init_rate_deg_s=e["init_rate_deg_s"], sim=self.sim_config())
        if episode_seconds is not None:
            cfg = replace(cfg, episode_seconds=float(episode_seconds))
        return cfg

    def suite(self):
        def present(d):
            return {k: v for k, v in d.items() if v is not None}
        p = self.data["perturbation"]
        return suite_from_config({k: present(v) for k, v in p.items()}, self.experiment)

    def sac_config(self):
        s = {k: v for k, v in self.data["sac"].items() if k not in ("algorithm", "total_steps")}
        s["action_scale"] = self.data["sim"]["torque_limit"]
        return SacConfig(**s)

    def gail_config(self):
        g = {k: v for k, v in self.data["gail"].items() if k != "algorithm"}
        return GailConfig(sac=self.sac_config(), **g)

    def dump(self):
        return yaml.safe_dump(self.data, sort_keys=False)

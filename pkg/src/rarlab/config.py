"""Sectioned key-value experiment configuration.

Files look like::

    # pendulum experiment
    [env]
    name = pendulum
    mass = 4.89

    [train]
    n_iter = 100

Every key has a documented default (some depend on ``env.name``); unknown
sections or keys are hard errors with line numbers so typos never pass
silently.  Command-line overrides use dotted keys ("train.n_iter=2").
The fully resolved configuration is echoed into every run directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .envs import EnvPhysicsParams
from .optim import OptimizerConfig
from .trainer import TrainConfig


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


def _bool(text: str) -> bool:
    lowered = text.lower()
    if lowered in ("true", "1", "yes", "on"):
        return True
    if lowered in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _floatlist(text: str) -> list[float]:
    return [float(p) for p in text.split(",") if p.strip()] if text.strip() else []


# (type, default) per key; None defaults are filled per environment below
SCHEMA: dict[str, dict[str, tuple]] = {
    "env": {
        "name": (str, "pendulum"),
        "mass": (float, None),
        "mass_cart": (float, 1.0),
        "friction": (float, 0.08),
        "gravity": (float, 9.81),
        "dt": (float, None),
        "adv_force_cap": (float, None),
        "prot_force_cap": (float, None),
    },
    "game": {
        "seed": (int, 0),
        "n_states": (int, 5),
        "n_actions1": (int, 3),
        "n_actions2": (int, 3),
        "horizon": (int, 50),
    },
    "train": {
        "n_iter": (int, None),
        "n_mu": (int, 1),
        "n_nu": (int, 1),
        "n_traj": (int, 32),
        "seed": (int, 0),
        "checkpoint_every": (int, 25),
    },
    "optimizer.mu": {
        "kl_delta": (float, 0.01),
        "cg_iters": (int, 10),
        "cg_damping": (float, 0.1),
        "backtrack_ratio": (float, 0.5),
        "max_backtracks": (int, 10),
        "gae_lambda": (float, 0.97),
        "baseline": (str, "linear"),
        "fvp_subsample": (int, 1),
    },
    "optimizer.nu": {
        "kl_delta": (float, 0.01),
        "cg_iters": (int, 10),
        "cg_damping": (float, 0.1),
        "backtrack_ratio": (float, 0.5),
        "max_backtracks": (int, 10),
        "gae_lambda": (float, 0.97),
        "baseline": (str, "linear"),
        "fvp_subsample": (int, 1),
    },
    "eval": {
        "episodes": (int, 100),
        "alpha": (float, 0.1),
        "attack_iters": (int, 50),
        "train_seeds": (int, 50),
        "mass_grid": (_floatlist, ""),
        "friction_grid": (_floatlist, ""),
    },
}

PER_ENV_DEFAULTS = {
    "pendulum": {("env", "mass"): 4.89, ("env", "dt"): 0.02,
                 ("env", "adv_force_cap"): 2.0, ("env", "prot_force_cap"): 10.0,
                 ("train", "n_iter"): 100},
    "slider": {("env", "mass"): 3.53, ("env", "dt"): 0.05,
               ("env", "adv_force_cap"): 1.0, ("env", "prot_force_cap"): 5.0,
               ("train", "n_iter"): 500},
    "tabular": {("env", "mass"): 1.0, ("env", "dt"): 0.02,
                ("env", "adv_force_cap"): 0.0, ("env", "prot_force_cap"): 1.0,
                ("train", "n_iter"): 2000},
}


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=dict)  # (section, key) -> typed value

    def get(self, section: str, key: str):
        return self.values[(section, key)]

    # -- factories ----------------------------------------------------------

    def env_params(self) -> EnvPhysicsParams:
        return EnvPhysicsParams(
            mass=self.get("env", "mass"),
            mass_cart=self.get("env", "mass_cart"),
            friction_coeff=self.get("env", "friction"),
            gravity=self.get("env", "gravity"),
            dt=self.get("env", "dt"),
            adversary_force_cap=self.get("env", "adv_force_cap"),
            protagonist_force_cap=self.get("env", "prot_force_cap"),
        )

    def optimizer_config(self, player: str) -> OptimizerConfig:
        sec = f"optimizer.{player}"
        return OptimizerConfig(
            kl_delta=self.get(sec, "kl_delta"),
            cg_iters=self.get(sec, "cg_iters"),
            cg_damping=self.get(sec, "cg_damping"),
            backtrack_ratio=self.get(sec, "backtrack_ratio"),
            max_backtracks=self.get(sec, "max_backtracks"),
            gae_lambda=self.get(sec, "gae_lambda"),
            baseline=self.get(sec, "baseline"),
            fvp_subsample=self.get(sec, "fvp_subsample"),
        )

    def train_config(self, baseline_mode: bool = False,
                     seed: int | None = None) -> TrainConfig:
        return TrainConfig(
            env_name=self.get("env", "name"),
            env_params=self.env_params(),
            n_iter=self.get("train", "n_iter"),
            n_mu=self.get("train", "n_mu"),
            n_nu=self.get("train", "n_nu"),
            n_traj=self.get("train", "n_traj"),
            seed=self.get("train", "seed") if seed is None else seed,
            baseline_mode=baseline_mode,
            checkpoint_every=self.get("train", "checkpoint_every"),
            optimizer_mu=self.optimizer_config("mu"),
            optimizer_nu=self.optimizer_config("nu"),
            game_seed=self.get("game", "seed"),
            game_n_states=self.get("game", "n_states"),
            game_n_actions1=self.get("game", "n_actions1"),
            game_n_actions2=self.get("game", "n_actions2"),
            game_horizon=self.get("game", "horizon"),
        )

    def echo(self) -> str:
        """Fully resolved configuration as reparseable text."""
        lines = []
        for section in SCHEMA:
            lines.append(f"[{section}]")
            for key in SCHEMA[section]:
                v = self.values[(section, key)]
                if isinstance(v, bool):
                    text = "true" if v else "false"
                elif isinstance(v, float):
                    text = repr(v)
                elif isinstance(v, list):
                    text = ",".join(repr(x) for x in v)
                else:
                    text = str(v)
                lines.append(f"{key} = {text}")
            lines.append("")
        return "\n".join(lines)


def _parse_lines(text: str):
    """Yield (lineno, section, key, raw value) for each assignment."""
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        if section is None:
            raise ConfigError("assignment before any [section] header", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        yield lineno, section, key, value


def load_config(text: str = "", overrides: list[str] | None = None) -> ExperimentConfig:
    """Parse config text, apply dotted overrides, fill defaults."""
    assigned: dict[tuple, tuple] = {}  # (section, key) -> (raw, lineno)
    for lineno, section, key, value in _parse_lines(text):
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key '{key}' in section [{section}]", lineno)
        assigned[(section, key)] = (value, lineno)

    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        lhs, value = item.split("=", 1)
        if "." not in lhs:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        section, key = lhs.rsplit(".", 1)
        section, key, value = section.strip(), key.strip(), value.strip()
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown override target '{lhs.strip()}'")
        assigned[(section, key)] = (value, None)

    env_name = assigned.get(("env", "name"), ("pendulum", None))[0]
    if env_name not in PER_ENV_DEFAULTS:
        lineno = assigned.get(("env", "name"), (None, None))[1]
        raise ConfigError(f"unknown environment '{env_name}'", lineno)

    values = {}
    for section, keys in SCHEMA.items():
        for key, (typ, default) in keys.items():
            if (section, key) in assigned:
                raw, lineno = assigned[(section, key)]
                try:
                    values[(section, key)] = typ(raw)
                except ValueError as exc:
                    raise ConfigError(f"bad value for {section}.{key}: {exc}", lineno) from None
            elif default is None:
                values[(section, key)] = PER_ENV_DEFAULTS[env_name][(section, key)]
            else:
                values[(section, key)] = typ(default)
    return ExperimentConfig(values=values)

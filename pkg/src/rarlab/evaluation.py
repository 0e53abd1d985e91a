"""Robustness evaluation: seeded episode batteries, percentile curves,
mass/friction sweeps, test-time attacks, and adversary force-field export.

Seed discipline: every comparison (policy vs policy, or grid cell vs grid
cell) reuses the same per-episode seed set, so reward differences are
attributable to the policy or physics change alone.  All CSV emitters use
shortest round-trip float formatting and have exact parsers.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .env_core import clamp_action
from .envs import EnvPhysicsParams
from .envs.pendulum import make_inverted_pendulum
from .envs.slider import make_friction_slider
from .envs.tabular import TabularGameEnv
from .oracle import RiskStats, cvar
from .trainer import (GaussianActor, RandomActor, TrainConfig, ZeroActor,
                      make_actor, roll, train_adversary_only)

EVAL_STREAM_TAG = 777  # keeps evaluation streams disjoint from training


@dataclass
class EvalStats:
    mean: float
    std: float
    episodes: int
    returns: np.ndarray
    risk: RiskStats


@dataclass
class SweepGrid:
    axis1_name: str
    axis1_values: list[float]
    axis2_name: str | None
    axis2_values: list[float] | None
    cells: dict  # (i, j) -> EvalStats; j is 0 for 1-D sweeps


def _adversary_actor(env, adversary):
    if adversary == "none":
        return ZeroActor(env.spec.act2_dim)
    if adversary == "random":
        return RandomActor(env.spec.act2_bounds)
    policy_nu, theta_nu = adversary
    return make_actor(env, policy_nu, theta_nu)


def evaluate(env, policy_mu, theta_mu, n_episodes: int, adversary="none",
             alpha: float = 0.1, eval_seed: int = 0, threads: int = 1) -> EvalStats:
    """Run seeded episodes and summarize protagonist returns.

    ``adversary`` is "none" (zero action), "random" (uniform within the
    force cap), or a ``(policy, theta)`` pair.
    """
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    actor_mu = make_actor(env, policy_mu, theta_mu)
    actor_nu = _adversary_actor(env, adversary)
    seed_seq = np.random.SeedSequence([eval_seed % (2 ** 63), EVAL_STREAM_TAG])
    trajs = roll(env, actor_mu, actor_nu, n_episodes, seed_seq, threads)
    returns = np.array([t.episode_return(1) for t in trajs])
    return EvalStats(
        mean=float(returns.mean()),
        std=float(returns.std()),
        episodes=n_episodes,
        returns=returns,
        risk=cvar(returns, alpha),
    )


def percentile_curve(final_rewards) -> list[tuple[int, float]]:
    """Integer-percentile curve with lower-interpolation quantiles."""
    rewards = np.sort(np.asarray(final_rewards, dtype=np.float64))
    n = rewards.size
    if n < 2:
        raise ValueError("percentile curves need at least two values")
    curve = []
    for p in range(101):
        k = max(int(np.ceil(p / 100.0 * n)), 1)
        curve.append((p, float(rewards[k - 1])))
    return curve


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------


def _build_env(env_name: str, params: EnvPhysicsParams):
    if env_name == "pendulum":
        return make_inverted_pendulum(params)
    if env_name == "slider":
        return make_friction_slider(params)
    raise ValueError(f"sweeps are defined for physics environments, not '{env_name}'")


def default_sweep_values(nominal: float, steps: int = 9, spread: float = 0.6) -> list[float]:
    """Grid of `steps` values covering nominal * (1 +- spread)."""
    return [float(v) for v in np.linspace(nominal * (1 - spread), nominal * (1 + spread), steps)]


def mass_sweep(env_name: str, policy, theta, nominal_params: EnvPhysicsParams,
               mass_values, n_episodes: int, alpha: float = 0.1,
               eval_seed: int = 0, threads: int = 1) -> SweepGrid:
    """Evaluate a fixed policy across masses, disturbance-free."""
    if any(m <= 0 for m in mass_values):
        raise ValueError("masses must be positive")
    cells = {}
    for i, m in enumerate(mass_values):
        env = _build_env(env_name, replace(nominal_params, mass=float(m)))
        cells[(i, 0)] = evaluate(env, policy, theta, n_episodes, adversary="none",
                                 alpha=alpha, eval_seed=eval_seed, threads=threads)
    return SweepGrid("mass", [float(m) for m in mass_values], None, None, cells)


def friction_sweep(env_name: str, policy, theta, nominal_params: EnvPhysicsParams,
                   friction_values, n_episodes: int, alpha: float = 0.1,
                   eval_seed: int = 0, threads: int = 1) -> SweepGrid:
    """Friction grid; only meaningful for the slider, rejected elsewhere."""
    if env_name != "slider":
        raise ValueError("friction sweeps apply only to the slider environment")
    if any(f < 0 for f in friction_values):
        raise ValueError("friction coefficients must be nonnegative")
    cells = {}
    for i, f in enumerate(friction_values):
        env = _build_env(env_name, replace(nominal_params, friction_coeff=float(f)))
        cells[(i, 0)] = evaluate(env, policy, theta, n_episodes, adversary="none",
                                 alpha=alpha, eval_seed=eval_seed, threads=threads)
    return SweepGrid("friction", [float(f) for f in friction_values], None, None, cells)


def joint_sweep(policy, theta, nominal_params: EnvPhysicsParams, mass_values,
                friction_values, n_episodes: int, alpha: float = 0.1,
                eval_seed: int = 0, threads: int = 1) -> SweepGrid:
    """Full mass x friction grid on the slider."""
    cells = {}
    for i, m in enumerate(mass_values):
        for j, f in enumerate(friction_values):
            env = _build_env("slider", replace(nominal_params, mass=float(m),
                                               friction_coeff=float(f)))
            cells[(i, j)] = evaluate(env, policy, theta, n_episodes, adversary="none",
                                     alpha=alpha, eval_seed=eval_seed, threads=threads)
    return SweepGrid("mass", [float(m) for m in mass_values],
                     "friction", [float(f) for f in friction_values], cells)


def sweep_difference(grid_a: SweepGrid, grid_b: SweepGrid) -> list[tuple]:
    """Cell-wise mean differences (a minus b) over matching grids."""
    if grid_a.axis1_values != grid_b.axis1_values or grid_a.axis2_values != grid_b.axis2_values:
        raise ValueError("grids must share axes")
    out = []
    for key in sorted(grid_a.cells):
        i, j = key
        a1 = grid_a.axis1_values[i]
        a2 = grid_a.axis2_values[j] if grid_a.axis2_values else None
        out.append((a1, a2, grid_a.cells[key].mean - grid_b.cells[key].mean))
    return out


# ---------------------------------------------------------------------------
# Test-time attack protocol
# ---------------------------------------------------------------------------


def run_attack(env_name: str, params: EnvPhysicsParams, policy_mu, theta_mu,
               attack_iters: int = 50, n_episodes: int = 100, n_traj: int = 32,
               seed: int = 0, alpha: float = 0.1, threads: int = 1):
    """Train an attack adversary against the frozen protagonist, then
    compare disturbance-free and attacked evaluations on shared seeds.

    Returns (clean EvalStats, attacked EvalStats, adversary parameters).
    """
    config = TrainConfig(env_name=env_name, env_params=params, n_iter=attack_iters,
                         n_traj=n_traj, seed=seed)
    attack = train_adversary_only(config, theta_mu, threads=threads)
    env = _build_env(env_name, params)
    clean = evaluate(env, policy_mu, theta_mu, n_episodes, adversary="none",
                     alpha=alpha, eval_seed=seed, threads=threads)
    attacked = evaluate(env, policy_mu, theta_mu, n_episodes,
                        adversary=(attack.policy_nu, attack.theta_nu),
                        alpha=alpha, eval_seed=seed, threads=threads)
    return clean, attacked, attack.theta_nu


# ---------------------------------------------------------------------------
# Adversary force fields
# ---------------------------------------------------------------------------


def force_field_export(policy_nu, theta_nu, states, act2_bounds) -> np.ndarray:
    """Mean (noise-free) adversary force per state, clamped to the cap.

    Returns an array of rows [state..., force...].
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    mean = policy_nu.mean_batch(theta_nu, states)
    forces = clamp_action(mean, act2_bounds)
    return np.hstack([states, forces])


def pendulum_probe_states() -> np.ndarray:
    """States mirroring the two interpretable regimes: a stationary cart
    with a tilted pole, and a moving cart with a vertical pole."""
    tilted = [(0.0, 0.0, th, 0.0) for th in np.linspace(-0.15, 0.15, 7)]
    moving = [(0.0, v, 0.0, 0.0) for v in np.linspace(-1.5, 1.5, 7)]
    return np.array(tilted + moving)


# ---------------------------------------------------------------------------
# CSV schemas (round-trip exact)
# ---------------------------------------------------------------------------


def _r(x: float) -> str:
    return repr(float(x))


def percentiles_to_csv(curve) -> str:
    lines = ["percentile,reward"]
    lines += [f"{p},{_r(v)}" for p, v in curve]
    return "\n".join(lines) + "\n"


def percentiles_from_csv(text: str) -> list[tuple[int, float]]:
    lines = text.strip().splitlines()
    if lines[0] != "percentile,reward":
        raise ValueError("bad percentile CSV header")
    return [(int(a), float(b)) for a, b in (line.split(",") for line in lines[1:])]


def sweep_to_csv(grid: SweepGrid) -> str:
    """Schema: mass,friction,mean,std,cvar,episodes.  The column for an
    axis the sweep does not vary is left empty."""
    lines = ["mass,friction,mean,std,cvar,episodes"]
    for (i, j) in sorted(grid.cells):
        stats = grid.cells[(i, j)]
        axis = {grid.axis1_name: grid.axis1_values[i]}
        if grid.axis2_name:
            axis[grid.axis2_name] = grid.axis2_values[j]
        mass = _r(axis["mass"]) if "mass" in axis else ""
        fric = _r(axis["friction"]) if "friction" in axis else ""
        lines.append(f"{mass},{fric},{_r(stats.mean)},{_r(stats.std)},"
                     f"{_r(stats.risk.cvar)},{stats.episodes}")
    return "\n".join(lines) + "\n"


def sweep_from_csv(text: str) -> list[dict]:
    lines = text.strip().splitlines()
    if lines[0] != "mass,friction,mean,std,cvar,episodes":
        raise ValueError("bad sweep CSV header")
    rows = []
    for line in lines[1:]:
        mass, fric, mean, std, cv, eps = line.split(",")
        rows.append({
            "mass": float(mass) if mass else None,
            "friction": float(fric) if fric else None,
            "mean": float(mean), "std": float(std), "cvar": float(cv),
            "episodes": int(eps),
        })
    return rows


def force_field_to_csv(rows: np.ndarray, obs_dim: int) -> str:
    n_force = rows.shape[1] - obs_dim
    header = [f"state_{k}" for k in range(obs_dim)] + [f"f_{k}" for k in range(n_force)]
    lines = [",".join(header)]
    lines += [",".join(_r(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def force_field_from_csv(text: str) -> np.ndarray:
    lines = text.strip().splitlines()
    return np.array([[float(c) for c in line.split(",")] for line in lines[1:]])


def attack_report_to_csv(clean: EvalStats, attacked: EvalStats) -> str:
    lines = ["condition,mean,std,cvar,episodes"]
    for name, stats in (("clean", clean), ("attacked", attacked)):
        lines.append(f"{name},{_r(stats.mean)},{_r(stats.std)},"
                     f"{_r(stats.risk.cvar)},{stats.episodes}")
    return "\n".join(lines) + "\n"


def difference_to_csv(diff_rows) -> str:
    lines = ["mass,friction,mean_difference"]
    for a1, a2, d in diff_rows:
        fric = _r(a2) if a2 is not None else ""
        lines.append(f"{_r(a1)},{fric},{_r(d)}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Companion plot scripts (gnuplot text, no runtime dependency)
# ---------------------------------------------------------------------------


def plot_script(kind: str, csv_name: str, out_name: str) -> str:
    common = (
        "set datafile separator ','\n"
        f"set output '{out_name}'\n"
        "set terminal pngcairo size 800,500\n"
        "set key left top\n"
    )
    if kind == "percentiles":
        body = (f"set xlabel 'percentile'\nset ylabel 'final reward'\n"
                f"plot '{csv_name}' skip 1 using 1:2 with lines title 'reward'\n")
    elif kind == "sweep":
        body = (f"set xlabel 'parameter'\nset ylabel 'mean return'\n"
                f"plot '{csv_name}' skip 1 using 1:3 with linespoints title 'mean'\n")
    elif kind == "heatmap":
        body = (f"set xlabel 'mass'\nset ylabel 'friction'\nset view map\n"
                f"splot '{csv_name}' skip 1 using 1:2:3 with points pt 5 ps 3 "
                f"palette title 'mean'\n")
    else:
        raise ValueError(f"unknown plot kind '{kind}'")
    return common + body

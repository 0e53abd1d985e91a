"""Alternating two-player training loop and rollout machinery.

The loop alternates: hold the adversary fixed and take ``n_mu`` trust-
region steps on the protagonist (each on freshly rolled trajectories),
then hold the protagonist and take ``n_nu`` steps on the adversary, for
``n_iter`` outer iterations.  Baseline mode skips the adversary phase and
forces its force cap to zero, which reduces the loop to standard
single-agent training exactly.

Determinism: every trajectory owns three RNG streams (environment,
player 1, player 2) derived from (run seed, iteration, phase, inner step,
trajectory index).  Rollouts are simulated in fixed-size blocks of eight
trajectories regardless of thread count, so thread scheduling can never
change a result bit.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .env_core import SingleAgentView, Trajectory, clamp_action, split
from .envs import EnvPhysicsParams
from .envs.pendulum import make_inverted_pendulum
from .envs.slider import make_friction_slider
from .envs.tabular import TabularGame, TabularGameEnv, make_tabular_game
from .optim import OptimizerConfig, compute_advantages, fit_baseline, trpo_step
from .policies import GaussianMlpPolicy, TabularSoftmaxPolicy, save_checkpoint

BLOCK_SIZE = 16  # trajectories simulated in lockstep; fixed so threading is inert


class CheckpointError(Exception):
    """A checkpoint write failed; the message names the last good file."""


# ---------------------------------------------------------------------------
# Actors: policies bound to parameters, plus the fixed eval adversaries
# ---------------------------------------------------------------------------


class GaussianActor:
    def __init__(self, policy: GaussianMlpPolicy, theta: np.ndarray, bounds: np.ndarray):
        self.policy = policy
        self.theta = theta
        self.bounds = bounds

    def noise_block(self, rng: np.random.Generator, horizon: int) -> np.ndarray:
        return rng.standard_normal((horizon, self.policy.act_dim))

    def act(self, states: np.ndarray, noise: np.ndarray) -> np.ndarray:
        return clamp_action(self.policy.act_batch(self.theta, states, noise), self.bounds)


class ZeroActor:
    """Applies the zero action and consumes no randomness."""

    def __init__(self, act_dim: int):
        self.act_dim = act_dim

    def noise_block(self, rng, horizon):
        return None

    def act(self, states, noise):
        return np.zeros((states.shape[0], self.act_dim))

    def act_single(self, state, u):
        return 0


class RandomActor:
    """Uniform over the action box; used for the random-disturbance baseline."""

    def __init__(self, bounds: np.ndarray):
        self.bounds = bounds

    def noise_block(self, rng, horizon):
        return rng.random((horizon, self.bounds.shape[0]))

    def act(self, states, noise):
        lo, hi = self.bounds[:, 0], self.bounds[:, 1]
        return lo + (hi - lo) * noise

    def act_single(self, state, u):
        n = int(round(self.bounds[0, 1])) + 1
        return min(int(u * n), n - 1)


class TabularActor:
    def __init__(self, policy: TabularSoftmaxPolicy, theta: np.ndarray):
        self.policy = policy
        self.theta = theta

    def noise_block(self, rng, horizon):
        return rng.random(horizon)

    def act_single(self, state: int, u: float) -> int:
        return self.policy.action_from_uniform(self.theta, state, u)


# ---------------------------------------------------------------------------
# Rollouts
# ---------------------------------------------------------------------------


def _spawn_streams(traj_seed: np.random.SeedSequence):
    env_ss, p1_ss, p2_ss = traj_seed.spawn(3)
    return (
        np.random.Generator(np.random.PCG64(env_ss)),
        np.random.Generator(np.random.PCG64(p1_ss)),
        np.random.Generator(np.random.PCG64(p2_ss)),
    )


def _stack_noise(actor, rngs, horizon):
    blocks = [actor.noise_block(rng, horizon) for rng in rngs]
    if blocks[0] is None:
        return None
    return np.stack(blocks)  # (B, horizon, act_dim)


def _roll_block_continuous(env, actor1, actor2, traj_seeds) -> list[Trajectory]:
    B = len(traj_seeds)
    T = env.spec.horizon
    obs = env.spec.obs_dim
    streams = [_spawn_streams(s) for s in traj_seeds]
    S = env.init_state_batch([st[0] for st in streams])
    z1 = _stack_noise(actor1, [st[1] for st in streams], T)
    z2 = _stack_noise(actor2, [st[2] for st in streams], T)

    states_hist = np.empty((T + 1, B, obs))
    states_hist[0] = S
    a1_hist = np.empty((T, B, env.spec.act1_dim))
    a2_hist = np.empty((T, B, env.spec.act2_dim))
    r_hist = np.empty((T, B))
    alive = np.ones(B, dtype=bool)
    lengths = np.zeros(B, dtype=int)
    terminated = np.zeros(B, dtype=bool)

    for t in range(T):
        A1 = actor1.act(S, None if z1 is None else z1[:, t])
        A2 = actor2.act(S, None if z2 is None else z2[:, t])
        S_next, R, TERM = env.step_batch(S, A1, A2)
        a1_hist[t] = A1
        a2_hist[t] = A2
        r_hist[t] = R
        lengths[alive] = t + 1
        terminated |= alive & TERM
        S = np.where(alive[:, None], S_next, S)
        states_hist[t + 1] = S
        alive &= ~TERM
        if not alive.any():
            break

    out = []
    for i in range(B):
        L = int(lengths[i])
        out.append(Trajectory(
            states=states_hist[: L + 1, i].copy(),
            actions1=a1_hist[:L, i].copy(),
            actions2=a2_hist[:L, i].copy(),
            rewards1=r_hist[:L, i].copy(),
            terminated=bool(terminated[i]),
            discount=env.spec.discount,
            horizon=T,
        ))
    return out


def _roll_traj_tabular(env: TabularGameEnv, actor1, actor2, traj_seed) -> Trajectory:
    T = env.spec.horizon
    env_rng, p1_rng, p2_rng = _spawn_streams(traj_seed)
    u1 = actor1.noise_block(p1_rng, T)
    u2 = actor2.noise_block(p2_rng, T)
    states = np.empty(T + 1, dtype=np.int64)
    actions1 = np.empty(T, dtype=np.int64)
    actions2 = np.empty(T, dtype=np.int64)
    rewards = np.empty(T)
    s = env.game.start_state
    states[0] = s
    for t in range(T):
        a1 = actor1.act_single(s, 0.0 if u1 is None else u1[t])
        a2 = actor2.act_single(s, 0.0 if u2 is None else u2[t])
        rewards[t] = env.game.reward[s, a1, a2]
        s = env.next_state_from_uniform(s, a1, a2, env_rng.random())
        actions1[t] = a1
        actions2[t] = a2
        states[t + 1] = s
    return Trajectory(
        states=states, actions1=actions1, actions2=actions2, rewards1=rewards,
        terminated=False, discount=env.spec.discount, horizon=T,
    )


def roll(env, actor1, actor2, n_traj: int, seed_seq: np.random.SeedSequence,
         threads: int = 1) -> list[Trajectory]:
    """Sample ``n_traj`` trajectories with per-trajectory RNG streams.

    The block partition is a function of ``n_traj`` alone, so any thread
    count (and repeated calls) produce bit-identical trajectory lists.
    """
    traj_seeds = seed_seq.spawn(n_traj)
    blocks = [traj_seeds[i:i + BLOCK_SIZE] for i in range(0, n_traj, BLOCK_SIZE)]
    tabular = isinstance(env, TabularGameEnv)

    def run_block(block):
        if tabular:
            return [_roll_traj_tabular(env, actor1, actor2, s) for s in block]
        return _roll_block_continuous(env, actor1, actor2, block)

    if threads <= 1 or len(blocks) == 1:
        results = [run_block(b) for b in blocks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_block, blocks))
    return [traj for block in results for traj in block]


def make_actor(env, policy, theta):
    if isinstance(env, TabularGameEnv):
        return TabularActor(policy, theta)
    bounds = env.spec.act1_bounds if policy.act_dim == env.spec.act1_dim else env.spec.act2_bounds
    return GaussianActor(policy, theta, bounds)


# ---------------------------------------------------------------------------
# Configuration and environment construction
# ---------------------------------------------------------------------------


@dataclass
class TrainConfig:
    env_name: str = "pendulum"
    env_params: EnvPhysicsParams | None = None
    n_iter: int = 100
    n_mu: int = 1
    n_nu: int = 1
    n_traj: int = 32
    seed: int = 0
    baseline_mode: bool = False
    checkpoint_every: int = 25
    optimizer_mu: OptimizerConfig = field(default_factory=OptimizerConfig)
    optimizer_nu: OptimizerConfig = field(default_factory=OptimizerConfig)
    # tabular-game settings, ignored by the physics environments
    game_seed: int = 0
    game_n_states: int = 5
    game_n_actions1: int = 3
    game_n_actions2: int = 3
    game_horizon: int = 50

    def __post_init__(self):
        if min(self.n_iter, self.n_mu, self.n_nu, self.n_traj) < 1 and self.n_iter != 0:
            raise ValueError("iteration and trajectory counts must be >= 1")


def default_params(env_name: str) -> EnvPhysicsParams:
    if env_name == "pendulum":
        return EnvPhysicsParams.pendulum_defaults()
    if env_name == "slider":
        return EnvPhysicsParams.slider_defaults()
    if env_name == "tabular":
        return EnvPhysicsParams.pendulum_defaults()  # unused by tabular games
    raise ValueError(f"unknown environment '{env_name}'")


def build_env(config: TrainConfig):
    params = config.env_params or default_params(config.env_name)
    if config.baseline_mode:
        params = replace(params, adversary_force_cap=0.0)
    if config.env_name == "pendulum":
        return make_inverted_pendulum(params)
    if config.env_name == "slider":
        return make_friction_slider(params)
    if config.env_name == "tabular":
        game = make_tabular_game(config.game_seed, config.game_n_states,
                                 config.game_n_actions1, config.game_n_actions2)
        return TabularGameEnv(game, horizon=config.game_horizon)
    raise ValueError(f"unknown environment '{config.env_name}'")


def make_policies(env):
    if isinstance(env, TabularGameEnv):
        g = env.game
        return (TabularSoftmaxPolicy(g.n_states, g.n_actions1),
                TabularSoftmaxPolicy(g.n_states, g.n_actions2))
    return (GaussianMlpPolicy(env.spec.obs_dim, env.spec.act1_dim),
            GaussianMlpPolicy(env.spec.obs_dim, env.spec.act2_dim))


def _entropy(seed: int) -> int:
    return seed % (2 ** 63)


def init_seed(config_seed: int, player: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([_entropy(config_seed), 101 if player == 1 else 202])


def roll_seed(config_seed: int, iteration: int, phase: int, inner: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([_entropy(config_seed), 1000, iteration, phase, inner])


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------


@dataclass
class TrainResult:
    theta_mu: np.ndarray
    theta_nu: np.ndarray | None
    policy_mu: object
    policy_nu: object | None
    history: list[dict]
    events: list[tuple[str, int]]
    run_dir: str | None = None
    theta_mu_history: list[np.ndarray] = field(default_factory=list)
    theta_nu_history: list[np.ndarray] = field(default_factory=list)


def _update_player(env, policy, theta, views, opt_config):
    gamma = env.spec.discount
    baseline = fit_baseline(views, gamma, opt_config.baseline)
    batch = compute_advantages(views, baseline, gamma, opt_config.gae_lambda)
    batch.logp_old = policy.log_prob_batch(theta, batch.states, batch.actions)
    return trpo_step(policy, theta, batch, opt_config)


def _phase_record(iteration, phase, inner, trajs, diag):
    returns_p1 = np.array([t.episode_return(1) for t in trajs])
    returns_p2 = np.array([t.episode_return(2) for t in trajs])
    return {
        "iteration": iteration,
        "phase": phase,
        "inner": inner,
        "mean_return_p1": float(np.mean(returns_p1)),
        "mean_return_p2": float(np.mean(returns_p2)),
        "surrogate_before": diag.surrogate_before,
        "surrogate_after": diag.surrogate_after,
        "kl": diag.kl,
        "cg_residual": diag.cg_residual,
        "backtracks": diag.backtracks,
        "accepted": int(diag.accepted),
    }


STATS_COLUMNS = ["iteration", "phase", "inner", "mean_return_p1", "mean_return_p2",
                 "surrogate_before", "surrogate_after", "kl", "cg_residual",
                 "backtracks", "accepted"]


def _stats_row(record: dict) -> str:
    cells = []
    for col in STATS_COLUMNS:
        v = record[col]
        cells.append(repr(float(v)) if isinstance(v, float) else str(v))
    return ",".join(cells)


class _RunWriter:
    """Incremental run-directory persistence (stats CSV, checkpoints, manifest)."""

    def __init__(self, run_dir: str | None, config_echo: str = ""):
        self.run_dir = Path(run_dir) if run_dir else None
        self.config_echo = config_echo
        self.checkpoints: list[str] = []
        self._stats = None
        self._t0 = time.monotonic()
        if self.run_dir:
            self.run_dir.mkdir(parents=True, exist_ok=True)
            (self.run_dir / "checkpoints").mkdir(exist_ok=True)
            (self.run_dir / "config.resolved").write_text(config_echo)
            self._stats = open(self.run_dir / "stats.csv", "w")
            self._stats.write(",".join(STATS_COLUMNS) + "\n")

    def record(self, rec: dict):
        if self._stats:
            self._stats.write(_stats_row(rec) + "\n")
            self._stats.flush()

    def checkpoint(self, iteration, policy_mu, theta_mu, policy_nu, theta_nu, seed):
        if not self.run_dir:
            return
        path = self.run_dir / "checkpoints" / f"iter_{iteration:06d}.bin"
        try:
            save_checkpoint(path, policy_mu, theta_mu, seed=seed, iteration=iteration)
            if theta_nu is not None:
                adv = self.run_dir / "checkpoints" / f"iter_{iteration:06d}_adv.bin"
                save_checkpoint(adv, policy_nu, theta_nu, seed=seed, iteration=iteration)
        except OSError as exc:
            last = self.checkpoints[-1] if self.checkpoints else "none"
            raise CheckpointError(
                f"checkpoint write failed at iteration {iteration}: {exc}; "
                f"last good checkpoint: {last}"
            ) from exc
        self.checkpoints.append(str(path))

    def finish(self, config: TrainConfig, extras: dict):
        if not self.run_dir:
            return
        if self._stats:
            self._stats.close()
        manifest = {
            "env": config.env_name,
            "seed": config.seed,
            "baseline_mode": config.baseline_mode,
            "code_version": code_version(),
            "stats_csv": "stats.csv",
            "checkpoints": [str(Path(p).relative_to(self.run_dir)) for p in self.checkpoints],
            "wall_time_s": time.monotonic() - self._t0,
        }
        manifest.update(extras)
        (self.run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def code_version() -> str:
    """Content hash of the package sources, for run manifests."""
    root = Path(__file__).parent
    h = hashlib.sha256()
    for path in sorted(root.rglob("*.py")):
        h.update(path.relative_to(root).as_posix().encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:16]


def train(config: TrainConfig, run_dir: str | None = None, threads: int = 1,
          config_echo: str = "", track_params: bool = False) -> TrainResult:
    """Run the alternating two-player loop and return final parameters."""
    env = build_env(config)
    policy_mu, policy_nu = make_policies(env)
    theta_mu = policy_mu.init_params(init_seed(config.seed, 1))
    theta_nu = policy_nu.init_params(init_seed(config.seed, 2))

    writer = _RunWriter(run_dir, config_echo)
    history: list[dict] = []
    events: list[tuple[str, int]] = []
    result = TrainResult(theta_mu, theta_nu, policy_mu, policy_nu, history, events,
                         run_dir=run_dir)

    for i in range(1, config.n_iter + 1):
        for j in range(1, config.n_mu + 1):
            actor_mu = make_actor(env, policy_mu, theta_mu)
            # with a zero force cap the sampled adversary action is clamped
            # to zero, so the zero actor is an exact, cheaper stand-in
            actor_nu = (ZeroActor(env.spec.act2_dim) if config.baseline_mode
                        else make_actor(env, policy_nu, theta_nu))
            trajs = roll(env, actor_mu, actor_nu, config.n_traj,
                         roll_seed(config.seed, i, 1, j), threads)
            events.append(("mu", config.n_traj))
            views = [split(t, 1) for t in trajs]
            theta_mu, diag = _update_player(env, policy_mu, theta_mu, views,
                                            config.optimizer_mu)
            rec = _phase_record(i, "mu", j, trajs, diag)
            history.append(rec)
            writer.record(rec)
            if track_params:
                result.theta_mu_history.append(theta_mu.copy())
        if not config.baseline_mode:
            for j in range(1, config.n_nu + 1):
                actor_mu = make_actor(env, policy_mu, theta_mu)
                actor_nu = make_actor(env, policy_nu, theta_nu)
                trajs = roll(env, actor_mu, actor_nu, config.n_traj,
                             roll_seed(config.seed, i, 2, j), threads)
                events.append(("nu", config.n_traj))
                views = [split(t, 2) for t in trajs]
                theta_nu, diag = _update_player(env, policy_nu, theta_nu, views,
                                                config.optimizer_nu)
                rec = _phase_record(i, "nu", j, trajs, diag)
                history.append(rec)
                writer.record(rec)
                if track_params:
                    result.theta_nu_history.append(theta_nu.copy())
        if config.checkpoint_every and i % config.checkpoint_every == 0:
            writer.checkpoint(i, policy_mu, theta_mu, policy_nu,
                              None if config.baseline_mode else theta_nu, config.seed)

    if config.n_iter and (not config.checkpoint_every or config.n_iter % config.checkpoint_every):
        writer.checkpoint(config.n_iter, policy_mu, theta_mu, policy_nu,
                          None if config.baseline_mode else theta_nu, config.seed)
    result.theta_mu = theta_mu
    result.theta_nu = theta_nu
    writer.finish(config, {"iterations": config.n_iter, "mode": "train"})
    return result


def train_single_agent(config: TrainConfig, threads: int = 1,
                       track_params: bool = False) -> TrainResult:
    """Reference standard single-agent loop (no adversary anywhere).

    Uses the same seed derivations as the protagonist phase of ``train``
    so zero-strength equivalence can be checked bit for bit.
    """
    config = replace(config, baseline_mode=True)
    env = build_env(config)
    policy_mu, _ = make_policies(env)
    theta_mu = policy_mu.init_params(init_seed(config.seed, 1))
    zero_adv = ZeroActor(env.spec.act2_dim)

    history: list[dict] = []
    events: list[tuple[str, int]] = []
    result = TrainResult(theta_mu, None, policy_mu, None, history, events)
    for i in range(1, config.n_iter + 1):
        for j in range(1, config.n_mu + 1):
            actor_mu = make_actor(env, policy_mu, theta_mu)
            trajs = roll(env, actor_mu, zero_adv, config.n_traj,
                         roll_seed(config.seed, i, 1, j), threads)
            events.append(("mu", config.n_traj))
            views = [split(t, 1) for t in trajs]
            theta_mu, diag = _update_player(env, policy_mu, theta_mu, views,
                                            config.optimizer_mu)
            history.append(_phase_record(i, "mu", j, trajs, diag))
            if track_params:
                result.theta_mu_history.append(theta_mu.copy())
    result.theta_mu = theta_mu
    return result


def train_adversary_only(config: TrainConfig, theta_mu_fixed: np.ndarray,
                         run_dir: str | None = None, threads: int = 1,
                         track_params: bool = False) -> TrainResult:
    """Train an attack adversary against a frozen protagonist."""
    env = build_env(config)
    policy_mu, policy_nu = make_policies(env)
    theta_mu = np.asarray(theta_mu_fixed, dtype=np.float64)
    if theta_mu.shape != (policy_mu.n_params,):
        raise ValueError("frozen protagonist parameters do not fit this environment")
    theta_nu = policy_nu.init_params(init_seed(config.seed, 2))

    writer = _RunWriter(run_dir)
    history: list[dict] = []
    events: list[tuple[str, int]] = []
    result = TrainResult(theta_mu, theta_nu, policy_mu, policy_nu, history, events,
                         run_dir=run_dir)
    for i in range(1, config.n_iter + 1):
        for j in range(1, config.n_nu + 1):
            actor_mu = make_actor(env, policy_mu, theta_mu)
            actor_nu = make_actor(env, policy_nu, theta_nu)
            trajs = roll(env, actor_mu, actor_nu, config.n_traj,
                         roll_seed(config.seed, i, 2, j), threads)
            events.append(("nu", config.n_traj))
            views = [split(t, 2) for t in trajs]
            theta_nu, diag = _update_player(env, policy_nu, theta_nu, views,
                                            config.optimizer_nu)
            rec = _phase_record(i, "nu", j, trajs, diag)
            history.append(rec)
            writer.record(rec)
            if track_params:
                result.theta_nu_history.append(theta_nu.copy())
    result.theta_nu = theta_nu
    writer.finish(config, {"iterations": config.n_iter, "mode": "train_adversary_only"})
    return result

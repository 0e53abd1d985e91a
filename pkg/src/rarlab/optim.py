"""Batch policy optimization: baselines, GAE, and KL-constrained steps.

The update is the classic trust-region scheme: maximize the importance
surrogate ``mean[exp(logp - logp_old) * A]`` subject to a mean-KL bound,
solving the natural-gradient direction with conjugate gradients on
Fisher-vector products and picking the step length by backtracking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .env_core import SingleAgentView
from .nn import MlpNet


@dataclass(frozen=True)
class OptimizerConfig:
    kl_delta: float = 0.01
    cg_iters: int = 10
    cg_damping: float = 0.1
    backtrack_ratio: float = 0.5
    max_backtracks: int = 10
    gae_lambda: float = 0.97
    baseline: str = "linear"       # "linear" or "mlp"
    fvp_subsample: int = 1         # stride over timesteps for Fisher products

    def __post_init__(self):
        if self.kl_delta <= 0:
            raise ValueError("kl_delta must be positive")
        if self.cg_iters < 1:
            raise ValueError("cg_iters must be >= 1")
        if not (0.0 < self.backtrack_ratio < 1.0):
            raise ValueError("backtrack_ratio must lie in (0, 1)")
        if not (0.0 <= self.gae_lambda <= 1.0):
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.baseline not in ("linear", "mlp"):
            raise ValueError("baseline must be 'linear' or 'mlp'")
        if self.fvp_subsample < 1:
            raise ValueError("fvp_subsample must be >= 1")


# ---------------------------------------------------------------------------
# Baselines
# ---------------------------------------------------------------------------


def _time_feature(length: int, horizon: int) -> np.ndarray:
    return np.arange(length, dtype=np.float64) / max(horizon, 1)


class LinearFeatureBaseline:
    """Regularized least squares on [state, state^2, t/T, 1]."""

    def __init__(self, coeffs: np.ndarray):
        self.coeffs = coeffs

    @staticmethod
    def features(states: np.ndarray, times: np.ndarray) -> np.ndarray:
        s = np.atleast_2d(states).astype(np.float64)
        t = np.asarray(times, dtype=np.float64).reshape(-1, 1)
        return np.hstack([s, s * s, t, np.ones_like(t)])

    def predict(self, states: np.ndarray, times: np.ndarray) -> np.ndarray:
        return self.features(states, times) @ self.coeffs


class MlpBaseline:
    """Small tanh MLP value model fit by full-batch Adam from a fixed init."""

    HIDDEN = (32, 32)
    STEPS = 200
    LR = 1e-2

    def __init__(self, net: MlpNet, theta: np.ndarray):
        self.net = net
        self.theta = theta

    def predict(self, states: np.ndarray, times: np.ndarray) -> np.ndarray:
        x = np.hstack([np.atleast_2d(states), np.asarray(times).reshape(-1, 1)])
        out, _ = self.net.forward(self.theta, x)
        return out[:, 0]

    @classmethod
    def fit(cls, states, times, targets) -> "MlpBaseline":
        obs_dim = states.shape[1]
        net = MlpNet(obs_dim + 1, cls.HIDDEN, 1)
        theta = net.init_params(np.random.Generator(np.random.PCG64(0)), out_scale=0.1)
        x = np.hstack([states, times.reshape(-1, 1)])
        m = np.zeros_like(theta)
        v = np.zeros_like(theta)
        scale = 1.0 / max(np.std(targets), 1e-8)
        y = targets * scale
        for k in range(1, cls.STEPS + 1):
            out, cache = net.forward(theta, x)
            resid = out[:, 0] - y
            grad = net.backward(theta, cache, (resid / resid.shape[0])[:, None])
            m = 0.9 * m + 0.1 * grad
            v = 0.999 * v + 0.001 * grad * grad
            mh = m / (1.0 - 0.9 ** k)
            vh = v / (1.0 - 0.999 ** k)
            theta = theta - cls.LR * mh / (np.sqrt(vh) + 1e-8)
        # fold the target scaling back into the output layer
        theta = theta.copy()
        w3_start = net.n_params - (cls.HIDDEN[1] * 1 + 1)
        theta[w3_start:] /= scale
        return cls(net, theta)


def discounted_returns_to_go(rewards: np.ndarray, gamma: float) -> np.ndarray:
    out = np.empty_like(rewards, dtype=np.float64)
    acc = 0.0
    for t in range(rewards.shape[0] - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def fit_baseline(views: list[SingleAgentView], gamma: float, kind: str = "linear"):
    """Fit a state-value model on discounted returns-to-go."""
    if not views:
        raise ValueError("no views to fit")
    states = np.vstack([_as_features(v.states) for v in views])
    times = np.concatenate([_time_feature(len(v), v.horizon) for v in views])
    targets = np.concatenate([discounted_returns_to_go(v.rewards, gamma) for v in views])
    if kind == "mlp":
        return MlpBaseline.fit(states, times, targets)
    phi = LinearFeatureBaseline.features(states, times)
    reg = 1e-6
    A = phi.T @ phi + reg * np.eye(phi.shape[1])
    coeffs = np.linalg.solve(A, phi.T @ targets)
    return LinearFeatureBaseline(coeffs)


def _as_features(states: np.ndarray) -> np.ndarray:
    """Integer (tabular) states become a single real feature column."""
    s = np.asarray(states)
    if s.ndim == 1:
        s = s[:, None]
    return s.astype(np.float64)


# ---------------------------------------------------------------------------
# Advantages
# ---------------------------------------------------------------------------


@dataclass
class AdvantageBatch:
    """Pooled per-timestep training data for one player."""

    states: np.ndarray
    actions: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    logp_old: np.ndarray = field(default=None)  # filled by the optimizer


def compute_advantages(views, baseline, gamma, lam, normalize: bool = True) -> AdvantageBatch:
    """Generalized advantage estimation pooled over trajectories.

    delta_t = r_t + gamma * V(s_{t+1}) * (1 - terminal) - V(s_t), then
    A_t = sum_k (gamma * lam)^k delta_{t+k}.  Terminal states have zero
    value; horizon-truncated episodes bootstrap through the final state.
    """
    all_adv, all_ret = [], []
    for v in views:
        T = len(v)
        times = _time_feature(T + 1, v.horizon)
        bootstrap_row = np.asarray(v.bootstrap_state, dtype=np.float64).reshape(1, -1)
        feats = np.vstack([_as_features(v.states), bootstrap_row])
        values = baseline.predict(feats, times)
        v_next = values[1:].copy()
        if v.terminated:
            v_next[-1] = 0.0
        delta = v.rewards + gamma * v_next - values[:-1]
        adv = np.empty(T)
        acc = 0.0
        for t in range(T - 1, -1, -1):
            acc = delta[t] + gamma * lam * acc
            adv[t] = acc
        all_adv.append(adv)
        all_ret.append(discounted_returns_to_go(v.rewards, gamma))
    advantages = np.concatenate(all_adv)
    if normalize:
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
    states = np.concatenate([np.asarray(v.states) for v in views])
    actions = np.concatenate([np.asarray(v.actions) for v in views])
    return AdvantageBatch(
        states=states,
        actions=actions,
        advantages=advantages,
        returns=np.concatenate(all_ret),
    )


# ---------------------------------------------------------------------------
# Surrogate, Fisher products, conjugate gradients, TRPO step
# ---------------------------------------------------------------------------


def surrogate_and_gradient(policy, theta, batch: AdvantageBatch):
    """Importance-weighted surrogate and its exact gradient at theta.

    ``batch.logp_old`` must hold log-densities under the behavior policy;
    at theta == theta_old all ratios are one and the loss equals mean(A).
    """
    logp = policy.log_prob_batch(theta, batch.states, batch.actions)
    ratios = np.exp(logp - batch.logp_old)
    n = batch.advantages.shape[0]
    loss = float(np.mean(ratios * batch.advantages))
    grad = policy.weighted_logp_grad(
        theta, batch.states, batch.actions, ratios * batch.advantages / n
    )
    return loss, grad


def surrogate_loss(policy, theta, batch: AdvantageBatch) -> float:
    logp = policy.log_prob_batch(theta, batch.states, batch.actions)
    return float(np.mean(np.exp(logp - batch.logp_old) * batch.advantages))


def fisher_vector_product(policy, theta, states, v, damping: float) -> np.ndarray:
    """(F + damping * I) v with F the mean-KL Fisher over the state batch."""
    return policy.fisher_vector_product(theta, states, v) + damping * v


def conjugate_gradient(matvec, b, iters: int, tol: float = 1e-10):
    """Solve A x = b approximately; returns (x, relative residual norm)."""
    x = np.zeros_like(b)
    r = b.copy()
    p = b.copy()
    r_dot = float(r @ r)
    b_norm = float(np.sqrt(b @ b))
    if b_norm == 0.0:
        return x, 0.0
    for _ in range(iters):
        Ap = matvec(p)
        alpha = r_dot / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        r_dot_new = float(r @ r)
        if np.sqrt(r_dot_new) < tol * b_norm:
            r_dot = r_dot_new
            break
        p = r + (r_dot_new / r_dot) * p
        r_dot = r_dot_new
    return x, float(np.sqrt(r_dot)) / b_norm


@dataclass
class TrpoDiagnostics:
    accepted: bool
    surrogate_before: float
    surrogate_after: float
    kl: float
    cg_residual: float
    backtracks: int
    reason: str = ""


def trpo_step(policy, theta_old, batch: AdvantageBatch, config: OptimizerConfig):
    """One KL-constrained natural-gradient update; returns (theta, diagnostics).

    On any failure (non-finite gradient, non-positive curvature, exhausted
    line search) the parameters are returned unchanged.
    """
    if batch.logp_old is None:
        batch.logp_old = policy.log_prob_batch(theta_old, batch.states, batch.actions)
    loss0, g = surrogate_and_gradient(policy, theta_old, batch)
    if not np.all(np.isfinite(g)):
        return theta_old, TrpoDiagnostics(False, loss0, loss0, 0.0, 0.0, 0, "non-finite gradient")
    if float(g @ g) == 0.0:
        return theta_old, TrpoDiagnostics(False, loss0, loss0, 0.0, 0.0, 0, "zero gradient")

    fvp_states = batch.states[:: config.fvp_subsample]
    matvec = lambda v: fisher_vector_product(policy, theta_old, fvp_states, v, config.cg_damping)
    direction, cg_residual = conjugate_gradient(matvec, g, config.cg_iters)
    shs = float(direction @ matvec(direction))
    if not np.isfinite(shs) or shs <= 0.0:
        return theta_old, TrpoDiagnostics(
            False, loss0, loss0, 0.0, cg_residual, 0, "non-positive curvature"
        )
    full_step = np.sqrt(2.0 * config.kl_delta / shs) * direction

    for k in range(config.max_backtracks):
        theta_new = theta_old + (config.backtrack_ratio ** k) * full_step
        kl = policy.kl_mean(theta_old, theta_new, batch.states)
        loss_new = surrogate_loss(policy, theta_new, batch)
        if np.isfinite(kl) and kl <= config.kl_delta and loss_new > loss0:
            return theta_new, TrpoDiagnostics(True, loss0, loss_new, kl, cg_residual, k)
    return theta_old, TrpoDiagnostics(
        False, loss0, loss0, 0.0, cg_residual, config.max_backtracks, "line search failed"
    )

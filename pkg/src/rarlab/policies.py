"""Stochastic policies over flat parameter vectors.

Two families share one interface so the trust-region optimizer is agnostic
to the action space:

* ``GaussianMlpPolicy`` -- diagonal Gaussian over continuous actions, mean
  from a 64-64 tanh MLP, one state-independent log-std per action dim.
* ``TabularSoftmaxPolicy`` -- softmax over per-state logits for discrete
  games.

The interface (all functions of an explicit parameter vector ``theta``):
``log_prob_batch``, ``weighted_logp_grad``, ``kl_mean``, ``kl_mean_grad``,
``fisher_vector_product``, ``sample_action``.  Parameter mutation is the
caller's job; policy objects hold only architecture.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .nn import MlpNet

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


class GaussianMlpPolicy:
    """Diagonal Gaussian policy: a = mean(s) + exp(log_std) * z.

    Parameter layout: the MLP's flat vector followed by ``act_dim``
    log-standard-deviations.  log_std is clamped to [-5, 2] when sampling;
    densities use the raw value.
    """

    kind = "gaussian"

    def __init__(self, obs_dim: int, act_dim: int, hidden: tuple[int, int] = (64, 64)):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = hidden
        self.net = MlpNet(obs_dim, hidden, act_dim)
        self.n_params = self.net.n_params + act_dim

    def split_params(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got {theta.shape}")
        return theta[: self.net.n_params], theta[self.net.n_params:]

    def init_params(self, seed) -> np.ndarray:
        rng = np.random.Generator(np.random.PCG64(seed))
        theta = np.zeros(self.n_params)
        theta[: self.net.n_params] = self.net.init_params(rng)
        return theta  # log_std starts at 0 (unit sigma)

    # -- acting ------------------------------------------------------------

    def mean_batch(self, theta: np.ndarray, states: np.ndarray) -> np.ndarray:
        net_theta, _ = self.split_params(theta)
        out, _ = self.net.forward(net_theta, states)
        return out

    def sample_sigma(self, theta: np.ndarray) -> np.ndarray:
        _, log_std = self.split_params(theta)
        return np.exp(np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX))

    def act_batch(self, theta: np.ndarray, states: np.ndarray, noise: np.ndarray) -> np.ndarray:
        """Map pre-drawn standard-normal noise to actions (unclamped)."""
        return self.mean_batch(theta, states) + self.sample_sigma(theta) * noise

    def sample_action(self, theta: np.ndarray, state: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        state = np.asarray(state, dtype=np.float64)
        if state.shape != (self.obs_dim,):
            raise ValueError(f"state must have shape ({self.obs_dim},)")
        if not np.all(np.isfinite(state)):
            raise ValueError("non-finite state")
        z = rng.standard_normal(self.act_dim)
        return self.act_batch(theta, state[None, :], z[None, :])[0]

    # -- densities and derivatives ------------------------------------------

    def log_prob_batch(self, theta: np.ndarray, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        _, log_std = self.split_params(theta)
        mean = self.mean_batch(theta, states)
        z = (actions - mean) * np.exp(-log_std)
        return -0.5 * np.sum(z * z, axis=1) - np.sum(log_std) - self.act_dim * HALF_LOG_2PI

    def log_prob(self, theta: np.ndarray, state: np.ndarray, action: np.ndarray) -> float:
        return float(self.log_prob_batch(theta, np.asarray(state)[None, :], np.asarray(action)[None, :])[0])

    def weighted_logp_grad(self, theta, states, actions, weights) -> np.ndarray:
        """Gradient of sum_i w_i * log pi(a_i | s_i) w.r.t. theta."""
        net_theta, log_std = self.split_params(theta)
        mean, cache = self.net.forward(net_theta, states)
        inv_var = np.exp(-2.0 * log_std)
        diff = actions - mean
        dmean = weights[:, None] * diff * inv_var
        grad = np.empty(self.n_params)
        grad[: self.net.n_params] = self.net.backward(net_theta, cache, dmean)
        grad[self.net.n_params:] = weights @ (diff * diff * inv_var - 1.0)
        return grad

    def grad_log_prob(self, theta, state, action) -> np.ndarray:
        return self.weighted_logp_grad(
            theta, np.asarray(state)[None, :], np.asarray(action)[None, :], np.ones(1)
        )

    def kl_mean(self, theta_old, theta_new, states) -> float:
        """Mean over states of KL(pi_old(.|s) || pi_new(.|s)), closed form."""
        _, ls_o = self.split_params(theta_old)
        _, ls_n = self.split_params(theta_new)
        m_o = self.mean_batch(theta_old, states)
        m_n = self.mean_batch(theta_new, states)
        var_ratio = np.exp(2.0 * (ls_o - ls_n))
        quad = (m_o - m_n) ** 2 * np.exp(-2.0 * ls_n)
        per_state = np.sum(ls_n - ls_o + 0.5 * (var_ratio + quad) - 0.5, axis=1)
        return float(np.mean(per_state))

    def kl_mean_grad(self, theta_old, theta_new, states) -> np.ndarray:
        """Gradient of kl_mean w.r.t. theta_new."""
        net_new, ls_n = self.split_params(theta_new)
        _, ls_o = self.split_params(theta_old)
        m_o = self.mean_batch(theta_old, states)
        m_n, cache = self.net.forward(net_new, states)
        B = states.shape[0]
        inv_var_n = np.exp(-2.0 * ls_n)
        dmean = (m_n - m_o) * inv_var_n / B
        grad = np.empty(self.n_params)
        grad[: self.net.n_params] = self.net.backward(net_new, cache, dmean)
        grad[self.net.n_params:] = np.mean(
            1.0 - (np.exp(2.0 * ls_o) + (m_o - m_n) ** 2) * inv_var_n, axis=0
        )
        return grad

    def fisher_vector_product(self, theta, states, v) -> np.ndarray:
        """F v for the mean-KL Fisher at theta, in closed form.

        For a diagonal Gaussian the Fisher is block diagonal: the mean block
        is J^T diag(1/sigma^2) J with J the mean's parameter Jacobian, and
        each log_std coordinate contributes the constant 2.
        """
        net_theta, log_std = self.split_params(theta)
        v_net, v_ls = v[: self.net.n_params], v[self.net.n_params:]
        _, cache = self.net.forward(net_theta, states)
        jv = self.net.jvp(net_theta, cache, v_net)
        u = jv * np.exp(-2.0 * log_std) / states.shape[0]
        out = np.empty(self.n_params)
        out[: self.net.n_params] = self.net.backward(net_theta, cache, u)
        out[self.net.n_params:] = 2.0 * v_ls
        return out


class TabularSoftmaxPolicy:
    """Per-state softmax over action logits; states are integer indices."""

    kind = "tabular"

    def __init__(self, n_states: int, n_actions: int):
        self.n_states = n_states
        self.n_actions = n_actions
        self.n_params = n_states * n_actions

    def init_params(self, seed) -> np.ndarray:
        rng = np.random.Generator(np.random.PCG64(seed))
        return rng.normal(0.0, 0.01, size=self.n_params)

    def probs(self, theta: np.ndarray) -> np.ndarray:
        logits = theta.reshape(self.n_states, self.n_actions)
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def log_probs(self, theta: np.ndarray) -> np.ndarray:
        logits = theta.reshape(self.n_states, self.n_actions)
        z = logits - logits.max(axis=1, keepdims=True)
        return z - np.log(np.exp(z).sum(axis=1, keepdims=True))

    def sample_action(self, theta: np.ndarray, state: int, rng: np.random.Generator) -> int:
        return self.action_from_uniform(theta, state, rng.random())

    def action_from_uniform(self, theta: np.ndarray, state: int, u: float) -> int:
        cdf = np.cumsum(self.probs(theta)[state])
        return int(min(np.searchsorted(cdf, u, side="right"), self.n_actions - 1))

    def log_prob_batch(self, theta, states, actions) -> np.ndarray:
        return self.log_probs(theta)[states, actions]

    def weighted_logp_grad(self, theta, states, actions, weights) -> np.ndarray:
        # sum_i w_i * (onehot(a_i) - pi[s_i])
        pi = self.probs(theta)
        grad = np.zeros((self.n_states, self.n_actions))
        np.add.at(grad, (states, actions), weights)
        np.add.at(grad, states, -weights[:, None] * pi[states])
        return grad.ravel()

    def kl_mean(self, theta_old, theta_new, states) -> float:
        lp_o = self.log_probs(theta_old)
        lp_n = self.log_probs(theta_new)
        pi_o = np.exp(lp_o)
        kl_rows = np.sum(pi_o * (lp_o - lp_n), axis=1)
        return float(np.mean(kl_rows[states]))

    def kl_mean_grad(self, theta_old, theta_new, states) -> np.ndarray:
        pi_o = self.probs(theta_old)
        pi_n = self.probs(theta_new)
        grad = np.zeros((self.n_states, self.n_actions))
        np.add.at(grad, states, (pi_n[states] - pi_o[states]) / states.shape[0])
        return grad.ravel()

    def fisher_vector_product(self, theta, states, v) -> np.ndarray:
        pi = self.probs(theta)
        v_rows = v.reshape(self.n_states, self.n_actions)[states]
        p_rows = pi[states]
        contrib = p_rows * v_rows - p_rows * np.sum(p_rows * v_rows, axis=1, keepdims=True)
        out = np.zeros((self.n_states, self.n_actions))
        np.add.at(out, states, contrib / states.shape[0])
        return out.ravel()


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------
#
# Binary layout (little-endian):
#   magic   8 bytes  b"RARLPOL1"
#   kind    u32      0 = gaussian MLP, 1 = tabular softmax
#   dim_a   u32      obs_dim (gaussian) or n_states (tabular)
#   dim_b   u32      act_dim (gaussian) or n_actions (tabular)
#   h0, h1  u32 x2   hidden layer sizes (0, 0 for tabular)
#   n       u64      parameter count
#   seed    i64      training seed recorded for provenance
#   iter    i64      training iteration the snapshot was taken at
#   params  n x f64  flat parameter vector

_CKPT_MAGIC = b"RARLPOL1"
_CKPT_HEADER = struct.Struct("<8sIIIIIIQqq")  # magic, kind, dims x4, version, n, seed, iter
_KINDS = {"gaussian": 0, "tabular": 1}


def save_checkpoint(path, policy, theta: np.ndarray, seed: int = 0, iteration: int = 0) -> None:
    if policy.kind == "gaussian":
        dims = (policy.obs_dim, policy.act_dim, policy.hidden[0], policy.hidden[1])
    else:
        dims = (policy.n_states, policy.n_actions, 0, 0)
    header = _CKPT_HEADER.pack(
        _CKPT_MAGIC, _KINDS[policy.kind], *dims, 1, policy.n_params, seed, iteration
    )
    data = np.ascontiguousarray(theta, dtype="<f8").tobytes()
    Path(path).write_bytes(header + data)


def load_checkpoint(path):
    """Return (policy, theta, meta dict)."""
    raw = Path(path).read_bytes()
    if len(raw) < _CKPT_HEADER.size or raw[:8] != _CKPT_MAGIC:
        raise ValueError(f"not a policy checkpoint: {path}")
    magic, kind, da, db, h0, h1, _version, n, seed, iteration = _CKPT_HEADER.unpack(
        raw[: _CKPT_HEADER.size]
    )
    if kind == 0:
        policy = GaussianMlpPolicy(da, db, hidden=(h0, h1))
    elif kind == 1:
        policy = TabularSoftmaxPolicy(da, db)
    else:
        raise ValueError(f"unknown policy kind {kind}")
    theta = np.frombuffer(raw[_CKPT_HEADER.size:], dtype="<f8").astype(np.float64)
    if theta.shape[0] != n or n != policy.n_params:
        raise ValueError("checkpoint parameter count mismatch")
    return policy, theta, {"seed": seed, "iteration": iteration}

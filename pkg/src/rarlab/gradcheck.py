"""Finite-difference probes for every analytic derivative in the package.

Each probe draws random architectures and inputs, compares an analytic
gradient / Fisher-vector product against central differences, and reports
the worst relative error (L2 norm of the discrepancy over the L2 norm of
the reference).  ``perturb`` deliberately corrupts one probe's analytic
result; it exists so the failure path itself is testable.
"""

from __future__ import annotations

import numpy as np

from .optim import AdvantageBatch, surrogate_and_gradient, surrogate_loss
from .policies import GaussianMlpPolicy, TabularSoftmaxPolicy

FD_STEP = 1e-5


def finite_diff_grad(f, theta: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    grad = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        grad[i] = (f(theta + e) - f(theta - e)) / (2.0 * h)
    return grad


def rel_error(analytic: np.ndarray, reference: np.ndarray) -> float:
    denom = max(float(np.linalg.norm(reference)), 1e-12)
    return float(np.linalg.norm(analytic - reference)) / denom


def _random_gaussian_policy(rng, full_size: bool = False):
    if full_size:
        obs, act, hidden = 4, 2, (64, 64)
    else:
        obs = int(rng.integers(2, 6))
        act = int(rng.integers(1, 4))
        hidden = (int(rng.integers(4, 10)), int(rng.integers(4, 10)))
    policy = GaussianMlpPolicy(obs, act, hidden=hidden)
    theta = rng.normal(0.0, 0.4, size=policy.n_params)
    return policy, theta


def probe_gaussian_log_prob_grad(rng, trials: int, bump: float = 0.0) -> float:
    worst = 0.0
    for k in range(trials):
        policy, theta = _random_gaussian_policy(rng, full_size=k < 2)
        state = rng.normal(size=policy.obs_dim)
        action = rng.normal(size=policy.act_dim)
        grad = policy.grad_log_prob(theta, state, action)
        if k == 0:
            grad = grad + bump
        fd = finite_diff_grad(lambda th: policy.log_prob(th, state, action), theta)
        worst = max(worst, rel_error(grad, fd))
    return worst


def probe_surrogate_grad(rng, trials: int, bump: float = 0.0) -> float:
    worst = 0.0
    for k in range(trials):
        policy, theta = _random_gaussian_policy(rng)
        B = 16
        batch = AdvantageBatch(
            states=rng.normal(size=(B, policy.obs_dim)),
            actions=rng.normal(size=(B, policy.act_dim)),
            advantages=rng.normal(size=B),
            returns=np.zeros(B),
        )
        theta_old = theta + rng.normal(0.0, 0.05, size=theta.shape)
        batch.logp_old = policy.log_prob_batch(theta_old, batch.states, batch.actions)
        _, grad = surrogate_and_gradient(policy, theta, batch)
        if k == 0:
            grad = grad + bump
        fd = finite_diff_grad(lambda th: surrogate_loss(policy, th, batch), theta)
        worst = max(worst, rel_error(grad, fd))
    return worst


def probe_gaussian_kl_grad(rng, trials: int, bump: float = 0.0) -> float:
    worst = 0.0
    for k in range(trials):
        policy, theta_old = _random_gaussian_policy(rng)
        theta_new = theta_old + rng.normal(0.0, 0.1, size=theta_old.shape)
        states = rng.normal(size=(8, policy.obs_dim))
        grad = policy.kl_mean_grad(theta_old, theta_new, states)
        if k == 0:
            grad = grad + bump
        fd = finite_diff_grad(lambda th: policy.kl_mean(theta_old, th, states), theta_new)
        worst = max(worst, rel_error(grad, fd))
    return worst


def _fd_hvp(policy, theta, states, v, h=FD_STEP):
    g_plus = policy.kl_mean_grad(theta, theta + h * v, states)
    g_minus = policy.kl_mean_grad(theta, theta - h * v, states)
    return (g_plus - g_minus) / (2.0 * h)


def probe_gaussian_fvp(rng, trials: int, bump: float = 0.0) -> float:
    worst = 0.0
    for k in range(trials):
        policy, theta = _random_gaussian_policy(rng)
        states = rng.normal(size=(8, policy.obs_dim))
        v = rng.normal(size=policy.n_params)
        fv = policy.fisher_vector_product(theta, states, v)
        if k == 0:
            fv = fv + bump
        worst = max(worst, rel_error(fv, _fd_hvp(policy, theta, states, v)))
    return worst


def _random_tabular_policy(rng):
    S = int(rng.integers(2, 7))
    A = int(rng.integers(2, 5))
    policy = TabularSoftmaxPolicy(S, A)
    theta = rng.normal(0.0, 0.5, size=policy.n_params)
    states = rng.integers(0, S, size=12)
    return policy, theta, states


def probe_tabular_log_prob_grad(rng, trials: int, bump: float = 0.0) -> float:
    worst = 0.0
    for k in range(trials):
        policy, theta, states = _random_tabular_policy(rng)
        actions = rng.integers(0, policy.n_actions, size=states.size)
        weights = rng.normal(size=states.size)
        grad = policy.weighted_logp_grad(theta, states, actions, weights)
        if k == 0:
            grad = grad + bump
        fd = finite_diff_grad(
            lambda th: float(weights @ policy.log_prob_batch(th, states, actions)), theta
        )
        worst = max(worst, rel_error(grad, fd))
    return worst


def probe_tabular_fvp(rng, trials: int, bump: float = 0.0) -> float:
    worst = 0.0
    for k in range(trials):
        policy, theta, states = _random_tabular_policy(rng)
        v = rng.normal(size=policy.n_params)
        fv = policy.fisher_vector_product(theta, states, v)
        if k == 0:
            fv = fv + bump
        worst = max(worst, rel_error(fv, _fd_hvp(policy, theta, states, v)))
    return worst


PROBES = [
    ("gaussian_log_prob_grad", probe_gaussian_log_prob_grad, 100, 1e-4),
    ("surrogate_grad", probe_surrogate_grad, 100, 1e-4),
    ("gaussian_kl_grad", probe_gaussian_kl_grad, 30, 1e-4),
    ("gaussian_fvp", probe_gaussian_fvp, 30, 1e-3),
    ("tabular_log_prob_grad", probe_tabular_log_prob_grad, 50, 1e-4),
    ("tabular_fvp", probe_tabular_fvp, 30, 1e-3),
]


def run_gradcheck(seed: int = 0, perturb: str | None = None) -> dict:
    """Run all probes; ``perturb`` names one whose gradient gets corrupted."""
    results = []
    for tag, (name, fn, trials, tol) in enumerate(PROBES):
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed % (2 ** 63), tag])))
        bump = 1e-2 if perturb == name else 0.0
        err = fn(rng, trials, bump=bump)
        results.append({"name": name, "max_rel_err": err, "tol": tol, "passed": err < tol})
    return {"passed": all(r["passed"] for r in results), "probes": results}

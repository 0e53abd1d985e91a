"""Exact solvers for tabular zero-sum games and tail-risk statistics.

Per-state matrix games are solved by a small dense simplex with Bland's
rule (the matrices here are tiny, so simplicity beats generality), value
iteration backs per-state game values through the transition kernel, and
best responses for the equilibrium gap are computed by exact policy
iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .envs.tabular import TabularGame

LP_TOL = 1e-9


class GameFormatError(ValueError):
    """Malformed game file; carries a 1-based line number."""

    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class MatrixGameSolution:
    row_strategy: np.ndarray
    col_strategy: np.ndarray
    value: float


@dataclass
class RiskStats:
    alpha: float
    quantile: float
    cvar: float


# ---------------------------------------------------------------------------
# Matrix games via simplex
# ---------------------------------------------------------------------------


def _simplex_max(A: np.ndarray, b: np.ndarray, c: np.ndarray):
    """Maximize c.x subject to A x <= b, x >= 0 with b >= 0.

    Dense tableau simplex with Bland's anti-cycling rule.  Returns the
    optimum, the primal solution x, and the dual vector y (one multiplier
    per constraint, read from the slack reduced costs).
    """
    m, n = A.shape
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m, :n] = -c
    basis = list(range(n, n + m))

    while True:
        reduced = T[m, : n + m]
        candidates = np.nonzero(reduced < -LP_TOL)[0]
        if candidates.size == 0:
            break
        col = int(candidates[0])  # Bland: lowest index enters
        rates = T[:m, col]
        rows = np.nonzero(rates > LP_TOL)[0]
        if rows.size == 0:
            raise ArithmeticError("unbounded linear program")
        ratios = T[rows, -1] / rates[rows]
        best = ratios.min()
        # Bland: among minimal ratios, the row whose basic variable has
        # the lowest index leaves
        tied = rows[np.nonzero(ratios <= best + LP_TOL)[0]]
        row = int(min(tied, key=lambda r: basis[r]))
        T[row] /= T[row, col]
        for r in range(m + 1):
            if r != row and T[r, col] != 0.0:
                T[r] -= T[r, col] * T[row]
        basis[row] = col

    x = np.zeros(n + m)
    for r, var in enumerate(basis):
        x[var] = T[r, -1]
    return float(T[m, -1]), x[:n], T[m, n:n + m].copy()


def matrix_game_solve(payoff) -> MatrixGameSolution:
    """Optimal mixed strategies and value of a zero-sum matrix game.

    ``payoff[i, j]`` is the row player's (maximizer's) reward.  Solved as
    the standard pair of linear programs after shifting the matrix
    positive; the column player's program has a trivially feasible slack
    basis, and the row player's strategy falls out of its dual.
    """
    M = np.asarray(payoff, dtype=np.float64)
    if M.ndim != 2 or M.size == 0:
        raise ValueError("payoff must be a non-empty 2-D matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("payoff must be finite")
    shift = 1.0 - M.min()
    Mp = M + shift
    n_rows, n_cols = M.shape
    z, x, y = _simplex_max(Mp, np.ones(n_rows), np.ones(n_cols))
    value = 1.0 / z - shift
    col_strategy = x / x.sum()
    row_strategy = y / y.sum()
    return MatrixGameSolution(row_strategy=row_strategy, col_strategy=col_strategy,
                              value=value)


# ---------------------------------------------------------------------------
# Shapley value iteration
# ---------------------------------------------------------------------------


@dataclass
class ValueIterationResult:
    values: np.ndarray            # V*(s)
    row_strategies: np.ndarray    # (S, A1)
    col_strategies: np.ndarray    # (S, A2)
    iterations: int
    residual: float               # final Bellman-saddle residual, sup norm
    deltas: list = field(default_factory=list)


def _backup(game: TabularGame, values: np.ndarray):
    """One sweep: per-state matrix game over Q = r + gamma * P V."""
    S = game.n_states
    new_values = np.empty(S)
    rows = np.empty((S, game.n_actions1))
    cols = np.empty((S, game.n_actions2))
    for s in range(S):
        Q = game.reward[s] + game.discount * (game.transition[s] @ values)
        sol = matrix_game_solve(Q)
        new_values[s] = sol.value
        rows[s] = sol.row_strategy
        cols[s] = sol.col_strategy
    return new_values, rows, cols


def shapley_value_iteration(game: TabularGame, tol: float = 1e-10,
                            max_iter: int = 10 ** 6) -> ValueIterationResult:
    """Dynamic programming to the equilibrium value of the Markov game.

    Convergence is guaranteed by the discount contraction; exceeding the
    iteration cap indicates a bug and raises.
    """
    V = np.zeros(game.n_states)
    deltas = []
    for k in range(1, max_iter + 1):
        V_new, rows, cols = _backup(game, V)
        delta = float(np.max(np.abs(V_new - V)))
        deltas.append(delta)
        V = V_new
        if delta < tol:
            check, _, _ = _backup(game, V)
            return ValueIterationResult(
                values=V, row_strategies=rows, col_strategies=cols,
                iterations=k, residual=float(np.max(np.abs(check - V))),
                deltas=deltas,
            )
    raise RuntimeError(f"value iteration exceeded {max_iter} iterations")


def swap_players(game: TabularGame) -> TabularGame:
    """The same game from the adversary's seat: negated, transposed actions."""
    return TabularGame(
        reward=-np.swapaxes(game.reward, 1, 2),
        transition=np.swapaxes(game.transition, 1, 2),
        start_state=game.start_state,
        discount=game.discount,
    )


# ---------------------------------------------------------------------------
# Best responses and the equilibrium gap
# ---------------------------------------------------------------------------


def policy_pair_value(game: TabularGame, mu: np.ndarray, nu: np.ndarray) -> np.ndarray:
    """Exact discounted state values under fixed stochastic policies."""
    r = np.einsum("sa,sb,sab->s", mu, nu, game.reward)
    P = np.einsum("sa,sb,sabn->sn", mu, nu, game.transition)
    return np.linalg.solve(np.eye(game.n_states) - game.discount * P, r)


def _best_response_values(reward_sa: np.ndarray, trans_san: np.ndarray,
                          gamma: float, maximize: bool) -> np.ndarray:
    """Optimal values of a single-player MDP by policy iteration.

    An action only replaces the incumbent when it improves by more than a
    tiny margin, so floating-point ties cannot make the iteration dither.
    """
    S, A = reward_sa.shape
    sign = 1.0 if maximize else -1.0
    policy = np.argmax(sign * reward_sa, axis=1)
    for _ in range(10 * S * A + 20):
        r = reward_sa[np.arange(S), policy]
        P = trans_san[np.arange(S), policy]
        V = np.linalg.solve(np.eye(S) - gamma * P, r)
        Q = sign * (reward_sa + gamma * (trans_san @ V))
        best = np.argmax(Q, axis=1)
        improves = Q[np.arange(S), best] > Q[np.arange(S), policy] + 1e-12
        if not improves.any():
            return V
        policy = np.where(improves, best, policy)
    raise RuntimeError("policy iteration failed to converge")


def equilibrium_gap(game: TabularGame, mu: np.ndarray, nu: np.ndarray) -> float:
    """Max over players of best-response gain at the start state; 0 iff Nash."""
    v_pair = policy_pair_value(game, mu, nu)[game.start_state]
    r1 = np.einsum("sb,sab->sa", nu, game.reward)
    p1 = np.einsum("sb,sabn->san", nu, game.transition)
    v1_br = _best_response_values(r1, p1, game.discount, maximize=True)[game.start_state]
    r2 = np.einsum("sa,sab->sb", mu, game.reward)
    p2 = np.einsum("sa,sabn->sbn", mu, game.transition)
    v2_br = _best_response_values(r2, p2, game.discount, maximize=False)[game.start_state]
    return max(v1_br - v_pair, v_pair - v2_br)


# ---------------------------------------------------------------------------
# Conditional value at risk
# ---------------------------------------------------------------------------


def cvar(samples, alpha: float) -> RiskStats:
    """Empirical lower-tail CVaR: mean of samples at or below the
    alpha-quantile, with the quantile taken as order statistic
    ceil(alpha * N) (lower interpolation)."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cvar requires at least one sample")
    if not (0.0 < alpha < 1.0):
        raise ValueError("alpha must lie in (0, 1)")
    ordered = np.sort(x)
    k = int(np.ceil(alpha * x.size))
    quantile = float(ordered[k - 1])
    tail = ordered[ordered <= quantile]
    return RiskStats(alpha=alpha, quantile=quantile, cvar=float(tail.mean()))


# ---------------------------------------------------------------------------
# Plain-text game files
# ---------------------------------------------------------------------------
#
# Format (comments start with '#', blank lines ignored):
#   line 1: n_states n_actions1 n_actions2
#   line 2: discount start_state
#   then n_states * n_actions1 lines of n_actions2 rewards (state-major,
#   then protagonist action),
#   then n_states * n_actions1 * n_actions2 lines of n_states transition
#   probabilities, in (state, action1, action2) order.


def game_to_text(game: TabularGame) -> str:
    lines = [
        f"{game.n_states} {game.n_actions1} {game.n_actions2}",
        f"{game.discount!r} {game.start_state}",
    ]
    for s in range(game.n_states):
        for a1 in range(game.n_actions1):
            lines.append(" ".join(repr(float(v)) for v in game.reward[s, a1]))
    for s in range(game.n_states):
        for a1 in range(game.n_actions1):
            for a2 in range(game.n_actions2):
                lines.append(" ".join(repr(float(v)) for v in game.transition[s, a1, a2]))
    return "\n".join(lines) + "\n"


def game_from_text(text: str) -> TabularGame:
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if stripped:
            rows.append((lineno, stripped))
    if len(rows) < 2:
        raise GameFormatError(1, "missing header lines")

    def parse_floats(idx, expect):
        lineno, content = rows[idx]
        parts = content.split()
        if len(parts) != expect:
            raise GameFormatError(lineno, f"expected {expect} values, got {len(parts)}")
        try:
            return [float(p) for p in parts]
        except ValueError as exc:
            raise GameFormatError(lineno, str(exc)) from None

    lineno, header = rows[0]
    try:
        S, A1, A2 = (int(p) for p in header.split())
    except ValueError:
        raise GameFormatError(lineno, "header must be three integers") from None
    lineno, second = rows[1]
    parts = second.split()
    if len(parts) != 2:
        raise GameFormatError(lineno, "expected 'discount start_state'")
    discount, start_state = float(parts[0]), int(parts[1])

    need = 2 + S * A1 + S * A1 * A2
    if len(rows) != need:
        raise GameFormatError(rows[-1][0], f"expected {need} content lines, got {len(rows)}")
    reward = np.empty((S, A1, A2))
    idx = 2
    for s in range(S):
        for a1 in range(A1):
            reward[s, a1] = parse_floats(idx, A2)
            idx += 1
    transition = np.empty((S, A1, A2, S))
    for s in range(S):
        for a1 in range(A1):
            for a2 in range(A2):
                transition[s, a1, a2] = parse_floats(idx, S)
                idx += 1
    try:
        return TabularGame(reward=reward, transition=transition,
                           start_state=start_state, discount=discount)
    except ValueError as exc:
        raise GameFormatError(rows[-1][0], str(exc)) from None

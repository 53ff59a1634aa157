"""Average-reward MDP machinery: relative value iteration and exact policy
evaluation through the stationary distribution of the induced chain.

The solver is a plain synchronous relative value iteration with a damping
step ``V <- (1-tau)*Bellman(V) + tau*V`` (tau = 0.01) guarding against
periodic chains; damping changes neither the gain estimate nor the greedy
policy.  The gain is bracketed each sweep by the extremes of the Bellman
residual ``Bellman(V) - V``, so the reported span is a certified bound on the
gain error.  Identical inputs produce bit-identical results: iteration order
is fixed and argmax ties break toward the lowest action ordinal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as sparse_linalg

from .chain import MiningModel, ScalarModel
from .model import Action, Policy, state_at

DAMPING = 0.01
STATIONARY_TOL = 1e-12
DIRECT_SOLVE_LIMIT = 50_000


class SolverError(RuntimeError):
    """Raised when value iteration fails to reach the requested span."""

    def __init__(self, message: str, span: float, iterations: int):
        super().__init__(message)
        self.span = span
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class RviResult:
    """Raw solver output on an anonymous state grid."""

    actions: np.ndarray  # greedy action ordinal per state
    gain: float  # midpoint of the final Bellman-residual bracket
    iterations: int
    span: float  # final residual span; bounds the gain error
    values: np.ndarray  # final relative values (reference state pinned to 0)


@dataclass(frozen=True, eq=False)
class SolveResult:
    policy: Policy
    gain: float
    iterations: int
    span: float
    values: np.ndarray

    def to_json_dict(self) -> dict:
        return {
            "gain": self.gain,
            "iterations": self.iterations,
            "span": self.span,
            "policy": self.policy.to_json_dict(),
        }


def relative_value_iteration(
    feasible: np.ndarray,
    transition: tuple[sparse.csr_matrix, ...],
    rewards: np.ndarray,
    reference: int,
    eps: float,
    max_iters: int = 1_000_000,
    initial_values: np.ndarray | None = None,
    forced_actions: np.ndarray | None = None,
) -> RviResult:
    """Solve a finite average-reward MDP given per-action layers.

    ``feasible`` and ``rewards`` are (num_actions, n); ``transition`` holds
    one (n, n) row-stochastic matrix per action (rows of infeasible actions
    are ignored).  ``forced_actions`` pins the policy and turns the solve
    into fixed-policy evaluation.  Raises :class:`SolverError` instead of
    returning an unconverged result.
    """
    if eps <= 0:
        raise ValueError(f"solver tolerance must be positive (got {eps})")
    n_actions, n = rewards.shape
    values = (
        np.zeros(n) if initial_values is None else np.array(initial_values, dtype=float)
    )
    if forced_actions is not None:
        forced_actions = np.asarray(forced_actions)
        if len(forced_actions) != n:
            raise ValueError("forced policy length does not match the state count")
        bad = np.flatnonzero(~feasible[forced_actions, np.arange(n)])
        if len(bad):
            raise ValueError(
                f"forced policy assigns an infeasible action at state index {bad[0]}"
            )

    # Infeasible (action, state) pairs carry -inf reward so they never win
    # the max; every state keeps at least one feasible action.
    masked_rewards = np.where(feasible, rewards, -np.inf)
    q = np.empty((n_actions, n))
    arange_n = np.arange(n)
    span = np.inf
    for iteration in range(1, max_iters + 1):
        for action in range(n_actions):
            q[action] = masked_rewards[action] + transition[action].dot(values)
        if forced_actions is None:
            bellman = q.max(axis=0)
        else:
            bellman = q[forced_actions, arange_n]
        residual = bellman - values
        low, high = residual.min(), residual.max()
        span = high - low
        if span <= eps:
            gain = 0.5 * (low + high)
            if forced_actions is None:
                greedy = np.argmax(q, axis=0).astype(np.int8)
            else:
                greedy = np.asarray(forced_actions, dtype=np.int8)
            return RviResult(
                actions=greedy,
                gain=float(gain),
                iterations=iteration,
                span=float(span),
                values=values,
            )
        values = (1.0 - DAMPING) * bellman + DAMPING * values
        values -= values[reference]
    raise SolverError(
        f"no convergence after {max_iters} iterations (span {span:.3e} > {eps:.3e});"
        " periodicity or tolerance problem",
        span=float(span),
        iterations=max_iters,
    )


def solve_average_reward(
    scalar: ScalarModel,
    eps_solver: float,
    max_iters: int = 1_000_000,
    initial_values: np.ndarray | None = None,
    forced_policy: Policy | None = None,
) -> SolveResult:
    """Run relative value iteration on a scalarized mining model, anchored at
    the reference state (1,0,irrelevant)."""
    model = scalar.model
    forced = forced_policy.actions if forced_policy is not None else None
    raw = relative_value_iteration(
        model.feasible,
        model.transition,
        scalar.rewards,
        reference=model.reference_index,
        eps=eps_solver,
        max_iters=max_iters,
        initial_values=initial_values,
        forced_actions=forced,
    )
    policy = Policy(
        T=model.T,
        actions=raw.actions,
        alpha=model.params.alpha,
        gamma=model.params.gamma,
        variant=model.params.variant,
    )
    return SolveResult(
        policy=policy,
        gain=raw.gain,
        iterations=raw.iterations,
        span=raw.span,
        values=raw.values,
    )


def reachable_mask(model: MiningModel, policy: Policy | None = None) -> np.ndarray:
    """Forward closure from the initial states, following either the policy's
    actions or every feasible action."""
    n = model.n
    seen = np.zeros(n, dtype=bool)
    frontier = list(np.flatnonzero(model.initial > 0.0))
    for idx in frontier:
        seen[idx] = True
    while frontier:
        nxt: set[int] = set()
        for idx in frontier:
            if policy is not None:
                actions = [Action(policy.actions[idx])]
            else:
                actions = model.feasible_at(idx)
            for action in actions:
                row = model.transition[action]
                targets = row.indices[row.indptr[idx] : row.indptr[idx + 1]]
                for target in targets:
                    if not seen[target]:
                        seen[target] = True
                        nxt.add(int(target))
        frontier = list(nxt)
    return seen


def stationary_distribution(P: sparse.csr_matrix) -> np.ndarray:
    """Stationary distribution of an irreducible chain.

    Direct sparse solve up to :data:`DIRECT_SOLVE_LIMIT` states (one state's
    probability grounded to remove the rank deficiency, keeping the system
    fully sparse), power iteration above it.
    """
    n = P.shape[0]
    if n == 1:
        return np.ones(1)
    if n <= DIRECT_SOLVE_LIMIT:
        Q = (P.T - sparse.identity(n, format="csr")).tocsc()
        keep = np.arange(1, n)
        rhs = -np.asarray(Q[keep, 0].todense()).ravel()
        reduced = Q[keep][:, keep].tocsr()
        tail = sparse_linalg.spsolve(reduced, rhs)
        pi = np.empty(n)
        pi[0] = 1.0
        pi[1:] = tail
        pi = np.maximum(pi, 0.0)
        return pi / pi.sum()
    pi = np.full(n, 1.0 / n)
    PT = P.T.tocsr()
    for _ in range(10_000_000):
        nxt = PT.dot(pi)
        nxt /= nxt.sum()
        if np.abs(nxt - pi).max() <= STATIONARY_TOL:
            return nxt
        pi = nxt
    raise SolverError("power iteration did not converge", span=np.nan, iterations=0)


@dataclass(frozen=True)
class PolicyValue:
    """Long-run accepted-block rates and the attacker's revenue share."""

    attacker_rate: float
    honest_rate: float
    rev: float
    reachable_count: int


def evaluate_policy_exact(model: MiningModel, policy: Policy) -> PolicyValue:
    """Exact relative revenue of a policy via the stationary distribution of
    the chain it induces.

    Only defined on models whose rewards are block pairs (base and
    under-paying truncations); over-paying compensation has no block
    decomposition and cannot be evaluated this way.  The policy must assign a
    feasible action to every reachable state.
    """
    if policy.T != model.T:
        raise ValueError(
            f"policy truncation {policy.T} does not match model truncation {model.T}"
        )
    reachable = reachable_mask(model, policy)
    idxs = np.flatnonzero(reachable)
    for idx in idxs:
        action = policy.actions[idx]
        if not model.feasible[action, idx]:
            state = state_at(int(idx), model.T)
            raise ValueError(
                f"policy assigns infeasible action"
                f" {Action(action).name.lower()} at reachable state {state}"
            )

    order = {int(idx): pos for pos, idx in enumerate(idxs)}
    rows, cols, probs = [], [], []
    for pos, idx in enumerate(idxs):
        action = policy.actions[idx]
        row = model.transition[action]
        start, stop = row.indptr[idx], row.indptr[idx + 1]
        for target, prob in zip(row.indices[start:stop], row.data[start:stop]):
            rows.append(pos)
            cols.append(order[int(target)])
            probs.append(prob)
    P = sparse.coo_matrix((probs, (rows, cols)), shape=(len(idxs), len(idxs))).tocsr()
    pi = stationary_distribution(P)

    chosen = policy.actions[idxs]
    attacker = float(np.dot(pi, model.exp_attacker[chosen, idxs]))
    honest = float(np.dot(pi, model.exp_honest[chosen, idxs]))
    total = attacker + honest
    if total <= 0.0:
        raise ValueError("degenerate policy: zero long-run block rate")
    return PolicyValue(
        attacker_rate=attacker,
        honest_rate=honest,
        rev=attacker / total,
        reachable_count=int(len(idxs)),
    )


@dataclass(frozen=True)
class ModelCheck:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ModelDiagnostics:
    checks: tuple[ModelCheck, ...]

    @property
    def ok(self) -> bool:
        return all(check.passed for check in self.checks)

    def to_json_dict(self) -> dict:
        return {
            "ok": self.ok,
            "checks": [
                {"name": c.name, "passed": c.passed, "detail": c.detail}
                for c in self.checks
            ],
        }


def validate_model(model: MiningModel) -> ModelDiagnostics:
    """Machine-readable consistency report for a built model: row
    normalization, reward-sign rules, boundary restriction, reachability."""
    from .chain import transitions  # local import avoids a cycle

    checks: list[ModelCheck] = []

    bad_rows = []
    for action in Action:
        P = model.transition[action]
        sums = np.asarray(P.sum(axis=1)).ravel()
        offenders = np.flatnonzero(model.feasible[action] & (np.abs(sums - 1.0) > 1e-12))
        bad_rows.extend(
            (state_at(int(i), model.T), action.name.lower()) for i in offenders[:3]
        )
    checks.append(
        ModelCheck(
            "row-normalization",
            not bad_rows,
            "all feasible rows sum to 1" if not bad_rows else f"bad rows: {bad_rows}",
        )
    )

    sign_bad: list[str] = []
    for idx in range(model.n):
        state = state_at(idx, model.T)
        for action in model.feasible_at(idx):
            for prob, nxt, reward in transitions(state, action, model.params):
                if prob <= 0:
                    continue
                if reward.attacker < 0 or reward.honest < 0:
                    sign_bad.append(f"negative reward at {state} {action.name}")
                if reward.attacker > 0:
                    is_override = action is Action.OVERRIDE and reward.attacker == state.h + 1
                    is_race_win = (
                        action in (Action.MATCH, Action.WAIT)
                        and reward.attacker == state.h
                        and nxt.h == 1
                    )
                    if not (is_override or is_race_win):
                        sign_bad.append(
                            f"attacker reward outside override/race-win at {state}"
                        )
                if reward.honest > 0 and not (
                    action is Action.ADOPT and reward.honest == state.h
                ):
                    sign_bad.append(f"honest reward outside adopt at {state}")
    checks.append(
        ModelCheck(
            "reward-signs",
            not sign_bad,
            "reward placement consistent" if not sign_bad else "; ".join(sign_bad[:3]),
        )
    )

    boundary_bad = []
    for idx in np.flatnonzero(model.boundary):
        actions = model.feasible_at(int(idx))
        if actions != [Action.ADOPT]:
            boundary_bad.append(state_at(int(idx), model.T))
    checks.append(
        ModelCheck(
            "boundary-restriction",
            not boundary_bad,
            "boundary states are terminal-adopt only"
            if not boundary_bad
            else f"non-terminal boundary states: {boundary_bad[:3]}",
        )
    )

    reachable = reachable_mask(model)
    count = int(reachable.sum())
    checks.append(
        ModelCheck(
            "reachability",
            count >= 2,
            f"{count} states reachable from the initial distribution",
        )
    )

    in_grid = all(model.transition[a].shape == (model.n, model.n) for a in Action)
    checks.append(
        ModelCheck(
            "grid-closure",
            in_grid,
            "all transitions stay on the grid" if in_grid else "matrix shape mismatch",
        )
    )

    return ModelDiagnostics(checks=tuple(checks))

"""Shared test oracles, kept independent of the code paths they check."""

from __future__ import annotations

from fractions import Fraction

from selfish_mining.chain import transitions
from selfish_mining.model import (
    Action,
    ChainState,
    Fork,
    MiningParams,
    enumerate_states,
)

ACCEPTANCE_LINES: list[str] = []


def record_criterion(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def overpaying_reward_exact(
    a: int, h: int, rho: Fraction, alpha: Fraction, full_scope: bool = False
) -> Fraction:
    """Re-derive the boundary compensation with exact rational arithmetic."""
    peak = alpha * (1 - alpha) / (1 - 2 * alpha) ** 2
    if a >= h:
        drift = Fraction(1, 2) * (Fraction(a - h) / (1 - 2 * alpha) + a + h)
        if full_scope:
            return (1 - rho) * (peak + drift)
        return (1 - rho) * peak + drift
    catchup = (alpha / (1 - alpha)) ** (h - a)
    return (1 - catchup) * (-rho * h) + catchup * (1 - rho) * (
        peak + Fraction(h - a) / (1 - 2 * alpha)
    )


def sm1_reference_revenue(alpha: float, gamma: float) -> float:
    """Closed-form long-run revenue of the one-block-withholding strategy,
    from its renewal structure (independent of the stationary-solve path)."""
    numerator = alpha * (1 - alpha) ** 2 * (4 * alpha + gamma * (1 - 2 * alpha)) - (
        alpha**3
    )
    denominator = 1 - alpha * (1 + (2 - alpha) * alpha)
    return numerator / denominator


def forward_closure(rule, params: MiningParams, T: int) -> set[ChainState]:
    """Brute-force reachable set of a per-state action rule, walking the raw
    transition generator from the two start states.  Boundary states adopt."""
    start = [ChainState(1, 0, Fork.IRRELEVANT), ChainState(0, 1, Fork.IRRELEVANT)]
    seen = set(start)
    frontier = list(start)
    while frontier:
        state = frontier.pop()
        action = Action.ADOPT if max(state.a, state.h) == T else rule(state)
        for prob, nxt, _reward in transitions(state, action, params):
            if prob > 0 and nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return seen


def forward_closure_all_actions(
    params: MiningParams, T: int, feasible_fn
) -> set[ChainState]:
    """Reachable set when every feasible action may be taken."""
    start = [ChainState(1, 0, Fork.IRRELEVANT), ChainState(0, 1, Fork.IRRELEVANT)]
    seen = set(start)
    frontier = list(start)
    while frontier:
        state = frontier.pop()
        if max(state.a, state.h) == T:
            actions = [Action.ADOPT]
        else:
            actions = feasible_fn(state, params)
        for action in actions:
            for prob, nxt, _reward in transitions(state, action, params):
                if prob > 0 and nxt not in seen:
                    seen.add(nxt)
                    frontier.append(nxt)
    return seen


def grid_states(T: int) -> list[ChainState]:
    return enumerate_states(T)

"""Builders that turn the block-race rules into solvable models.

A single transition generator, :func:`transitions`, is the source of truth
for both the matrix builders here and the Monte Carlo simulator; tests fail
if the two ever diverge.

The built model keeps two-component block rewards untransformed.  The scalar
reward used by the average-reward solver, ``(1-rho)*attacker - rho*honest``,
is applied lazily by :func:`build_truncated`, so one built model serves every
rho probed by the optimizer's binary search.  Truncation-boundary states
(max(a,h) = T) carry a single terminal action with adopt's transition
distribution; its scalar reward depends on the boundary mode:

* under-paying: the plain adopt reward, worth ``-rho*h`` after scalarization
  (a pessimistic cut-off, lower-bounding the untruncated value), or
* over-paying: a closed-form compensation at least as large as anything the
  attacker could still have extracted from that state, upper-bounding the
  untruncated value.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import NamedTuple

import numpy as np
from scipy import sparse

from .model import (
    Action,
    ChainState,
    Fork,
    MiningParams,
    RewardPair,
    enumerate_states,
    feasible_actions,
    initial_states,
    num_states,
    state_index,
)


class TransitionEntry(NamedTuple):
    probability: float
    next_state: ChainState
    reward: RewardPair


class BoundaryMode(Enum):
    UNDER_PAYING = "under"
    OVER_PAYING = "over"


class ThresholdVariant(Enum):
    """Which half of honest mining to disable when certifying thresholds."""

    OVERRIDE_DISABLED_AT_1_0 = "override-disabled-at-1-0"
    ADOPT_DISABLED_AT_0_1 = "adopt-disabled-at-0-1"


def transitions(
    state: ChainState, action: Action, params: MiningParams
) -> tuple[TransitionEntry, ...]:
    """Raw transition entries for one state-action pair.

    Entries come in a fixed branch order -- attacker block first, then the
    honest-block branches (race-won before race-lost where a race applies) --
    and zero-probability race branches are kept, so positional semantics stay
    stable for the simulator.  Matrix builders drop zero entries.
    """
    alpha = params.alpha
    a, h = state.a, state.h

    if action is Action.ADOPT:
        reward = RewardPair(0, h)
        return (
            TransitionEntry(alpha, ChainState(1, 0, Fork.IRRELEVANT), reward),
            TransitionEntry(1 - alpha, ChainState(0, 1, Fork.IRRELEVANT), reward),
        )

    if action is Action.OVERRIDE:
        if a <= h:
            raise ValueError(f"override infeasible at {state}")
        reward = RewardPair(h + 1, 0)
        return (
            TransitionEntry(alpha, ChainState(a - h, 0, Fork.IRRELEVANT), reward),
            TransitionEntry(
                1 - alpha, ChainState(a - h - 1, 1, Fork.RELEVANT), reward
            ),
        )

    race = action is Action.MATCH or (
        action is Action.WAIT and state.fork is Fork.ACTIVE and a >= h
    )
    if race:
        if action is Action.MATCH and a < h:
            raise ValueError(f"match infeasible at {state}")
        win = params.race_win_prob
        return (
            TransitionEntry(
                alpha, ChainState(a + 1, h, Fork.ACTIVE), RewardPair(0, 0)
            ),
            TransitionEntry(
                win * (1 - alpha),
                ChainState(a - h, 1, Fork.RELEVANT),
                RewardPair(h, 0),
            ),
            TransitionEntry(
                (1 - win) * (1 - alpha),
                ChainState(a, h + 1, Fork.RELEVANT),
                RewardPair(0, 0),
            ),
        )

    if action is Action.WAIT:
        # Plain private mining.  Also used for the inconsistent (and
        # unreachable) active-fork states with a < h, where no published
        # attacker chain exists to race.
        return (
            TransitionEntry(
                alpha, ChainState(a + 1, h, Fork.IRRELEVANT), RewardPair(0, 0)
            ),
            TransitionEntry(
                1 - alpha, ChainState(a, h + 1, Fork.RELEVANT), RewardPair(0, 0)
            ),
        )

    raise ValueError(f"unknown action {action!r}")


@dataclass(frozen=True, eq=False)
class MiningModel:
    """Enumerated truncated decision process with per-action sparse
    transition matrices and per-(action, state) expected block rewards."""

    params: MiningParams
    T: int
    feasible: np.ndarray  # (num actions, n) bool
    transition: tuple[sparse.csr_matrix, ...]  # one (n, n) matrix per action
    exp_attacker: np.ndarray  # (num actions, n) expected attacker blocks
    exp_honest: np.ndarray  # (num actions, n) expected honest blocks
    initial: np.ndarray  # (n,) initial distribution
    boundary: np.ndarray  # (n,) bool, truncation-boundary states
    disabled: ThresholdVariant | None = None

    @property
    def n(self) -> int:
        return len(self.initial)

    @property
    def reference_index(self) -> int:
        """Anchor state for relative value iteration: (1,0,irrelevant)."""
        return initial_states(self.T)[0]

    def feasible_at(self, index: int) -> list[Action]:
        return [action for action in Action if self.feasible[action, index]]


def _disabled_pairs(variant: ThresholdVariant) -> tuple[int, int, Action]:
    if variant is ThresholdVariant.OVERRIDE_DISABLED_AT_1_0:
        return 1, 0, Action.OVERRIDE
    return 0, 1, Action.ADOPT


def build_base_model(params: MiningParams, T: int) -> MiningModel:
    """Realize the transition rules on the {0..T}^2 grid.

    Interior states get every feasible action; boundary states keep a single
    terminal action with adopt's transition distribution and adopt's reward
    (the boundary mode of :func:`build_truncated` decides its scalar value).
    """
    n = num_states(T)
    states = enumerate_states(T)
    n_actions = len(Action)

    feasible = np.zeros((n_actions, n), dtype=bool)
    exp_attacker = np.zeros((n_actions, n))
    exp_honest = np.zeros((n_actions, n))
    rows: list[list[int]] = [[] for _ in range(n_actions)]
    cols: list[list[int]] = [[] for _ in range(n_actions)]
    probs: list[list[float]] = [[] for _ in range(n_actions)]

    for idx, state in enumerate(states):
        if max(state.a, state.h) == T:
            actions = [Action.ADOPT]
        else:
            actions = sorted(feasible_actions(state, params))
        for action in actions:
            feasible[action, idx] = True
            ea = eh = 0.0
            for prob, nxt, reward in transitions(state, action, params):
                if prob <= 0.0:
                    continue
                rows[action].append(idx)
                cols[action].append(state_index(nxt, T))
                probs[action].append(prob)
                ea += prob * reward.attacker
                eh += prob * reward.honest
            exp_attacker[action, idx] = ea
            exp_honest[action, idx] = eh

    matrices = tuple(
        sparse.coo_matrix(
            (probs[action], (rows[action], cols[action])), shape=(n, n)
        ).tocsr()
        for action in Action
    )

    initial = np.zeros(n)
    first, second = initial_states(T)
    initial[first] = params.alpha
    initial[second] = 1 - params.alpha

    boundary = np.zeros(n, dtype=bool)
    for idx, state in enumerate(states):
        boundary[idx] = max(state.a, state.h) == T

    return MiningModel(
        params=params,
        T=T,
        feasible=feasible,
        transition=matrices,
        exp_attacker=exp_attacker,
        exp_honest=exp_honest,
        initial=initial,
        boundary=boundary,
    )


def build_honest_disabled(
    params: MiningParams, T: int, variant: ThresholdVariant
) -> MiningModel:
    """Base model with one half of honest mining removed: override at (1,0)
    or adopt at (0,1), across all fork labels.  Wait remains feasible there,
    so the model stays well formed."""
    if T < 2:
        raise ValueError("honest-disabled models need T >= 2")
    model = build_base_model(params, T)
    a, h, action = _disabled_pairs(variant)
    feasible = model.feasible.copy()
    for fork in Fork:
        feasible[action, state_index(ChainState(a, h, fork), T)] = False
    return replace(model, feasible=feasible, disabled=variant)


def overpaying_terminal_reward(
    a: int, h: int, rho: float, alpha: float, full_scope: bool = False
) -> float:
    """Scalar compensation granted at a truncation-boundary state of the
    over-paying process.

    On the attacker side (a = T >= h) the reward bounds what the attacker
    could still win by racing at the last moment its branch is at least as
    long as the honest one; on the honest side (h = T >= a) it mixes the cost
    of an immediate adopt with the (geometrically unlikely) value of catching
    up to the diagonal first.

    ``full_scope`` multiplies the whole attacker-side expectation by
    ``(1 - rho)`` instead of only its first term.  The default reproduces the
    formula the reference upper bounds were computed with; the alternative is
    the tighter bound suggested by its derivation.  Both over-pay, so either
    way the result upper-bounds the untruncated value.
    """
    if alpha >= 0.5:
        raise ValueError("over-paying rewards require alpha < 0.5")
    expected_peak = alpha * (1 - alpha) / (1 - 2 * alpha) ** 2
    if a >= h:
        drift_term = 0.5 * ((a - h) / (1 - 2 * alpha) + a + h)
        if full_scope:
            return (1 - rho) * (expected_peak + drift_term)
        return (1 - rho) * expected_peak + drift_term
    catchup = (alpha / (1 - alpha)) ** (h - a)
    return (1 - catchup) * (-rho * h) + catchup * (1 - rho) * (
        expected_peak + (h - a) / (1 - 2 * alpha)
    )


@dataclass(frozen=True, eq=False)
class ScalarModel:
    """A mining model with the ratio objective scalarized at a fixed rho.

    ``rewards[action, state]`` is the expected scalar reward
    ``(1-rho)*attacker - rho*honest`` of taking the action there, except at
    over-paying boundary states where it is the terminal compensation.
    """

    model: MiningModel
    rho: float
    mode: BoundaryMode
    rewards: np.ndarray  # (num actions, n)

    @property
    def n(self) -> int:
        return self.model.n


def build_truncated(
    model: MiningModel,
    mode: BoundaryMode,
    rho: float,
    full_scope_compensation: bool = False,
) -> ScalarModel:
    """Scalarize a built model at ``rho`` under the given boundary mode."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must be in [0, 1] (got {rho})")
    rewards = model.exp_attacker - rho * (model.exp_attacker + model.exp_honest)
    if mode is BoundaryMode.OVER_PAYING:
        alpha = model.params.alpha
        T = model.T
        for idx in np.flatnonzero(model.boundary):
            rest = idx // 3
            a, h = rest // (T + 1), rest % (T + 1)
            rewards[Action.ADOPT, idx] = overpaying_terminal_reward(
                a, h, rho, alpha, full_scope=full_scope_compensation
            )
    return ScalarModel(model=model, rho=rho, mode=mode, rewards=rewards)


def dump_model(model: MiningModel) -> str:
    """Per-row text dump, one line per (state, action), for golden-file
    diffing: ``a,h,fork | action -> [p:next:rA,rH] ...``."""
    lines = []
    for idx, state in enumerate(enumerate_states(model.T)):
        for action in model.feasible_at(idx):
            entries = [
                f"{prob:.12g}:({nxt.a},{nxt.h},{nxt.fork.name.lower()})"
                f":{reward.attacker},{reward.honest}"
                for prob, nxt, reward in transitions(state, action, model.params)
                if prob > 0.0
            ]
            lines.append(
                f"{state.a},{state.h},{state.fork.name.lower()}"
                f" | {action.name.lower()} -> [{' '.join(entries)}]"
            )
    return "\n".join(lines) + "\n"

"""Text rendering of policies as action grids.

Rows index the attacker's branch length, columns the honest branch length;
each cell holds three characters for the irrelevant/relevant/active fork
labels, drawn from a (adopt), o (override), m (match), w (wait), with '*'
marking states the policy never visits (forward closure from the two start
states under the policy itself).
"""

from __future__ import annotations

from .chain import MiningModel, build_base_model
from .mdp import reachable_mask
from .model import Action, ChainState, Fork, MiningParams, Policy, state_index

ACTION_CHARS = {
    Action.ADOPT: "a",
    Action.OVERRIDE: "o",
    Action.MATCH: "m",
    Action.WAIT: "w",
}
UNREACHABLE_CHAR = "*"


def _model_for(policy: Policy, model: MiningModel | None) -> MiningModel:
    if model is not None:
        if model.T != policy.T:
            raise ValueError("model truncation does not match the policy")
        return model
    if policy.alpha is None or policy.gamma is None:
        raise ValueError(
            "policy carries no parameters; pass the model it was solved on"
        )
    params = MiningParams(
        policy.alpha, policy.gamma, policy.variant or "standard"
    )
    return build_base_model(params, policy.T)


def render_policy_grid(
    policy: Policy, model: MiningModel | None = None, t_view: int = 8
) -> list[list[str]]:
    """Grid of three-character cells, ``grid[a][h]``, for a,h <= t_view."""
    model = _model_for(policy, model)
    if t_view > policy.T:
        raise ValueError(f"t_view {t_view} exceeds the policy truncation {policy.T}")
    reachable = reachable_mask(model, policy)
    grid = []
    for a in range(t_view + 1):
        row = []
        for h in range(t_view + 1):
            cell = ""
            for fork in Fork:
                idx = state_index(ChainState(a, h, fork), policy.T)
                if reachable[idx]:
                    cell += ACTION_CHARS[Action(policy.actions[idx])]
                else:
                    cell += UNREACHABLE_CHAR
            row.append(cell)
        grid.append(row)
    return grid


def render_policy_text(
    policy: Policy, model: MiningModel | None = None, t_view: int = 8
) -> str:
    """Fixed-width table of :func:`render_policy_grid` with a/h axis labels."""
    grid = render_policy_grid(policy, model, t_view)
    width = 3
    header = "a\\h | " + " ".join(f"{h:>{width}}" for h in range(t_view + 1))
    rule = "-" * len(header)
    lines = [header, rule]
    for a, row in enumerate(grid):
        lines.append(f"{a:>3} | " + " ".join(f"{cell:>{width}}" for cell in row))
    return "\n".join(lines) + "\n"

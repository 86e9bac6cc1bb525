"""Adaptive utility assignment: per-tile minimum slots, feasibility, bound tuning.

The per-tile minimum is a recursion over users sorted by link rate.  State
(i, l) is the cheapest way to satisfy the lower bounds of users 1..i given
that level l is still owed to users above i (who can receive any rate up to
their own).  The pending requirement is merged with user i's own bound as
H = max(l, L_i); transmitting exactly level H at rate r_i is optimal among
the "transmit now" choices because tile sizes are strictly increasing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Sequence

from .model import ContractError, SlotBudget, TileLadder, UserRequest, slot_cost

INFEASIBLE = math.inf


class InfeasibleAtMinimum(Exception):
    """Even the all-ones lower-bound vector does not fit the slot budget."""


@dataclass(frozen=True)
class LowerBoundVector:
    """Per-user guaranteed resolution levels."""

    bounds: dict  # user_id -> L_i

    def get(self, user_id: int) -> int:
        return self.bounds[user_id]

    def apply(self, requests: Sequence[UserRequest]):
        """Return requests with guaranteed levels replaced by this vector."""
        from dataclasses import replace

        return [replace(r, guaranteed_level=self.bounds[r.user_id]) for r in requests]


def _validate(requests: Sequence[UserRequest], bounds: LowerBoundVector) -> None:
    for r in requests:
        l = bounds.get(r.user_id)
        if not 1 <= l <= r.requested_level:
            raise ContractError(f"user {r.user_id}: bound {l} outside 1..{r.requested_level}")


def min_slots_tile(
    tile: TileLadder,
    users: Sequence[UserRequest],
    bounds: LowerBoundVector,
    slot: SlotBudget,
):
    """Minimum slots to satisfy every interested user's lower bound on ``tile``.

    Returns an int, or INFEASIBLE when no transmission set works (which for a
    single tile only happens with no users to carry a pending level, i.e.
    never here since every user may transmit; kept for contract symmetry).
    """
    _validate(users, bounds)
    ordered = sorted(users, key=lambda r: (r.link_rate, r.user_id))
    max_level = tile.levels
    # prev[l] = R_g(i-1, l); base case i = 0
    prev = [0] + [INFEASIBLE] * max_level
    for req in ordered:
        lb = bounds.get(req.user_id)
        if tile.tile_id not in req.roi:
            continue  # R_g(i, l) = R_g(i-1, l)
        cur = []
        for l in range(max_level + 1):
            h = max(l, lb)
            defer = prev[h]
            send = prev[0] + slot_cost(tile.size(h), req.link_rate, slot)
            cur.append(min(defer, send))
        prev = cur
    return prev[0] if prev[0] != INFEASIBLE else INFEASIBLE


def is_feasible(
    tiles: Sequence[TileLadder],
    users: Sequence[UserRequest],
    bounds: LowerBoundVector,
    budget: SlotBudget,
) -> bool:
    """True iff the summed per-tile minima fit in the per-frame budget."""
    total = 0
    for tile in tiles:
        r = min_slots_tile(tile, users, bounds, budget)
        if r == INFEASIBLE:
            return False
        total += r
        if total > budget.slots_per_frame:
            return False
    return total <= budget.slots_per_frame


def adapt_lower_bounds(
    tiles: Sequence[TileLadder],
    users: Sequence[UserRequest],
    budget: SlotBudget,
) -> LowerBoundVector:
    """Uniformly decrement all lower bounds from L_i = R_i until feasible.

    Raises InfeasibleAtMinimum when even L_i = 1 for every user does not fit;
    the caller decides what to degrade in that case.
    """
    current = {r.user_id: r.requested_level for r in users}
    while True:
        vec = LowerBoundVector(dict(current))
        if is_feasible(tiles, users, vec, budget):
            return vec
        if all(l == 1 for l in current.values()):
            raise InfeasibleAtMinimum(
                f"lower bounds of 1 need more than {budget.slots_per_frame} slots"
            )
        current = {uid: max(1, l - 1) for uid, l in current.items()}

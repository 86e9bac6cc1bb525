"""Comparison allocators: adaptive unicast, adaptive multicast, epsilon-approximation.

The two adaptive schemes guarantee resolution level 1 to every interested
user, then spend leftover slots on upgrades; they ignore adapted lower
bounds, so their objectives are measured with level-1 semantics.  The
approximation scheme mirrors the optimal recursion with the roles of slots
and (quantized) utility swapped: it computes the minimum slots needed per
utility target and picks the highest target that fits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence

import numpy as np

from .model import (
    NEG_INF,
    ContractError,
    InfeasibleError,
    PlanEntry,
    SlotBudget,
    TileLadder,
    TransmissionPlan,
    UserRequest,
    Utility,
    _exact,
    is_neg_inf,
    slot_cost,
    utility,
)
from .scheduler import AllocationResult, _Instance, evaluate_plan

_INT_INF = 1 << 50
_INT_TOO_BIG = 1 << 49


def _level1_requests(requests: Sequence[UserRequest]) -> List[UserRequest]:
    return [replace(r, guaranteed_level=1) for r in requests]


def _result(tiles, requests, entries) -> AllocationResult:
    plan = TransmissionPlan(entries=tuple(entries))
    objective, per_user, per_tile = evaluate_plan(tiles, _level1_requests(requests), plan)
    return AllocationResult(objective, plan, per_user, per_tile)


def adaptive_unicast(
    tiles: Sequence[TileLadder],
    requests: Sequence[UserRequest],
    T: int,
    slot: SlotBudget,
) -> AllocationResult:
    """Unicast every RoI tile at level 1 per user, then upgrade user by user.

    Raises InfeasibleError when the level-1 reservations alone overflow T.
    An upgrade replaces all of one user's tiles with that user's requested
    level, and is applied only when the whole replacement fits.
    """
    ladders = {t.tile_id: t for t in tiles}
    levels: Dict[int, int] = {}  # user_id -> level currently assigned
    total = 0
    for r in requests:
        levels[r.user_id] = 1
        for g in sorted(r.roi):
            total += slot_cost(ladders[g].size(1), r.link_rate, slot)
    if total > T:
        raise InfeasibleError(
            f"unicast level-1 reservations need {total} slots, budget is {T}"
        )
    remaining = T - total
    for r in sorted(requests, key=lambda r: r.user_id):
        if r.requested_level == 1:
            continue
        delta = sum(
            slot_cost(ladders[g].size(r.requested_level), r.link_rate, slot)
            - slot_cost(ladders[g].size(1), r.link_rate, slot)
            for g in r.roi
        )
        if delta <= remaining:
            levels[r.user_id] = r.requested_level
            remaining -= delta
    entries = []
    for r in sorted(requests, key=lambda r: r.user_id):
        lvl = levels[r.user_id]
        for g in sorted(r.roi):
            entries.append(
                PlanEntry(
                    tile_id=g,
                    level=lvl,
                    link_rate=r.link_rate,
                    slot_cost=slot_cost(ladders[g].size(lvl), r.link_rate, slot),
                    target_user=r.user_id,
                )
            )
    return _result(tiles, requests, entries)


def adaptive_multicast(
    tiles: Sequence[TileLadder],
    requests: Sequence[UserRequest],
    T: int,
    slot: SlotBudget,
) -> AllocationResult:
    """One multicast per requested tile at the slowest interested rate.

    Level 1 first for every tile; leftover slots upgrade tiles to the highest
    requested level among their interested users, most popular tile first.
    """
    ladders = {t.tile_id: t for t in tiles}
    interested: Dict[int, List[UserRequest]] = {}
    for r in requests:
        for g in r.roi:
            interested.setdefault(g, []).append(r)
    tile_rate = {g: min(r.link_rate for r in users) for g, users in interested.items()}
    levels = {g: 1 for g in interested}
    total = sum(slot_cost(ladders[g].size(1), tile_rate[g], slot) for g in interested)
    if total > T:
        raise InfeasibleError(
            f"multicast level-1 reservations need {total} slots, budget is {T}"
        )
    remaining = T - total
    order = sorted(interested, key=lambda g: (-len(interested[g]), g))
    for g in order:
        target = max(r.requested_level for r in interested[g])
        if target == 1:
            continue
        delta = slot_cost(ladders[g].size(target), tile_rate[g], slot) - slot_cost(
            ladders[g].size(1), tile_rate[g], slot
        )
        if delta <= remaining:
            levels[g] = target
            remaining -= delta
    entries = [
        PlanEntry(
            tile_id=g,
            level=levels[g],
            link_rate=tile_rate[g],
            slot_cost=slot_cost(ladders[g].size(levels[g]), tile_rate[g], slot),
        )
        for g in sorted(interested)
    ]
    return _result(tiles, requests, entries)


@dataclass(frozen=True)
class ApproximationConfig:
    epsilon: float = 0.2

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ContractError("epsilon must be in (0, 1)")


def approximation_allocate(
    tiles: Sequence[TileLadder],
    users,
    T: int,
    slot: SlotBudget,
    cfg: ApproximationConfig = ApproximationConfig(),
) -> AllocationResult:
    """Dual DP: minimum slots per quantized-utility target, highest target <= T.

    Utilities are floored to multiples of delta = epsilon * (mean per-(tile,
    user) maximum utility), so the state space over utility units stays small;
    the returned objective re-evaluates the plan with exact utilities.
    """
    inst = _Instance(tiles, users, slot)
    n, M, Ng = inst.n, inst.M, len(inst.tiles)

    maxima = []
    for g in range(Ng):
        for i in range(1, n + 1):
            ws = [w for w in inst.weights[g][i] if w is not None]
            if ws:
                maxima.append(max(ws))
    if not maxima:
        plan = TransmissionPlan(entries=())
        objective, per_user, per_tile = evaluate_plan(tiles, users, plan)
        return AllocationResult(objective, plan, per_user, per_tile)
    delta = _exact(cfg.epsilon) * (sum(maxima) / len(maxima))

    # quantized units per (tile, user, level); prefix sums over the user axis
    q =[[[0] * (M + 1) for _ in range(n + 1)] for _ in range(Ng)]
    for g in range(Ng):
        for i in range(1, n + 1):
            for m in range(1, M + 1):
                w = inst.weights[g][i][m]
                q[g][i][m] = int(w / delta) if w is not None else 0
    prefix = [[[0] * (n + 1) for _ in range(M + 1)] for _ in range(Ng)]
    for g in range(Ng):
        for m in range(1, M + 1):
            acc = 0
            for i in range(1, n + 1):
                acc += q[g][i][m]
                prefix[g][m][i] = acc
    u_max = sum(
        max((q[g][i][m] for m in range(1, M + 1)), default=0)
        for g in range(Ng)
        for i in range(1, n + 1)
    )
    Up1 = u_max + 1

    inf_vec = np.full(Up1, _INT_INF, np.int64)
    carry = inf_vec.copy()
    carry[0] = 0
    journals = []
    for g in range(Ng):
        layers = [[carry] * (M + 1)]
        jt = {}
        for i in range(1, n + 1):
            if not inst.interested[g][i]:
                layers.append(layers[i - 1])
                continue
            row = [inf_vec]
            for m in range(1, M + 1):
                best = row[m - 1].copy()
                choice = np.full(Up1, -1, np.int8)
                for ip in range(inst.ipmin[g][m][i], i + 1):
                    c = inst.cost[g][m][ip]
                    if c > T:
                        continue
                    gain = prefix[g][m][i] - prefix[g][m][ip - 1]
                    src = layers[ip - 1][m - 1]
                    shifted = np.empty(Up1, np.int64)
                    k = min(gain, Up1)
                    shifted[:k] = src[0]
                    if k < Up1:
                        shifted[k:] = src[: Up1 - k]
                    cand = shifted + c
                    mask = cand < best
                    best[mask] = cand[mask]
                    choice[mask] = ip
                np.copyto(best, _INT_INF, where=best >= _INT_TOO_BIG)
                row.append(best)
                jt[(i, m)] = choice
            layers.append(row)
        carry = layers[n][M]
        journals.append(jt)

    achievable = np.nonzero(carry <= T)[0]
    if achievable.size == 0:
        return AllocationResult(NEG_INF, TransmissionPlan(entries=()), {}, {})
    target = int(achievable[-1])

    entries = []
    u = target
    for g in reversed(range(Ng)):
        i, m = n, M
        while i > 0:
            if not inst.interested[g][i]:
                i -= 1
                continue
            if m == 0:
                raise RuntimeError("approximation journal mismatch")
            ch = journals[g][(i, m)][u]
            if ch == -1:
                m -= 1
                continue
            ip = int(ch)
            gain = prefix[g][m][i] - prefix[g][m][ip - 1]
            entries.append(
                PlanEntry(
                    tile_id=inst.tiles[g].tile_id,
                    level=m,
                    link_rate=inst.rates[ip],
                    slot_cost=inst.cost[g][m][ip],
                )
            )
            u = max(0, u - gain)
            i = ip - 1
            m -= 1
    entries.sort(key=lambda e: (e.tile_id, e.level))
    plan = TransmissionPlan(entries=tuple(entries))
    if plan.total_slots > T:
        raise RuntimeError("approximation journal mismatch: plan over budget")
    objective, per_user, per_tile = evaluate_plan(tiles, users, plan)
    return AllocationResult(objective, plan, per_user, per_tile)

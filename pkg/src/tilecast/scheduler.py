"""Optimal allocators: single-tile DP, naive multi-tile combiner, improved DP.

All three paths agree exactly.  The DP engine runs on one of three backends,
picked automatically per instance:

* ``int64``  — utilities are rescaled to a common integer grid (the lcm of
  their denominators) and the recursion runs vectorized over the slot axis in
  numpy int64.  Integer addition is exact, so the optimum is bit-identical to
  the rational optimum.  This is the production path.
* ``exact``  — plain-Python recursion over ``Fraction`` values, used when the
  integer rescaling would overflow int64 but the instance is small.
* ``float64``— last resort for large instances with pathological utility
  denominators; fast but only accurate to double precision.

Infeasible states are a large negative sentinel (int backend) or -inf; both
are absorbing under the additions the recursion performs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .model import (
    NEG_INF,
    ContractError,
    PlanEntry,
    SlotBudget,
    TileLadder,
    TransmissionPlan,
    UserRequest,
    Utility,
    VirtualUser,
    is_neg_inf,
    slot_cost,
    utility,
)

_INT_NEG = -(1 << 62)
_INT_BAD = -(1 << 61)  # anything below this is semantically -inf
_INT_LIMIT = 1 << 58  # max total scaled utility accepted by the int64 backend
_EXACT_STATE_LIMIT = 4_000_000  # states tolerated by the plain-Python backend


@dataclass(frozen=True)
class AllocationResult:
    objective: Utility
    plan: TransmissionPlan
    per_user_utility: dict  # user key -> finite utility (empty when infeasible)
    per_tile_levels: dict  # (tile_id, user key) -> highest received level


# ---------------------------------------------------------------------------
# Instance normalization: UserRequest and VirtualUser expose the same facts
# to the DP (interest, lower bound, finite utility, link rate).


class _Instance:
    def __init__(self, tiles: Sequence[TileLadder], users, slot: SlotBudget):
        if not tiles:
            raise ContractError("need at least one tile")
        if not users:
            raise ContractError("need at least one user")
        self.tiles = list(tiles)
        self.M = tiles[0].levels
        if any(t.levels != self.M for t in tiles):
            raise ContractError("all tiles must share one resolution ladder depth")
        self.slot = slot
        self.users = sorted(users, key=lambda u: (u.link_rate, _key_of(u)))
        self.n = len(self.users)
        self.rates = [None] + [u.link_rate for u in self.users]  # 1-based
        self.keys = [None] + [_key_of(u) for u in self.users]

        n, M, Ng = self.n, self.M, len(self.tiles)
        self.interested = [[False] * (n + 1) for _ in range(Ng)]
        self.lb = [[0] * (n + 1) for _ in range(Ng)]
        self.weights: List[List[List[Optional[Fraction]]]] = [
            [[None] * (M + 1) for _ in range(n + 1)] for _ in range(Ng)
        ]
        self.cost = [[[0] * (n + 1) for _ in range(M + 1)] for _ in range(Ng)]
        for g, tile in enumerate(self.tiles):
            for i, u in enumerate(self.users, start=1):
                if not _interested(u, tile):
                    continue
                self.interested[g][i] = True
                lb = _lower_bound(u, tile)
                self.lb[g][i] = lb
                for m in range(lb, M + 1):
                    self.weights[g][i][m] = _weight(u, tile, m)
            for m in range(1, M + 1):
                for i in range(1, n + 1):
                    self.cost[g][m][i] = slot_cost(tile.size(m), self.rates[i], slot)
        # ipmin[g][m][i]: smallest valid start of a coverage range ending at i
        # (every interested user in the range must have its lower bound <= m).
        self.ipmin = [[[1] * (n + 1) for _ in range(M + 1)] for _ in range(Ng)]
        for g in range(Ng):
            for m in range(1, M + 1):
                last_bad = 0
                for i in range(1, n + 1):
                    if self.interested[g][i] and self.lb[g][i] > m:
                        last_bad = i
                    self.ipmin[g][m][i] = last_bad + 1

    def finite_weights(self):
        for g in range(len(self.tiles)):
            for i in range(1, self.n + 1):
                for m in range(1, self.M + 1):
                    w = self.weights[g][i][m]
                    if w is not None:
                        yield g, i, m, w


def _key_of(u) -> int:
    return u.user_id


def _interested(u, tile: TileLadder) -> bool:
    if isinstance(u, VirtualUser):
        return u.interested(tile.tile_id)
    return tile.tile_id in u.roi


def _lower_bound(u, tile: TileLadder) -> int:
    if isinstance(u, VirtualUser):
        return u.guaranteed_level_per_tile[tile.tile_id]
    return u.guaranteed_level


def _weight(u, tile: TileLadder, m: int) -> Fraction:
    if isinstance(u, VirtualUser):
        return u.utility_table.get((tile.tile_id, m), Fraction(0))
    return utility(tile, u, m)


# ---------------------------------------------------------------------------
# Backend selection


def _pick_engine(inst: _Instance, T: int, engine: str) -> Tuple[str, Optional[int]]:
    if engine not in ("auto", "int64", "exact", "float64"):
        raise ContractError(f"unknown engine {engine!r}")
    denom_lcm = 1
    total = Fraction(0)
    overflow = False
    for g in range(len(inst.tiles)):
        for i in range(1, inst.n + 1):
            best = None
            for m in range(1, inst.M + 1):
                w = inst.weights[g][i][m]
                if w is None:
                    continue
                if not overflow:
                    denom_lcm = denom_lcm * w.denominator // math.gcd(denom_lcm, w.denominator)
                    if denom_lcm > _INT_LIMIT:
                        overflow = True
                if best is None or w > best:
                    best = w
            if best is not None:
                total += best
    if not overflow and total * denom_lcm < _INT_LIMIT:
        scale = denom_lcm
    else:
        scale = None
    if engine == "int64":
        if scale is None:
            raise ContractError("instance utilities do not fit the int64 backend")
        return "int64", scale
    if engine in ("exact", "float64"):
        return engine, None
    if scale is not None:
        return "int64", scale
    states = len(inst.tiles) * inst.n * inst.M * (T + 1)
    if states <= _EXACT_STATE_LIMIT:
        return "exact", None
    return "float64", None


def _numeric_weights(inst: _Instance, scale: Optional[int]):
    """Per-(g, m) prefix sums over user index of the backend-numeric weights."""
    Ng, n, M = len(inst.tiles), inst.n, inst.M
    prefix = [[[0] * (n + 1) for _ in range(M + 1)] for _ in range(Ng)]
    for g in range(Ng):
        for m in range(1, M + 1):
            acc = 0
            row = prefix[g][m]
            for i in range(1, n + 1):
                w = inst.weights[g][i][m]
                if w is not None:
                    acc += int(w * scale) if scale else float(w)
                row[i] = acc
    return prefix


# ---------------------------------------------------------------------------
# Numpy backend (int64 or float64)


def _np_tile_dp(inst, g, carry, T, prefix, dtype, neg, want_journal=True):
    """One tile layer of the recursion; ``carry`` is the i = 0 boundary."""
    n, M = inst.n, inst.M
    Tp1 = T + 1
    neg_vec = np.full(Tp1, neg, dtype)
    layers = [[carry] * (M + 1)]
    journal = {}
    for i in range(1, n + 1):
        if not inst.interested[g][i]:
            layers.append(layers[i - 1])
            continue
        row = [neg_vec]
        pre = prefix[g]
        for m in range(1, M + 1):
            best = row[m - 1].copy()
            choice = np.full(Tp1, -1, np.int8) if want_journal else None
            for ip in range(inst.ipmin[g][m][i], i + 1):
                c = inst.cost[g][m][ip]
                if c > T:
                    continue
                wsum = pre[m][i] - pre[m][ip - 1]
                src = layers[ip - 1][m - 1]
                cand = src[: Tp1 - c] + wsum
                tail = best[c:]
                mask = cand > tail
                tail[mask] = cand[mask]
                if want_journal:
                    choice[c:][mask] = ip
            row.append(best)
            if want_journal:
                journal[(i, m)] = choice
        layers.append(row)
    return layers[n][M], journal


def _np_solve_multi(inst, T, prefix, dtype, neg):
    carry = np.zeros(T + 1, dtype)
    journals = []
    for g in range(len(inst.tiles)):
        carry, jt = _np_tile_dp(inst, g, carry, T, prefix, dtype, neg)
        journals.append(jt)
    return carry[T], journals


def _np_solve_naive(inst, T, prefix, dtype, neg):
    """Per-tile DPs followed by a quadratic-time budget-split combine.

    The combine is a max-plus convolution: new[t] = max over t' of
    vec[t'] + combined[t - t'], evaluated in row blocks of a strided view so
    every pair (t', t) is touched.  Per-tile value vectors and the running
    prefixes are kept so the winning split can be recovered afterwards.
    """
    Tp1 = T + 1
    zeros = np.zeros(Tp1, dtype)
    combined = zeros
    tile_journals = []
    vecs = []
    stages = []
    bad = _INT_BAD if dtype == np.int64 else -math.inf
    block = 256
    for g in range(len(inst.tiles)):
        vec, jt = _np_tile_dp(inst, g, zeros, T, prefix, dtype, neg)
        tile_journals.append(jt)
        vecs.append(vec)
        stages.append(combined)
        pad = np.concatenate([np.full(T, neg, dtype), combined])
        stride = pad.strides[0]
        new = np.full(Tp1, neg, dtype)
        for start in range(0, Tp1, block):
            stop = min(start + block, Tp1)
            # window[k, t] = pad[T + t - (start + k)] = combined[t - t'] (or the
            # padding sentinel when t < t')
            window = np.lib.stride_tricks.as_strided(
                pad[T - start :], shape=(stop - start, Tp1), strides=(-stride, stride)
            )
            cand = window + vec[start:stop, None]
            np.maximum(new, cand.max(axis=0), out=new)
        if dtype == np.int64:
            np.copyto(new, neg, where=new <= bad)
        combined = new
    return combined[T], tile_journals, (vecs, stages)


# ---------------------------------------------------------------------------
# Plain-Python exact backend


def _py_tile_dp(inst, g, carry, T, prefix):
    n, M = inst.n, inst.M
    Tp1 = T + 1
    neg_vec = [NEG_INF] * Tp1
    layers = [[carry] * (M + 1)]
    journal = {}
    for i in range(1, n + 1):
        if not inst.interested[g][i]:
            layers.append(layers[i - 1])
            continue
        row = [neg_vec]
        pre = prefix[g]
        for m in range(1, M + 1):
            best = list(row[m - 1])
            choice = [-1] * Tp1
            for ip in range(inst.ipmin[g][m][i], i + 1):
                c = inst.cost[g][m][ip]
                if c > T:
                    continue
                wsum = pre[m][i] - pre[m][ip - 1]
                src = layers[ip - 1][m - 1]
                for t in range(c, Tp1):
                    v = src[t - c]
                    if v == NEG_INF:
                        continue
                    cand = v + wsum
                    if cand > best[t]:
                        best[t] = cand
                        choice[t] = ip
            row.append(best)
            journal[(i, m)] = choice
        layers.append(row)
    return layers[n][M], journal


def _py_solve_multi(inst, T, prefix):
    carry = [Fraction(0)] * (T + 1)
    journals = []
    for g in range(len(inst.tiles)):
        carry, jt = _py_tile_dp(inst, g, carry, T, prefix)
        journals.append(jt)
    return carry[T], journals


def _py_solve_naive(inst, T, prefix):
    Tp1 = T + 1
    zeros = [Fraction(0)] * Tp1
    combined = zeros
    tile_journals = []
    split_args = []
    for g in range(len(inst.tiles)):
        vec, jt = _py_tile_dp(inst, g, zeros, T, prefix)
        tile_journals.append(jt)
        new = [NEG_INF] * Tp1
        arg = [0] * Tp1
        for tp in range(Tp1):
            val = vec[tp]
            if val == NEG_INF:
                continue
            for t in range(tp, Tp1):
                base = combined[t - tp]
                if base == NEG_INF:
                    continue
                cand = base + val
                if cand > new[t]:
                    new[t] = cand
                    arg[t] = tp
        combined = new
        split_args.append(arg)
    return combined[T], tile_journals, split_args


# ---------------------------------------------------------------------------
# Schedule extraction


@dataclass
class _DPRun:
    """A completed DP run: the decision journals plus the instance they index."""

    inst: _Instance
    journals: list  # per tile: {(i, m): choice-over-t}
    budget: int
    split_args: Optional[list] = None  # py naive: per tile argmax t'
    split_parts: Optional[tuple] = None  # np naive: (per-tile values, prefixes)


def _backtrack_tile(inst: _Instance, g: int, journal, t: int):
    entries = []
    i, m = inst.n, inst.M
    while i > 0:
        if not inst.interested[g][i]:
            i -= 1
            continue
        if m == 0:
            raise RuntimeError("journal/table mismatch: interested user left uncovered")
        ch = journal[(i, m)][t]
        if ch == -1:
            m -= 1
            continue
        ip = int(ch)
        c = inst.cost[g][m][ip]
        if c > t:
            raise RuntimeError("journal/table mismatch: cost exceeds remaining budget")
        entries.append(
            PlanEntry(
                tile_id=inst.tiles[g].tile_id,
                level=m,
                link_rate=inst.rates[ip],
                slot_cost=c,
            )
        )
        t -= c
        i = ip - 1
        m -= 1
    return entries, t


def extract_schedule(run: _DPRun) -> TransmissionPlan:
    """Replay argmax decisions of a completed DP run into a transmission plan."""
    inst = run.inst
    entries = []
    if run.split_args is not None or run.split_parts is not None:
        # naive combiner: recover the winning budget split first
        t = run.budget
        budgets = [0] * len(inst.tiles)
        for g in reversed(range(len(inst.tiles))):
            if run.split_args is not None:
                tp = int(run.split_args[g][t])
            else:
                vecs, stages = run.split_parts
                cand = vecs[g][: t + 1] + stages[g][t::-1]
                tp = int(np.argmax(cand))
            budgets[g] = tp
            t -= tp
        for g in range(len(inst.tiles)):
            tile_entries, _ = _backtrack_tile(inst, g, run.journals[g], budgets[g])
            entries.extend(tile_entries)
    else:
        t = run.budget
        for g in reversed(range(len(inst.tiles))):
            tile_entries, t = _backtrack_tile(inst, g, run.journals[g], t)
            entries.extend(tile_entries)
    entries.sort(key=lambda e: (e.tile_id, e.level))
    return TransmissionPlan(entries=tuple(entries))


# ---------------------------------------------------------------------------
# Plan evaluation


def evaluate_plan(tiles, users, plan: TransmissionPlan, enforce_bounds: bool = True):
    """Re-derive (objective, per-user utility, received levels) from a plan.

    ``enforce_bounds=False`` gives measurement semantics: a tile received
    below the guaranteed level still counts the utility of what arrived, and
    a missing tile counts zero (only valid for raw UserRequest inputs).
    """
    by_tile = {}
    for e in plan.entries:
        by_tile.setdefault(e.tile_id, []).append(e)

    def received(tile_id, link_rate, key):
        lvl = 0
        for e in by_tile.get(tile_id, ()):
            if e.link_rate <= link_rate and (e.target_user is None or e.target_user == key):
                lvl = max(lvl, e.level)
        return lvl

    per_user = {}
    per_tile = {}
    objective: Utility = Fraction(0)
    for u in users:
        key = _key_of(u)
        total: Utility = Fraction(0)
        for tile in tiles:
            lvl = received(tile.tile_id, u.link_rate, key)
            per_tile[(tile.tile_id, key)] = lvl
            if not _interested(u, tile):
                continue
            if enforce_bounds:
                if lvl == 0 or lvl < _lower_bound(u, tile):
                    total = NEG_INF
                    break
                total += _weight(u, tile, lvl)
            else:
                if lvl == 0:
                    continue
                if not isinstance(u, UserRequest):
                    raise ContractError("measurement semantics need raw UserRequests")
                total += utility(tile, u, lvl, lower_bound=1)
        if is_neg_inf(total):
            return NEG_INF, {}, per_tile
        per_user[key] = total
        objective += total
    return objective, per_user, per_tile


def _finish(inst: _Instance, users, value_is_feasible: bool, run: _DPRun) -> AllocationResult:
    if not value_is_feasible:
        return AllocationResult(NEG_INF, TransmissionPlan(entries=()), {}, {})
    plan = extract_schedule(run)
    objective, per_user, per_tile = evaluate_plan(inst.tiles, users, plan)
    if is_neg_inf(objective):
        raise RuntimeError("journal/table mismatch: extracted plan violates bounds")
    return AllocationResult(objective, plan, per_user, per_tile)


def _solve(tiles, users, T: int, slot: SlotBudget, naive: bool, engine: str) -> AllocationResult:
    if T < 0:
        raise ContractError("budget must be non-negative")
    inst = _Instance(tiles, users, slot)
    backend, scale = _pick_engine(inst, T, engine)
    if backend == "exact":
        prefix = _numeric_weights(inst, None)
        if naive:
            value, journals, split = _py_solve_naive(inst, T, prefix)
        else:
            value, journals = _py_solve_multi(inst, T, prefix)
            split = None
        feasible = value != NEG_INF
        exact_value: Utility = value if feasible else NEG_INF
    else:
        dtype = np.int64 if backend == "int64" else np.float64
        neg = _INT_NEG if backend == "int64" else -math.inf
        prefix = _numeric_weights(inst, scale)
        if naive:
            value, journals, split = _np_solve_naive(inst, T, prefix, dtype, neg)
        else:
            value, journals = _np_solve_multi(inst, T, prefix, dtype, neg)
            split = None
        feasible = value > _INT_BAD if backend == "int64" else bool(value > -math.inf)
        exact_value = Fraction(int(value), scale) if backend == "int64" and feasible else None
    run = _DPRun(
        inst=inst,
        journals=journals,
        budget=T,
        split_args=split if isinstance(split, list) else None,
        split_parts=split if isinstance(split, tuple) else None,
    )
    result = _finish(inst, users, feasible, run)
    if feasible and exact_value is not None and result.objective != exact_value:
        raise RuntimeError("journal/table mismatch: plan value differs from DP value")
    return result


def single_tile_optimal(tile: TileLadder, users, t: int, slot: SlotBudget, engine: str = "auto") -> AllocationResult:
    """Optimal levels/rates for one tile within ``t`` slots."""
    return _solve([tile], users, t, slot, naive=False, engine=engine)


def multi_tile_naive(tiles, users, T: int, slot: SlotBudget, engine: str = "auto") -> AllocationResult:
    """Per-tile DP plus an O(T^2) budget-split combiner; the reference path."""
    return _solve(tiles, users, T, slot, naive=True, engine=engine)


def multi_tile_optimal(tiles, users, T: int, slot: SlotBudget, engine: str = "auto") -> AllocationResult:
    """Joint DP over (tile, user, level, slots); linear in the slot budget."""
    return _solve(tiles, users, T, slot, naive=False, engine=engine)


# ---------------------------------------------------------------------------
# Test oracle: exhaustive enumeration over monotone transmission sets


def brute_force_oracle(tiles, users, T: int, slot: SlotBudget) -> Utility:
    """Enumerate every per-tile transmission set (levels and rates strictly
    increasing together), combine across tiles, return the best total utility
    within budget.  Only for small instances."""
    inst = _Instance(tiles, users, slot)
    n, M, Ng = inst.n, inst.M, len(inst.tiles)
    if Ng > 4 or n > 6 or M > 4 or T > 512:
        raise ContractError("instance too large for exhaustive enumeration")

    def tile_options(g):
        sets = []

        def rec(start_ip, start_m, chosen):
            sets.append(list(chosen))
            for ip in range(start_ip, n + 1):
                for m in range(start_m, M + 1):
                    chosen.append((m, ip))
                    rec(ip + 1, m + 1, chosen)
                    chosen.pop()

        rec(1, 1, [])
        options = []
        for s in sets:
            cost = sum(inst.cost[g][m][ip] for m, ip in s)
            if cost > T:
                continue
            value: Utility = Fraction(0)
            for i in range(1, n + 1):
                if not inst.interested[g][i]:
                    continue
                lvl = max((m for m, ip in s if ip <= i), default=0)
                if lvl == 0 or lvl < inst.lb[g][i]:
                    value = NEG_INF
                    break
                value += inst.weights[g][i][lvl]
            if not is_neg_inf(value):
                options.append((cost, value))
        # keep the Pareto frontier (min cost for each achievable value)
        options.sort(key=lambda cv: (cv[0], -cv[1]))
        frontier = []
        best = None
        for cost, value in options:
            if best is None or value > best:
                frontier.append((cost, value))
                best = value
        return frontier

    per_tile = [tile_options(g) for g in range(Ng)]
    if any(not opts for opts in per_tile):
        return NEG_INF

    best_total: Utility = NEG_INF

    def combine(g, budget, acc):
        nonlocal best_total
        if g == Ng:
            if is_neg_inf(best_total) or acc > best_total:
                best_total = acc
            return
        for cost, value in per_tile[g]:
            if cost <= budget:
                combine(g + 1, budget - cost, acc + value)

    combine(0, T, Fraction(0))
    return best_total

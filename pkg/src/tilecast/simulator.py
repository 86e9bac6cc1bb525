"""Discrete-time epoch loop: allocate, transmit per GOP, sample losses, report.

Each epoch (default 2 s) applies due trace events, re-runs the chosen
allocator under the per-frame slot budget, then replays the plan once per
GOP with independent Bernoulli receptions per user.  Measured utility treats
the guaranteed level as 1: a tile that arrived below a user's floor still
counts what arrived, since the floor is a planner constraint rather than a
physical outcome.  Goodput counts only bytes of RoI tiles received at a
decodable level, once per GOP at the highest level that got through.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .baselines import (
    ApproximationConfig,
    adaptive_multicast,
    adaptive_unicast,
    approximation_allocate,
)
from .channel import LossModel, RateAdaptConfig, RateController
from .feasibility import InfeasibleAtMinimum, adapt_lower_bounds
from .model import (
    NEG_INF,
    ContractError,
    InfeasibleError,
    SlotBudget,
    TileLadder,
    TransmissionPlan,
    UserRequest,
    cluster_users,
    is_neg_inf,
    utility,
)
from .scheduler import multi_tile_naive, multi_tile_optimal

ALLOCATORS = ("optimal", "naive", "unicast", "multicast", "approximation")

#: Relative slot weights by frame position within a GOP: one I frame, then
#: alternating P and B frames.  Configurable per scenario.
DEFAULT_FRAME_PROFILE = (4, 2, 1)


@dataclass(frozen=True)
class TraceEvent:
    """A timed change to one user: new RoI, new requested level, or new channel."""

    time_s: float
    user_id: int
    kind: str  # "roi" | "zoom" | "channel"
    roi: Optional[frozenset] = None
    requested_level: Optional[int] = None
    loss_row: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("roi", "zoom", "channel"):
            raise ContractError(f"unknown trace event kind {self.kind!r}")
        if self.kind == "roi" and self.roi is None:
            raise ContractError("roi event needs a tile set")
        if self.kind == "zoom" and self.requested_level is None:
            raise ContractError("zoom event needs a level")
        if self.kind == "channel" and self.loss_row is None:
            raise ContractError("channel event needs a loss row")


@dataclass
class Scenario:
    """Everything one simulation run needs; deterministic given ``seed``."""

    ladders: tuple
    rate_set: tuple  # bits/s, strictly increasing
    users: tuple  # initial UserRequest set
    loss: LossModel
    n_epochs: int = 5
    epoch_interval: float = 2.0
    gop_length: int = 25  # frames
    frame_rate: int = 25
    frame_size_profile: tuple = DEFAULT_FRAME_PROFILE
    trace: tuple = ()
    allocator_choice: str = "optimal"
    epsilon: float = 0.2
    seed: int = 0
    budget_slots: Optional[int] = None  # per frame; None derives from timing
    adapt_rates: bool = False  # run the rate controllers in the loop
    rate_adapt: RateAdaptConfig = field(default_factory=RateAdaptConfig)
    grid: Optional[tuple] = None  # (cols, rows); tiles numbered row-major from 1

    def __post_init__(self):
        self.ladders = tuple(self.ladders)
        self.rate_set = tuple(self.rate_set)
        self.users = tuple(self.users)
        self.trace = tuple(sorted(self.trace, key=lambda e: e.time_s))
        self.frame_size_profile = tuple(self.frame_size_profile)
        if any(a >= b for a, b in zip(self.rate_set, self.rate_set[1:])):
            raise ContractError("rate set must be strictly increasing")
        if self.allocator_choice not in ALLOCATORS:
            raise ContractError(f"unknown allocator {self.allocator_choice!r}")
        if any(w <= 0 for w in self.frame_size_profile):
            raise ContractError("frame size weights must be positive")
        frames = self.epoch_interval * self.frame_rate
        if abs(frames - round(frames)) > 1e-9:
            raise ContractError("epoch must be a whole number of frames")
        if round(frames) % self.gop_length != 0:
            raise ContractError("epoch must be a whole number of GOPs")
        for u in self.users:
            if u.link_rate not in self.rate_set:
                raise ContractError(f"user {u.user_id}: rate not in the rate set")
        if self.grid is not None:
            cols, rows = self.grid
            if cols * rows != len(self.ladders):
                raise ContractError("grid dimensions do not match the tile count")
        valid = {l.tile_id for l in self.ladders}
        for u in self.users:
            if not u.roi <= valid:
                raise ContractError(f"user {u.user_id}: RoI references unknown tiles")

    @property
    def frames_per_epoch(self) -> int:
        return round(self.epoch_interval * self.frame_rate)

    @property
    def gops_per_epoch(self) -> int:
        return self.frames_per_epoch // self.gop_length

    def budget(self) -> SlotBudget:
        base = SlotBudget.from_frame_rate(self.frame_rate)
        if self.budget_slots is not None:
            base = base.with_slots(self.budget_slots)
        return base


@dataclass(frozen=True)
class EpochReport:
    epoch_index: int
    planned_objective: object  # Fraction, or NEG_INF on a degraded epoch
    realized_utility: dict  # user_id -> Fraction
    realized_total: Fraction
    goodput_bps: dict  # user_id -> float
    goodput_average: float
    reception_bitmap: dict  # (user_id, tile_id) -> highest level received
    slots_used: int  # over the whole epoch
    frame_budgets: tuple  # per-frame slot budgets for one GOP
    similarity: float
    rate_indices: dict  # user_id -> rate index in effect this epoch
    degraded: bool = False
    plan: TransmissionPlan = TransmissionPlan(entries=())


def proportional_split(total: int, weights: Sequence[int]) -> List[int]:
    """Split ``total`` into len(weights) integers proportional to weights.

    Largest-remainder rounding: shares sum to exactly ``total`` and each
    share is within one of its real-valued quota.
    """
    if total < 0 or not weights or any(w <= 0 for w in weights):
        raise ContractError("need non-negative total and positive weights")
    denom = sum(weights)
    quotas = [Fraction(total * w, denom) for w in weights]
    shares = [math.floor(q) for q in quotas]
    leftover = total - sum(shares)
    order = sorted(range(len(weights)), key=lambda i: (shares[i] - quotas[i], i))
    for i in order[:leftover]:
        shares[i] += 1
    return shares


def similarity(requests: Sequence[UserRequest]) -> float:
    """Mean per-user RoI overlap degree, from tile popularity.

    A tile's popularity is the fraction of users interested in it; a user's
    degree averages popularity over their RoI tiles shared with at least one
    other user.  Users with empty RoIs are left out of the mean.
    """
    active = [r for r in requests if r.roi]
    if not active:
        raise ContractError("similarity needs at least one non-empty RoI")
    n = len(active)
    count: Dict[int, int] = {}
    for r in active:
        for g in r.roi:
            count[g] = count.get(g, 0) + 1
    degrees = []
    for r in active:
        shared = sum(Fraction(count[g], n) for g in r.roi if count[g] > 1)
        degrees.append(shared / len(r.roi))
    return float(sum(degrees) / n)


def fairness(per_user_utility: Dict[int, Fraction]) -> float:
    """Population standard deviation of per-user realized utility."""
    if not per_user_utility:
        raise ContractError("fairness needs at least one user")
    vals = [float(v) for v in per_user_utility.values()]
    mean = sum(vals) / len(vals)
    return math.sqrt(sum((v - mean) ** 2 for v in vals) / len(vals))


def goodput(reports: Sequence[EpochReport]) -> Tuple[Dict[int, float], float]:
    """Per-user and average goodput over a report stream (bits/s)."""
    if not reports:
        raise ContractError("goodput needs at least one epoch")
    users = set()
    for rep in reports:
        users.update(rep.goodput_bps)
    per_user = {
        uid: sum(rep.goodput_bps.get(uid, 0.0) for rep in reports) / len(reports)
        for uid in sorted(users)
    }
    avg = sum(per_user.values()) / len(per_user) if per_user else 0.0
    return per_user, avg


def allocate_once(scenario: Scenario, users, T: int, slot: SlotBudget):
    """One allocation call; returns (objective, plan) or raises on infeasible."""
    name = scenario.allocator_choice
    ladders = scenario.ladders
    if name == "unicast":
        res = adaptive_unicast(ladders, users, T, slot)
    elif name == "multicast":
        res = adaptive_multicast(ladders, users, T, slot)
    else:
        bounds = adapt_lower_bounds(ladders, users, slot.with_slots(T))
        bounded = bounds.apply(users)
        clustered = cluster_users(bounded, ladders)
        if name == "optimal":
            res = multi_tile_optimal(ladders, clustered, T, slot)
        elif name == "naive":
            res = multi_tile_naive(ladders, clustered, T, slot)
        else:
            res = approximation_allocate(
                ladders, clustered, T, slot, ApproximationConfig(scenario.epsilon)
            )
    return res.objective, res.plan


def run_simulation(scenario: Scenario) -> List[EpochReport]:
    """Run the epoch loop; deterministic given the scenario seed."""
    rng = np.random.default_rng(scenario.seed)
    slot = scenario.budget()
    T = slot.slots_per_frame
    rate_index = {r: i for i, r in enumerate(scenario.rate_set)}
    users: Dict[int, UserRequest] = {u.user_id: u for u in scenario.users}
    loss = LossModel(dict(scenario.loss.table), scenario.loss.rate_count)
    ctl_cfg = replace(scenario.rate_adapt, rate_count=len(scenario.rate_set))
    controllers = {
        u.user_id: RateController(rate_index[u.link_rate], ctl_cfg)
        for u in scenario.users
    }
    pending = list(scenario.trace)
    reports: List[EpochReport] = []

    for epoch in range(scenario.n_epochs):
        now = epoch * scenario.epoch_interval
        while pending and pending[0].time_s <= now + 1e-9:
            ev = pending.pop(0)
            if ev.user_id not in users:
                raise ContractError(f"trace event for unknown user {ev.user_id}")
            u = users[ev.user_id]
            if ev.kind == "roi":
                if not frozenset(ev.roi) <= {l.tile_id for l in scenario.ladders}:
                    raise ContractError(f"trace RoI references unknown tiles: {ev.roi}")
                users[ev.user_id] = replace(u, roi=frozenset(ev.roi))
            elif ev.kind == "zoom":
                lvl = ev.requested_level
                if not 1 <= lvl <= scenario.ladders[0].levels:
                    raise ContractError(f"trace zoom level {lvl} outside the ladder")
                users[ev.user_id] = replace(
                    u, requested_level=lvl, guaranteed_level=min(u.guaranteed_level, lvl)
                )
            else:
                loss.set_row(ev.user_id, ev.loss_row)

        if scenario.adapt_rates:
            for uid, u in users.items():
                users[uid] = replace(u, link_rate=scenario.rate_set[controllers[uid].rate_index])

        current = [users[uid] for uid in sorted(users)]
        rates_now = {uid: rate_index[users[uid].link_rate] for uid in sorted(users)}
        sim = similarity(current) if any(u.roi for u in current) else 0.0

        degraded = False
        plan = TransmissionPlan(entries=())
        objective = NEG_INF
        try:
            objective, plan = allocate_once(scenario, current, T, slot)
            if is_neg_inf(objective):
                degraded = True
        except (InfeasibleAtMinimum, InfeasibleError):
            degraded = True
        if degraded:
            plan = TransmissionPlan(entries=())

        gop_total = T * scenario.gop_length
        cycle = [
            scenario.frame_size_profile[f % len(scenario.frame_size_profile)]
            for f in range(scenario.gop_length)
        ]
        frame_budgets = tuple(proportional_split(gop_total, cycle))

        gops = scenario.gops_per_epoch
        realized: Dict[int, Fraction] = {uid: Fraction(0) for uid in sorted(users)}
        bytes_ok: Dict[int, int] = {uid: 0 for uid in sorted(users)}
        bitmap: Dict[tuple, int] = {}
        lost = {uid: 0 for uid in users}
        sent = {uid: 0 for uid in users}
        ladder_of = {l.tile_id: l for l in scenario.ladders}

        for _ in range(gops):
            got: Dict[tuple, int] = {}
            for entry in plan.entries:
                ri = rate_index[entry.link_rate]
                for uid in sorted(users):
                    if entry.target_user is not None and entry.target_user != uid:
                        continue
                    p = loss.loss(uid, ri)
                    ok = p <= 0.0 or (p < 1.0 and rng.random() >= p)
                    if ri > rates_now[uid]:
                        controllers[uid].observe_probe(ri, ok)
                        continue
                    sent[uid] += 1
                    if ok:
                        key = (uid, entry.tile_id)
                        got[key] = max(got.get(key, 0), entry.level)
                    else:
                        lost[uid] += 1
            for (uid, tile_id), level in got.items():
                u = users[uid]
                if tile_id in u.roi:
                    val = utility(ladder_of[tile_id], u, level, lower_bound=1)
                    realized[uid] += val
                    bytes_ok[uid] += ladder_of[tile_id].size(level) * scenario.gop_length
                key = (uid, tile_id)
                bitmap[key] = max(bitmap.get(key, 0), level)

        for uid in users:
            realized[uid] /= gops
            controllers[uid].observe_interval(lost[uid], sent[uid])

        goodput_bps = {
            uid: bytes_ok[uid] * 8 / scenario.epoch_interval for uid in sorted(users)
        }
        reports.append(
            EpochReport(
                epoch_index=epoch,
                planned_objective=objective,
                realized_utility=realized,
                realized_total=sum(realized.values(), Fraction(0)),
                goodput_bps=goodput_bps,
                goodput_average=sum(goodput_bps.values()) / len(goodput_bps),
                reception_bitmap=bitmap,
                slots_used=plan.total_slots * scenario.gop_length * gops,
                frame_budgets=frame_budgets,
                similarity=sim,
                rate_indices=rates_now,
                degraded=degraded,
                plan=plan,
            )
        )
    return reports

"""Shared domain types: tile ladders, user requests, slot arithmetic, utility.

Utility values are exact rationals (``fractions.Fraction``) so that every
allocator computes bit-identical objectives regardless of evaluation order.
Infeasibility is the distinguished ``NEG_INF`` value (IEEE -inf), which is
absorbing under addition and loses every comparison against a finite value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Union

NEG_INF = float("-inf")

#: 802.11a PHY rates in Mb/s; the default validated rate set.
DOT11A_RATES_MBPS = (6, 9, 12, 18, 24, 36, 48, 54)

Utility = Union[Fraction, float]  # Fraction (finite, >= 0) or NEG_INF


class ContractError(ValueError):
    """A caller violated an operation precondition."""


class InfeasibleError(Exception):
    """An allocator cannot satisfy its mandatory reservations within budget."""


def is_neg_inf(value: Utility) -> bool:
    return value == NEG_INF


def _exact(x) -> Fraction:
    """Convert a user-supplied number to an exact Fraction.

    Floats go through their decimal string form so that e.g. 9e-6 means
    exactly 9/1000000 rather than the nearest binary float.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(Decimal(str(x)))
    return Fraction(x)


@dataclass(frozen=True)
class TileLadder:
    """Byte sizes of one tile across the resolution ladder (index 1..M)."""

    tile_id: int
    sizes: tuple  # bytes, sizes[m-1] is the size at level m

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if not self.sizes:
            raise ContractError("tile ladder needs at least one level")
        if any(s <= 0 for s in self.sizes):
            raise ContractError(f"tile {self.tile_id}: sizes must be positive")
        if any(a >= b for a, b in zip(self.sizes, self.sizes[1:])):
            raise ContractError(f"tile {self.tile_id}: sizes must be strictly increasing")

    @property
    def levels(self) -> int:
        return len(self.sizes)

    def size(self, m: int) -> int:
        if not 1 <= m <= self.levels:
            raise ContractError(f"level {m} out of range 1..{self.levels}")
        return self.sizes[m - 1]


@dataclass(frozen=True)
class UserRequest:
    """One client: PHY rate, RoI tile set, requested and guaranteed levels."""

    user_id: int
    link_rate: int  # bits/s
    roi: frozenset
    requested_level: int
    guaranteed_level: int = 1

    def __post_init__(self):
        object.__setattr__(self, "roi", frozenset(self.roi))
        if self.link_rate <= 0:
            raise ContractError("link_rate must be positive")
        if not 1 <= self.guaranteed_level <= self.requested_level:
            raise ContractError(
                f"user {self.user_id}: need 1 <= L ({self.guaranteed_level})"
                f" <= R ({self.requested_level})"
            )


@dataclass(frozen=True)
class SlotBudget:
    """Per-frame slot budget and the slot/frame timing it derives from."""

    slots_per_frame: int
    slot_duration: Fraction = Fraction(9, 1_000_000)  # seconds
    frame_rate: int = 25

    def __post_init__(self):
        object.__setattr__(self, "slot_duration", _exact(self.slot_duration))
        if self.slots_per_frame < 0 or self.slot_duration <= 0 or self.frame_rate <= 0:
            raise ContractError("invalid slot budget parameters")

    @classmethod
    def from_frame_rate(cls, frame_rate: int = 25, slot_duration=Fraction(9, 1_000_000)):
        sd = _exact(slot_duration)
        slots = math.floor(Fraction(1, frame_rate) / sd)
        return cls(slots_per_frame=slots, slot_duration=sd, frame_rate=frame_rate)

    def with_slots(self, slots_per_frame: int) -> "SlotBudget":
        return SlotBudget(slots_per_frame, self.slot_duration, self.frame_rate)


def slot_cost(size_bytes: int, link_rate, slot: SlotBudget) -> int:
    """Slots needed to send ``size_bytes`` at ``link_rate`` (bits/s), exact ceil."""
    if size_bytes <= 0 or link_rate <= 0:
        raise ContractError("slot_cost needs positive size and rate")
    bits_per_slot = _exact(link_rate) * slot.slot_duration
    return math.ceil(Fraction(size_bytes * 8) / bits_per_slot)


def utility(ladder: TileLadder, req: UserRequest, m: int, lower_bound: Optional[int] = None) -> Utility:
    """Utility of user ``req`` receiving tile ``ladder`` at level ``m``.

    Rules: 0 outside the RoI; NEG_INF below the guaranteed level; proportional
    to tile size on [L, R] normalized so the requested level is worth 1; flat
    above the requested level.  ``lower_bound`` overrides the request's own
    guaranteed level (used after adaptive lower-bound tuning).
    """
    if not 1 <= m <= ladder.levels:
        raise ContractError(f"level {m} out of range 1..{ladder.levels}")
    if ladder.tile_id not in req.roi:
        return Fraction(0)
    lb = req.guaranteed_level if lower_bound is None else lower_bound
    if m < lb:
        return NEG_INF
    eff = min(m, req.requested_level)
    return Fraction(ladder.size(eff), ladder.size(req.requested_level))


@dataclass
class VirtualUser:
    """All users sharing one link rate, merged with summed utilities."""

    link_rate: int
    merged_ids: frozenset
    utility_table: dict  # (tile_id, level) -> Fraction, finite contributions only
    guaranteed_level_per_tile: dict  # tile_id -> max L among interested members

    @property
    def user_id(self) -> int:
        """Representative id (the smallest merged id); used as a result key."""
        return min(self.merged_ids)

    def interested(self, tile_id: int) -> bool:
        return tile_id in self.guaranteed_level_per_tile

    def utility_of(self, tile_id: int, m: int) -> Utility:
        if tile_id not in self.guaranteed_level_per_tile:
            return Fraction(0)
        if m < self.guaranteed_level_per_tile[tile_id]:
            return NEG_INF
        return self.utility_table.get((tile_id, m), Fraction(0))


def cluster_users(requests: Sequence[UserRequest], ladders: Sequence[TileLadder]):
    """Merge users with identical link rates into virtual users, rate-ascending.

    The virtual utility at (tile, level) is the sum of the members' finite
    utilities; the per-tile guaranteed level is the max over interested
    members, which keeps lower-bound enforcement exact after merging.
    """
    if not requests:
        raise ContractError("cluster_users needs at least one request")
    by_rate = {}
    for req in requests:
        by_rate.setdefault(req.link_rate, []).append(req)
    out = []
    for rate in sorted(by_rate):
        members = by_rate[rate]
        table = {}
        lb_per_tile = {}
        for ladder in ladders:
            interested = [r for r in members if ladder.tile_id in r.roi]
            if not interested:
                continue
            lb_per_tile[ladder.tile_id] = max(r.guaranteed_level for r in interested)
            for m in range(1, ladder.levels + 1):
                total = Fraction(0)
                for r in interested:
                    u = utility(ladder, r, m)
                    if not is_neg_inf(u):
                        total += u
                table[(ladder.tile_id, m)] = total
        out.append(
            VirtualUser(
                link_rate=rate,
                merged_ids=frozenset(r.user_id for r in members),
                utility_table=table,
                guaranteed_level_per_tile=lb_per_tile,
            )
        )
    return tuple(out)


@dataclass(frozen=True)
class PlanEntry:
    tile_id: int
    level: int
    link_rate: int
    slot_cost: int
    target_user: Optional[int] = None  # None = multicast


@dataclass(frozen=True)
class TransmissionPlan:
    """The schedule: which (tile, level) goes out at which rate."""

    entries: tuple
    total_slots: int = field(default=-1)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        total = sum(e.slot_cost for e in self.entries)
        if self.total_slots == -1:
            object.__setattr__(self, "total_slots", total)
        elif self.total_slots != total:
            raise ContractError("total_slots does not match entry costs")
        # Multicast entries per tile: one entry per level, level increasing
        # with link rate.  Unicast entries (per-user) are exempt.
        per_tile = {}
        for e in self.entries:
            if e.target_user is None:
                per_tile.setdefault(e.tile_id, []).append(e)
        for tile_id, group in per_tile.items():
            levels = [e.level for e in group]
            if len(set(levels)) != len(levels):
                raise ContractError(f"tile {tile_id}: duplicate level in plan")
            group = sorted(group, key=lambda e: e.link_rate)
            if any(a.level >= b.level for a, b in zip(group, group[1:])):
                raise ContractError(f"tile {tile_id}: level must increase with link rate")

    def received_level(self, tile_id: int, link_rate: int, user_id: Optional[int] = None) -> int:
        """Highest level of ``tile_id`` reachable at ``link_rate`` (0 = none)."""
        best = 0
        for e in self.entries:
            if e.tile_id != tile_id or e.link_rate > link_rate:
                continue
            if e.target_user is not None and e.target_user != user_id:
                continue
            best = max(best, e.level)
        return best


EMPTY_PLAN = TransmissionPlan(entries=(), total_slots=0)

"""Runtime comparison of the two multi-tile solvers over a slot-budget sweep.

The workload is a fixed synthetic instance at full scale: a 16x9 tile grid,
one user per 802.11a rate, a 5-level ladder.  The joint solver's time should
grow linearly in the budget T while the per-tile-then-combine solver grows
quadratically, which is the whole point of the joint recursion.
"""

from __future__ import annotations

import time
from typing import Dict, List, Sequence

from .model import DOT11A_RATES_MBPS, SlotBudget, TileLadder, UserRequest
from .scenario_io import roi_rect_to_tiles
from .scheduler import multi_tile_naive, multi_tile_optimal

#: Per-tile byte sizes at 25 fps on a 144-tile grid, derived from stream
#: bitrates of 1.5 / 2.9 / 4.6 / 6.6 / 10.9 Mb/s.
MEDIUM_LADDER = (52, 101, 160, 229, 378)

GRID = (16, 9)


def bench_instance(levels: int = 5):
    """The standard workload: 144 tiles, 8 rates, overlapping 8x6 RoIs."""
    cols, rows = GRID
    sizes = MEDIUM_LADDER[:levels]
    tiles = tuple(TileLadder(t, sizes) for t in range(1, cols * rows + 1))
    users = tuple(
        UserRequest(
            user_id=i + 1,
            link_rate=rate * 1_000_000,
            roi=roi_rect_to_tiles(GRID, i, i % 4, 8, 6),
            requested_level=levels,
        )
        for i, rate in enumerate(DOT11A_RATES_MBPS)
    )
    return tiles, users


def run_bench(
    budgets: Sequence[int],
    include_naive: bool = True,
    repeats: int = 1,
) -> List[Dict]:
    """Wall-clock both solvers per budget; returns one row per T."""
    tiles, users = bench_instance()
    slot = SlotBudget.from_frame_rate(25)
    rows = []
    for T in budgets:
        row: Dict = {"T": int(T)}
        best = None
        for _ in range(repeats):
            t0 = time.perf_counter()
            res = multi_tile_optimal(tiles, users, T, slot)
            dt = time.perf_counter() - t0
            best = dt if best is None else min(best, dt)
        row["improved_s"] = best
        # None marks a budget too small for the lower bounds
        row["objective"] = None if res.objective == float("-inf") else float(res.objective)
        if include_naive:
            best = None
            for _ in range(repeats):
                t0 = time.perf_counter()
                res_n = multi_tile_naive(tiles, users, T, slot)
                dt = time.perf_counter() - t0
                best = dt if best is None else min(best, dt)
            row["naive_s"] = best
            if res_n.objective != res.objective:
                raise RuntimeError(f"solver disagreement at T={T}")
        rows.append(row)
    return rows

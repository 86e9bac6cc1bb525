"""Text formats: scenario files, trace files, CSV results, trace generation.

Scenario and trace files are versioned, line-oriented, human-diffable text.
Parse errors carry the offending line number.  Serialization is canonical:
parse, serialize, parse again yields an identical scenario.
"""

from __future__ import annotations

import csv
import io
import math
from fractions import Fraction
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .channel import LossModel
from .model import ContractError, TileLadder, UserRequest, is_neg_inf
from .simulator import (
    ALLOCATORS,
    DEFAULT_FRAME_PROFILE,
    EpochReport,
    Scenario,
    TraceEvent,
)

SCENARIO_HEADER = "tilecast-scenario v1"
TRACE_HEADER = "tilecast-trace v1"


class ParseError(ValueError):
    """A malformed input file; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def _tokens(text: str) -> List[Tuple[int, str]]:
    """Non-empty, comment-stripped lines with their 1-based numbers."""
    out = []
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append((i, line))
    return out


def roi_rect_to_tiles(grid: Tuple[int, int], x: int, y: int, w: int, h: int) -> frozenset:
    """Tile ids covered by a w x h rectangle at column x, row y (0-based)."""
    cols, rows = grid
    if w <= 0 or h <= 0 or x < 0 or y < 0 or x + w > cols or y + h > rows:
        raise ContractError(f"rectangle {x},{y},{w},{h} outside {cols}x{rows} grid")
    return frozenset(
        r * cols + c + 1 for r in range(y, y + h) for c in range(x, x + w)
    )


def _parse_roi(text: str, grid: Optional[Tuple[int, int]], line_no: int) -> frozenset:
    kind, _, payload = text.partition(":")
    try:
        if kind == "tiles":
            return frozenset(int(t) for t in payload.split(",") if t)
        if kind == "rect":
            if grid is None:
                raise ParseError(line_no, "rect RoI needs a [grid] section")
            x, y, w, h = (int(v) for v in payload.split(","))
            return roi_rect_to_tiles(grid, x, y, w, h)
    except (ValueError, ContractError) as exc:
        raise ParseError(line_no, f"bad RoI {text!r}: {exc}") from exc
    raise ParseError(line_no, f"RoI must be rect:x,y,w,h or tiles:a,b,c, got {text!r}")


_SIM_KEYS = {
    "epochs": int,
    "epoch_interval": float,
    "gop": int,
    "frame_rate": int,
    "allocator": str,
    "epsilon": float,
    "seed": int,
    "budget_slots": int,
    "adapt_rates": int,
    "duration": float,  # accepted for symmetry with traces; ignored
}


def parse_scenario(text: str) -> Scenario:
    """Parse a scenario document; raises ParseError with a line number."""
    lines = _tokens(text)
    if not lines or lines[0][1] != SCENARIO_HEADER:
        raise ParseError(lines[0][0] if lines else 1, f"expected header {SCENARIO_HEADER!r}")
    sections: Dict[str, List[Tuple[int, str]]] = {}
    current = None
    for no, line in lines[1:]:
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            if current in sections:
                raise ParseError(no, f"duplicate section [{current}]")
            sections[current] = []
            continue
        if current is None:
            raise ParseError(no, f"content before any section: {line!r}")
        sections[current].append((no, line))

    for required in ("rates", "ladder", "users"):
        if required not in sections:
            raise ParseError(1, f"missing [{required}] section")

    sim: Dict[str, object] = {}
    profile = DEFAULT_FRAME_PROFILE
    for no, line in sections.get("sim", ()):
        parts = line.split()
        key, vals = parts[0], parts[1:]
        if key == "frame_profile":
            try:
                profile = tuple(int(v) for v in vals)
            except ValueError:
                raise ParseError(no, f"bad frame profile {line!r}")
            continue
        if key not in _SIM_KEYS or len(vals) != 1:
            raise ParseError(no, f"unknown sim setting {line!r}")
        try:
            sim[key] = _SIM_KEYS[key](vals[0])
        except ValueError:
            raise ParseError(no, f"bad value for {key}: {vals[0]!r}")
    frame_rate = int(sim.get("frame_rate", 25))

    rate_lines = sections["rates"]
    if len(rate_lines) != 1:
        raise ParseError(rate_lines[0][0] if rate_lines else 1, "need one line of rates")
    no, line = rate_lines[0]
    try:
        rates = tuple(round(float(v) * 1_000_000) for v in line.split())
    except ValueError:
        raise ParseError(no, f"bad rate entry in {line!r}")
    if not rates:
        raise ParseError(no, "empty rate list")

    grid: Optional[Tuple[int, int]] = None
    if "grid" in sections:
        entries = sections["grid"]
        if len(entries) != 1 or "x" not in entries[0][1]:
            raise ParseError(entries[0][0] if entries else 1, "grid must be one COLSxROWS line")
        no, line = entries[0]
        try:
            cols, rows = (int(v) for v in line.split("x"))
        except ValueError:
            raise ParseError(no, f"bad grid {line!r}")
        grid = (cols, rows)

    level_sizes: List[Tuple[int, int]] = []  # (level, bytes per tile)
    for no, line in sections["ladder"]:
        parts = line.split()
        try:
            level = int(parts[0])
            rest = parts[1:]
            if rest and "x" in rest[0] and not rest[0].replace(".", "").isdigit():
                rest = rest[1:]  # optional WxH resolution label
            if len(rest) == 2 and rest[0] == "rate":
                if grid is None:
                    raise ParseError(no, "deriving sizes from a rate needs a [grid] section")
                n_tiles = grid[0] * grid[1]
                size = round(float(rest[1]) * 1_000_000 / frame_rate / n_tiles / 8)
            elif len(rest) == 1:
                size = int(rest[0])
            else:
                raise ValueError("expected 'LEVEL [WxH] BYTES' or 'LEVEL [WxH] rate MBPS'")
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(no, f"bad ladder entry {line!r}: {exc}")
        level_sizes.append((level, size))
    level_sizes.sort()
    if [l for l, _ in level_sizes] != list(range(1, len(level_sizes) + 1)):
        raise ParseError(sections["ladder"][0][0], "ladder levels must be 1..M")
    sizes = tuple(s for _, s in level_sizes)
    n_tiles = grid[0] * grid[1] if grid else None

    users = []
    for no, line in sections["users"]:
        parts = line.split()
        if len(parts) not in (4, 5):
            raise ParseError(no, f"user line needs 'ID RATE_MBPS ROI LEVEL [FLOOR]': {line!r}")
        try:
            uid = int(parts[0])
            rate = round(float(parts[1]) * 1_000_000)
            roi = _parse_roi(parts[2], grid, no)
            level = int(parts[3])
            floor = int(parts[4]) if len(parts) == 5 else 1
        except ParseError:
            raise
        except ValueError as exc:
            raise ParseError(no, f"bad user entry {line!r}: {exc}")
        if rate not in rates:
            raise ParseError(no, f"user {uid}: rate not in [rates]")
        try:
            users.append(UserRequest(uid, rate, roi, level, floor))
        except ContractError as exc:
            raise ParseError(no, str(exc))
    if not users:
        raise ParseError(1, "[users] section has no entries")
    if n_tiles is None:
        n_tiles = max((max(u.roi) for u in users if u.roi), default=1)

    try:
        ladders = tuple(TileLadder(t, sizes) for t in range(1, n_tiles + 1))
    except ContractError as exc:
        raise ParseError(sections["ladder"][0][0], str(exc))

    table: Dict[tuple, float] = {}
    default_loss = None
    for no, line in sections.get("loss", ()):
        parts = line.split()
        if parts[0] == "default" and len(parts) == 2:
            try:
                default_loss = float(parts[1])
            except ValueError:
                raise ParseError(no, f"bad default loss {parts[1]!r}")
            continue
        if len(parts) != 1 + len(rates):
            raise ParseError(no, f"loss row needs user id plus {len(rates)} probabilities")
        try:
            uid = int(parts[0])
            row = [float(v) for v in parts[1:]]
        except ValueError as exc:
            raise ParseError(no, f"bad loss row {line!r}: {exc}")
        for ri, p in enumerate(row):
            table[(uid, ri)] = p
    if default_loss is None and "loss" not in sections:
        default_loss = 0.0
    if default_loss is not None:
        for u in users:
            for ri in range(len(rates)):
                table.setdefault((u.user_id, ri), default_loss)
    try:
        loss = LossModel(table, len(rates))
    except ContractError as exc:
        raise ParseError(sections["loss"][0][0] if "loss" in sections else 1, str(exc))

    allocator = str(sim.get("allocator", "optimal"))
    if allocator not in ALLOCATORS:
        raise ParseError(1, f"unknown allocator {allocator!r}")
    try:
        return Scenario(
            ladders=ladders,
            rate_set=rates,
            users=tuple(sorted(users, key=lambda u: u.user_id)),
            loss=loss,
            n_epochs=int(sim.get("epochs", 5)),
            epoch_interval=float(sim.get("epoch_interval", 2.0)),
            gop_length=int(sim.get("gop", 25)),
            frame_rate=frame_rate,
            frame_size_profile=profile,
            allocator_choice=allocator,
            epsilon=float(sim.get("epsilon", 0.2)),
            seed=int(sim.get("seed", 0)),
            budget_slots=sim.get("budget_slots"),
            adapt_rates=bool(sim.get("adapt_rates", 0)),
            grid=grid,
        )
    except ContractError as exc:
        raise ParseError(1, str(exc))


def serialize_scenario(sc: Scenario) -> str:
    """Canonical text form; parse(serialize(parse(x))) == parse(x)."""
    out = [SCENARIO_HEADER, "", "[rates]"]
    out.append(" ".join(_mbps(r) for r in sc.rate_set))
    if sc.grid is not None:
        out += ["", "[grid]", f"{sc.grid[0]}x{sc.grid[1]}"]
    out += ["", "[ladder]"]
    for m, size in enumerate(sc.ladders[0].sizes, start=1):
        out.append(f"{m} {size}")
    out += ["", "[users]"]
    for u in sc.users:
        roi = "tiles:" + ",".join(str(t) for t in sorted(u.roi))
        out.append(
            f"{u.user_id} {_mbps(u.link_rate)} {roi} {u.requested_level} {u.guaranteed_level}"
        )
    out += ["", "[loss]"]
    for u in sc.users:
        row = " ".join(repr(sc.loss.loss(u.user_id, ri)) for ri in range(len(sc.rate_set)))
        out.append(f"{u.user_id} {row}")
    out += ["", "[sim]"]
    out.append(f"epochs {sc.n_epochs}")
    out.append(f"epoch_interval {sc.epoch_interval!r}")
    out.append(f"gop {sc.gop_length}")
    out.append(f"frame_rate {sc.frame_rate}")
    out.append("frame_profile " + " ".join(str(w) for w in sc.frame_size_profile))
    out.append(f"allocator {sc.allocator_choice}")
    out.append(f"epsilon {sc.epsilon!r}")
    out.append(f"seed {sc.seed}")
    if sc.budget_slots is not None:
        out.append(f"budget_slots {sc.budget_slots}")
    out.append(f"adapt_rates {int(sc.adapt_rates)}")
    return "\n".join(out) + "\n"


def _mbps(rate_bps: int) -> str:
    mb = rate_bps / 1_000_000
    return repr(int(mb)) if mb == int(mb) else repr(mb)


def parse_trace(text: str, grid: Optional[Tuple[int, int]] = None) -> Tuple[TraceEvent, ...]:
    """Parse a trace document into time-ordered events."""
    lines = _tokens(text)
    if not lines or lines[0][1] != TRACE_HEADER:
        raise ParseError(lines[0][0] if lines else 1, f"expected header {TRACE_HEADER!r}")
    events = []
    last_t = -math.inf
    for no, line in lines[1:]:
        parts = line.split()
        if len(parts) < 4:
            raise ParseError(no, f"trace record needs 'TIME USER KIND PAYLOAD': {line!r}")
        try:
            t = float(parts[0])
            uid = int(parts[1])
        except ValueError as exc:
            raise ParseError(no, f"bad trace record {line!r}: {exc}")
        kind = parts[2]
        if t < last_t:
            raise ParseError(no, "trace times must be non-decreasing")
        last_t = t
        try:
            if kind == "roi":
                events.append(TraceEvent(t, uid, "roi", roi=_parse_roi(parts[3], grid, no)))
            elif kind == "zoom":
                events.append(TraceEvent(t, uid, "zoom", requested_level=int(parts[3])))
            elif kind == "channel":
                events.append(
                    TraceEvent(t, uid, "channel", loss_row=tuple(float(v) for v in parts[3:]))
                )
            else:
                raise ParseError(no, f"unknown event kind {kind!r}")
        except ParseError:
            raise
        except (ValueError, ContractError) as exc:
            raise ParseError(no, f"bad trace record {line!r}: {exc}")
    return tuple(events)


def serialize_trace(events: Sequence[TraceEvent]) -> str:
    out = [TRACE_HEADER]
    for ev in events:
        if ev.kind == "roi":
            payload = "tiles:" + ",".join(str(t) for t in sorted(ev.roi))
        elif ev.kind == "zoom":
            payload = str(ev.requested_level)
        else:
            payload = " ".join(repr(float(p)) for p in ev.loss_row)
        out.append(f"{ev.time_s!r} {ev.user_id} {ev.kind} {payload}")
    return "\n".join(out) + "\n"


def generate_trace(
    grid: Tuple[int, int],
    n_users: int,
    similarity_target: float,
    duration: float,
    seed: int,
    roi_tiles: int = 12,
) -> Tuple[TraceEvent, ...]:
    """Equal-sized RoIs built from one shared block plus per-user private tiles.

    With k of the A RoI tiles shared by everyone and the rest pairwise
    disjoint, every user's overlap degree is exactly k/A, so the measured
    similarity is round(target * A) / A.  Raises when the grid cannot hold
    the private tiles.
    """
    if not 0 <= similarity_target <= 1:
        raise ContractError("similarity target must be in [0, 1]")
    if n_users < 1 or roi_tiles < 1:
        raise ContractError("need at least one user and one RoI tile")
    if roi_tiles < 10 and 0 < similarity_target < 1:
        raise ContractError("need roi_tiles >= 10 to hit targets within 0.05")
    cols, rows = grid
    total = cols * rows
    k = round(similarity_target * roi_tiles)
    needed = k + n_users * (roi_tiles - k)
    if needed > total:
        min_k = max(0, math.ceil((n_users * roi_tiles - total) / (n_users - 1))) if n_users > 1 else 0
        raise ContractError(
            f"{needed} distinct tiles needed but the grid has {total};"
            f" achievable similarity on this grid is >= {min_k / roi_tiles:.3f}"
        )
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(total) + 1)
    shared = order[:k]
    events = []
    pos = k
    for uid in range(1, n_users + 1):
        private = order[pos : pos + roi_tiles - k]
        pos += roi_tiles - k
        events.append(TraceEvent(0.0, uid, "roi", roi=frozenset(shared) | frozenset(private)))
    del duration  # RoIs are held for the whole run
    return tuple(events)


RESULT_FIELDS = (
    "epoch",
    "allocator",
    "user",
    "realized_utility",
    "goodput",
    "rate_index",
    "similarity",
    "slots_used",
)


def results_rows(reports: Sequence[EpochReport], allocator: str) -> List[dict]:
    """Flatten a report stream: one row per (epoch, user) plus one aggregate."""
    rows = []
    for rep in reports:
        for uid in sorted(rep.realized_utility):
            rows.append(
                {
                    "epoch": rep.epoch_index,
                    "allocator": allocator,
                    "user": str(uid),
                    "realized_utility": float(rep.realized_utility[uid]),
                    "goodput": rep.goodput_bps[uid],
                    "rate_index": rep.rate_indices[uid],
                    "similarity": rep.similarity,
                    "slots_used": rep.slots_used,
                }
            )
        rows.append(
            {
                "epoch": rep.epoch_index,
                "allocator": allocator,
                "user": "all",
                "realized_utility": float(rep.realized_total),
                "goodput": rep.goodput_average,
                "rate_index": "",
                "similarity": rep.similarity,
                "slots_used": rep.slots_used,
            }
        )
    return rows


def write_results(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=RESULT_FIELDS)
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()

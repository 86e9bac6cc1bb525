"""HTTP service exposing the allocator, simulator, trace generator, and bench.

The CLI talks to this app in-process by default; `tilecast serve` runs it
over the network.  Domain infeasibility maps to HTTP 409, malformed input to
422, so thin clients can translate them to exit codes without parsing text.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from fractions import Fraction

from fastapi import FastAPI
from fastapi.responses import JSONResponse

from .. import __version__
from ..feasibility import InfeasibleAtMinimum
from ..model import ContractError, InfeasibleError, UserRequest, is_neg_inf
from ..scheduler import evaluate_plan
from ..scenario_io import (
    ParseError,
    generate_trace,
    parse_scenario,
    parse_trace,
    results_rows,
    serialize_trace,
    write_results,
)
from ..simulator import (
    ALLOCATORS,
    Scenario,
    allocate_once,
    fairness,
    run_simulation,
    similarity,
)
from ..bench import run_bench
from .models import (
    BenchRequest,
    BenchResponse,
    CompareRequest,
    CompareResponse,
    CompareSummary,
    GenTraceRequest,
    GenTraceResponse,
    PlanEntryOut,
    SimulateRequest,
    SimulateResponse,
    SolveRequest,
    SolveResponse,
)

app = FastAPI(title="tilecast", version=__version__)


@app.exception_handler(ParseError)
@app.exception_handler(ContractError)
async def _bad_input(request, exc):
    return JSONResponse(status_code=422, content={"code": "parse", "message": str(exc)})


@app.exception_handler(InfeasibleError)
@app.exception_handler(InfeasibleAtMinimum)
async def _infeasible(request, exc):
    return JSONResponse(status_code=409, content={"code": "infeasible", "message": str(exc)})


def _with_overrides(sc: Scenario, *, allocator=None, seed=None, epochs=None,
                    budget_slots=None, epsilon=None, trace_text=None) -> Scenario:
    changes = {}
    if allocator is not None:
        changes["allocator_choice"] = allocator
    if seed is not None:
        changes["seed"] = seed
    if epochs is not None:
        changes["n_epochs"] = epochs
    if budget_slots is not None:
        changes["budget_slots"] = budget_slots
    if epsilon is not None:
        changes["epsilon"] = epsilon
    if trace_text is not None:
        changes["trace"] = parse_trace(trace_text, sc.grid)
    return replace(sc, **changes) if changes else sc


@app.get("/health")
async def health():
    return {"status": "ok", "version": __version__}


@app.post("/solve", response_model=SolveResponse)
def solve(req: SolveRequest) -> SolveResponse:
    sc = _with_overrides(
        parse_scenario(req.scenario),
        allocator=req.allocator,
        budget_slots=req.budget_slots,
        epsilon=req.epsilon,
    )
    slot = sc.budget()
    objective, plan = allocate_once(sc, list(sc.users), slot.slots_per_frame, slot)
    if is_neg_inf(objective):
        return SolveResponse(feasible=False)
    _, per_user_frac, _ = evaluate_plan(sc.ladders, list(sc.users), plan, enforce_bounds=False)
    per_user = {str(k): float(v) for k, v in per_user_frac.items()}
    return SolveResponse(
        feasible=True,
        objective=float(objective),
        objective_exact=str(Fraction(objective)),
        total_slots=plan.total_slots,
        per_user_utility=per_user,
        plan=[
            PlanEntryOut(
                tile=e.tile_id,
                level=e.level,
                rate_mbps=e.link_rate / 1_000_000,
                slots=e.slot_cost,
                target_user=e.target_user,
            )
            for e in plan.entries
        ],
    )


@app.post("/simulate", response_model=SimulateResponse)
def simulate(req: SimulateRequest) -> SimulateResponse:
    sc = _with_overrides(
        parse_scenario(req.scenario),
        allocator=req.allocator,
        seed=req.seed,
        epochs=req.epochs,
        budget_slots=req.budget_slots,
        epsilon=req.epsilon,
        trace_text=req.trace,
    )
    reports = run_simulation(sc)
    rows = results_rows(reports, sc.allocator_choice)
    return SimulateResponse(
        rows=rows,
        csv=write_results(rows),
        degraded_epochs=sum(1 for r in reports if r.degraded),
    )


@app.post("/compare", response_model=CompareResponse)
def compare(req: CompareRequest) -> CompareResponse:
    base = _with_overrides(
        parse_scenario(req.scenario),
        budget_slots=req.budget_slots,
        epsilon=req.epsilon,
        trace_text=req.trace,
    )
    allocators = tuple(req.allocators) if req.allocators else ALLOCATORS
    for name in allocators:
        if name not in ALLOCATORS:
            raise ContractError(f"unknown allocator {name!r}")

    def one(args):
        name, seed = args
        return name, seed, run_simulation(replace(base, allocator_choice=name, seed=seed))

    jobs = [(name, seed) for name in allocators for seed in req.seeds]
    with ThreadPoolExecutor(max_workers=min(8, len(jobs))) as pool:
        done = {(n, s): reps for n, s, reps in pool.map(one, jobs)}

    rows = []
    summary = []
    for name in allocators:
        totals, goodputs, stds = [], [], []
        bad_runs = 0
        for seed in req.seeds:
            reports = done[(name, seed)]
            rows.extend(results_rows(reports, name))
            totals.extend(float(r.realized_total) for r in reports)
            goodputs.extend(r.goodput_average for r in reports)
            stds.extend(fairness(r.realized_utility) for r in reports)
            if any(r.degraded for r in reports):
                bad_runs += 1
        summary.append(
            CompareSummary(
                allocator=name,
                mean_realized_utility=sum(totals) / len(totals),
                mean_goodput=sum(goodputs) / len(goodputs),
                mean_fairness=sum(stds) / len(stds),
                infeasible_runs=bad_runs,
            )
        )
    return CompareResponse(rows=rows, csv=write_results(rows), summary=summary)


@app.post("/gen-trace", response_model=GenTraceResponse)
def gen_trace(req: GenTraceRequest) -> GenTraceResponse:
    events = generate_trace(
        (req.cols, req.rows),
        req.n_users,
        req.similarity,
        req.duration,
        req.seed,
        roi_tiles=req.roi_tiles,
    )
    probes = [UserRequest(e.user_id, 6_000_000, e.roi, 1) for e in events]
    return GenTraceResponse(
        trace=serialize_trace(events), measured_similarity=similarity(probes)
    )


@app.post("/bench", response_model=BenchResponse)
def bench(req: BenchRequest) -> BenchResponse:
    return BenchResponse(
        rows=run_bench(req.budgets, include_naive=req.include_naive, repeats=req.repeats)
    )

"""HTTP service and CLI tests."""

import warnings
from pathlib import Path

import pytest

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    from fastapi.testclient import TestClient

from tilecast.cli import main
from tilecast.service.app import app

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
DESK = (SCENARIOS / "desk.scn").read_text()
AUDITORIUM = (SCENARIOS / "auditorium.scn").read_text()


@pytest.fixture(scope="module")
def client():
    with TestClient(app, raise_server_exceptions=False) as c:
        yield c


def test_health(client):
    body = client.get("/health").json()
    assert body["status"] == "ok"


def test_solve_desk(client):
    resp = client.post("/solve", json={"scenario": DESK})
    assert resp.status_code == 200
    body = resp.json()
    assert body["feasible"]
    assert body["objective"] == 4
    assert {(e["tile"], e["level"]) for e in body["plan"]} == {(1, 2), (2, 2)}
    assert all(e["rate_mbps"] == 6 for e in body["plan"])


def test_solve_respects_overrides(client):
    resp = client.post(
        "/solve", json={"scenario": DESK, "allocator": "unicast", "budget_slots": 12}
    )
    body = resp.json()
    assert body["feasible"]
    # 12 slots cover exactly the level-1 reservations for both users
    assert body["objective"] == 2


def test_solve_infeasible_maps_to_409(client):
    resp = client.post("/solve", json={"scenario": DESK, "budget_slots": 3})
    assert resp.status_code == 409
    assert resp.json()["code"] == "infeasible"


def test_parse_error_maps_to_422(client):
    resp = client.post("/solve", json={"scenario": "garbage"})
    assert resp.status_code == 422


def test_simulate_lossless(client):
    resp = client.post("/simulate", json={"scenario": DESK})
    assert resp.status_code == 200
    body = resp.json()
    assert body["degraded_epochs"] == 0
    aggregate = [r for r in body["rows"] if r["user"] == "all"]
    assert all(r["realized_utility"] == 4 for r in aggregate)


def test_compare_row_count_invariant(client):
    seeds = [0, 1]
    resp = client.post("/compare", json={"scenario": DESK, "seeds": seeds})
    body = resp.json()
    aggregate = [r for r in body["rows"] if r["user"] == "all"]
    n_epochs = 3  # from the scenario file
    assert len(aggregate) == 5 * len(seeds) * n_epochs
    names = {s["allocator"] for s in body["summary"]}
    assert names == {"optimal", "naive", "unicast", "multicast", "approximation"}


def test_compare_unconstrained_all_tie(client):
    resp = client.post(
        "/compare", json={"scenario": DESK, "seeds": [0], "budget_slots": 2000}
    )
    body = resp.json()
    utilities = {s["allocator"]: s["mean_realized_utility"] for s in body["summary"]}
    assert all(v == 4 for v in utilities.values())


def test_gen_trace_endpoint(client):
    resp = client.post(
        "/gen-trace",
        json={"cols": 16, "rows": 9, "n_users": 8, "similarity": 0.5, "seed": 1},
    )
    body = resp.json()
    assert abs(body["measured_similarity"] - 0.5) <= 0.05
    assert body["trace"].startswith("tilecast-trace v1")


def test_cli_solve_exit_codes(tmp_path, capsys):
    scn = tmp_path / "desk.scn"
    scn.write_text(DESK)
    assert main(["solve", "--scenario", str(scn)]) == 0
    out = capsys.readouterr().out
    assert "objective 4" in out
    assert "level 2" in out

    with pytest.raises(SystemExit) as exc:
        main(["solve", "--scenario", str(scn), "--budget-slots", "3"])
    assert exc.value.code == 1

    bad = tmp_path / "bad.scn"
    bad.write_text("nope\n")
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--scenario", str(bad)])
    assert exc.value.code == 2

    with pytest.raises(SystemExit) as exc:
        main(["solve", "--scenario", str(tmp_path / "missing.scn")])
    assert exc.value.code == 2


def test_cli_simulate_writes_results(tmp_path):
    scn = tmp_path / "desk.scn"
    scn.write_text(DESK)
    out = tmp_path / "results.csv"
    assert main(["simulate", "--scenario", str(scn), "--out", str(out)]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0].startswith("epoch,allocator,user")
    assert len(lines) == 1 + 3 * 3  # header + 3 epochs x (2 users + aggregate)


def test_cli_gen_trace_and_simulate_with_trace(tmp_path):
    trace = tmp_path / "trace.txt"
    assert main(
        ["gen-trace", "--grid", "16x9", "--users", "10", "--similarity", "0.5",
         "--seeds", "4", "--out", str(trace)]
    ) == 0
    scn = tmp_path / "aud.scn"
    scn.write_text(AUDITORIUM)
    out = tmp_path / "results.csv"
    code = main(
        ["simulate", "--scenario", str(scn), "--trace", str(trace),
         "--allocator", "multicast", "--out", str(out)]
    )
    assert code == 0
    assert out.read_text().count("\n") == 1 + 3 * 11


def test_cli_unicast_infeasible_exit_1(tmp_path):
    scn = tmp_path / "aud.scn"
    scn.write_text(AUDITORIUM)
    with pytest.raises(SystemExit) as exc:
        main(["solve", "--scenario", str(scn), "--allocator", "unicast"])
    assert exc.value.code == 1

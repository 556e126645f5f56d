from tspq import (
    ReportError, RunRecord, Tour, aggregate, approximation_ratio, emit_report, improvement_pct,
    relative_excess_pct,
)
from tspq.metrics import CSV_COLUMNS, format_appendix_table, read_csv, read_records
from mockmpi import mock_mpiexec
import csv
import json
import numpy as np
import pytest


def make_record(method="quantum", n=5, seed=0, cost=5000.0, classical=4500.0, depth=20, gates=60):
    return RunRecord(
        method=method, n=n, seed=seed, best_cost=cost, best_tour=Tour(list(range(n))),
        classical_cost=classical, approximation_ratio=cost / classical,
        iterations_used=10, circuit_depth=depth, total_gates=gates,
        valid_sample_fraction=0.5, wall_time=0.1, fallback_used=False,
    )


def synthetic_records(seed, count=50):
    rng = np.random.default_rng(seed)
    records = []
    for i in range(count):
        method = ["quantum", "hybrid"][i % 2]
        n = 4 + i % 3
        records.append(make_record(method, n, i, cost=float(rng.uniform(4000, 8000)),
                                   classical=4000.0 + 100 * n, depth=int(rng.integers(5, 50)),
                                   gates=int(rng.integers(10, 200))))
    return records


@pytest.mark.parametrize("quantum,classical,ratio,excess", [
    (7857.69, 6456, 1.2171, 21.71),
    (7184.91, 6456, 1.1129, 11.29),
])
def test_reported_values(quantum, classical, ratio, excess):
    assert abs(approximation_ratio(quantum, classical) - ratio) < 5e-4
    assert abs(relative_excess_pct(quantum, classical) - excess) < 0.05


def test_excess_is_negated_improvement():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        a, b = rng.uniform(1, 1e4, size=2)
        assert np.isclose(relative_excess_pct(a, b), -improvement_pct(b, a))


@pytest.mark.parametrize("f", [approximation_ratio, relative_excess_pct])
@pytest.mark.parametrize("baseline", [0.0, -5.0])
def test_bad_baseline(f, baseline):
    with pytest.raises(ValueError):
        f(100.0, baseline)


def test_improvement_bad_baseline():
    with pytest.raises(ValueError):
        improvement_pct(0.0, 100.0)


def test_aggregate_single_record():
    stats = aggregate([make_record(cost=5000.0)])
    assert len(stats) == 1
    s = stats[0]
    assert s.runs == 1
    assert s.mean_cost == 5000.0
    assert s.std_cost == 0.0
    assert s.ci95_halfwidth == 0.0
    assert s.min_cost == s.max_cost == 5000.0


def test_aggregate_small():
    records = [make_record(seed=i, cost=c) for i, c in enumerate([1.0, 2.0, 3.0])]
    s, = aggregate(records)
    assert np.isclose(s.mean_cost, 2.0)
    assert np.isclose(s.std_cost, 1.0)
    assert np.isclose(s.ci95_halfwidth, 1.96 / np.sqrt(3))


def test_aggregate_matches_numpy():
    records = synthetic_records(1)
    stats = aggregate(records)
    assert len(stats) == 6
    for s in stats:
        group = [r for r in records if (r.method, r.n) == (s.method, s.n)]
        costs = np.array([r.best_cost for r in group])
        assert s.runs == len(group)
        assert np.isclose(s.mean_cost, costs.mean())
        assert np.isclose(s.std_cost, costs.std(ddof=1))
        assert np.isclose(s.ci95_halfwidth, 1.96 * costs.std(ddof=1) / np.sqrt(len(group)))
        assert np.isclose(s.mean_ratio, np.mean([r.approximation_ratio for r in group]))
        assert np.isclose(s.mean_circuit_depth, np.mean([r.circuit_depth for r in group]))
        assert np.isclose(s.mean_total_gates, np.mean([r.total_gates for r in group]))
        assert np.isclose(s.mean_relative_excess_pct,
                          np.mean([relative_excess_pct(r.best_cost, r.classical_cost) for r in group]))


def test_aggregate_order_independent():
    records = synthetic_records(2)
    shuffled = [records[i] for i in np.random.default_rng(3).permutation(len(records))]
    for a, b in zip(aggregate(records), aggregate(shuffled)):
        assert (a.method, a.n, a.runs) == (b.method, b.n, b.runs)
        assert np.isclose(a.mean_cost, b.mean_cost)
        assert np.isclose(a.std_cost, b.std_cost)


def test_aggregate_requested_groups():
    records = synthetic_records(4)
    stats = aggregate(records, groups=[("hybrid", 5), ("classical", 4), ("quantum", 4)])
    assert [(s.method, s.n) for s in stats] == [("hybrid", 5), ("quantum", 4)]


def run_aggregate(comm):
    records = synthetic_records(5)
    serial = aggregate(records)
    mine = records[comm.rank::comm.size]
    parallel = aggregate(mine, comm=comm)
    assert len(parallel) == len(serial)
    for a, b in zip(serial, parallel):
        assert (a.method, a.n, a.runs) == (b.method, b.n, b.runs)
        assert np.isclose(a.mean_cost, b.mean_cost)
        assert np.isclose(a.std_cost, b.std_cost)
        assert a.min_cost == b.min_cost and a.max_cost == b.max_cost


@pytest.mark.parametrize("nproc", [1, 2, 4])
def test_aggregate_parallel(nproc):
    mock_mpiexec(nproc, run_aggregate)


def test_empty_csv_has_header(tmp_path):
    path, = emit_report([], [], "csv", tmp_path)
    with open(path) as f:
        lines = f.read().splitlines()
    assert lines == [",".join(CSV_COLUMNS)]
    assert read_csv(path) == []


def test_csv_row(tmp_path):
    record = make_record(cost=7857.69, classical=6456.0)
    path, = emit_report(aggregate([record]), [record], "csv", tmp_path)
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert len(rows) == 2
    assert len(rows[1]) == 12
    row, = read_csv(path)
    assert row["method"] == "quantum"
    assert row["n"] == 5
    assert row["fallback_used"] is False
    assert np.isclose(row["relative_excess_pct"], 21.71, atol=0.05)


def test_json_round_trip(tmp_path):
    records = synthetic_records(6, count=10)
    stats = aggregate(records)
    records_path, stats_path = emit_report(stats, records, "json", tmp_path)
    back = read_records(records_path)
    assert [r.to_dict() for r in back] == [r.to_dict() for r in records]
    with open(stats_path) as f:
        saved = json.load(f)
    assert saved == [s.to_dict() for s in stats]


def test_table(tmp_path):
    stats = aggregate(synthetic_records(7))
    path, = emit_report(stats, [], "table", tmp_path)
    with open(path) as f:
        text = f.read()
    assert text == format_appendix_table(stats)
    block = text.split("\n\n")[0].splitlines()
    assert block[0] == "Method: hybrid"
    assert [line.split("  ")[0] for line in block[2:]] == [
        "Quantum Solution", "Classical Solution", "Approximation Ratio", "Circuit Depth", "Total Gates",
    ]


def test_unwritable_destination(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(ReportError):
        emit_report([], [], "csv", blocker)
    with pytest.raises(ReportError):
        emit_report([], [], "csv", blocker / "below")


def test_corrupt_records(tmp_path):
    path = tmp_path / "records.jsonl"
    path.write_text(make_record().to_json() + "\n{not json\n")
    with pytest.raises(ReportError):
        read_records(path)


def test_unknown_format(tmp_path):
    with pytest.raises(ValueError):
        emit_report([], [], "xml", tmp_path)

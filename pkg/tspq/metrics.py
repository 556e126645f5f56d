"""Evaluation formulas, multi-run statistics and result files."""
import csv
import json
import logging
import os
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ReportError
from .statistics import GroupedStatistics, sample_variance

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "method", "n", "seed", "best_cost_km", "classical_cost_km", "approximation_ratio",
    "relative_excess_pct", "circuit_depth", "total_gates", "valid_sample_fraction",
    "fallback_used", "wall_time_s",
)
TABLE_ROWS = (
    ("Quantum Solution", "mean_cost", "{:.2f}"),
    ("Classical Solution", "mean_classical_cost", "{:.2f}"),
    ("Approximation Ratio", "mean_ratio", "{:.4f}"),
    ("Circuit Depth", "mean_circuit_depth", "{:.1f}"),
    ("Total Gates", "mean_total_gates", "{:.1f}"),
)
Z_95 = 1.96


def _check_baseline(value):
    if not value > 0:
        raise ValueError(f"Baseline cost must be positive, got {value}")


def approximation_ratio(c_quantum, c_classical):
    """c_quantum / c_classical; 1.0 means the optimum was found."""
    _check_baseline(c_classical)
    return c_quantum / c_classical


def relative_excess_pct(c_method, c_classical):
    """Percentage by which a cost exceeds the classical one; positive is worse."""
    _check_baseline(c_classical)
    return (c_method - c_classical) / c_classical * 100.0


def improvement_pct(mean_classical, mean_quantum):
    """Percentage reduction of the mean cost relative to the classical mean."""
    _check_baseline(mean_classical)
    return (mean_classical - mean_quantum) / mean_classical * 100.0


@dataclass(frozen=True)
class MethodStats:
    """Summary of all runs of one method on one instance size.

    Costs are km.  ``std_cost`` uses the n-1 denominator and
    ``ci95_halfwidth`` is 1.96 std / sqrt(runs).
    """
    method: str
    n: int
    runs: int
    mean_cost: float
    std_cost: float
    min_cost: float
    max_cost: float
    mean_ratio: float
    ci95_halfwidth: float
    mean_classical_cost: float
    mean_relative_excess_pct: float
    mean_circuit_depth: float
    mean_total_gates: float

    def to_dict(self):
        return asdict(self)


_QUANTITIES = (
    ("cost", lambda r: r.best_cost),
    ("ratio", lambda r: r.approximation_ratio),
    ("classical", lambda r: r.classical_cost),
    ("excess", lambda r: relative_excess_pct(r.best_cost, r.classical_cost)),
    ("depth", lambda r: r.circuit_depth),
    ("gates", lambda r: r.total_gates),
)


def _shared_groups(comm, keys):
    # Every process must bin the same way, so the root takes the union and broadcasts it.
    if comm.Get_rank() > 0:
        comm.send(sorted(keys), dest=0)
    else:
        keys = set(keys)
        for source in range(1, comm.Get_size()):
            keys.update(tuple(k) for k in comm.recv(source=source))
    return comm.bcast(sorted(keys), root=0)


def aggregate(records, comm=None, groups=None):
    """Statistics per (method, n) group.

    Parameters
    ----------
    records: sequence of RunRecord
        in parallel, the records held by this process
    comm: MPI communicator, optional
        merge the partial statistics of every process; all of them get
        the result
    groups: sequence of (method, n), optional
        the groups to report, in order; default every group present

    Returns
    -------
    stats: list of MethodStats
        groups without records are skipped with a warning
    """
    records = list(records)
    if groups is None:
        keys = {(r.method, r.n) for r in records}
        groups = _shared_groups(comm, keys) if comm is not None and comm.Get_size() > 1 else sorted(keys)
    groups = [tuple(g) for g in groups]
    index = {g: i for i, g in enumerate(groups)}

    results = {}
    for name, value in _QUANTITIES:
        calc = GroupedStatistics(len(groups))
        for r in records:
            i = index.get((r.method, r.n))
            if i is not None:
                calc.add_datum(i, float(value(r)))
        results[name] = calc.collect(comm, mode="allgather")

    count, mean, variance, lo, hi = results["cost"]
    std = np.sqrt(sample_variance(count, variance))
    stats = []
    for i, (method, n) in enumerate(groups):
        runs = int(count[i])
        if runs == 0:
            logger.warning("No records for %s on %d cities; skipping", method, n)
            continue
        stats.append(MethodStats(
            method=method,
            n=int(n),
            runs=runs,
            mean_cost=float(mean[i]),
            std_cost=float(std[i]),
            min_cost=float(lo[i]),
            max_cost=float(hi[i]),
            mean_ratio=float(results["ratio"][1][i]),
            ci95_halfwidth=float(Z_95 * std[i] / np.sqrt(runs)),
            mean_classical_cost=float(results["classical"][1][i]),
            mean_relative_excess_pct=float(results["excess"][1][i]),
            mean_circuit_depth=float(results["depth"][1][i]),
            mean_total_gates=float(results["gates"][1][i]),
        ))
    return stats


def record_row(record):
    """The CSV row of a record, as a dict keyed by CSV_COLUMNS."""
    return {
        "method": record.method,
        "n": record.n,
        "seed": record.seed,
        "best_cost_km": record.best_cost,
        "classical_cost_km": record.classical_cost,
        "approximation_ratio": record.approximation_ratio,
        "relative_excess_pct": relative_excess_pct(record.best_cost, record.classical_cost),
        "circuit_depth": record.circuit_depth,
        "total_gates": record.total_gates,
        "valid_sample_fraction": record.valid_sample_fraction,
        "fallback_used": record.fallback_used,
        "wall_time_s": record.wall_time,
    }


def _opener(path, mode="w"):
    try:
        return open(path, mode, encoding="utf-8", newline="" if path.endswith(".csv") else None)
    except OSError as err:
        raise ReportError(f"Cannot open ({err.strerror})", path) from err


def write_csv(records, path):
    path = os.fspath(path)
    with _opener(path) as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for r in records:
            writer.writerow(record_row(r))
    return path


_CSV_TYPES = {"n": int, "seed": int, "circuit_depth": int, "total_gates": int,
              "fallback_used": lambda s: s == "True", "method": str}


def read_csv(path):
    """Rows of a results CSV with their numeric types restored."""
    path = os.fspath(path)
    with _opener(path, "r") as f:
        reader = csv.DictReader(f)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise ReportError("Unexpected CSV columns", path)
        try:
            return [{k: _CSV_TYPES.get(k, float)(v) for k, v in row.items()} for row in reader]
        except ValueError as err:
            raise ReportError(f"Corrupt CSV row ({err})", path) from err


def write_records(records, path, mode="w"):
    """Write records as JSON lines."""
    path = os.fspath(path)
    with _opener(path, mode) as f:
        for r in records:
            f.write(r.to_json() + "\n")
    return path


def read_records(path):
    """Read the RunRecords of a JSON-lines file."""
    from .hybrid import RunRecord

    path = os.fspath(path)
    records = []
    with _opener(path, "r") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                records.append(RunRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as err:
                raise ReportError(f"Corrupt record on line {lineno} ({err})", path) from err
    return records


def write_stats(stats, path):
    path = os.fspath(path)
    with _opener(path) as f:
        json.dump([s.to_dict() for s in stats], f, indent=2)
        f.write("\n")
    return path


def format_appendix_table(stats):
    """Text tables, one per method, with a column per instance size."""
    blocks = []
    methods = sorted({s.method for s in stats})
    for method in methods:
        rows = sorted((s for s in stats if s.method == method), key=lambda s: s.n)
        width = max(len(label) for label, _, _ in TABLE_ROWS) + 2
        header = "Cities".ljust(width) + "".join(f"{s.n:>14d}" for s in rows)
        lines = [f"Method: {method}", header]
        for label, attr, fmt in TABLE_ROWS:
            lines.append(label.ljust(width) + "".join(f"{fmt.format(getattr(s, attr)):>14}" for s in rows))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def emit_report(stats, records, fmt, destination):
    """Write results in one format to a directory.

    csv writes ``records.csv``; json writes ``records.jsonl`` and
    ``stats.json``; table writes ``tables.txt``.

    Parameters
    ----------
    stats: list of MethodStats
    records: list of RunRecord
    fmt: str
        'csv', 'json' or 'table'
    destination: str or Path
        directory, created if missing

    Returns
    -------
    paths: list of str
        files written
    """
    destination = os.fspath(destination)
    try:
        os.makedirs(destination, exist_ok=True)
    except OSError as err:
        raise ReportError(f"Cannot create directory ({err.strerror})", destination) from err

    if fmt == "csv":
        return [write_csv(records, os.path.join(destination, "records.csv"))]
    if fmt == "json":
        return [write_records(records, os.path.join(destination, "records.jsonl")),
                write_stats(stats, os.path.join(destination, "stats.json"))]
    if fmt == "table":
        path = os.path.join(destination, "tables.txt")
        with _opener(path) as f:
            f.write(format_appendix_table(stats))
        return [path]
    raise ValueError(f"Unknown report format {fmt!r}")

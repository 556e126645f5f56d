"""The ``tspq`` command: single solves, experiment sweeps and reports.

Exit codes: 0 success, 2 bad arguments or input, 3 infeasible
configuration, 4 I/O failure or corrupt result files.
"""
import argparse
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .config import load_config, normalize_method
from .errors import (
    ConfigError, EncodingError, InfeasibleConfigError, InvalidInstanceError, MalformedTourError,
    ReportError, TspqError,
)
from .hybrid import ParameterArchive, solve
from .instance import EUROPEAN_CITIES, load_city_pool, select_subinstance
from .metrics import aggregate, emit_report, format_appendix_table, read_records, write_records

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4


def default_output_dir():
    """``$TSPQ_RESULTS_DIR/<timestamp>``, with ``./results`` as the default root."""
    root = os.environ.get("TSPQ_RESULTS_DIR", "results")
    return os.path.join(root, time.strftime("%Y%m%d-%H%M%S"))


def _add_solve_options(parser):
    parser.add_argument("--config", help="JSON file of solve settings")
    parser.add_argument("--encoding", choices=["auto", "qubo", "compact"])
    parser.add_argument("--noise", action="store_true", default=None,
                        help="simulate gate and readout noise with the default device figures")
    parser.add_argument("--shots", type=int)
    parser.add_argument("--p", type=int, help="QAOA layers")
    parser.add_argument("--max-iters", type=int, dest="max_iters")
    parser.add_argument("--k", type=int, help="clusters for the hybrid methods")
    parser.add_argument("--ml-runs", type=int, dest="ml_runs")
    parser.add_argument("--pool", help="JSON city pool; default the built-in European cities")


def build_parser():
    parser = argparse.ArgumentParser(prog="tspq", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0,
                        help="-v for progress, -vv for debugging output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one instance and print its record")
    p.add_argument("--method", required=True)
    p.add_argument("--cities", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="also append the record to OUT/records.jsonl")
    _add_solve_options(p)

    p = sub.add_parser("experiment", help="seeded runs over methods and instance sizes")
    p.add_argument("--min", type=int, default=4, dest="min_n")
    p.add_argument("--max", type=int, default=8, dest="max_n")
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--methods", default="classical,quantum",
                   help="comma separated, e.g. classical,quantum,quantum-ml,hybrid,hybrid-ml")
    p.add_argument("--seed-base", type=int, default=0, dest="seed_base")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--mpi", action="store_true", help="share the cells among MPI processes")
    _add_solve_options(p)

    p = sub.add_parser("report", help="rebuild statistics and tables from stored records")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["csv", "json", "table"], default="table")
    p.add_argument("--out", help="default: the input directory")
    return parser


def _config(args, **extra):
    return load_config(
        args.config, encoding=args.encoding, noise=args.noise, shots=args.shots, p=args.p,
        max_iters=args.max_iters, k=args.k, ml_runs=args.ml_runs, **extra
    )


def _pool(args):
    return EUROPEAN_CITIES if args.pool is None else load_city_pool(args.pool)


def cmd_solve(args):
    config = _config(args, method=normalize_method(args.method), seed=args.seed)
    instance = select_subinstance(_pool(args), args.cities, args.seed,
                                  config.min_cities, config.max_cities)
    record = solve(instance, config)
    if args.out is not None:
        try:
            os.makedirs(args.out, exist_ok=True)
        except OSError as err:
            raise ReportError(f"Cannot create directory ({err.strerror})", args.out) from err
        write_records([record], os.path.join(args.out, "records.jsonl"), mode="a")
    print(record.to_json())
    return EXIT_OK


def run_cell(method, n, seeds, config, pool, out, archive):
    """Solve every seed of one (method, n) cell.

    The same seed picks the instance and drives the solver.  Failures are
    logged and returned instead of raised.

    Returns
    -------
    records: list of RunRecord
    failures: list of dict
    """
    records, failures = [], []
    for seed in seeds:
        try:
            instance = select_subinstance(pool, n, seed, config.min_cities, config.max_cities)
            records.append(solve(instance, config.replace(method=method, seed=seed), archive.fork()))
        except Exception as err:
            logger.exception("Cell %s n=%d seed %d failed", method, n, seed)
            failures.append({"method": method, "n": n, "seed": seed,
                             "error": f"{type(err).__name__}: {err}"})
    if out is not None:
        os.makedirs(os.path.join(out, "records"), exist_ok=True)
        write_records(records, os.path.join(out, "records", f"{method}_n{n}.jsonl"))
    logger.info("Cell %s n=%d: %d records, %d failures", method, n, len(records), len(failures))
    return records, failures


def _run_cell_args(args):
    return run_cell(*args)


def run_experiment(config, methods, n_values, seeds, pool=EUROPEAN_CITIES, out=None,
                   jobs=1, comm=None):
    """Run a sweep of (method, n) cells.

    Cells go to a process pool when ``jobs > 1``, or are dealt round-robin
    to MPI processes when ``comm`` is given, in which case only the root
    returns the combined results.

    Returns
    -------
    records: list of RunRecord or None
        in cell order: methods outer, sizes inner
    failures: list of dict or None
    """
    cells = [(m, n) for m in methods for n in n_values]
    archive = ParameterArchive(config.archive_path)
    tasks = [(m, n, list(seeds), config, tuple(pool), out, archive) for m, n in cells]

    if comm is not None and comm.Get_size() > 1:
        rank, size = comm.Get_rank(), comm.Get_size()
        mine = {i: run_cell(*tasks[i]) for i in range(rank, len(tasks), size)}
        if rank > 0:
            comm.send(mine, dest=0)
            return None, None
        for source in range(1, size):
            mine.update(comm.recv(source=source))
        results = [mine[i] for i in range(len(tasks))]
    elif jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(_run_cell_args, tasks))
    else:
        results = [run_cell(*t) for t in tasks]

    records = [r for cell, _ in results for r in cell]
    failures = [f for _, cell in results for f in cell]
    return records, failures


def cmd_experiment(args):
    config = _config(args)
    methods = [normalize_method(m) for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise ConfigError("No methods given")
    if not config.min_cities <= args.min_n <= args.max_n <= config.max_cities:
        raise ConfigError(f"City range [{args.min_n}, {args.max_n}] must lie within "
                          f"[{config.min_cities}, {config.max_cities}]")
    if args.runs < 1:
        raise ConfigError("--runs must be at least 1")

    comm = None
    if args.mpi:
        from mpi4py import MPI
        comm = MPI.COMM_WORLD
    rank = 0 if comm is None else comm.Get_rank()

    out = args.out or default_output_dir()
    try:
        os.makedirs(os.path.join(out, "records"), exist_ok=True)
    except OSError as err:
        raise ReportError(f"Cannot create directory ({err.strerror})", out) from err

    seeds = range(args.seed_base, args.seed_base + args.runs)
    records, failures = run_experiment(config, methods, range(args.min_n, args.max_n + 1), seeds,
                                       _pool(args), out, args.jobs, comm)
    if rank > 0:
        return EXIT_OK

    stats = aggregate(records)
    for fmt in ("json", "csv", "table"):
        emit_report(stats, records, fmt, out)
    with open(os.path.join(out, "failures.json"), "w", encoding="utf-8") as f:
        json.dump(failures, f, indent=2)
    print(out)
    if failures:
        logger.warning("%d runs failed; see %s", len(failures), os.path.join(out, "failures.json"))
    return EXIT_OK


def _find_records(directory):
    combined = os.path.join(directory, "records.jsonl")
    if os.path.exists(combined):
        return [combined]
    cells = os.path.join(directory, "records")
    if os.path.isdir(cells):
        return sorted(os.path.join(cells, f) for f in os.listdir(cells) if f.endswith(".jsonl"))
    return []


def cmd_report(args):
    if not os.path.isdir(args.input):
        raise ConfigError(f"No such results directory: {args.input}")
    records = [r for path in _find_records(args.input) for r in read_records(path)]
    if not records:
        raise ConfigError(f"No records found in {args.input}")
    stats = aggregate(records)
    for path in emit_report(stats, records, args.format, args.out or args.input):
        logger.info("Wrote %s", path)
    if args.format == "table":
        print(format_appendix_table(stats), end="")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "experiment": cmd_experiment, "report": cmd_report}


def main(argv=None):
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(asctime)s %(name)s %(levelname)s: %(message)s")

    try:
        return COMMANDS[args.command](args)
    except InfeasibleConfigError as err:
        print(f"tspq: infeasible configuration: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ReportError as err:
        print(f"tspq: {err}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, InvalidInstanceError, MalformedTourError, EncodingError) as err:
        print(f"tspq: {err}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as err:
        print(f"tspq: {err}", file=sys.stderr)
        return EXIT_IO
    except TspqError as err:
        print(f"tspq: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

"""Quantum-only and hybrid solve pipelines.

A quantum run encodes an instance, tunes QAOA angles with Nelder-Mead
on the exact expected energy, samples the tuned circuit and keeps the
cheapest valid tour it saw.  The hybrid pipeline first splits the cities
with K-Means, runs the quantum pipeline on each group as an open path
between fixed entry and exit cities, and stitches the paths together.
The ``_ml`` variants pool many runs, learn tour cost from the samples
with a random forest, and pick from the re-ranked candidates.
"""
import itertools
import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .classical import brute_force_optimal
from .config import SolveConfig
from .errors import EncodingError, InfeasibleConfigError, InvalidInstanceError, MalformedTourError
from .instance import City, Tour, haversine_km, nearest_neighbor_tour, tour_cost
from .ml import TrainingSet, featurize, forest_fit, kmeans, with_seed
from .metrics import approximation_ratio
from .qsim import (
    CompactCostTable, QaoaParams, apply_gate_noise, build_compact_cost_circuit, build_qaoa_circuit,
    circuit_metrics, compact_cost_table, expected_value, qaoa_statevector, sample, simulate,
)
from .qubo import IsingModel, decode_bitstring, encode_tour, encode_tsp_qubo, ising_energies, qubo_to_ising

logger = logging.getLogger(__name__)

MAX_QUBITS = 16
# largest instance "auto" still encodes as a QUBO
AUTO_QUBO_MAX_CITIES = 5
STALL_TOLERANCE_KM = 1e-6

RECORD_FIELDS = (
    "method", "n", "seed", "best_cost", "best_tour", "classical_cost", "approximation_ratio",
    "iterations_used", "circuit_depth", "total_gates", "valid_sample_fraction", "wall_time",
    "fallback_used",
)


@dataclass
class RunRecord:
    """Outcome of one solve, as written to the results files."""
    method: str
    n: int
    seed: int
    best_cost: float
    best_tour: Tour
    classical_cost: float
    approximation_ratio: float
    iterations_used: int = 0
    circuit_depth: int = 0
    total_gates: int = 0
    valid_sample_fraction: float = 1.0
    wall_time: float = 0.0
    fallback_used: bool = False

    def to_dict(self):
        out = {name: getattr(self, name) for name in RECORD_FIELDS}
        out["best_tour"] = self.best_tour.to_list()
        return out

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d):
        missing = [name for name in RECORD_FIELDS if name not in d]
        if missing:
            raise KeyError(f"Run record lacks {', '.join(missing)}")
        return cls(
            method=str(d["method"]),
            n=int(d["n"]),
            seed=int(d["seed"]),
            best_cost=float(d["best_cost"]),
            best_tour=Tour(d["best_tour"]),
            classical_cost=float(d["classical_cost"]),
            approximation_ratio=float(d["approximation_ratio"]),
            iterations_used=int(d["iterations_used"]),
            circuit_depth=int(d["circuit_depth"]),
            total_gates=int(d["total_gates"]),
            valid_sample_fraction=float(d["valid_sample_fraction"]),
            wall_time=float(d["wall_time"]),
            fallback_used=bool(d["fallback_used"]),
        )


class ParameterArchive:
    """Best QAOA angles seen so far, per (cities, encoding, layers).

    Entries are read once from a JSON-lines file when the archive is
    created; new entries are appended to that file and kept in memory,
    so later runs in the same process see them but other processes only
    see what was on disk at their start.
    """

    def __init__(self, path=None, entries=None):
        self.path = path
        if entries is None:
            entries = self._read(path) if path is not None else []
        self._entries = list(entries)

    @staticmethod
    def _read(path):
        entries = []
        try:
            with open(path, encoding="utf-8") as f:
                for line in f:
                    if not line.strip():
                        continue
                    try:
                        e = json.loads(line)
                        entries.append({
                            "n": int(e["n"]), "encoding": str(e["encoding"]), "p": int(e["p"]),
                            "gammas": [float(g) for g in e["gammas"]],
                            "betas": [float(b) for b in e["betas"]],
                            "energy": float(e["energy"]),
                        })
                    except (ValueError, KeyError, TypeError):
                        logger.warning("Skipping unreadable archive line in %s", path)
        except FileNotFoundError:
            pass
        return entries

    def __len__(self):
        return len(self._entries)

    def fork(self):
        """A copy holding the same entries and no link to later additions."""
        return ParameterArchive(self.path, self._entries)

    def best(self, n, encoding, p):
        """Lowest-energy angles stored for this problem shape, or None."""
        matches = [e for e in self._entries if (e["n"], e["encoding"], e["p"]) == (n, encoding, p)]
        if not matches:
            return None
        e = min(matches, key=lambda e: e["energy"])
        return QaoaParams(e["gammas"], e["betas"])

    def add(self, n, encoding, params, energy):
        entry = {"n": n, "encoding": encoding, "p": params.p, "gammas": list(params.gammas),
                 "betas": list(params.betas), "energy": float(energy)}
        self._entries.append(entry)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(entry) + "\n")


def resolve_encoding(n, encoding):
    """Pick the encoding for an n-city problem, rejecting ones we cannot simulate."""
    if encoding == "auto":
        return "qubo" if n <= AUTO_QUBO_MAX_CITIES else "compact"
    if encoding == "qubo" and (n - 2) ** 2 > MAX_QUBITS:
        raise InfeasibleConfigError(
            f"QUBO encoding of {n} cities needs {(n - 2) ** 2} qubits, "
            f"beyond the {MAX_QUBITS}-qubit simulation limit; use the compact encoding"
        )
    return encoding


class QaoaProblem:
    """A cost function ready for QAOA.

    Attributes
    ----------
    num_qubits: int
    energies: array
        cost of each basis state, in km for tour problems
    phases: array
        the same costs rescaled for use as circuit phases
    encoding: str or None
    instance: TspInstance or None
    """

    def __init__(self, num_qubits, energies, phases, circuit, encoding=None, instance=None,
                 decoder=None, encoder=None):
        self.num_qubits = num_qubits
        self.energies = np.asarray(energies, dtype=float)
        self.phases = np.asarray(phases, dtype=float)
        self.encoding = encoding
        self.instance = instance
        self._circuit = circuit
        self._decoder = decoder
        self._encoder = encoder
        self._costs = {}

    @classmethod
    def from_ising(cls, ising, encoding=None, instance=None, decoder=None, encoder=None):
        # Phases use the model divided by its largest coefficient.
        scale = ising.max_coefficient()
        factor = 1.0 / scale if scale > 0 else 1.0
        scaled = ising.scaled(factor)
        energies = ising_energies(ising)
        return cls(ising.num_spins, energies, energies * factor,
                   lambda params: build_qaoa_circuit(scaled, params),
                   encoding, instance, decoder, encoder)

    @classmethod
    def from_table(cls, table):
        return cls(table.num_qubits, table.energies, table.phase_energies(),
                   lambda params: build_compact_cost_circuit(table.instance, params, table),
                   "compact", table.instance, table.decode, table.encode)

    @classmethod
    def for_instance(cls, instance, encoding="auto", alpha=2.0):
        encoding = resolve_encoding(instance.n, encoding)
        if encoding == "compact":
            return cls.from_table(compact_cost_table(instance))
        model = encode_tsp_qubo(instance, alpha)
        return cls.from_ising(qubo_to_ising(model), "qubo", instance,
                              lambda bits: decode_bitstring(model, bits),
                              lambda tour: encode_tour(model, tour))

    def build_circuit(self, params):
        return self._circuit(params)

    def statevector(self, params):
        return qaoa_statevector(self.phases, self.num_qubits, params)

    def expected_energy(self, params):
        return expected_value(self.energies, self.statevector(params))

    def decode(self, bits):
        if self._decoder is None:
            raise EncodingError("This problem has no tour decoding")
        return self._decoder(bits)

    def encode(self, tour):
        if self._encoder is None:
            raise EncodingError("This problem has no tour encoding")
        return self._encoder(tour)

    def cost_of(self, bits):
        """Tour cost of a bitstring, or None if it does not decode to a tour."""
        if bits not in self._costs:
            tour = self.decode(bits)
            self._costs[bits] = tour_cost(self.instance, tour) if tour else None
        return self._costs[bits]


def _as_problem(model):
    if isinstance(model, QaoaProblem):
        return model
    if isinstance(model, IsingModel):
        return QaoaProblem.from_ising(model)
    if isinstance(model, CompactCostTable):
        return QaoaProblem.from_table(model)
    raise TypeError(f"Cannot optimize QAOA angles for a {type(model).__name__}")


class _Stop(Exception):
    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


class _Objective:
    """Expected energy as a function of the angle vector, with stopping rules.

    Counts every evaluation against the budget, keeps the best point seen,
    and raises _Stop when the budget is spent, when improvement has
    stalled, or when a sampled tour reaches the cost threshold.
    """

    def __init__(self, problem, budget, stall_evals, threshold=None, shots=256, rng=None):
        self.problem = problem
        self.budget = budget
        self.stall_evals = stall_evals
        self.threshold = threshold
        self.shots = shots
        self.rng = rng
        self.evaluations = 0
        self.best_energy = np.inf
        self.best_x = None
        self.best_sampled = np.inf
        self.trace = []
        self.sampled_trace = []
        self._stalled = 0

    def reset_stall(self):
        self._stalled = 0

    def __call__(self, x):
        if self.evaluations >= self.budget:
            raise _Stop("max_iters")
        params = QaoaParams.from_vector(x)
        state = self.problem.statevector(params)
        energy = expected_value(self.problem.energies, state)
        self.evaluations += 1

        if energy < self.best_energy - STALL_TOLERANCE_KM:
            self._stalled = 0
        else:
            self._stalled += 1
        if energy < self.best_energy:
            self.best_energy = energy
            self.best_x = np.array(x, dtype=float)
        self.trace.append(self.best_energy)

        if self.threshold is not None and self.problem.instance is not None:
            counts = sample(state, self.shots, seed=self.rng)
            costs = [self.problem.cost_of(b) for b in counts.counts]
            costs = [c for c in costs if c is not None]
            if costs:
                self.best_sampled = min(self.best_sampled, min(costs))
            self.sampled_trace.append(self.best_sampled)
            if self.best_sampled <= self.threshold:
                raise _Stop("threshold")
        if self._stalled >= self.stall_evals:
            raise _Stop("stall")
        return energy


@dataclass
class OptimizationResult:
    """Tuned angles and what it took to find them.

    Unpacks as ``params, energy``.
    """
    params: QaoaParams
    energy: float
    evaluations: int
    restarts: int
    reason: str
    trace: list = field(default_factory=list, repr=False)
    sampled_trace: list = field(default_factory=list, repr=False)

    def __iter__(self):
        return iter((self.params, self.energy))


def optimize_parameters(model, config=None, init=None, rng=None):
    """Tune 2p QAOA angles by minimising the exact expected energy.

    Nelder-Mead runs from ``init`` (if given) and then from angles drawn
    uniformly in [0, pi), until ``config.max_iters`` evaluations have
    been spent over all ``config.restarts`` starts.  A start ends early
    after ``config.stall_evals`` evaluations without a 1e-6 improvement;
    everything stops once a sampled tour costs at most
    ``config.cost_threshold``.

    Parameters
    ----------
    model: QaoaProblem, IsingModel or CompactCostTable
    config: SolveConfig, optional
    init: QaoaParams, optional
        starting angles for the first start
    rng: numpy Generator or int, optional
        default ``config.seed``

    Returns
    -------
    result: OptimizationResult
        the best angles evaluated, never worse than any evaluated point
    """
    if config is None:
        config = SolveConfig()
    problem = _as_problem(model)
    rng = np.random.default_rng(config.seed if rng is None else rng)
    objective = _Objective(problem, config.max_iters, config.stall_evals,
                           config.cost_threshold, min(config.shots, 1024), rng)

    reason = "converged"
    starts = 0
    for start in range(config.restarts):
        if objective.evaluations >= config.max_iters:
            reason = "max_iters"
            break
        if start == 0 and init is not None:
            if init.p != config.p:
                raise ValueError(f"Initial angles have {init.p} layers, config asks for {config.p}")
            x0 = init.to_vector()
        else:
            x0 = rng.uniform(0.0, np.pi, 2 * config.p)
        starts += 1
        objective.reset_stall()
        remaining = config.max_iters - objective.evaluations
        try:
            minimize(objective, x0, method="Nelder-Mead",
                     options={"maxfev": remaining, "xatol": 1e-4, "fatol": 1e-7})
            reason = "converged"
        except _Stop as stop:
            reason = stop.reason
            if reason in ("max_iters", "threshold"):
                break
        logger.debug("Start %d ended (%s) at %.3f after %d evaluations",
                     start, reason, objective.best_energy, objective.evaluations)

    params = QaoaParams.from_vector(objective.best_x)
    return OptimizationResult(params, float(objective.best_energy), objective.evaluations,
                              starts, reason, objective.trace, objective.sampled_trace)


def sample_circuit(problem, params, config, rng):
    """Final measurement of tuned angles.

    Without noise the closed-form state is sampled directly.  With noise,
    the shots are shared out over independent Pauli-error trajectories
    of the gate-level circuit and readout errors are applied to each.
    """
    if config.noise is None:
        return sample(problem.statevector(params), config.shots, seed=rng)

    circuit = problem.build_circuit(params)
    trajectories = min(config.noise_trajectories, config.shots)
    counts = None
    for shots in np.array_split(np.arange(config.shots), trajectories):
        noisy = apply_gate_noise(circuit, config.noise, seed=rng)
        part = sample(simulate(noisy), len(shots), config.noise, seed=rng)
        counts = part if counts is None else counts.merge(part)
    return counts


@dataclass
class QuantumRun:
    """One encode, optimize, sample and decode pass over an instance."""
    problem: QaoaProblem
    optimization: OptimizationResult
    counts: object
    tour: Tour
    cost: float
    valid_fraction: float
    fallback_used: bool
    metrics: dict

    def ranked_tours(self):
        """Distinct valid sampled tours, cheapest first."""
        found = {}
        for bits in self.counts.counts:
            cost = self.problem.cost_of(bits)
            if cost is not None:
                tour = self.problem.decode(bits)
                found.setdefault(tour.order, (cost, tour))
        return [t for _, t in sorted(found.values(), key=lambda ct: (ct[0], ct[1].order))]


def run_quantum(instance, config, rng, init=None, problem=None):
    """Run the quantum pipeline once and return everything it produced."""
    if problem is None:
        problem = QaoaProblem.for_instance(instance, config.encoding, config.alpha)
    opt = optimize_parameters(problem, config, init=init, rng=rng)
    counts = sample_circuit(problem, opt.params, config, rng)

    best = None
    valid = 0
    for bits, c in counts.counts.items():
        cost = problem.cost_of(bits)
        if cost is None:
            continue
        valid += c
        if best is None or cost < best[0]:
            best = (cost, bits)

    fallback = best is None
    if fallback:
        tour = nearest_neighbor_tour(instance)
        cost = tour_cost(instance, tour)
        logger.warning("No valid tour among %d shots on %d cities; using nearest neighbour",
                       counts.shots, instance.n)
    else:
        cost, bits = best
        tour = problem.decode(bits)

    metrics = circuit_metrics(problem.build_circuit(opt.params))
    return QuantumRun(problem, opt, counts, tour, cost, valid / counts.shots, fallback, metrics)


def ml_rerank(candidates, model):
    """Order candidates by predicted cost, cheapest first.

    Parameters
    ----------
    candidates: list of (Tour, feature vector)
    model: ForestModel

    Returns
    -------
    ranked: list of (Tour, feature vector)
        stable: equal predictions keep their input order
    """
    if not candidates:
        return []
    X = np.array([np.asarray(x, dtype=float) for _, x in candidates])
    predicted = model.predict(X)
    order = np.argsort(predicted, kind="stable")
    return [candidates[i] for i in order]


def shortlist_pick(instance, ranked, shortlist=None, keep=()):
    """Cheapest true-cost tour among the head of a ranking.

    Parameters
    ----------
    instance: TspInstance
    ranked: list of (Tour, feature vector)
        best predicted first
    shortlist: int or None
        how many leading candidates to price; None prices them all
    keep: sequence of Tour
        tours priced whatever their rank

    Returns
    -------
    tour: Tour
        ties go to the earlier of shortlist then keep
    """
    head = [tour for tour, _ in (ranked if shortlist is None else ranked[:shortlist])]
    seen = {t.order for t in head}
    for tour in keep:
        if tour.order not in seen:
            seen.add(tour.order)
            head.append(tour)
    if not head:
        return None
    costs = [tour_cost(instance, tour) for tour in head]
    return head[int(np.argmin(costs))]


def _pick_with_forest(problem, counts, extra_tours, config, keep=()):
    # Train on the pooled samples, re-rank every candidate, price the shortlist and `keep`.
    data = TrainingSet.from_samples(counts, problem.cost_of)
    candidates = []
    seen = set()
    for bits in counts.counts:
        if problem.cost_of(bits) is not None:
            tour = problem.decode(bits)
            if tour.order not in seen:
                seen.add(tour.order)
                candidates.append((tour, featurize(bits, counts)))
    for tour in extra_tours:
        if tour.order not in seen:
            seen.add(tour.order)
            candidates.append((tour, featurize(problem.encode(tour), counts)))
    if not candidates:
        return None

    if len(data) < 2:
        return shortlist_pick(problem.instance, candidates)
    model = forest_fit(data, with_seed(config.forest, config.seed))
    ranked = ml_rerank(candidates, model)
    return shortlist_pick(problem.instance, ranked, config.ml_shortlist, keep)


@dataclass
class _Outcome:
    tour: Tour
    iterations: int = 0
    depth: int = 0
    gates: int = 0
    valid_fraction: float = 1.0
    fallback: bool = False


def _quantum_outcome(instance, config):
    run = run_quantum(instance, config, np.random.default_rng(config.seed))
    return _Outcome(run.tour, run.optimization.evaluations, run.metrics["depth"],
                    run.metrics["total_gates"], run.valid_fraction, run.fallback_used)


def _ml_pool(instance, config, archive):
    # Run 0 uses the same random stream as a quantum-only solve.
    encoding = config.encoding
    if encoding == "qubo" and (instance.n - 2) ** 2 > MAX_QUBITS:
        encoding = "compact"
    problem = QaoaProblem.for_instance(instance, encoding, config.alpha)
    runs = []
    for r in range(config.ml_runs):
        rng = np.random.default_rng(config.seed if r == 0 else [config.seed, r])
        init = None if r == 0 else archive.best(instance.n, problem.encoding, config.p)
        run = run_quantum(instance, config, rng, init=init, problem=problem)
        archive.add(instance.n, problem.encoding, run.optimization.params, run.optimization.energy)
        runs.append(run)
    logger.info("Pooled %d quantum runs on %d cities", len(runs), instance.n)
    return problem, runs


def _pooled(runs):
    counts = runs[0].counts
    for run in runs[1:]:
        counts = counts.merge(run.counts)
    return counts


def _quantum_ml_outcome(instance, config, archive, extra_tours=(), extra=None):
    problem, runs = _ml_pool(instance, config, archive)
    pooled = _pooled(runs)
    # the quantum-only pick and the plain hybrid pick are always priced
    keep = [runs[0].tour] + list(extra_tours[:1])
    tour = _pick_with_forest(problem, pooled, extra_tours, config, keep)
    fallback = tour is None
    if fallback:
        tour = nearest_neighbor_tour(instance)
        logger.warning("No valid candidate tour on %d cities; using nearest neighbour", instance.n)
    iterations = sum(r.optimization.evaluations for r in runs)
    valid = sum(r.valid_fraction * r.counts.shots for r in runs) / pooled.shots
    outcome = _Outcome(tour, iterations, runs[0].metrics["depth"], runs[0].metrics["total_gates"],
                       valid, fallback)
    if extra is not None:
        outcome.iterations += extra.iterations
        outcome.depth = max(outcome.depth, extra.depth)
        outcome.gates += extra.gates
    return outcome


def _centroid(instance, indices):
    lon = float(np.mean([instance.cities[i].lon for i in indices]))
    lat = float(np.mean([instance.cities[i].lat for i in indices]))
    return City("centroid", lon, lat)


def order_clusters(instance, clusters):
    """Visit order of clusters: the one holding the start first, the one
    holding the destination last, the rest by the shortest path through
    their (lon, lat) centroids."""
    first = next(i for i, c in enumerate(clusters) if instance.start in c)
    last = next(i for i, c in enumerate(clusters) if instance.end in c)
    if first == last:
        if len(clusters) > 1:
            raise InvalidInstanceError("Start and destination share a cluster")
        return [first]
    middle = [i for i in range(len(clusters)) if i not in (first, last)]
    centres = [_centroid(instance, c) for c in clusters]

    def length(order):
        return sum(haversine_km(centres[a], centres[b]) for a, b in zip(order[:-1], order[1:]))

    orders = ([first] + list(perm) + [last] for perm in itertools.permutations(middle))
    return min(orders, key=length)


def _split_endpoints(instance, clusters):
    # The destination becomes a cluster of its own if it shares one with the start.
    out = []
    for c in clusters:
        if instance.start in c and instance.end in c:
            out.append([i for i in c if i != instance.end])
            out.append([instance.end])
        else:
            out.append(list(c))
    return out


def _entries_exits(instance, clusters):
    # Walk the ordered clusters choosing the cheapest edge into the next one.
    d = instance.d.d
    entry = [None] * len(clusters)
    exit_ = [None] * len(clusters)
    entry[0] = instance.start
    exit_[-1] = instance.end
    for i in range(len(clusters) - 1):
        here, there = clusters[i], clusters[i + 1]
        sources = [a for a in here if a != entry[i] or len(here) == 1]
        targets = [b for b in there
                   if i + 1 < len(clusters) - 1 or b != instance.end or len(there) == 1]
        a, b = min(itertools.product(sources, targets), key=lambda ab: (d[ab[0], ab[1]], ab))
        exit_[i] = a
        entry[i + 1] = b
    return entry, exit_


def stitch_clusters(cluster_paths, instance):
    """Join per-cluster open paths into one tour.

    Clusters are ordered with ``order_clusters``; the path holding the start
    is turned to begin there and the one holding the destination to end
    there.  Every other path is tried both ways round and the orientation
    giving the cheapest tour wins (ties keep the paths as given).

    Parameters
    ----------
    cluster_paths: list of sequences of city indices
        must partition the cities, with both endpoints at the end of a path
    instance: TspInstance

    Returns
    -------
    tour: Tour
    """
    paths = [list(p) for p in cluster_paths]
    flat = [i for p in paths for i in p]
    if any(not p for p in paths) or sorted(flat) != list(range(instance.n)):
        raise MalformedTourError("Cluster paths do not partition the cities")

    for city in (instance.start, instance.end):
        holder = next(p for p in paths if city in p)
        if city not in (holder[0], holder[-1]):
            raise MalformedTourError(f"City {city} must sit at one end of its cluster path")
    if len(paths) > 1 and any(instance.start in p and instance.end in p for p in paths):
        raise MalformedTourError("Start and destination share a cluster path")

    order = order_clusters(instance, paths)
    ordered = [paths[i] for i in order]
    if ordered[0][0] != instance.start:
        ordered[0] = ordered[0][::-1]
    if ordered[-1][-1] != instance.end:
        ordered[-1] = ordered[-1][::-1]
    if ordered[0][0] != instance.start or ordered[-1][-1] != instance.end:
        raise MalformedTourError("Start and destination cannot both sit at the path ends")

    middle = range(1, len(ordered) - 1)
    best = None
    for flips in itertools.product((False, True), repeat=len(middle)):
        trial = list(ordered)
        for i, flip in zip(middle, flips):
            if flip:
                trial[i] = trial[i][::-1]
        tour = Tour([c for p in trial for c in p])
        cost = tour_cost(instance, tour)
        if best is None or cost < best[0]:
            best = (cost, tour)
    return best[1]


def _cluster_paths(instance, config, clusters, variants):
    # Solve each cluster between its entry and exit; keep up to `variants` paths per cluster.
    entry, exit_ = _entries_exits(instance, clusters)
    summary = _Outcome(None, valid_fraction=0.0)
    paths = []
    shots = 0
    for j, cluster in enumerate(clusters):
        if len(cluster) <= 2:
            path = [entry[j]] if len(cluster) == 1 else [entry[j], exit_[j]]
            paths.append([path])
            continue
        sub, mapping = instance.subinstance(cluster, entry[j], exit_[j])
        run = run_quantum(sub, config, np.random.default_rng([config.seed, 1000 + j]))
        options = run.ranked_tours()[:variants] or [run.tour]
        paths.append([[mapping[i] for i in t.order] for t in options])
        summary.iterations += run.optimization.evaluations
        summary.depth = max(summary.depth, run.metrics["depth"])
        summary.gates += run.metrics["total_gates"]
        summary.valid_fraction += run.valid_fraction * run.counts.shots
        summary.fallback = summary.fallback or run.fallback_used
        shots += run.counts.shots
    summary.valid_fraction = summary.valid_fraction / shots if shots else 1.0
    return paths, summary


def _hybrid_outcome(instance, config, archive):
    k = min(config.k, instance.n)
    model = kmeans(instance.cities, k=k, seed=config.seed)
    clusters = model.clusters()
    if len(clusters) == 1:
        logger.info("One cluster only; solving the whole instance")
        if config.method == "hybrid_ml":
            return _quantum_ml_outcome(instance, config, archive)
        return _quantum_outcome(instance, config)

    clusters = _split_endpoints(instance, clusters)
    order = order_clusters(instance, clusters)
    clusters = [clusters[i] for i in order]
    logger.info("Solving %d clusters of sizes %s", len(clusters), [len(c) for c in clusters])

    variants = config.variants_per_cluster if config.method == "hybrid_ml" else 1
    paths, outcome = _cluster_paths(instance, config, clusters, variants)

    stitched = []
    for choice in itertools.product(*paths):
        try:
            stitched.append(stitch_clusters(list(choice), instance))
        except MalformedTourError as err:
            logger.warning("Could not stitch cluster paths: %s", err)
    if not stitched:
        outcome.tour = nearest_neighbor_tour(instance)
        outcome.fallback = True
        return outcome

    if config.method == "hybrid_ml":
        return _quantum_ml_outcome(instance, config, archive, stitched, extra=outcome)

    outcome.tour = stitched[0]
    return outcome


def solve_quantum(instance, config, archive=None):
    """Quantum-only solve (quantum_ml when the config asks for it).

    Raises InfeasibleConfigError when the encoding cannot be simulated
    for this many cities.

    Returns
    -------
    record: RunRecord
    """
    if config.method not in ("quantum", "quantum_ml"):
        config = config.replace(method="quantum")
    return solve(instance, config, archive)


def solve_hybrid(instance, config, archive=None):
    """Cluster, solve each cluster, stitch (hybrid or hybrid_ml).

    Returns
    -------
    record: RunRecord
    """
    if config.method not in ("hybrid", "hybrid_ml"):
        config = config.replace(method="hybrid")
    return solve(instance, config, archive)


def solve_classical(instance, config, comm=None):
    config = config.replace(method="classical")
    return solve(instance, config, comm=comm)


def solve(instance, config, archive=None, comm=None):
    """Solve an instance with the method named in the config.

    Parameters
    ----------
    instance: TspInstance
    config: SolveConfig
    archive: ParameterArchive, optional
        shared angle archive for the _ml methods; default one reading
        ``config.archive_path``
    comm: MPI communicator, optional
        spreads the brute-force reference over processes

    Returns
    -------
    record: RunRecord
    """
    if instance.n < 3:
        raise InvalidInstanceError("Need at least 3 cities")
    method = config.method
    if method in ("quantum", "quantum_ml"):
        resolve_encoding(instance.n, config.encoding)
    if archive is None:
        archive = ParameterArchive(config.archive_path)

    logger.info("Solving %d cities with %s (seed %d)", instance.n, method, config.seed)
    t0 = time.perf_counter()
    optimum_tour, optimum = brute_force_optimal(instance, comm=comm)
    if method == "classical":
        outcome = _Outcome(optimum_tour)
    elif method == "quantum":
        outcome = _quantum_outcome(instance, config)
    elif method == "quantum_ml":
        outcome = _quantum_ml_outcome(instance, config, archive)
    else:
        outcome = _hybrid_outcome(instance, config, archive)
    wall = time.perf_counter() - t0

    cost = tour_cost(instance, outcome.tour)
    record = RunRecord(
        method=method,
        n=instance.n,
        seed=config.seed,
        best_cost=cost,
        best_tour=outcome.tour,
        classical_cost=optimum,
        approximation_ratio=approximation_ratio(cost, optimum),
        iterations_used=outcome.iterations,
        circuit_depth=outcome.depth,
        total_gates=outcome.gates,
        valid_sample_fraction=outcome.valid_fraction,
        wall_time=wall,
        fallback_used=outcome.fallback,
    )
    logger.info("%s on %d cities: %.2f km (ratio %.4f) in %.2f s",
                method, instance.n, cost, record.approximation_ratio, wall)
    return record

from tspq import (
    EUROPEAN_CITIES, ForestConfig, InfeasibleConfigError, IsingModel, MalformedTourError,
    ParameterArchive, QaoaParams, RunRecord, SolveConfig, Tour, TrainingSet, brute_force_optimal,
    forest_fit, ml_rerank, optimize_parameters, select_subinstance, solve, solve_classical,
    solve_hybrid, solve_quantum, stitch_clusters, tour_cost,
)
from tspq.classical import enumerate_tours
from tspq.hybrid import RECORD_FIELDS, QaoaProblem, resolve_encoding, shortlist_pick
from tspq.qsim import qaoa_statevector, expected_value
import numpy as np
import pytest


def without_wall_time(record):
    d = record.to_dict()
    del d["wall_time"]
    return d


def test_constant_energy():
    ising = IsingModel(2, {0: 0.0, 1: 0.0}, {(0, 1): 0.0}, 3.5)
    result = optimize_parameters(ising, SolveConfig(max_iters=40))
    assert np.isclose(result.energy, 3.5)
    assert result.evaluations <= 40
    params, energy = result
    assert params.p == 1


def test_single_spin_matches_grid():
    ising = IsingModel(1, {0: 1.0}, {}, 0.0)
    problem = QaoaProblem.from_ising(ising)
    grid = np.linspace(0, np.pi, 50)
    best_grid = min(expected_value(problem.energies, qaoa_statevector(problem.phases, 1, QaoaParams([g], [b])))
                    for g in grid for b in grid)
    config = SolveConfig(max_iters=300, stall_evals=50)
    result = optimize_parameters(ising, config)
    assert result.energy <= best_grid + 1e-2
    assert result.evaluations <= 300


def test_trace_never_rises():
    instance = select_subinstance(EUROPEAN_CITIES, 4, 0)
    problem = QaoaProblem.for_instance(instance)
    result = optimize_parameters(problem, SolveConfig(max_iters=80, p=2))
    assert len(result.trace) == result.evaluations
    assert np.all(np.diff(result.trace) <= 0)
    assert result.trace[-1] == result.energy
    assert result.params.p == 2


def test_cost_threshold_stops_early():
    instance = select_subinstance(EUROPEAN_CITIES, 4, 0)
    _, optimum = brute_force_optimal(instance)
    config = SolveConfig(max_iters=200, cost_threshold=optimum * 1.5)
    result = optimize_parameters(QaoaProblem.for_instance(instance), config)
    assert result.reason == "threshold"
    assert result.sampled_trace[-1] <= optimum * 1.5


def test_init_layers_must_match():
    ising = IsingModel(1, {0: 1.0}, {}, 0.0)
    with pytest.raises(ValueError):
        optimize_parameters(ising, SolveConfig(p=2), init=QaoaParams([0.1], [0.2]))


@pytest.mark.parametrize("n,needed", [(4, 8), (5, 6)])
def test_small_instances_reach_optimum(n, needed):
    hits = 0
    for seed in range(10):
        instance = select_subinstance(EUROPEAN_CITIES, n, seed)
        record = solve_quantum(instance, SolveConfig(seed=seed, encoding="qubo"))
        assert instance.is_valid_tour(record.best_tour)
        assert record.approximation_ratio >= 1.0 - 1e-12
        if np.isclose(record.approximation_ratio, 1.0):
            hits += 1
    assert hits >= needed


def test_three_cities():
    instance = select_subinstance(EUROPEAN_CITIES, 3, 0, min_cities=3)
    record = solve_quantum(instance, SolveConfig(max_iters=20))
    assert record.best_tour == Tour([0, 1, 2])
    assert np.isclose(record.approximation_ratio, 1.0)


def test_compact_with_noise():
    instance = select_subinstance(EUROPEAN_CITIES, 8, 0)
    config = SolveConfig(encoding="compact", noise=True, max_iters=30, shots=1024, seed=2)
    record = solve_quantum(instance, config)
    assert instance.is_valid_tour(record.best_tour)
    assert record.approximation_ratio >= 1.0 - 1e-12
    assert record.circuit_depth > 0 and record.total_gates > 0
    assert 0 < record.valid_sample_fraction <= 1


def test_qubo_too_large():
    instance = select_subinstance(EUROPEAN_CITIES, 8, 0)
    with pytest.raises(InfeasibleConfigError, match="16-qubit"):
        solve_quantum(instance, SolveConfig(encoding="qubo"))
    assert resolve_encoding(5, "auto") == "qubo"
    assert resolve_encoding(6, "auto") == "compact"
    assert resolve_encoding(6, "qubo") == "qubo"


def test_solve_is_deterministic():
    instance = select_subinstance(EUROPEAN_CITIES, 5, 3)
    config = SolveConfig(seed=7, max_iters=40)
    assert without_wall_time(solve_quantum(instance, config)) == without_wall_time(solve_quantum(instance, config))


def test_classical_record():
    instance = select_subinstance(EUROPEAN_CITIES, 6, 1)
    record = solve_classical(instance, SolveConfig())
    assert record.method == "classical"
    assert record.approximation_ratio == 1.0
    assert record.circuit_depth == 0 and record.total_gates == 0


def test_hybrid_gives_valid_tour():
    instance = select_subinstance(EUROPEAN_CITIES, 8, 0)
    record = solve_hybrid(instance, SolveConfig(k=3, max_iters=30, shots=1024))
    assert record.method == "hybrid"
    assert instance.is_valid_tour(record.best_tour)
    assert record.approximation_ratio >= 1.0 - 1e-12


def test_single_cluster_is_quantum():
    instance = select_subinstance(EUROPEAN_CITIES, 5, 2)
    config = SolveConfig(k=1, max_iters=30, seed=4)
    hybrid = solve_hybrid(instance, config)
    quantum = solve_quantum(instance, config)
    assert hybrid.best_cost == quantum.best_cost
    assert hybrid.best_tour == quantum.best_tour


def test_stitch_single_path():
    instance = select_subinstance(EUROPEAN_CITIES, 5, 0)
    assert stitch_clusters([[0, 2, 1, 3, 4]], instance) == Tour([0, 2, 1, 3, 4])


def test_stitch_start_alone():
    instance = select_subinstance(EUROPEAN_CITIES, 5, 0)
    assert stitch_clusters([[0], [1, 2, 3, 4]], instance) == Tour([0, 1, 2, 3, 4])
    # the start path is turned round to begin at the start
    assert stitch_clusters([[4], [2, 1, 0], [3]], instance).order[0] == 0


def test_stitch_picks_cheapest_orientation():
    instance = select_subinstance(EUROPEAN_CITIES, 6, 0)
    tour = stitch_clusters([[0, 1], [2, 3, 4], [5]], instance)
    options = [Tour([0, 1, 2, 3, 4, 5]), Tour([0, 1, 4, 3, 2, 5])]
    assert tour_cost(instance, tour) == min(tour_cost(instance, t) for t in options)
    _, optimum = brute_force_optimal(instance)
    assert tour_cost(instance, tour) >= optimum - 1e-9


@pytest.mark.parametrize("paths", [
    [[0, 1], [1, 2, 3, 4]],
    [[0, 1], [2, 3]],
    [[1, 0, 2], [3, 4]],
    [[0, 1, 4], [2, 3]],
])
def test_stitch_rejects(paths):
    instance = select_subinstance(EUROPEAN_CITIES, 5, 0)
    with pytest.raises(MalformedTourError):
        stitch_clusters(paths, instance)


def constant_model(dim):
    rng = np.random.default_rng(0)
    return forest_fit(TrainingSet(rng.uniform(size=(10, dim)), np.full(10, 2.0)), ForestConfig(n_trees=3))


def test_rerank_single_and_empty():
    model = constant_model(2)
    one = [(Tour([0, 1, 2]), [0.5, 0.5])]
    assert ml_rerank(one, model) == one
    assert ml_rerank([], model) == []


def test_rerank_keeps_ties_in_order():
    model = constant_model(2)
    candidates = [(Tour([0, i, 3 - i, 3]), [i, 0.1 * i]) for i in (1, 2)]
    assert ml_rerank(candidates, model) == candidates


def test_rerank_sorted_by_prediction():
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(60, 3))
    model = forest_fit(TrainingSet(X, X[:, 0] * 10), ForestConfig(n_trees=10, seed=0))
    candidates = [(Tour([0, 1, 2]), x) for x in rng.uniform(size=(15, 3))]
    ranked = ml_rerank(candidates, model)
    predicted = model.predict(np.array([x for _, x in ranked]))
    assert np.all(np.diff(predicted) >= 0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_quantum_ml_never_worse(seed):
    instance = select_subinstance(EUROPEAN_CITIES, 5, seed)
    config = SolveConfig(seed=seed, max_iters=30, ml_runs=3, forest=ForestConfig(n_trees=10))
    quantum = solve(instance, config.replace(method="quantum"))
    learned = solve(instance, config.replace(method="quantum_ml"), archive=ParameterArchive())
    assert learned.best_cost <= quantum.best_cost + 1e-9
    assert learned.iterations_used >= quantum.iterations_used


def paired_ratios(config, seeds):
    quantum, learned = [], []
    for seed in seeds:
        instance = select_subinstance(EUROPEAN_CITIES, 8, seed)
        seeded = config.replace(seed=seed)
        quantum.append(solve(instance, seeded.replace(method="quantum")).approximation_ratio)
        learned.append(solve(instance, seeded.replace(method="hybrid_ml"),
                             archive=ParameterArchive()).approximation_ratio)
    return np.array(quantum), np.array(learned)


def test_hybrid_ml_ordering():
    config = SolveConfig(noise=True, max_iters=30, shots=1024, ml_runs=2,
                         forest=ForestConfig(n_trees=10, max_depth=6))
    quantum, learned = paired_ratios(config, range(4))
    assert np.all(learned <= quantum + 1e-12)
    for ratios in (quantum, learned):
        assert 1.0 <= np.mean(ratios) <= 1.5


@pytest.mark.slow
def test_hybrid_ml_ordering_full():
    quantum, learned = paired_ratios(SolveConfig(noise=True, encoding="compact"), range(20))
    assert np.all(learned <= quantum + 1e-12)
    assert np.mean(learned) <= np.mean(quantum)
    for ratios in (quantum, learned):
        assert 1.0 <= np.mean(ratios) <= 1.5


def by_true_cost(instance, candidates, reverse=False):
    return sorted(candidates, key=lambda c: tour_cost(instance, c[0]), reverse=reverse)


def test_shortlist_follows_ranking():
    instance = select_subinstance(EUROPEAN_CITIES, 5, 0)
    ranked = by_true_cost(instance, [(t, [0.0]) for t in enumerate_tours(instance)])
    cheapest, dearest = ranked[0][0], ranked[-1][0]
    assert cheapest != dearest
    assert shortlist_pick(instance, ranked, 1) == cheapest
    assert shortlist_pick(instance, ranked[::-1], 1) == dearest
    assert shortlist_pick(instance, ranked[::-1], None) == cheapest
    assert shortlist_pick(instance, ranked[::-1], 1, keep=[cheapest]) == cheapest
    assert shortlist_pick(instance, [], 3) is None


def test_ml_pick_depends_on_ranking(monkeypatch):
    instance = select_subinstance(EUROPEAN_CITIES, 6, 0)
    config = SolveConfig(seed=0, max_iters=30, ml_runs=2, forest=ForestConfig(n_trees=5))
    quantum = solve(instance, config.replace(method="quantum"))
    priced_all = solve(instance, config.replace(method="quantum_ml", ml_shortlist=None),
                       archive=ParameterArchive())

    monkeypatch.setattr("tspq.hybrid.ml_rerank",
                        lambda candidates, model: by_true_cost(instance, candidates, reverse=True))
    worst_first = solve(instance, config.replace(method="quantum_ml", ml_shortlist=1),
                        archive=ParameterArchive())
    # only the dearest candidate and the quantum-only pick get priced
    assert worst_first.best_tour == quantum.best_tour

    monkeypatch.setattr("tspq.hybrid.ml_rerank",
                        lambda candidates, model: by_true_cost(instance, candidates))
    best_first = solve(instance, config.replace(method="quantum_ml", ml_shortlist=1),
                       archive=ParameterArchive())
    assert best_first.best_cost == priced_all.best_cost
    assert best_first.best_cost <= worst_first.best_cost


def test_archive_file(tmp_path):
    path = tmp_path / "archive.jsonl"
    good = '{"n": 5, "encoding": "qubo", "p": 1, "gammas": [0.3], "betas": [0.7], "energy": 100.0}'
    path.write_text(good + "\nnot json\n")
    archive = ParameterArchive(str(path))
    assert len(archive) == 1
    assert archive.best(5, "qubo", 1) == QaoaParams([0.3], [0.7])
    assert archive.best(5, "qubo", 2) is None

    archive.add(5, "qubo", QaoaParams([0.1], [0.2]), 50.0)
    assert archive.best(5, "qubo", 1) == QaoaParams([0.1], [0.2])
    assert len(ParameterArchive(str(path))) == 2

    fork = archive.fork()
    fork.add(6, "qubo", QaoaParams([0.1], [0.2]), 1.0)
    assert len(archive) == 2 and len(fork) == 3


def test_record_round_trip():
    instance = select_subinstance(EUROPEAN_CITIES, 4, 0)
    record = solve_classical(instance, SolveConfig())
    d = record.to_dict()
    assert tuple(d) == RECORD_FIELDS
    assert RunRecord.from_dict(d) == record
    del d["best_cost"]
    with pytest.raises(KeyError):
        RunRecord.from_dict(d)

from tspq import EUROPEAN_CITIES, InvalidInstanceError, TspInstance, brute_force_optimal, select_subinstance
from tspq.classical import REFERENCE_CLASSICAL_COSTS, count_tours, enumerate_tours, search_reference_subsets
from tspq.instance import haversine_km
from mockmpi import mock_mpiexec
import itertools
import math
import numpy as np
import pytest


def oracle_optimum(instance):
    # recompute every tour from the raw coordinates
    cities = instance.cities
    best = np.inf
    for perm in itertools.permutations(instance.intermediates):
        order = (instance.start,) + perm + (instance.end, instance.start)
        cost = sum(haversine_km(cities[a], cities[b]) for a, b in zip(order[:-1], order[1:]))
        best = min(best, cost)
    return best


@pytest.mark.parametrize("n", [4, 5, 6, 7])
def test_enumeration_count(n):
    instance = select_subinstance(EUROPEAN_CITIES, n, 0)
    tours = list(enumerate_tours(instance))
    assert len(tours) == count_tours(instance) == math.factorial(n - 2)
    assert len({t.order for t in tours}) == len(tours)
    assert all(instance.is_valid_tour(t) for t in tours)


@pytest.mark.parametrize("n", [4, 5, 6, 7, 8])
@pytest.mark.parametrize("seed", [0, 5])
def test_brute_force_matches_oracle(n, seed):
    instance = select_subinstance(EUROPEAN_CITIES, n, seed)
    tour, cost = brute_force_optimal(instance)
    assert instance.is_valid_tour(tour)
    assert np.isclose(cost, oracle_optimum(instance), rtol=1e-12)


def test_three_cities_single_tour():
    instance = TspInstance.from_cities(EUROPEAN_CITIES[:3])
    tour, cost = brute_force_optimal(instance)
    assert tour.order == (0, 1, 2)
    assert count_tours(instance) == 1


def test_brute_force_size_limit():
    instance = select_subinstance(EUROPEAN_CITIES, 8, 0)
    with pytest.raises(InvalidInstanceError):
        brute_force_optimal(instance, max_cities=7)


def run_brute_force(comm, n, seed):
    instance = select_subinstance(EUROPEAN_CITIES, n, seed)
    serial_tour, serial_cost = brute_force_optimal(instance)
    tour, cost = brute_force_optimal(instance, comm=comm)
    # every process gets the same answer as a serial search, ties included
    assert tour == serial_tour
    assert cost == serial_cost


@pytest.mark.parametrize("nproc", [1, 2, 3, 5])
@pytest.mark.parametrize("n", [4, 6, 7])
def test_brute_force_parallel(nproc, n):
    mock_mpiexec(nproc, run_brute_force, n, 1)


def test_reference_subsets():
    results = search_reference_subsets(EUROPEAN_CITIES, 4, REFERENCE_CLASSICAL_COSTS[4])
    # all 4-city subsets containing both endpoints: C(8, 2)
    assert len(results) == 28
    errors = [r["rel_error"] for r in results]
    assert errors == sorted(errors)
    for r in results:
        assert r["cities"][0] == "Calais" and r["cities"][-1] == "Milan"
        assert r["match"] == (r["rel_error"] <= 0.01)
        assert np.isclose(r["rel_error"], abs(r["cost"] - 4242.05) / 4242.05)


def test_reference_subsets_full_pool():
    results = search_reference_subsets(EUROPEAN_CITIES, 8, REFERENCE_CLASSICAL_COSTS[8])
    assert len(results) == 28
    assert all(len(r["tour"]) == 8 for r in results)


@pytest.mark.parametrize("seed", [0, 3])
def test_optimum_ignores_storage_order(seed):
    instance = select_subinstance(EUROPEAN_CITIES, 7, seed)
    _, cost = brute_force_optimal(instance)
    middle = [instance.cities[i] for i in instance.intermediates]
    rng = np.random.default_rng(seed)
    shuffled = [middle[i] for i in rng.permutation(len(middle))]
    cities = [instance.cities[instance.start]] + shuffled + [instance.cities[instance.end]]
    _, relabeled = brute_force_optimal(TspInstance.from_cities(cities))
    assert np.isclose(relabeled, cost, rtol=1e-12)


def test_reference_subsets_four_cities_golden():
    results = search_reference_subsets(EUROPEAN_CITIES, 4, REFERENCE_CLASSICAL_COSTS[4])
    assert not any(r["match"] for r in results)
    closest = results[0]
    assert closest["cities"] == ["Calais", "Madrid", "Vienna", "Milan"]
    assert abs(closest["cost"] - 4498.850645) < 1e-6
    assert abs(min(r["cost"] for r in results) - 1758.033326) < 1e-6


def test_reference_subsets_five_cities():
    results = search_reference_subsets(EUROPEAN_CITIES, 5, REFERENCE_CLASSICAL_COSTS[5])
    # all 5-city subsets containing both endpoints: C(8, 3)
    assert len(results) == 56
    matches = [r for r in results if r["match"]]
    assert len(matches) == 1
    assert matches[0]["cities"] == ["Calais", "Barcelona", "Berlin", "Vienna", "Milan"]
    assert abs(matches[0]["cost"] - 4227.942708) < 1e-6
    assert np.isclose(matches[0]["rel_error"], abs(4227.942708 - 4247.86) / 4247.86, rtol=1e-6)

"""Exact brute-force solver for fixed-endpoint tours.

This is the baseline every quantum or hybrid result is measured against,
and the oracle used throughout the tests.
"""
import itertools
import logging
from math import factorial

from .errors import InvalidInstanceError
from .instance import Tour, TspInstance, tour_cost

logger = logging.getLogger(__name__)

DEFAULT_MAX_CITIES = 12

# Classical optima published for the Calais -> Milan instances of 4 to 8 cities.
REFERENCE_CLASSICAL_COSTS = {4: 4242.05, 5: 4247.86, 6: 5128.0, 7: 5634.25, 8: 6456.0}


def count_tours(instance):
    """Number of tours with both endpoints fixed, (n-2)!"""
    return factorial(instance.n - 2)


def enumerate_tours(instance):
    """Yield every tour of the instance in a fixed order.

    Intermediate cities are permuted lexicographically (by storage order)
    between the fixed start and end, giving exactly (n-2)! tours.

    Parameters
    ----------
    instance: TspInstance

    Yields
    ------
    tour: Tour
    """
    for perm in itertools.permutations(instance.intermediates):
        yield Tour((instance.start,) + perm + (instance.end,))


def brute_force_optimal(instance, max_cities=DEFAULT_MAX_CITIES, comm=None):
    """Find the cheapest tour by trying them all.

    Ties go to the tour enumerated first.  If an MPI communicator is
    supplied, tours are dealt to the processes round-robin and the
    winning (cost, position) pair is shared with every process, so the
    tie-break is the same as in serial.

    Parameters
    ----------
    instance: TspInstance
    max_cities: int, optional
        refuse instances larger than this, default 12
    comm: MPI communicator or None
        The comm, or None for serial

    Returns
    -------
    tour: Tour
        the optimal tour
    cost: float
        its cost in km
    """
    if instance.n > max_cities:
        raise InvalidInstanceError(
            f"Brute force limited to {max_cities} cities, instance has {instance.n}"
        )

    if comm is None:
        rank, size = 0, 1
    else:
        rank, size = comm.Get_rank(), comm.Get_size()

    best = (float("inf"), -1)
    best_tour = None
    for i, tour in enumerate(enumerate_tours(instance)):
        if i % size != rank:
            continue
        cost = tour_cost(instance, tour)
        if cost < best[0]:
            best = (cost, i)
            best_tour = tour

    if size > 1:
        best, best_tour = _collect_best(comm, best, best_tour)

    logger.debug("Brute force over %d tours: %.2f km", count_tours(instance), best[0])
    return best_tour, best[0]


def _collect_best(comm, best, best_tour):
    # Every rank sends its local winner to the root, which keeps the
    # lowest (cost, position); then the root broadcasts it back.
    rank = comm.Get_rank()
    if rank > 0:
        comm.send((best, best_tour), dest=0)
    else:
        for source in range(1, comm.Get_size()):
            other, other_tour = comm.recv(source=source)
            if other_tour is not None and (best_tour is None or other < best):
                best, best_tour = other, other_tour
    return comm.bcast((best, best_tour), root=0)


def search_reference_subsets(pool, n, target_km, tolerance=0.01,
                             start_name="Calais", end_name="Milan"):
    """Look for city subsets whose optimum matches a published cost.

    Every n-city subset of ``pool`` that contains both endpoints is solved
    exactly; subsets whose optimum lies within a relative ``tolerance`` of
    ``target_km`` are reported as matches.

    Parameters
    ----------
    pool: sequence of City
    n: int
    target_km: float
    tolerance: float, optional
        relative tolerance, default 1%

    Returns
    -------
    results: list of dict
        one entry per subset with keys ``cities``, ``cost``, ``rel_error``,
        ``match``, sorted by relative error
    """
    pool = tuple(pool)
    names = [c.name for c in pool]
    start = pool[names.index(start_name)]
    end = pool[names.index(end_name)]
    others = [c for c in pool if c.name not in (start_name, end_name)]

    results = []
    for subset in itertools.combinations(others, n - 2):
        instance = TspInstance.from_cities((start,) + subset + (end,))
        tour, cost = brute_force_optimal(instance)
        rel = abs(cost - target_km) / target_km
        results.append({
            "cities": [c.name for c in instance.cities],
            "tour": [instance.cities[i].name for i in tour.order],
            "cost": cost,
            "rel_error": rel,
            "match": rel <= tolerance,
        })
    results.sort(key=lambda r: r["rel_error"])
    matches = sum(r["match"] for r in results)
    logger.info("%d of %d subsets of size %d match %.2f km within %.1f%%",
                matches, len(results), n, target_km, 100 * tolerance)
    return results

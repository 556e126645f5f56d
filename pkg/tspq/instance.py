"""City geometry, distance matrices and fixed-endpoint TSP instances.

Coordinates are stored as (lon, lat) in degrees, in the order the city table
lists them.  Distances are great-circle kilometres.
"""
import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInstanceError, MalformedTourError

logger = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0

DEFAULT_START = "Calais"
DEFAULT_END = "Milan"


@dataclass(frozen=True)
class City:
    """A named point on the globe.

    Attributes
    ----------
    name: str
        Unique label
    lon: float
        Degrees east, in [-180, 180]
    lat: float
        Degrees north, in [-90, 90]
    """
    name: str
    lon: float
    lat: float

    def __post_init__(self):
        if not self.name:
            raise InvalidInstanceError("City name must be non-empty")
        if not -90.0 <= self.lat <= 90.0:
            raise InvalidInstanceError(f"Latitude {self.lat} of {self.name} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise InvalidInstanceError(f"Longitude {self.lon} of {self.name} outside [-180, 180]")

    def to_dict(self):
        return {"name": self.name, "lon": self.lon, "lat": self.lat}


EUROPEAN_CITIES = (
    City("Amsterdam", 4.9041, 52.3676),
    City("Barcelona", 2.1734, 41.3851),
    City("Berlin", 13.4050, 52.5200),
    City("Calais", 1.8587, 50.9513),
    City("Madrid", -3.7038, 40.4168),
    City("Milan", 9.1900, 45.4642),
    City("Paris", 2.3522, 48.8566),
    City("Rome", 12.4964, 41.9028),
    City("Vienna", 16.3738, 48.2082),
    City("Zurich", 8.5417, 47.3769),
)


def load_city_pool(path):
    """Read a city pool from a JSON file holding ``[{name, lon, lat}, ...]``.

    Parameters
    ----------
    path: str or Path

    Returns
    -------
    cities: tuple of City
    """
    try:
        with open(path, encoding="utf-8") as f:
            rows = json.load(f)
    except (OSError, json.JSONDecodeError) as err:
        raise InvalidInstanceError(f"Cannot read city pool {path}: {err}") from err

    try:
        cities = tuple(City(str(r["name"]), float(r["lon"]), float(r["lat"])) for r in rows)
    except (KeyError, TypeError) as err:
        raise InvalidInstanceError(f"City pool {path} needs name/lon/lat entries") from err
    _check_unique(cities)
    logger.debug("Loaded %d cities from %s", len(cities), path)
    return cities


def haversine_km(a, b):
    """Great-circle distance between two cities, in km (R = 6371.0 km)."""
    lat1 = math.radians(a.lat)
    lat2 = math.radians(b.lat)
    dlat = lat2 - lat1
    dlon = math.radians(b.lon - a.lon)
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    # h can round to just above 1 near antipodes
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(min(1.0, h)))


def _check_unique(cities):
    seen = set()
    for c in cities:
        if c.name in seen:
            raise InvalidInstanceError(f"Duplicate city name {c.name!r}")
        seen.add(c.name)


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    """Symmetric matrix of pairwise kilometres with a zero diagonal.

    The array is made read-only on construction.
    """
    d: np.ndarray

    def __post_init__(self):
        self.d.setflags(write=False)

    def __eq__(self, other):
        if not isinstance(other, DistanceMatrix):
            return NotImplemented
        return np.array_equal(self.d, other.d)

    __hash__ = None

    @property
    def n(self):
        return self.d.shape[0]

    def __getitem__(self, index):
        return self.d[index]

    def max_edge(self):
        return float(self.d.max())


def build_distance_matrix(cities):
    """Pairwise haversine distances for a list of at least two distinct cities.

    Parameters
    ----------
    cities: sequence of City

    Returns
    -------
    matrix: DistanceMatrix
    """
    cities = tuple(cities)
    if len(cities) < 2:
        raise InvalidInstanceError("A distance matrix needs at least two cities")
    _check_unique(cities)

    n = len(cities)
    d = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d[i, j] = d[j, i] = haversine_km(cities[i], cities[j])
    return DistanceMatrix(d)


@dataclass(frozen=True)
class Tour:
    """Visit order over city indices, from the start to the end city.

    The closing edge end -> start is implicit.
    """
    order: tuple

    def __post_init__(self):
        object.__setattr__(self, "order", tuple(int(i) for i in self.order))

    def __len__(self):
        return len(self.order)

    def __iter__(self):
        return iter(self.order)

    def to_list(self):
        return list(self.order)


@dataclass(frozen=True)
class TspInstance:
    """A TSP instance with fixed departure and destination cities.

    Attributes
    ----------
    cities: tuple of City
    d: DistanceMatrix
    start: int
        index of the departure city
    end: int
        index of the destination city, visited last before returning to start
    """
    cities: tuple
    d: DistanceMatrix
    start: int
    end: int

    def __post_init__(self):
        n = len(self.cities)
        if self.d.n != n:
            raise InvalidInstanceError("Distance matrix does not match the city list")
        if not (0 <= self.start < n and 0 <= self.end < n):
            raise InvalidInstanceError(f"Endpoints ({self.start}, {self.end}) out of range for {n} cities")
        if self.start == self.end:
            raise InvalidInstanceError("Departure and destination must differ")

    @classmethod
    def from_cities(cls, cities, start=0, end=None):
        """Build an instance, computing the distance matrix.

        Parameters
        ----------
        cities: sequence of City
        start: int, optional
            Departure index, default 0
        end: int, optional
            Destination index, default the last city
        """
        cities = tuple(cities)
        if end is None:
            end = len(cities) - 1
        return cls(cities, build_distance_matrix(cities), start, end)

    @property
    def n(self):
        return len(self.cities)

    @property
    def intermediates(self):
        """Indices of cities other than the endpoints, in storage order."""
        return tuple(i for i in range(self.n) if i not in (self.start, self.end))

    @property
    def names(self):
        return [c.name for c in self.cities]

    def index_of(self, name):
        for i, c in enumerate(self.cities):
            if c.name == name:
                return i
        raise InvalidInstanceError(f"No city named {name!r}")

    def subinstance(self, indices, start, end):
        """Restrict to some cities, with new endpoints given as global indices.

        Returns the sub-instance and the list mapping its indices back to ours.
        Endpoints are placed first and last in the new storage order.
        """
        middle = [i for i in indices if i not in (start, end)]
        mapping = [start] + middle + [end]
        sub = TspInstance(
            tuple(self.cities[i] for i in mapping),
            DistanceMatrix(np.array(self.d.d[np.ix_(mapping, mapping)])),
            0,
            len(mapping) - 1,
        )
        return sub, mapping

    def check_tour(self, tour):
        """Raise MalformedTourError unless ``tour`` visits every city once, start to end."""
        order = tour.order
        if len(order) != self.n:
            raise MalformedTourError(f"Tour has {len(order)} stops, instance has {self.n} cities")
        if sorted(order) != list(range(self.n)):
            raise MalformedTourError(f"Tour {order} is not a permutation of the cities")
        if order[0] != self.start or order[-1] != self.end:
            raise MalformedTourError(
                f"Tour must run from city {self.start} to city {self.end}, got {order[0]} .. {order[-1]}"
            )

    def is_valid_tour(self, tour):
        try:
            self.check_tour(tour)
        except MalformedTourError:
            return False
        return True


def path_cost(instance, order):
    """Sum of consecutive edges along an open path of city indices."""
    d = instance.d.d
    return float(sum(d[a, b] for a, b in zip(order[:-1], order[1:])))


def tour_cost(instance, tour):
    """Closed-loop cost of a tour: consecutive edges plus the edge end -> start.

    Parameters
    ----------
    instance: TspInstance
    tour: Tour

    Returns
    -------
    cost: float
        kilometres
    """
    instance.check_tour(tour)
    order = tour.order
    return path_cost(instance, order) + float(instance.d.d[order[-1], order[0]])


def nearest_neighbor_tour(instance):
    """Greedy tour: from the start always move to the closest unvisited
    intermediate city, then to the destination."""
    d = instance.d.d
    remaining = list(instance.intermediates)
    order = [instance.start]
    while remaining:
        here = order[-1]
        nxt = min(remaining, key=lambda j: (d[here, j], j))
        order.append(nxt)
        remaining.remove(nxt)
    order.append(instance.end)
    return Tour(order)


def select_subinstance(pool=EUROPEAN_CITIES, n=4, seed=0, min_cities=4, max_cities=8,
                       start_name=DEFAULT_START, end_name=DEFAULT_END):
    """Pick a seeded n-city instance from a pool, always keeping both endpoints.

    The remaining n-2 cities are drawn without replacement by
    ``numpy.random.default_rng(seed).choice`` from the other pool cities,
    then laid out in pool order: start first, destination last.

    Parameters
    ----------
    pool: sequence of City
    n: int
        number of cities, in [min_cities, max_cities]
    seed: int
    min_cities, max_cities: int, optional
        bounds on n, default 4 and 8

    Returns
    -------
    instance: TspInstance
    """
    if not min_cities <= n <= max_cities:
        raise InvalidInstanceError(f"Number of cities {n} outside [{min_cities}, {max_cities}]")
    pool = tuple(pool)
    _check_unique(pool)
    names = [c.name for c in pool]
    for name in (start_name, end_name):
        if name not in names:
            raise InvalidInstanceError(f"City pool lacks the endpoint {name!r}")

    others = [c for c in pool if c.name not in (start_name, end_name)]
    if n - 2 > len(others):
        raise InvalidInstanceError(f"Pool of {len(pool)} cities cannot supply {n}")

    rng = np.random.default_rng(seed)
    picked = sorted(rng.choice(len(others), size=n - 2, replace=False).tolist())
    cities = [pool[names.index(start_name)]] + [others[i] for i in picked] + [pool[names.index(end_name)]]
    return TspInstance.from_cities(cities)

"""QUBO and Ising encodings of fixed-endpoint tours.

Only the intermediate cities get variables: ``x[c, t] = 1`` means
intermediate city ``c`` (its position among ``instance.intermediates``) is
visited in slot ``t``.  With m = n - 2 intermediates there are m*m
variables, numbered city-major: ``var = c * m + t``.

Bitstrings are text of '0'/'1' where character i is variable i.  Basis
index z of the matching statevector has bit i equal to ``(z >> i) & 1``.
"""
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import EncodingError, InvalidInstanceError
from .instance import Tour

logger = logging.getLogger(__name__)

DEFAULT_ALPHA = 2.0


@dataclass(frozen=True)
class QuboModel:
    """Quadratic binary model with constant offset.

    Attributes
    ----------
    num_vars: int
    linear: dict
        var -> coefficient
    quadratic: dict
        (i, j) with i < j -> coefficient
    offset: float
    penalty_A: float
        constraint weight, km
    var_map: dict
        (intermediate position, slot) -> var
    instance: TspInstance or None
        the instance this model encodes
    """
    num_vars: int
    linear: dict
    quadratic: dict
    offset: float
    penalty_A: float = 0.0
    var_map: dict = field(default_factory=dict)
    instance: object = field(default=None, compare=False, repr=False)

    @property
    def slots(self):
        return int(round(np.sqrt(self.num_vars)))

    def to_dict(self):
        return {
            "num_vars": self.num_vars,
            "linear": {str(k): v for k, v in sorted(self.linear.items())},
            "quadratic": {f"{i},{j}": v for (i, j), v in sorted(self.quadratic.items())},
            "offset": self.offset,
            "penalty_A": self.penalty_A,
            "var_map": {f"{c},{t}": v for (c, t), v in sorted(self.var_map.items())},
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


@dataclass(frozen=True)
class IsingModel:
    """Spin model E(s) = constant + sum h_i s_i + sum J_ij s_i s_j, s in {+1, -1}."""
    num_spins: int
    h: dict
    J: dict
    constant: float

    def scaled(self, factor):
        """A copy with every coefficient, including the constant, multiplied by factor."""
        return IsingModel(
            self.num_spins,
            {k: v * factor for k, v in self.h.items()},
            {k: v * factor for k, v in self.J.items()},
            self.constant * factor,
        )

    def max_coefficient(self):
        values = [abs(v) for v in self.h.values()] + [abs(v) for v in self.J.values()]
        return max(values, default=0.0)


@dataclass(frozen=True)
class InvalidAssignment:
    """A bitstring that is not a one-hot permutation matrix.

    Attributes
    ----------
    reason: str
        human readable description of the first failure
    bad_rows: tuple
        intermediate positions not assigned exactly one slot
    bad_cols: tuple
        slots not holding exactly one city
    """
    reason: str
    bad_rows: tuple = ()
    bad_cols: tuple = ()

    def __bool__(self):
        return False


def _add(quadratic, i, j, value):
    if i == j:
        raise ValueError("diagonal terms belong in the linear part")
    key = (i, j) if i < j else (j, i)
    quadratic[key] = quadratic.get(key, 0.0) + value


def encode_tsp_qubo(instance, alpha=DEFAULT_ALPHA):
    """Encode a fixed-endpoint instance as a QUBO.

    The objective is the closed tour cost start -> slots -> end -> start,
    plus ``penalty_A * (sum over cities (1 - row sum)^2 + sum over slots
    (1 - column sum)^2)`` with ``penalty_A = alpha * n * max_edge``.
    A valid one-hot assignment has energy equal to its tour cost.

    Parameters
    ----------
    instance: TspInstance
        must have at least 3 cities
    alpha: float, optional
        penalty multiplier, at least 1, default 2

    Returns
    -------
    model: QuboModel
    """
    if instance.n < 3:
        raise InvalidInstanceError("QUBO encoding needs at least 3 cities")
    if alpha < 1:
        raise InvalidInstanceError(f"Penalty multiplier alpha={alpha} must be >= 1")

    d = instance.d.d
    mids = instance.intermediates
    m = len(mids)
    A = alpha * instance.n * instance.d.max_edge()

    def var(c, t):
        return c * m + t

    linear = {var(c, t): 0.0 for c in range(m) for t in range(m)}
    quadratic = {}
    offset = float(d[instance.end, instance.start])

    # route cost
    for c, city in enumerate(mids):
        linear[var(c, 0)] += d[instance.start, city]
        linear[var(c, m - 1)] += d[city, instance.end]
    for t in range(m - 1):
        for c, a in enumerate(mids):
            for c2, b in enumerate(mids):
                if c != c2:
                    _add(quadratic, var(c, t), var(c2, t + 1), d[a, b])

    # (1 - sum x)^2 = 1 - sum x + 2 sum_{i<j} x_i x_j for binary x
    groups = [[var(c, t) for t in range(m)] for c in range(m)]
    groups += [[var(c, t) for c in range(m)] for t in range(m)]
    for group in groups:
        offset += A
        for k, v in enumerate(group):
            linear[v] -= A
            for w in group[k + 1:]:
                _add(quadratic, v, w, 2.0 * A)

    var_map = {(c, t): var(c, t) for c in range(m) for t in range(m)}
    linear = {k: float(v) for k, v in linear.items()}
    quadratic = {k: float(v) for k, v in quadratic.items()}
    logger.debug("QUBO for %d cities: %d vars, %d couplings, A=%.1f",
                 instance.n, m * m, len(quadratic), A)
    return QuboModel(m * m, linear, quadratic, offset, float(A), var_map, instance)


def _bits_array(bits, num_vars):
    if isinstance(bits, str):
        if len(bits) != num_vars or set(bits) - {"0", "1"}:
            raise EncodingError(f"Expected a {num_vars}-character bitstring, got {bits!r}")
        return np.array([int(b) for b in bits])
    x = np.asarray(bits, dtype=int)
    if x.shape != (num_vars,):
        raise EncodingError(f"Expected {num_vars} bits, got shape {x.shape}")
    return x


def qubo_energy(model, bits):
    """offset + sum linear*x + sum quadratic*x_i*x_j for one bitstring."""
    x = _bits_array(bits, model.num_vars)
    e = model.offset
    for v, a in model.linear.items():
        if x[v]:
            e += a
    for (i, j), b in model.quadratic.items():
        if x[i] and x[j]:
            e += b
    return float(e)


def ising_energy(model, spins):
    """Energy of a spin assignment (sequence of +1/-1)."""
    s = np.asarray(spins)
    if s.shape != (model.num_spins,):
        raise EncodingError(f"Expected {model.num_spins} spins, got shape {s.shape}")
    e = model.constant
    for i, v in model.h.items():
        e += v * s[i]
    for (i, j), v in model.J.items():
        e += v * s[i] * s[j]
    return float(e)


def basis_bits(num_bits):
    """Array of shape (2**num_bits, num_bits): row z holds the bits of z, bit i in column i."""
    z = np.arange(2 ** num_bits)
    return (z[:, None] >> np.arange(num_bits)[None, :]) & 1


def index_to_bitstring(z, num_bits):
    return "".join(str((int(z) >> i) & 1) for i in range(num_bits))


def bitstring_to_index(bits):
    return sum(1 << i for i, b in enumerate(bits) if b == "1")


def qubo_energies(model):
    """Energy of every basis state, as a vector indexed by z."""
    x = basis_bits(model.num_vars).astype(float)
    e = np.full(x.shape[0], model.offset)
    for v, a in model.linear.items():
        e += a * x[:, v]
    for (i, j), b in model.quadratic.items():
        e += b * x[:, i] * x[:, j]
    return e


def ising_energies(model):
    """Energy of every basis state z, with spin i = 1 - 2 * bit i."""
    s = 1.0 - 2.0 * basis_bits(model.num_spins)
    e = np.full(s.shape[0], float(model.constant))
    for i, v in model.h.items():
        e += v * s[:, i]
    for (i, j), v in model.J.items():
        e += v * s[:, i] * s[:, j]
    return e


def qubo_to_ising(model):
    """Change variables x = (1 - s) / 2.

    a x = a/2 - (a/2) s and b x_i x_j = (b/4)(1 - s_i - s_j + s_i s_j),
    so energies agree on every bitstring.
    """
    h = {v: 0.0 for v in range(model.num_vars)}
    J = {}
    constant = model.offset
    for v, a in model.linear.items():
        h[v] -= a / 2.0
        constant += a / 2.0
    for (i, j), b in model.quadratic.items():
        J[(i, j)] = J.get((i, j), 0.0) + b / 4.0
        h[i] -= b / 4.0
        h[j] -= b / 4.0
        constant += b / 4.0
    return IsingModel(model.num_vars, h, J, float(constant))


def decode_bitstring(model, bits):
    """Turn an assignment into a Tour, or explain why it is not one.

    Parameters
    ----------
    model: QuboModel
    bits: str or sequence of int

    Returns
    -------
    tour: Tour or InvalidAssignment
    """
    x = _bits_array(bits, model.num_vars)
    m = model.slots
    grid = x.reshape(m, m)
    row_sums = grid.sum(axis=1)
    col_sums = grid.sum(axis=0)
    bad_rows = tuple(int(c) for c in np.flatnonzero(row_sums != 1))
    bad_cols = tuple(int(t) for t in np.flatnonzero(col_sums != 1))
    if bad_rows or bad_cols:
        if np.any(col_sums == 0):
            reason = "empty slot"
        elif np.any(col_sums > 1):
            reason = "slot holds several cities"
        elif np.any(row_sums == 0):
            reason = "city never visited"
        else:
            reason = "city visited more than once"
        return InvalidAssignment(reason, bad_rows, bad_cols)

    instance = model.instance
    mids = instance.intermediates
    order = [instance.start]
    for t in range(m):
        c = int(np.flatnonzero(grid[:, t])[0])
        order.append(mids[c])
    order.append(instance.end)
    return Tour(order)


def encode_tour(model, tour):
    """The one-hot bitstring of a tour."""
    instance = model.instance
    instance.check_tour(tour)
    mids = instance.intermediates
    x = ["0"] * model.num_vars
    for t, city in enumerate(tour.order[1:-1]):
        x[model.var_map[(mids.index(city), t)]] = "1"
    return "".join(x)

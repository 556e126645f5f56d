"""Statevector simulation of QAOA circuits with optional noise.

Qubit i is bit i of the basis index (little-endian), so that a sampled
basis index converts to the same bitstring convention as ``tspq.qubo``.

Gate noise is simulated by stochastic unravelling: depolarizing errors
become randomly inserted Pauli gates, one circuit per trajectory, and
readout errors flip measured bits.  Nothing here builds a density matrix.
"""
import functools
import itertools
import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import EncodingError, InfeasibleConfigError, InvalidInstanceError
from .instance import Tour, tour_cost
from .qubo import InvalidAssignment, bitstring_to_index, index_to_bitstring, ising_energies

logger = logging.getLogger(__name__)

DEFAULT_SHOTS = 4096
MAX_COMPACT_CITIES = 8

# Median figures for the 127-qubit Eagle r3 device the defaults come from.
# T1/T2 and CLOPS are kept for reference only; decay is not simulated.
SINGLE_QUBIT_ERROR = 2.726e-4
TWO_QUBIT_ERROR = 7.984e-3
T1_MICROSECONDS = 262.75
T2_MICROSECONDS = 169.99
CLOPS = 30000

ONE_QUBIT_KINDS = ("H", "RX", "RZ", "X", "Y", "Z")
GATE_KINDS = ONE_QUBIT_KINDS + ("RZZ", "PHASE_DIAGONAL")
PAULIS = ("X", "Y", "Z")

_SQRT2_INV = 1 / np.sqrt(2)
_FIXED_MATRICES = {
    "H": np.array([[1, 1], [1, -1]], dtype=complex) * _SQRT2_INV,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _rx(theta):
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


@dataclass(frozen=True, eq=False)
class Gate:
    """One circuit operation.

    Attributes
    ----------
    kind: str
        one of GATE_KINDS
    targets: tuple of int
    angle: float or None
        rotation angle in radians; for PHASE_DIAGONAL the multiplier gamma
    table: array or None
        PHASE_DIAGONAL only, energy per basis state; the gate applies
        exp(-i * angle * table[z])
    """
    kind: str
    targets: tuple
    angle: float = None
    table: np.ndarray = None

    def __eq__(self, other):
        if not isinstance(other, Gate):
            return NotImplemented
        if (self.kind, self.targets, self.angle) != (other.kind, other.targets, other.angle):
            return False
        if self.table is None or other.table is None:
            return self.table is None and other.table is None
        return np.array_equal(self.table, other.table)

    __hash__ = None

    def to_dict(self):
        out = {"kind": self.kind, "targets": list(self.targets)}
        if self.angle is not None:
            out["angle"] = self.angle
        if self.table is not None:
            out["table"] = self.table.tolist()
        return out


@dataclass(frozen=True)
class Circuit:
    """An ordered gate list on ``num_qubits`` qubits."""
    num_qubits: int
    gates: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        self.validate()

    def validate(self):
        n = self.num_qubits
        for g in self.gates:
            if g.kind not in GATE_KINDS:
                raise EncodingError(f"Unknown gate kind {g.kind!r}")
            for q in g.targets:
                if not 0 <= q < n:
                    raise EncodingError(f"Qubit index {q} out of range for {n}-qubit circuit in {g.kind}")
            if g.kind in ONE_QUBIT_KINDS and len(g.targets) != 1:
                raise EncodingError(f"{g.kind} acts on exactly one qubit")
            if g.kind == "RZZ" and (len(g.targets) != 2 or g.targets[0] == g.targets[1]):
                raise EncodingError("RZZ needs two distinct qubits")
            if g.kind == "PHASE_DIAGONAL" and (g.table is None or len(g.table) != 2 ** n):
                raise EncodingError(f"PHASE_DIAGONAL needs a table of length {2 ** n}")

    def __len__(self):
        return len(self.gates)

    def to_dict(self):
        return {"num_qubits": self.num_qubits, "gates": [g.to_dict() for g in self.gates]}

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)


@dataclass(frozen=True, eq=False)
class Statevector:
    """Normalised complex amplitudes of a register; read-only once built."""
    num_qubits: int
    amp: np.ndarray

    def __post_init__(self):
        amp = np.array(self.amp, dtype=complex)
        if amp.shape != (2 ** self.num_qubits,):
            raise EncodingError(f"Expected {2 ** self.num_qubits} amplitudes, got {amp.shape}")
        amp.setflags(write=False)
        object.__setattr__(self, "amp", amp)

    @classmethod
    def zero(cls, num_qubits):
        amp = np.zeros(2 ** num_qubits, dtype=complex)
        amp[0] = 1.0
        return cls(num_qubits, amp)

    @classmethod
    def basis(cls, num_qubits, z):
        amp = np.zeros(2 ** num_qubits, dtype=complex)
        amp[z] = 1.0
        return cls(num_qubits, amp)

    def probabilities(self):
        return np.abs(self.amp) ** 2

    def norm(self):
        return float(np.linalg.norm(self.amp))


@dataclass(frozen=True)
class NoiseModel:
    """Depolarizing gate errors and readout bit flips.

    Attributes
    ----------
    p1q: float
        Pauli error probability after each single-qubit gate
    p2q: float
        per touched qubit, after each multi-qubit gate
    p_read0to1, p_read1to0: float
        readout flip probabilities
    """
    p1q: float = SINGLE_QUBIT_ERROR
    p2q: float = TWO_QUBIT_ERROR
    p_read0to1: float = 0.01
    p_read1to0: float = 0.01

    def __post_init__(self):
        for name in ("p1q", "p2q", "p_read0to1", "p_read1to0"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"Noise probability {name}={p} outside [0, 1]")

    @classmethod
    def ideal(cls):
        return cls(0.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_dict(cls, d):
        return cls(**{k: float(v) for k, v in d.items()})

    def to_dict(self):
        return {"p1q": self.p1q, "p2q": self.p2q,
                "p_read0to1": self.p_read0to1, "p_read1to0": self.p_read1to0}

    @property
    def has_gate_noise(self):
        return self.p1q > 0 or self.p2q > 0

    @property
    def has_readout_noise(self):
        return self.p_read0to1 > 0 or self.p_read1to0 > 0


@dataclass(frozen=True)
class SampleCounts:
    """Measurement histogram: bitstring -> count, summing to ``shots``."""
    counts: dict
    shots: int

    def __post_init__(self):
        if sum(self.counts.values()) != self.shots:
            raise ValueError("Sample counts do not add up to the number of shots")

    def frequency(self, bits):
        return self.counts.get(bits, 0) / self.shots

    def merge(self, other):
        counts = dict(self.counts)
        for k, v in other.counts.items():
            counts[k] = counts.get(k, 0) + v
        return SampleCounts(dict(sorted(counts.items())), self.shots + other.shots)

    def to_dict(self):
        return dict(self.counts)

    def to_json(self, **kwargs):
        return json.dumps(self.counts, **kwargs)


@dataclass(frozen=True)
class QaoaParams:
    """Angles for p QAOA layers."""
    gammas: tuple
    betas: tuple

    def __post_init__(self):
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if len(self.gammas) != len(self.betas) or not self.gammas:
            raise ValueError("QAOA needs equal, non-zero numbers of gammas and betas")

    @property
    def p(self):
        return len(self.gammas)

    def to_vector(self):
        return np.array(self.gammas + self.betas)

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        p = len(x) // 2
        return cls(tuple(x[:p]), tuple(x[p:]))


def build_qaoa_circuit(ising, params):
    """QAOA circuit for an Ising cost Hamiltonian.

    H on every qubit, then per layer k: RZ(2 gamma_k h_i) for each non-zero
    h, RZZ(2 gamma_k J_ij) for each non-zero J, RX(2 beta_k) on each qubit.
    Terms are emitted in sorted index order.

    Parameters
    ----------
    ising: IsingModel
    params: QaoaParams

    Returns
    -------
    circuit: Circuit
    """
    n = ising.num_spins
    if n < 1:
        raise EncodingError("QAOA needs at least one qubit")
    h = sorted((i, v) for i, v in ising.h.items() if v != 0)
    J = sorted((k, v) for k, v in ising.J.items() if v != 0)

    gates = [Gate("H", (q,)) for q in range(n)]
    for gamma, beta in zip(params.gammas, params.betas):
        gates += [Gate("RZ", (i,), 2 * gamma * v) for i, v in h]
        gates += [Gate("RZZ", (i, j), 2 * gamma * v) for (i, j), v in J]
        gates += [Gate("RX", (q,), 2 * beta) for q in range(n)]
    return Circuit(n, gates)


@functools.lru_cache(maxsize=8)
def _spin_signs(n):
    # row q holds the Z eigenvalue (+1 for bit 0, -1 for bit 1) of qubit q per basis state
    z = np.arange(2 ** n)
    signs = 1.0 - 2.0 * ((z[None, :] >> np.arange(n)[:, None]) & 1)
    signs.setflags(write=False)
    return signs


def _apply_1q(amp, matrix, qubit, n):
    psi = amp.reshape(2 ** (n - qubit - 1), 2, 2 ** qubit)
    return np.einsum("ab,ibj->iaj", matrix, psi).reshape(-1)


def _apply_gate(amp, gate, n):
    kind = gate.kind
    if kind in _FIXED_MATRICES:
        return _apply_1q(amp, _FIXED_MATRICES[kind], gate.targets[0], n)
    if kind == "RX":
        return _apply_1q(amp, _rx(gate.angle), gate.targets[0], n)
    if kind == "RZ":
        s = _spin_signs(n)[gate.targets[0]]
        return amp * np.exp(-0.5j * gate.angle * s)
    if kind == "RZZ":
        signs = _spin_signs(n)
        i, j = gate.targets
        return amp * np.exp(-0.5j * gate.angle * signs[i] * signs[j])
    if kind == "PHASE_DIAGONAL":
        return amp * np.exp(-1j * gate.angle * gate.table)
    raise EncodingError(f"Unknown gate kind {kind!r}")


def simulate(circuit, initial=None):
    """Apply a circuit gate by gate to a statevector.

    Parameters
    ----------
    circuit: Circuit
    initial: Statevector, optional
        default |0...0>

    Returns
    -------
    state: Statevector
    """
    n = circuit.num_qubits
    if initial is None:
        initial = Statevector.zero(n)
    if initial.num_qubits != n:
        raise EncodingError(f"Initial state has {initial.num_qubits} qubits, circuit has {n}")
    circuit.validate()

    amp = np.array(initial.amp)
    for gate in circuit.gates:
        amp = _apply_gate(amp, gate, n)
    return Statevector(n, amp)


def qaoa_statevector(energies, num_qubits, params):
    """Closed-form QAOA state for a diagonal cost.

    Equal, up to a global phase, to simulating the gate-level circuit whose
    cost layer is exp(-i gamma diag(energies)).  Used inside the optimizer
    loop, where only probabilities matter.
    """
    dim = 2 ** num_qubits
    amp = np.full(dim, 1 / np.sqrt(dim), dtype=complex)
    for gamma, beta in zip(params.gammas, params.betas):
        amp = amp * np.exp(-1j * gamma * energies)
        rx = _rx(2 * beta)
        for q in range(num_qubits):
            amp = _apply_1q(amp, rx, q, num_qubits)
    return Statevector(num_qubits, amp)


def expected_value(energies, state):
    """Sum over z of |amp_z|^2 * energies[z]."""
    energies = np.asarray(energies)
    if energies.shape != state.amp.shape:
        raise EncodingError(f"Energy table of length {len(energies)} does not match a {state.num_qubits}-qubit state")
    return float(np.dot(state.probabilities(), energies))


def expected_energy(ising, state):
    """Expectation of an Ising Hamiltonian in a state.

    Parameters
    ----------
    ising: IsingModel
    state: Statevector

    Returns
    -------
    energy: float
    """
    if ising.num_spins != state.num_qubits:
        raise EncodingError(f"Ising model has {ising.num_spins} spins, state has {state.num_qubits} qubits")
    return expected_value(ising_energies(ising), state)


def sample(state, shots=DEFAULT_SHOTS, noise=None, seed=0):
    """Draw measurement outcomes.

    Each shot is an independent draw from |amp|^2.  With a noise model,
    each measured bit is then flipped with the readout probabilities.

    Parameters
    ----------
    state: Statevector
    shots: int
    noise: NoiseModel, optional
    seed: int or numpy Generator

    Returns
    -------
    counts: SampleCounts
    """
    if shots < 1:
        raise ValueError("Need at least one shot")
    rng = np.random.default_rng(seed)
    n = state.num_qubits
    probs = state.probabilities()
    probs = probs / probs.sum()
    outcomes = rng.choice(len(probs), size=shots, p=probs)

    if noise is not None and noise.has_readout_noise:
        weights = 1 << np.arange(n)
        bits = (outcomes[:, None] >> np.arange(n)[None, :]) & 1
        u = rng.random(bits.shape)
        flip = np.where(bits == 0, u < noise.p_read0to1, u < noise.p_read1to0)
        outcomes = (bits ^ flip) @ weights

    values, counts = np.unique(outcomes, return_counts=True)
    return SampleCounts(
        {index_to_bitstring(z, n): int(c) for z, c in zip(values, counts)},
        int(shots),
    )


def apply_gate_noise(circuit, noise, seed=0):
    """Insert random Pauli errors after gates.

    After every gate, each qubit it touches independently suffers an error
    with probability ``noise.p1q`` (one-qubit gates) or ``noise.p2q``
    (all others); the error is X, Y or Z with equal chance.  Inserted
    Paulis are not themselves noisy.

    Parameters
    ----------
    circuit: Circuit
    noise: NoiseModel
    seed: int or numpy Generator

    Returns
    -------
    noisy: Circuit
    """
    if not noise.has_gate_noise:
        return circuit
    rng = np.random.default_rng(seed)
    gates = []
    inserted = 0
    for gate in circuit.gates:
        gates.append(gate)
        p = noise.p1q if len(gate.targets) == 1 else noise.p2q
        for q in gate.targets:
            if rng.random() < p:
                gates.append(Gate(PAULIS[rng.integers(3)], (q,)))
                inserted += 1
    logger.debug("Inserted %d Pauli errors into %d gates", inserted, len(circuit))
    return Circuit(circuit.num_qubits, gates)


def circuit_metrics(circuit):
    """Depth and gate count.

    Depth uses greedy layering: each gate goes in the earliest layer after
    every layer already used by one of its qubits.

    Returns
    -------
    metrics: dict
        ``{"depth": int, "total_gates": int}``
    """
    level = [0] * circuit.num_qubits
    depth = 0
    for gate in circuit.gates:
        layer = max(level[q] for q in gate.targets) + 1
        for q in gate.targets:
            level[q] = layer
        depth = max(depth, layer)
    return {"depth": depth, "total_gates": len(circuit.gates)}


@dataclass(frozen=True, eq=False)
class CompactCostTable:
    """Permutation-index encoding of a fixed-endpoint instance.

    Basis state z < len(perms) stands for the z-th intermediate permutation
    in enumeration order; higher indices are invalid and carry the worst
    valid cost.

    Attributes
    ----------
    instance: TspInstance
    num_qubits: int
        ceil(log2((n-2)!)), at least 1
    perms: tuple
        intermediate orders, lexicographic
    energies: array
        cost per basis state, km
    """
    instance: object
    num_qubits: int
    perms: tuple
    energies: np.ndarray = field(repr=False)

    @property
    def num_valid(self):
        return len(self.perms)

    def phase_energies(self):
        """Energies shifted and scaled into [0, 1] for use as circuit phases."""
        lo, hi = float(self.energies.min()), float(self.energies.max())
        spread = hi - lo if hi > lo else 1.0
        return (self.energies - lo) / spread

    def decode(self, bits):
        z = bitstring_to_index(bits) if isinstance(bits, str) else int(bits)
        if z >= len(self.perms):
            return InvalidAssignment("index beyond permutation table")
        inst = self.instance
        return Tour((inst.start,) + self.perms[z] + (inst.end,))

    def encode(self, tour):
        self.instance.check_tour(tour)
        z = self.perms.index(tuple(tour.order[1:-1]))
        return index_to_bitstring(z, self.num_qubits)


def compact_cost_table(instance, max_cities=MAX_COMPACT_CITIES):
    """Build the permutation-index table for an instance of at most ``max_cities``."""
    if instance.n < 3:
        raise InvalidInstanceError("Compact encoding needs at least 3 cities")
    if instance.n > max_cities:
        raise InfeasibleConfigError(
            f"Compact encoding is limited to {max_cities} cities, instance has {instance.n}"
        )
    perms = tuple(itertools.permutations(instance.intermediates))
    num_qubits = max(1, (len(perms) - 1).bit_length())
    costs = np.array([
        tour_cost(instance, Tour((instance.start,) + perm + (instance.end,))) for perm in perms
    ])
    energies = np.full(2 ** num_qubits, costs.max())
    energies[:len(perms)] = costs
    energies.setflags(write=False)
    return CompactCostTable(instance, num_qubits, perms, energies)


def build_compact_cost_circuit(instance, params, table=None):
    """QAOA circuit over the permutation-index encoding.

    Each layer is one PHASE_DIAGONAL gate applying exp(-i gamma C(z)), with C
    the tour cost scaled into [0, 1] (out-of-range indices take the worst
    cost), followed by RX(2 beta) on every qubit.

    Parameters
    ----------
    instance: TspInstance
    params: QaoaParams
    table: CompactCostTable, optional
        reuse a table already built for this instance

    Returns
    -------
    circuit: Circuit
    """
    if table is None:
        table = compact_cost_table(instance)
    n = table.num_qubits
    phases = table.phase_energies()
    gates = [Gate("H", (q,)) for q in range(n)]
    for gamma, beta in zip(params.gammas, params.betas):
        gates.append(Gate("PHASE_DIAGONAL", tuple(range(n)), gamma, phases))
        gates += [Gate("RX", (q,), 2 * beta) for q in range(n)]
    return Circuit(n, gates)

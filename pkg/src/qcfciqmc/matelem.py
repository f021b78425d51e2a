"""Matrix elements of the similarity-transformed Hamiltonian H' = U^dag H U.

This is the quantum subroutine of the hybrid method: the walker engine asks
for rows and entries of H' in the circuit-rotated basis and never sees the
statevector.  Two backends share one interface.  The exact backend evaluates
entries from dense circuit applications.  The sampled backend emulates the
one-ancilla estimation circuits at the level of their measurement statistics:
magnitudes from a multinomial draw over the normalized distribution
q(j) = |H'_ji|^2 / nu^2 with nu^2 = <i|U^dag H^2 U|i>, and signs from the
Hadamard-test Bernoulli with success probability (1 + Re H'_ji / nu) / 2.

Sampling is keyed per basis index from the source seed, so every backend call
is a pure function of (source, indices): repeated queries reproduce the same
draw and results never depend on call order.

Elements are measured once and cached.  The cache stores the symmetric key
(min(i,j), max(i,j)) because the engine-facing Hamiltonians are real
symmetric; it can be persisted to a small versioned binary file between runs.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .operators import PauliSum, apply_pauli_sum
from .simulator import (
    Circuit,
    Statevector,
    amplitude_vector,
    apply_circuit,
    prepare_basis_state,
)


class MatelemError(ValueError):
    pass


class SignAmbiguityError(MatelemError):
    """Re H'_ji statistically indistinguishable from zero; treat the element as zero."""


@dataclass(frozen=True)
class ExactBackend:
    magnitude_floor: float = 1e-8


@dataclass(frozen=True)
class SampledBackend:
    shots_magnitude: int = 10**6
    shots_sign: int = 10**4
    magnitude_floor: float = 0.0  # extra user floor on top of the 3-SE cut
    ambiguity_z: float = 3.0


@dataclass
class MatrixElementCache:
    entries: dict = field(default_factory=dict)  # (min, max) -> signed real
    hits: int = 0
    misses: int = 0

    def lookup(self, i: int, j: int):
        key = (i, j) if i <= j else (j, i)
        val = self.entries.get(key)
        if val is None:
            self.misses += 1
        else:
            self.hits += 1
        return val

    def store(self, i: int, j: int, value: float) -> float:
        """Insert-if-absent; the first stored value wins."""
        key = (i, j) if i <= j else (j, i)
        return self.entries.setdefault(key, float(value))


@dataclass
class ConnectionList:
    source: int
    connections: list  # [(j, |H'_ji| estimate)], j != source, above floor


class ElementSource:
    """Matrix elements of U^dag H U with a fixed circuit and parameter set."""

    def __init__(self, hamiltonian: PauliSum, circuit: Circuit, params=(),
                 backend=None, cache: MatrixElementCache | None = None, seed: int = 0):
        if not hamiltonian.is_hermitian():
            raise MatelemError("Hamiltonian must be Hermitian")
        self.hamiltonian = hamiltonian
        self.circuit = circuit
        self.params = tuple(float(p) for p in params)  # immutable for the run
        self.backend = backend if backend is not None else ExactBackend()
        self.cache = cache if cache is not None else MatrixElementCache()
        self.seed = int(seed)
        self.n_qubits = circuit.n_qubits
        self._lock = threading.Lock()
        self._columns: dict = {}
        self._rows: dict = {}

    # -- dense plumbing ----------------------------------------------------

    def transformed_column(self, i: int) -> np.ndarray:
        """Column i of H': entry j equals <j|U^dag H U|i>."""
        dim = 1 << self.n_qubits
        if not (0 <= i < dim):
            raise MatelemError(f"basis index {i} out of range")
        col = self._columns.get(i)
        if col is None:
            state = apply_circuit(prepare_basis_state(self.n_qubits, i), self.circuit, self.params)
            w = Statevector(self.n_qubits, apply_pauli_sum(self.hamiltonian, state.amplitudes))
            col = amplitude_vector(w, self.circuit, self.params)
            with self._lock:
                self._columns.setdefault(i, col)
        return col

    def _rng(self, *key) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=tuple(int(k) for k in key))
        return np.random.Generator(np.random.Philox(ss))

    # -- magnitudes --------------------------------------------------------

    def _row_exact(self, i: int) -> ConnectionList:
        col = self.transformed_column(i)
        mags = np.abs(col)
        floor = self.backend.magnitude_floor
        out = [(int(j), float(mags[j])) for j in np.nonzero(mags >= floor)[0] if j != i]
        return ConnectionList(i, out)

    def _row_sampled(self, i: int) -> ConnectionList:
        col = self.transformed_column(i)
        nu_sq = float(np.vdot(col, col).real)  # exactly <i|U^dag H^2 U|i>
        if nu_sq <= 0.0:
            return ConnectionList(i, [])
        q = np.abs(col) ** 2 / nu_sq
        q = q / q.sum()
        shots = self.backend.shots_magnitude
        counts = self._rng(i).multinomial(shots, q)
        estimates = nu_sq * counts / shots
        # binomial standard error of each |H'_ji|^2 estimate
        se = nu_sq * np.sqrt(counts / shots * (1.0 - counts / shots) / shots)
        keep = estimates >= np.maximum(self.backend.magnitude_floor**2, 3.0 * se)
        out = [
            (int(j), float(np.sqrt(estimates[j])))
            for j in np.nonzero(keep)[0]
            if j != i and counts[j] > 0
        ]
        return ConnectionList(i, out)

    # -- signs -------------------------------------------------------------

    def _sign_exact(self, i: int, j: int) -> int:
        re = float(self.transformed_column(i)[j].real)
        if re == 0.0:
            raise SignAmbiguityError(f"Re H'[{j},{i}] is exactly zero")
        return 1 if re > 0.0 else -1

    def _sign_sampled(self, i: int, j: int) -> int:
        col = self.transformed_column(i)
        nu = float(np.sqrt(np.vdot(col, col).real))
        if nu == 0.0:
            raise SignAmbiguityError("zero row norm; no sign to estimate")
        p = 0.5 * (1.0 + float(col[j].real) / nu)
        p = min(1.0, max(0.0, p))
        shots = self.backend.shots_sign
        successes = int(self._rng(min(i, j), max(i, j), 1).binomial(shots, p))
        margin = abs(2 * successes - shots)
        if margin <= self.backend.ambiguity_z * np.sqrt(shots):
            raise SignAmbiguityError(
                f"sign margin {margin} within {self.backend.ambiguity_z} sigma of a coin flip"
            )
        return 1 if 2 * successes > shots else -1


def row_magnitudes(src: ElementSource, i: int) -> ConnectionList:
    if isinstance(src.backend, ExactBackend):
        return src._row_exact(i)
    return src._row_sampled(i)


def element_sign(src: ElementSource, i: int, j: int) -> int:
    if isinstance(src.backend, ExactBackend):
        return src._sign_exact(i, j)
    return src._sign_sampled(i, j)


def diagonal_element(src: ElementSource, i: int) -> float:
    """<phi_i|H|phi_i>; exact expectation, or shot-averaged on the sampled backend."""
    col = src.transformed_column(i)
    exact = float(col[i].real)
    if isinstance(src.backend, ExactBackend):
        return exact
    # Hadamard-test emulation of the same estimation circuit at j = i:
    # nu * (2 p_hat - 1) with p = (1 + H'_ii/nu)/2
    nu = float(np.sqrt(np.vdot(col, col).real))
    if nu == 0.0:
        return 0.0
    p = min(1.0, max(0.0, 0.5 * (1.0 + exact / nu)))
    shots = src.backend.shots_sign
    successes = int(src._rng(i, 3).binomial(shots, p))
    return nu * (2.0 * successes / shots - 1.0)


def get_element(src: ElementSource, i: int, j: int) -> float:
    """Signed real H'_ji, measured once then served from the symmetric cache."""
    if i == j:
        cached = src.cache.lookup(i, i)
        if cached is not None:
            return cached
        return src.cache.store(i, i, diagonal_element(src, i))
    cached = src.cache.lookup(i, j)
    if cached is not None:
        return cached
    row = row_magnitudes(src, i)
    mag = 0.0
    for (k, m) in row.connections:
        if k == j:
            mag = m
            break
    if mag == 0.0:
        return src.cache.store(i, j, 0.0)
    try:
        sign = element_sign(src, i, j)
    except SignAmbiguityError:
        return src.cache.store(i, j, 0.0)
    return src.cache.store(i, j, sign * mag)


def signed_row(src: ElementSource, i: int) -> list:
    """All (j, H'_ji) connections from i with signs resolved, cache-backed.

    The walker engine's spawning step consumes this; rows are memoized on the
    source so each basis index is measured once per run."""
    row = src._rows.get(i)
    if row is None:
        row = []
        for (j, _) in row_magnitudes(src, i).connections:
            val = get_element(src, i, j)
            if val != 0.0:
                row.append((j, val))
        with src._lock:
            src._rows.setdefault(i, row)
    return row


# ---------------------------------------------------------------------------
# cache persistence: versioned little-endian sorted (i, j, value) triples
# ---------------------------------------------------------------------------

_CACHE_MAGIC = b"QCME"
_CACHE_VERSION = 1
_CACHE_DTYPE = np.dtype([("i", "<u8"), ("j", "<u8"), ("value", "<f8")])


def save_cache(cache: MatrixElementCache, path) -> None:
    keys = sorted(cache.entries)
    table = np.zeros(len(keys), dtype=_CACHE_DTYPE)
    for n, (i, j) in enumerate(keys):
        table[n] = (i, j, cache.entries[(i, j)])
    with open(path, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(np.uint32(_CACHE_VERSION).tobytes())
        fh.write(np.uint64(len(keys)).tobytes())
        fh.write(table.tobytes())


def load_cache(path) -> MatrixElementCache:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _CACHE_MAGIC:
            raise MatelemError(f"not an element-cache file: bad magic {magic!r}")
        version = int(np.frombuffer(fh.read(4), dtype="<u4")[0])
        if version != _CACHE_VERSION:
            raise MatelemError(f"unsupported cache version {version}")
        count = int(np.frombuffer(fh.read(8), dtype="<u8")[0])
        table = np.frombuffer(fh.read(count * _CACHE_DTYPE.itemsize), dtype=_CACHE_DTYPE)
        if len(table) != count:
            raise MatelemError("truncated cache file")
    cache = MatrixElementCache()
    for rec in table:
        cache.entries[(int(rec["i"]), int(rec["j"]))] = float(rec["value"])
    return cache

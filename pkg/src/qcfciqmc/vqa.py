"""Ansatz construction and variational optimization of the walker-basis circuit.

Two ansatz families are provided.  hv_ansatz alternates Trotterized
exponentials of caller-chosen Hamiltonian term groups (one shared parameter per
layer and group); with the natural Hubbard partition its unitary is complex,
which the NSI diagnostics reject, so layered_ansatz offers the real-rotation
counterpart driven by anti-Hermitian fermionic generator groups.  adapt_vqe
grows a circuit greedily from a generator pool by gradient magnitude.

The optimizer is plain gradient descent with Armijo backtracking: deterministic
and dependency-free, adequate at desk scale.  Gradients use the parameter-shift
rule, exact for Pauli-word rotation gates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operators import (
    FermionSum,
    FermionTerm,
    HubbardSpec,
    PauliSum,
    PauliWord,
    apply_pauli_sum,
    apply_word,
    diagonal_entry,
    jordan_wigner,
)
from .simulator import (
    BasisFlip,
    Circuit,
    PauliRotation,
    Statevector,
    apply_circuit,
    expectation,
    prepare_basis_state,
)


class VqaError(ValueError):
    pass


@dataclass
class OptimizerConfig:
    gtol: float = 1e-6
    max_iterations: int = 2000
    armijo: float = 1e-4  # sufficient-decrease factor
    shrink: float = 0.5
    initial_step: float = 1.0
    max_backtracks: int = 60


@dataclass
class VqeResult:
    circuit: Circuit
    params: np.ndarray
    energy: float
    history: list = field(default_factory=list)  # (iteration, energy)
    converged: bool = True
    message: str = ""


@dataclass
class AnsatzSpec:
    """What circuit family to optimize: layered exponentials or greedy growth.

    kind "hv" uses `partition` (Hermitian term groups, complex circuit) when
    given, else real generator groups built from the model; kind "adapt" grows
    from `pool` (anti-Hermitian generators)."""

    kind: str = "adapt"  # "hv" | "adapt"
    layers: int = 3
    partition: list | None = None
    pool: list | None = None
    max_operators: int = 8
    gradient_tol: float = 1e-3


# ---------------------------------------------------------------------------
# reference determinants and circuit scaffolding
# ---------------------------------------------------------------------------

def preparation_gates(reference: int, n_qubits: int) -> list:
    return [BasisFlip(q) for q in range(n_qubits) if (reference >> q) & 1]


def lowest_diagonal_reference(h: PauliSum, candidates) -> int:
    """Candidate basis index with the smallest diagonal energy (ties: lowest index)."""
    best = None
    best_val = None
    for i in candidates:
        v = diagonal_entry(h, int(i))
        if (
            best is None
            or v < best_val - 1e-12
            or (abs(v - best_val) <= 1e-12 and int(i) < best)
        ):
            best, best_val = int(i), v
    if best is None:
        raise VqaError("empty candidate set for reference determinant")
    return best


def molecular_reference(n_modes: int, n_electrons: int, ms2: int = 0) -> int:
    """Aufbau occupation: fill lowest spatial orbitals, up spins first."""
    n_up = (n_electrons + ms2) // 2
    n_dn = n_electrons - n_up
    if n_dn < 0 or 2 * max(n_up, n_dn) > n_modes:
        raise VqaError("electron count incompatible with mode count")
    index = 0
    for k in range(n_up):
        index |= 1 << (2 * k)
    for k in range(n_dn):
        index |= 1 << (2 * k + 1)
    return index


# ---------------------------------------------------------------------------
# ansatz builders
# ---------------------------------------------------------------------------

def hv_ansatz(h_parts, layers: int, reference: int, n_qubits: int) -> Circuit:
    """Hamiltonian-variational circuit: exp(-i theta_l,p H_p) per layer and part.

    Each part contributes one Trotterized exponential, one rotation per term,
    all sharing the (layer, part) parameter slot with scale 2 * coefficient.
    Identity terms produce global-phase rotations and are kept so the gate
    count stays layers * sum of part sizes."""
    if not h_parts:
        raise VqaError("empty Hamiltonian partition")
    gates = preparation_gates(reference, n_qubits)
    n_parts = len(h_parts)
    for layer in range(layers):
        for p, part in enumerate(h_parts):
            slot = layer * n_parts + p
            for t in part.terms:
                if abs(np.imag(t.coefficient)) > 1e-12:
                    raise VqaError("hv_ansatz parts must be Hermitian")
                gates.append(
                    PauliRotation(t.word, slot=slot, scale=2.0 * float(np.real(t.coefficient)))
                )
    return Circuit(n_qubits, gates)


def generator_gates(gen: PauliSum, slot: int) -> list:
    """Rotation gates realizing exp(theta G) for an anti-Hermitian generator.

    G expands as sum_k i gamma_k W_k with real gamma_k; each Trotter factor
    exp(i theta gamma_k W_k) is a PauliRotation with scale -2 gamma_k."""
    gates = []
    for t in gen.terms:
        c = complex(t.coefficient)
        if abs(c.real) > 1e-12:
            raise VqaError("generator is not anti-Hermitian (real Pauli coefficient)")
        gates.append(PauliRotation(t.word, slot=slot, scale=-2.0 * c.imag))
    return gates


def layered_ansatz(generator_groups, layers: int, reference: int, n_qubits: int) -> Circuit:
    """Real-rotation layered ansatz: one shared slot per (layer, group).

    Generator groups are anti-Hermitian PauliSums (fermionic t-dagger-minus-t
    images), so every gate is a real orthogonal rotation and the transformed
    Hamiltonian stays real."""
    if not generator_groups:
        raise VqaError("empty generator group list")
    gates = preparation_gates(reference, n_qubits)
    n_groups = len(generator_groups)
    for layer in range(layers):
        for g, gen in enumerate(generator_groups):
            gates.extend(generator_gates(gen, layer * n_groups + g))
    return Circuit(n_qubits, gates)


def _antisymmetrized(terms, n_modes: int) -> PauliSum:
    f = FermionSum(
        [FermionTerm(c, ops) for (c, ops) in terms]
        + [FermionTerm(-c, tuple((m, not cr) for (m, cr) in reversed(ops))) for (c, ops) in terms],
        n_modes,
    )
    return jordan_wigner(f)


def singles_doubles_pool(n_modes: int) -> list:
    """Anti-Hermitian excitation pool: spin-summed singles plus Sz-conserving doubles."""
    if n_modes % 2:
        raise VqaError("odd mode count")
    pool = []
    n_sites = n_modes // 2
    for p in range(n_sites):
        for q in range(p + 1, n_sites):
            terms = [
                (1.0, ((2 * q + sp, True), (2 * p + sp, False))) for sp in (0, 1)
            ]
            pool.append(_antisymmetrized(terms, n_modes))

    def sz(m):
        return 0.5 if m % 2 == 0 else -0.5

    pairs = [(a, b) for a in range(n_modes) for b in range(a + 1, n_modes)]
    for (p, q) in pairs:
        for (r, s) in pairs:
            if (p, q) >= (r, s):
                continue
            if {p, q} == {r, s}:
                continue
            if abs(sz(p) + sz(q) - sz(r) - sz(s)) > 1e-9:
                continue
            gen = _antisymmetrized([(1.0, ((p, True), (q, True), (s, False), (r, False)))], n_modes)
            if gen.terms:
                pool.append(gen)
    return [g for g in pool if g.terms]


def hubbard_hv_generator_groups(spec: HubbardSpec) -> list:
    """Hamiltonian-structured real generator groups for the layered ansatz.

    Per lattice direction: spin-summed hops, spin exchange, and on-site pair
    transfer across each edge.  All are anti-Hermitian combinations, so the
    resulting circuit is real orthogonal."""
    rows, cols = spec.shape
    horiz = [e for e in spec.edges() if e[0] // cols == e[1] // cols]
    vert = [e for e in spec.edges() if e[0] // cols != e[1] // cols]
    n = spec.n_qubits
    groups = []
    for edges in (horiz, vert):
        if not edges:
            continue
        hop = []
        exch = []
        pair = []
        for (i, j) in edges:
            for sp in (0, 1):
                hop.append((1.0, ((2 * j + sp, True), (2 * i + sp, False))))
            exch.append(
                (1.0, ((2 * j, True), (2 * i, False), (2 * i + 1, True), (2 * j + 1, False)))
            )
            pair.append(
                (1.0, ((2 * j, True), (2 * j + 1, True), (2 * i + 1, False), (2 * i, False)))
            )
        for terms in (hop, exch, pair):
            gen = _antisymmetrized(terms, n)
            if gen.terms:
                groups.append(gen)
    if not groups:
        raise VqaError("lattice has no edges; layered ansatz undefined")
    return groups


def hubbard_hv_parts(spec: HubbardSpec) -> list:
    """Hermitian term groups for the Hamiltonian-variational ansatz.

    Interaction part first, then one hopping part covering all lattice edges
    in edge order.  Trotter order inside a layer follows this list order."""
    inter = FermionSum(
        [FermionTerm(spec.u, ((2 * s, True), (2 * s, False), (2 * s + 1, True), (2 * s + 1, False)))
         for s in range(spec.n_sites)],
        spec.n_qubits,
    )
    hops = []
    for (i, j) in spec.edges():
        for sp in (0, 1):
            hops.append(FermionTerm(-spec.t, ((2 * i + sp, True), (2 * j + sp, False))))
            hops.append(FermionTerm(-spec.t, ((2 * j + sp, True), (2 * i + sp, False))))
    parts = [jordan_wigner(inter)]
    hop_sum = jordan_wigner(FermionSum(hops, spec.n_qubits))
    if hop_sum.terms:
        parts.append(hop_sum)
    return parts


# ---------------------------------------------------------------------------
# energies and gradients
# ---------------------------------------------------------------------------

def circuit_state(circuit: Circuit, params) -> Statevector:
    return apply_circuit(prepare_basis_state(circuit.n_qubits, 0), circuit, params)


def circuit_energy(circuit: Circuit, h: PauliSum, params) -> float:
    return expectation(circuit_state(circuit, params), h)


def _resolved_angles(circuit: Circuit, params) -> np.ndarray:
    angles = np.zeros(len(circuit.gates))
    for pos, g in enumerate(circuit.gates):
        if isinstance(g, PauliRotation):
            angles[pos] = g.angle if g.slot is None else g.scale * params[g.slot]
    return angles


def _apply_resolved(g, angle: float, vec: np.ndarray, n_qubits: int) -> np.ndarray:
    if isinstance(g, PauliRotation):
        return np.cos(0.5 * angle) * vec - 1j * np.sin(0.5 * angle) * apply_word(g.word, vec)
    w = g.word if hasattr(g, "word") else PauliWord(n_qubits, 1 << g.qubit, 0)
    return apply_word(w, vec)


def gradient(circuit: Circuit, h: PauliSum, params) -> np.ndarray:
    """Parameter-shift gradient dE/dtheta, exact for Pauli rotations.

    Per gate: shift the resolved gate angle by +-pi/2, take half the energy
    difference, weight by the gate's scale (chain rule for angle = scale *
    theta), and accumulate into the gate's slot.  Every shifted state rides
    through the remaining gates as a column of one growing matrix, so each
    gate is applied once per batch instead of once per shifted evaluation."""
    gates = circuit.gates
    n_qubits = circuit.n_qubits
    dim = 1 << n_qubits
    angles = _resolved_angles(circuit, params)
    slots = [g.slot for g in gates if isinstance(g, PauliRotation) and g.slot is not None]
    scales = [g.scale for g in gates if isinstance(g, PauliRotation) and g.slot is not None]
    grad = np.zeros(circuit.n_slots)
    if not slots:
        return grad
    state = prepare_basis_state(n_qubits, 0).amplitudes
    batch = np.empty((dim, 2 * len(slots)), dtype=complex)
    m = 0
    for pos, g in enumerate(gates):
        if m:
            batch[:, :m] = _apply_resolved(g, angles[pos], batch[:, :m], n_qubits)
        if isinstance(g, PauliRotation) and g.slot is not None:
            batch[:, m] = _apply_resolved(g, angles[pos] + 0.5 * np.pi, state, n_qubits)
            batch[:, m + 1] = _apply_resolved(g, angles[pos] - 0.5 * np.pi, state, n_qubits)
            m += 2
        state = _apply_resolved(g, angles[pos], state, n_qubits)
    energies = np.einsum("im,im->m", batch.conj(), apply_pauli_sum(h, batch)).real
    np.add.at(grad, np.asarray(slots), np.asarray(scales) * 0.5 * (energies[0::2] - energies[1::2]))
    return grad


def pool_gradients(state: Statevector, h: PauliSum, pool) -> np.ndarray:
    """dE/dtheta at theta = 0 for each pool generator: <psi|[H, G]|psi>."""
    hv = apply_pauli_sum(h, state.amplitudes)
    out = np.zeros(len(pool))
    for k, gen in enumerate(pool):
        gv = apply_pauli_sum(gen, state.amplitudes)
        out[k] = 2.0 * float(np.real(np.vdot(hv, gv)))
    return out


# ---------------------------------------------------------------------------
# optimization
# ---------------------------------------------------------------------------

def vqe_minimize(
    circuit: Circuit, h: PauliSum, init, config: OptimizerConfig | None = None
) -> VqeResult:
    """Gradient descent with Armijo backtracking on E(theta)."""
    cfg = config or OptimizerConfig()
    params = np.array(init, dtype=float)
    if len(params) != circuit.n_slots:
        raise VqaError(f"need {circuit.n_slots} parameters, got {len(params)}")
    energy = circuit_energy(circuit, h, params)
    if not np.isfinite(energy):
        raise VqaError("non-finite energy at initial parameters")
    history = [(0, energy)]
    converged = False
    message = "max iterations reached"
    # warm-started backtracking: begin each search a notch above the last
    # accepted step so the line search adapts to the local curvature
    step0 = cfg.initial_step
    for it in range(1, cfg.max_iterations + 1):
        grad = gradient(circuit, h, params)
        gnorm = float(np.linalg.norm(grad))
        if gnorm < cfg.gtol:
            converged = True
            message = f"gradient norm {gnorm:.2e} below tolerance"
            break
        step = step0
        gsq = gnorm * gnorm
        accepted = False
        for _ in range(cfg.max_backtracks):
            trial = params - step * grad
            e_trial = circuit_energy(circuit, h, trial)
            if not np.isfinite(e_trial):
                raise VqaError("non-finite energy during line search")
            if e_trial <= energy - cfg.armijo * step * gsq:
                params, energy = trial, e_trial
                accepted = True
                break
            step *= cfg.shrink
        history.append((it, energy))
        if not accepted:
            message = "line search stalled"
            break
        # growth factor deliberately not 1/shrink: a reciprocal pair can lock
        # the search into an oscillating step that straddles the minimum
        step0 = min(cfg.initial_step * 8.0, step * 1.3)
    return VqeResult(circuit, params, energy, history, converged, message)


def adapt_vqe(
    h: PauliSum,
    pool,
    max_operators: int,
    reference: int,
    n_qubits: int,
    gradient_tol: float = 1e-3,
    config: OptimizerConfig | None = None,
) -> VqeResult:
    """Greedy circuit growth: append the largest-gradient pool generator,
    re-optimize all parameters, repeat.  Outer energies are non-increasing."""
    if not pool:
        raise VqaError("empty generator pool")
    circuit = Circuit(n_qubits, preparation_gates(reference, n_qubits))
    params = np.zeros(0)
    energy = circuit_energy(circuit, h, params)
    history = [(0, energy)]
    converged = True
    message = "max operators reached" if max_operators > 0 else "no operators requested"
    for k in range(max_operators):
        state = circuit_state(circuit, params)
        grads = pool_gradients(state, h, pool)
        pick = int(np.argmax(np.abs(grads)))
        if abs(grads[pick]) < gradient_tol:
            message = f"pool gradient {abs(grads[pick]):.2e} below tolerance"
            break
        slot = circuit.n_slots
        circuit = Circuit(n_qubits, circuit.gates + generator_gates(pool[pick], slot))
        params = np.append(params, 0.0)
        result = vqe_minimize(circuit, h, params, config)
        params = result.params
        if result.energy > energy + 1e-9:
            converged = False
            message = "inner optimization failed to improve"
            break
        energy = result.energy
        history.append((k + 1, energy))
    return VqeResult(circuit, params, energy, history, converged, message)

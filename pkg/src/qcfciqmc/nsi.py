"""Non-stoquasticity indicators, theorem bounds, and basis-transformed reports.

The sign problem of a real-symmetric H in a given walker basis is quantified by
comparing H against its bosonic form H~ = H_minus - H_plus, where H_plus holds
the positive off-diagonal entries (the sign-problematic ones) and H_minus the
rest.  The thermal indicator,

    s_thermal = (Tr exp(-beta H~) - Tr exp(-beta H)) / Tr exp(-beta H),

vanishes iff the walker dynamics is sign-free in this measure; 1/(1+s) is the
average sign.  An initial-state variant conditions both traces on a reference
basis state.  Everything here is exact (dense eigendecomposition), intended as
a diagnostic at desk scale rather than an inner-loop quantity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import exactdiag
from .operators import PauliSum, apply_pauli_sum
from .simulator import Circuit, Statevector, amplitude_vector, apply_circuit, prepare_basis_state

SPLIT_TOL = 1e-12  # off-diagonal sign classification threshold
IMAG_TOL = 1e-9  # transformed matrices must be real to this tolerance


class NsiError(ValueError):
    pass


@dataclass
class StoquasticSplit:
    h_minus: np.ndarray  # diagonal plus negative off-diagonal entries
    h_plus: np.ndarray  # positive off-diagonal entries, zero diagonal
    alpha: float  # max_i H_ii


@dataclass
class NsiReport:
    beta: float
    s_thermal: float
    theorem1_bound: float
    avg_sign: float
    delta_f: float
    l1_h_plus: float
    l1_alpha_minus_h_minus: float
    s_initial: float | None = None
    theorem2_indicator: float | None = None
    phi0: int | None = None

    def to_dict(self) -> dict:
        out = {
            "beta": self.beta,
            "s_thermal": self.s_thermal,
            "theorem1_bound": self.theorem1_bound,
            "avg_sign": self.avg_sign,
            "delta_f": self.delta_f,
            "l1_h_plus": self.l1_h_plus,
            "l1_alpha_minus_h_minus": self.l1_alpha_minus_h_minus,
        }
        if self.phi0 is not None:
            out["phi0"] = self.phi0
            out["s_initial"] = self.s_initial
            out["theorem2_indicator"] = self.theorem2_indicator
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _check_real_symmetric(h) -> np.ndarray:
    h = np.asarray(h)
    if np.iscomplexobj(h):
        raise NsiError("complex Hamiltonians are out of scope for NSI computation")
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise NsiError("need a square matrix")
    scale = max(np.abs(h).max(), 1.0)
    if np.abs(h - h.T).max() > 1e-10 * scale:
        raise NsiError("matrix is not symmetric")
    return h


def split(h, split_tol: float = SPLIT_TOL) -> StoquasticSplit:
    """Separate H = H_plus + H_minus by off-diagonal sign.

    Off-diagonal entries above split_tol go to H_plus; everything else,
    including sub-tolerance positive noise, stays in H_minus so that the two
    parts reconstruct H exactly."""
    h = _check_real_symmetric(h)
    off = h - np.diag(np.diag(h))
    plus = np.where(off > split_tol, off, 0.0)
    return StoquasticSplit(h_minus=h - plus, h_plus=plus, alpha=float(np.diag(h).max()))


def bosonic_form(s: StoquasticSplit) -> np.ndarray:
    return s.h_minus - s.h_plus


def _l1(m: np.ndarray) -> float:
    return float(np.abs(m).sum())


def nsi_thermal(h, beta: float) -> float:
    if beta <= 0:
        raise NsiError("beta must be positive")
    h = _check_real_symmetric(h)
    tilde = bosonic_form(split(h))
    spec_h = exactdiag.diagonalize(h)
    spec_t = exactdiag.diagonalize(tilde)
    shift = spec_t.ground_energy()  # common shift; the ratio is shift-invariant
    z_h = exactdiag.thermal_trace(spec_h, beta, shift=shift)
    z_t = exactdiag.thermal_trace(spec_t, beta, shift=shift)
    if not (np.isfinite(z_h) and np.isfinite(z_t)) or z_h == 0.0:
        raise NsiError("thermal trace overflow despite spectral shift")
    return (z_t - z_h) / z_h


def nsi_initial(h, phi0: int, beta: float) -> float:
    if beta <= 0:
        raise NsiError("beta must be positive")
    h = _check_real_symmetric(h)
    dim = h.shape[0]
    if not (0 <= phi0 < dim):
        raise NsiError("phi0 out of range")
    tilde = bosonic_form(split(h))
    spec_h = exactdiag.diagonalize(h)
    spec_t = exactdiag.diagonalize(tilde)
    shift = spec_t.ground_energy()
    v = np.zeros(dim)
    v[phi0] = 1.0
    q_h = exactdiag.matrix_exponential_quadratic(spec_h, v, beta, shift=shift)
    q_t = exactdiag.matrix_exponential_quadratic(spec_t, v, beta, shift=shift)
    if not (np.isfinite(q_h) and np.isfinite(q_t)) or q_h == 0.0:
        raise NsiError("matrix-exponential overflow despite spectral shift")
    return (q_t - q_h) / q_h


def theorem1_bound(s: StoquasticSplit, beta: float) -> float:
    """2 exp(beta ||alpha I - H_minus||_1) sinh(beta ||H_plus||_1).

    The L1 norm is the entrywise sum of magnitudes.  Returns +inf on overflow."""
    if beta < 0:
        raise NsiError("beta must be non-negative")
    dim = s.h_minus.shape[0]
    l1_plus = _l1(s.h_plus)
    l1_am = _l1(s.alpha * np.eye(dim) - s.h_minus)
    with np.errstate(over="ignore"):
        val = 2.0 * np.exp(beta * l1_am) * np.sinh(beta * l1_plus)
    return float(val)


def theorem2_indicator(h, phi0: int) -> float:
    """|| (I - |phi0><phi0|) H |phi0> ||^2 = sum_{j != phi0} H_{j,phi0}^2."""
    h = _check_real_symmetric(h)
    if not (0 <= phi0 < h.shape[0]):
        raise NsiError("phi0 out of range")
    col = h[:, phi0].copy()
    col[phi0] = 0.0
    return float(col @ col)


def nsi_report(h, beta: float, phi0: int | None = None) -> NsiReport:
    """Full indicator bundle for one (H, beta) pair and optional reference."""
    h = _check_real_symmetric(h)
    sp = split(h)
    s_th = nsi_thermal(h, beta)
    bound = theorem1_bound(sp, beta)
    avg_sign = 1.0 / (1.0 + s_th)
    delta_f = np.log1p(s_th) / beta
    dim = h.shape[0]
    rep = NsiReport(
        beta=beta,
        s_thermal=s_th,
        theorem1_bound=bound,
        avg_sign=avg_sign,
        delta_f=delta_f,
        l1_h_plus=_l1(sp.h_plus),
        l1_alpha_minus_h_minus=_l1(sp.alpha * np.eye(dim) - sp.h_minus),
    )
    if phi0 is not None:
        rep.phi0 = int(phi0)
        rep.s_initial = nsi_initial(h, phi0, beta)
        rep.theorem2_indicator = theorem2_indicator(h, phi0)
    return rep


def transformed_dense(h: PauliSum, u: Circuit, params=(), imag_tol: float = IMAG_TOL) -> np.ndarray:
    """Dense similarity transform U^dag H U, built column by column.

    Column j is the circuit-basis resolution of H U|j>.  The result must be
    real to imag_tol (the real-Hamiltonian scope of this package); residual
    imaginary parts below the tolerance are truncated."""
    n = u.n_qubits
    if n > 12:
        raise NsiError("qubit count exceeds dense limit")
    dim = 1 << n
    out = np.empty((dim, dim), dtype=float)
    worst = 0.0
    for j in range(dim):
        basis = apply_circuit(prepare_basis_state(n, j), u, params)
        w = apply_pauli_sum(h, basis.amplitudes)
        col = amplitude_vector(Statevector(n, w), u, params)
        worst = max(worst, float(np.abs(col.imag).max()))
        out[:, j] = col.real
    if worst > imag_tol:
        raise NsiError(
            f"transformed Hamiltonian has imaginary residue {worst:.3e} above "
            f"{imag_tol:.0e}; complex-valued bases are out of scope"
        )
    return out


def transformed_nsi(
    h: PauliSum, u: Circuit, params, beta: float, phi0: int | None = None
) -> NsiReport:
    """NsiReport for H expressed in the circuit-rotated walker basis {U|i>}."""
    hp = transformed_dense(h, u, params)
    return nsi_report(hp, beta, phi0=phi0)

"""Operators and boundary states of the two-replica effective theory.

Each lattice site carries four qubits -- two replicas, each with a forward
and a backward contour -- so the local Hilbert space is 16-dimensional.
Basis order is (c1 c2 c3 c4) with contour 1 the most significant bit.
Everything built here is real in that basis, which downstream code exploits
for speed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SITE_DIM = 16
BOND_DIM = SITE_DIM * SITE_DIM

_I2 = np.eye(2)
_PAULI = {
    "x": np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    "y": np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    "z": np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
}
PAULI_AXES = ("x", "y", "z")

# complete-positivity bound for the depolarizing channel
LAMBDA_MAX = 0.75


def _kron4(ops) -> np.ndarray:
    out = ops[0]
    for o in ops[1:]:
        out = np.kron(out, o)
    return out


@dataclass(frozen=True)
class ContourPauli:
    """Single-contour Pauli on the 16-dim site space.

    Contours 2 and 4 (backward contours) carry the complex conjugate of the
    Pauli matrix; distinct contours commute.
    """

    contour_index: int
    pauli_axis: str
    matrix: np.ndarray = field(repr=False)


def contour_pauli(contour_index: int, pauli_axis: str) -> ContourPauli:
    if contour_index not in (1, 2, 3, 4):
        raise ValueError(f"contour_index must be in 1..4, got {contour_index}")
    if pauli_axis not in PAULI_AXES:
        raise ValueError(f"pauli_axis must be one of {PAULI_AXES}, got {pauli_axis!r}")
    m = _PAULI[pauli_axis]
    if contour_index in (2, 4):
        m = m.conj()
    ops = [_I2, _I2, _I2, _I2]
    ops[contour_index - 1] = m
    return ContourPauli(contour_index, pauli_axis, _kron4(ops))


def _basis_ket(bits: str) -> np.ndarray:
    v = np.zeros(SITE_DIM)
    v[int(bits, 2)] = 1.0
    return v


# Zero-energy product ground states of the bond Hamiltonian: EPR pairings
# (1,2)(3,4) and (1,4)(2,3) respectively.
ID_STATE = 0.5 * (_basis_ket("0000") + _basis_ket("0011") + _basis_ket("1100") + _basis_ket("1111"))
SWAP_STATE = 0.5 * (_basis_ket("0000") + _basis_ket("0110") + _basis_ket("1001") + _basis_ket("1111"))
ZERO4_STATE = _basis_ket("0000")
COLL_STATE = _basis_ket("0000") + _basis_ket("1111")  # unnormalized by design
ENCODE_STATE = SWAP_STATE - 0.5 * ID_STATE


@dataclass(frozen=True)
class SiteState:
    """16-component state of one replica site."""

    amplitudes: np.ndarray = field(repr=False)
    label: str = "custom"

    def inner(self, other: "SiteState") -> float:
        return float(np.real(np.vdot(self.amplitudes, other.amplitudes)))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))


def boundary_state(label: str, lam: float | None = None) -> SiteState:
    """Named per-site boundary vectors used by every observable.

    coll (|0000> + |1111>) is deliberately unnormalized: contracting it on
    every site realizes the sum over computational bitstrings.  encode is
    the encoded-reference factor swap - id/2, orthogonal to id.
    """
    if label == "id":
        return SiteState(ID_STATE.copy(), "id")
    if label == "swap":
        return SiteState(SWAP_STATE.copy(), "swap")
    if label == "zero4":
        return SiteState(ZERO4_STATE.copy(), "zero4")
    if label == "coll":
        return SiteState(COLL_STATE.copy(), "coll")
    if label == "encode":
        return SiteState(ENCODE_STATE.copy(), "encode")
    if label == "err":
        if lam is None:
            raise ValueError("label 'err' requires lam")
        return error_boundary_site(lam)
    raise ValueError(f"unknown boundary state label {label!r}")


def depolarizing_kraus(lam: float) -> list[np.ndarray]:
    """Kraus set {sqrt(1-lam) 1, sqrt(lam/3) sigma_a} of the channel."""
    if not 0.0 <= lam <= LAMBDA_MAX:
        raise ValueError(f"lambda must be in [0, {LAMBDA_MAX}], got {lam}")
    return [np.sqrt(1.0 - lam) * _I2.astype(complex)] + [
        np.sqrt(lam / 3.0) * _PAULI[a] for a in PAULI_AXES
    ]


def error_boundary_site(lam: float, noisy: bool = True) -> SiteState:
    """Per-site factor of the error boundary state.

    Contracts the four-contour dressing sum_{m,n} E_m (x) E_n* (x) E_n (x) E_m*
    against |id>>, times the per-site factor 2 that distributes the global 2^N
    prefactor.  A noiseless site uses the trivial Kraus set, giving 2|id>>.
    At lam = 3/4 the id component vanishes and the state is along |swap>>.
    """
    if not 0.0 <= lam <= LAMBDA_MAX:
        raise ValueError(f"lambda must be in [0, {LAMBDA_MAX}], got {lam}")
    kraus = depolarizing_kraus(lam) if noisy else [_I2.astype(complex)]
    out = np.zeros(SITE_DIM, dtype=complex)
    for em in kraus:
        for en in kraus:
            op = _kron4([em, en.conj(), en, em.conj()])
            out += op @ ID_STATE
    if np.abs(out.imag).max() > 1e-14:
        raise AssertionError("error boundary site acquired imaginary part")
    return SiteState(2.0 * out.real, f"err({lam})" if noisy else "err_clean")


@dataclass(frozen=True)
class BondOperator:
    """Two-site 256x256 bond Hamiltonian term, Hermitian and PSD."""

    matrix: np.ndarray = field(repr=False)
    coupling: float = 1.0


def build_bond_hamiltonian(coupling: float = 1.0) -> BondOperator:
    """Effective bond Hamiltonian (J/2) sum_{a,b} (sum_c (-1)^c tau_c^a tau_c^b)^2.

    Sum-of-squares construction: PSD with exactly zero ground energy on
    id(x)id and swap(x)swap, no constant shifts needed.
    """
    if coupling <= 0:
        raise ValueError(f"coupling must be positive, got {coupling}")
    h = np.zeros((BOND_DIM, BOND_DIM), dtype=complex)
    taus = {(c, a): contour_pauli(c, a).matrix for c in (1, 2, 3, 4) for a in PAULI_AXES}
    for a in PAULI_AXES:
        for b in PAULI_AXES:
            term = np.zeros((BOND_DIM, BOND_DIM), dtype=complex)
            for c in (1, 2, 3, 4):
                term += (-1) ** c * np.kron(taus[(c, a)], taus[(c, b)])
            h += 0.5 * coupling * (term @ term)
    if np.abs(h.imag).max() > 1e-12:
        raise AssertionError("bond Hamiltonian acquired imaginary part")
    hr = 0.5 * (h.real + h.real.T)
    return BondOperator(hr, coupling)


@dataclass
class NoiseSpec:
    """Depolarizing noise folded into the replica evolution.

    replica_mask selects which contour pairs the perturbation acts on:
    replica1_only for XEB/fidelity, both_replicas for the noisy output
    distribution, kraus_dressing marks noise entering only through the error
    boundary state.  scaling='one_over_N' resolves lam = mu/N at run time.
    """

    lam: float = 0.0
    kind: str = "depolarizing"
    site_mask: np.ndarray | None = None  # None = all sites
    replica_mask: str = "replica1_only"
    scaling: str = "constant"
    mu: float | None = None

    def __post_init__(self):
        if self.kind != "depolarizing":
            raise ValueError(f"unsupported noise kind {self.kind!r}")
        if self.replica_mask not in ("replica1_only", "both_replicas", "kraus_dressing"):
            raise ValueError(f"unknown replica_mask {self.replica_mask!r}")
        if self.scaling not in ("constant", "one_over_N"):
            raise ValueError(f"unknown scaling {self.scaling!r}")
        if self.scaling == "one_over_N" and self.mu is None:
            raise ValueError("one_over_N scaling requires mu")
        if self.scaling == "constant" and not 0.0 <= self.lam < LAMBDA_MAX:
            raise ValueError(f"lambda must be in [0, {LAMBDA_MAX}), got {self.lam}")

    def resolved_lambda(self, n_sites: int) -> float:
        if self.scaling == "one_over_N":
            return self.mu / n_sites
        return self.lam


def zeeman_rate(lam: float, delta_t: float = 1.0) -> float:
    """Per-site energy of |swap>> under depolarizing noise of strength lam."""
    return (3.0 / (4.0 * delta_t)) * np.log(1.0 / (1.0 - 4.0 * lam / 3.0))


def build_noise_perturbation(spec: NoiseSpec | float, delta_t: float = 1.0) -> np.ndarray:
    """16x16 per-site noise generator; Hermitian, PSD, annihilates |id>>.

    (3/(4 dt)) log(1/(1-4lam/3)) (1 - (1/3) sum_a tau_1^a tau_2^a) for one
    noisy replica; both_replicas adds the analogous (3,4) contour term.
    """
    if isinstance(spec, (int, float)):
        spec = NoiseSpec(lam=float(spec))
    lam = spec.lam if spec.scaling == "constant" else None
    if lam is None:
        raise ValueError("resolve one_over_N scaling before building the operator")
    if lam < 0:
        raise ValueError(f"negative lambda {lam}")
    if lam >= LAMBDA_MAX:
        raise ValueError(f"lambda must be < {LAMBDA_MAX} (log divergence), got {lam}")
    pairs = [(1, 2)]
    if spec.replica_mask == "both_replicas":
        pairs.append((3, 4))
    rate = zeeman_rate(lam, delta_t)
    h = np.zeros((SITE_DIM, SITE_DIM), dtype=complex)
    for c1, c2 in pairs:
        acc = np.zeros((SITE_DIM, SITE_DIM), dtype=complex)
        for a in PAULI_AXES:
            acc += contour_pauli(c1, a).matrix @ contour_pauli(c2, a).matrix
        h += rate * (np.eye(SITE_DIM) - acc / 3.0)
    if np.abs(h.imag).max() > 1e-12:
        raise AssertionError("noise perturbation acquired imaginary part")
    return 0.5 * (h.real + h.real.T)


def lambda_for_duration(lam: float, duration: float, reference_dt: float = 1.0) -> float:
    """Depolarizing strength applying for `duration` at the rate set by
    (lam, reference_dt), so channels compose consistently across step sizes."""
    keep = (1.0 - 4.0 * lam / 3.0) ** (duration / reference_dt)
    return 0.75 * (1.0 - keep)


def swap_contours_2_4() -> np.ndarray:
    """Per-site permutation exchanging contours 2 and 4 (the broken S2 symmetry)."""
    perm = np.zeros((SITE_DIM, SITE_DIM))
    for idx in range(SITE_DIM):
        c1 = (idx >> 3) & 1
        c2 = (idx >> 2) & 1
        c3 = (idx >> 1) & 1
        c4 = idx & 1
        jdx = (c1 << 3) | (c4 << 2) | (c3 << 1) | c2
        perm[jdx, idx] = 1.0
    return perm

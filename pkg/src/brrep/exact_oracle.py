"""Ground-truth generators at small N.

Two independent oracles: dense replica evolution applying the exact same
gate sequence as the MPS engine (isolates truncation error), and Brownian
trajectory Monte Carlo in the original 2^N-dimensional Hilbert space, which
validates the replica mapping itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .mps import LogAmplitude, NEG_INF, step_layers
from .replica_algebra import (
    SITE_DIM,
    NoiseSpec,
    SiteState,
    _PAULI,
    build_bond_hamiltonian,
    build_noise_perturbation,
    lambda_for_duration,
)

DENSE_N_CAP = 6
TRAJECTORY_N_CAP = 4


@dataclass
class DenseReplicaState:
    """Full 16^N replica vector with a separate log scale."""

    amplitudes: np.ndarray = field(repr=False)
    log_magnitude: float = 0.0
    n_sites: int = 0

    def normalized(self) -> "DenseReplicaState":
        n = np.linalg.norm(self.amplitudes)
        if n == 0.0:
            raise ValueError("dense state collapsed to zero")
        return DenseReplicaState(self.amplitudes / n, self.log_magnitude + np.log(n),
                                 self.n_sites)


def dense_product_state(site_states) -> DenseReplicaState:
    n = len(site_states)
    if n > DENSE_N_CAP:
        raise ValueError(f"dense oracle capped at N={DENSE_N_CAP}, got {n}")
    v = np.array([1.0])
    for s in site_states:
        v = np.kron(v, np.asarray(s.amplitudes if isinstance(s, SiteState) else s))
    st = DenseReplicaState(v, 0.0, n)
    return st.normalized()


def _apply_two_site(v: np.ndarray, gate: np.ndarray, i: int, n: int) -> np.ndarray:
    d = SITE_DIM
    left = d ** i
    right = d ** (n - i - 2)
    w = v.reshape(left, d * d, right)
    return np.einsum("PQ,aQb->aPb", gate, w, optimize=True).reshape(-1)


def _apply_one_site(v: np.ndarray, gate: np.ndarray, i: int, n: int) -> np.ndarray:
    d = SITE_DIM
    left = d ** i
    right = d ** (n - i - 1)
    w = v.reshape(left, d, right)
    return np.einsum("pq,aqb->apb", gate, w, optimize=True).reshape(-1)


def dense_trotter_step(state: DenseReplicaState, bond_gate: np.ndarray,
                       site_gates=None, bond_gate_half: np.ndarray | None = None
                       ) -> DenseReplicaState:
    """Same layer sequence as mps.trotter_step, applied to the dense vector."""
    n = state.n_sites
    v = state.amplitudes
    for kind, bonds in step_layers(n, symmetric=bond_gate_half is not None):
        gate = bond_gate_half if kind == "half" else bond_gate
        for i in bonds:
            v = _apply_two_site(v, gate, i, n)
    if site_gates is not None:
        for i, g in enumerate(site_gates):
            if g is not None:
                v = _apply_one_site(v, g, i, n)
    return DenseReplicaState(v, state.log_magnitude, n).normalized()


def dense_evolve(boundary_in, t_steps: int, bond_gate: np.ndarray,
                 site_gates=None, bond_gate_half: np.ndarray | None = None
                 ) -> DenseReplicaState:
    """Trotterized dense evolution (identical gates to the MPS engine)."""
    state = boundary_in if isinstance(boundary_in, DenseReplicaState) \
        else dense_product_state(boundary_in)
    for _ in range(t_steps):
        state = dense_trotter_step(state, bond_gate, site_gates, bond_gate_half)
    return state


def dense_evolve_matched(initial_sites, t_steps: int, noise=None, coupling: float = 1.0,
                         delta_t: float = 1.0, symmetric: bool = True,
                         substeps: int = 2) -> DenseReplicaState:
    """Dense evolution with the exact gate matrices and layer order of
    observables.evolve_trace, so MPS-vs-dense discrepancies isolate
    truncation error."""
    from .observables import _bond_gates, _noise_site_gates

    state = dense_product_state(initial_sites)
    sub_dt = delta_t / substeps
    full, half = _bond_gates(coupling, sub_dt, symmetric)
    site_gates = _noise_site_gates(noise, state.n_sites, delta_t)
    noise_at = (substeps - 1) // 2
    for _ in range(t_steps):
        for k in range(substeps):
            state = dense_trotter_step(
                state, full, site_gates if k == noise_at else None,
                bond_gate_half=half)
    return state


def dense_overlap(bra_sites, state: DenseReplicaState) -> LogAmplitude:
    bra = np.array([1.0])
    for s in bra_sites:
        bra = np.kron(bra, np.asarray(s.amplitudes if isinstance(s, SiteState) else s))
    amp = complex(np.vdot(bra, state.amplitudes))
    if amp == 0.0:
        return LogAmplitude(NEG_INF, 0.0)
    return LogAmplitude(np.log(abs(amp)) + state.log_magnitude, float(np.angle(amp)))


def full_effective_hamiltonian(n: int, coupling: float = 1.0,
                               noise: NoiseSpec | None = None,
                               delta_t: float = 1.0) -> scipy.sparse.csr_matrix:
    """Sparse 16^N x 16^N effective Hamiltonian (chain, open boundaries)."""
    if n > DENSE_N_CAP:
        raise ValueError(f"dense oracle capped at N={DENSE_N_CAP}, got {n}")
    bond = scipy.sparse.csr_matrix(build_bond_hamiltonian(coupling).matrix)
    d = SITE_DIM
    h = scipy.sparse.csr_matrix((d ** n, d ** n))
    for i in range(n - 1):
        op = scipy.sparse.kron(scipy.sparse.identity(d ** i, format="csr"), bond, format="csr")
        op = scipy.sparse.kron(op, scipy.sparse.identity(d ** (n - i - 2), format="csr"),
                               format="csr")
        h = h + op
    if noise is not None:
        site = scipy.sparse.csr_matrix(
            build_noise_perturbation(
                NoiseSpec(lam=noise.resolved_lambda(n), replica_mask=noise.replica_mask),
                delta_t))
        mask = noise.site_mask if noise.site_mask is not None else np.ones(n, dtype=bool)
        for i in range(n):
            if not mask[i]:
                continue
            op = scipy.sparse.kron(scipy.sparse.identity(d ** i, format="csr"), site,
                                   format="csr")
            op = scipy.sparse.kron(op, scipy.sparse.identity(d ** (n - i - 1), format="csr"),
                                   format="csr")
            h = h + op
    return h


def dense_evolve_exact(boundary_in, t: float, coupling: float = 1.0,
                       noise: NoiseSpec | None = None,
                       delta_t: float = 1.0) -> DenseReplicaState:
    """Exact-exponential mode exp(-t H) |in>, for measuring Trotter bias."""
    state = boundary_in if isinstance(boundary_in, DenseReplicaState) \
        else dense_product_state(boundary_in)
    h = full_effective_hamiltonian(state.n_sites, coupling, noise, delta_t)
    v = scipy.sparse.linalg.expm_multiply(-t * h.astype(float), state.amplitudes)
    return DenseReplicaState(v, state.log_magnitude, state.n_sites).normalized()


# ---------------------------------------------------------------------------
# Brownian trajectory Monte Carlo

@dataclass
class TrajectoryConfig:
    """Plain Monte Carlo over Brownian coupling realizations.

    Gaussian couplings are i.i.d. per (step, bond, alpha, beta) with variance
    J/delta_t; trajectories are reproducible from (rng_seed, index).
    """

    n_sites: int
    delta_t: float
    n_steps: int
    n_trajectories: int
    rng_seed: int = 0
    coupling: float = 1.0

    def __post_init__(self):
        if self.n_sites > TRAJECTORY_N_CAP:
            raise ValueError(f"trajectory oracle capped at N={TRAJECTORY_N_CAP}")
        if self.n_trajectories < 100:
            raise ValueError("need at least 100 trajectories for stable errors")


def _pauli_site_ops(n: int) -> list[list[np.ndarray]]:
    """ops[i][a] = sigma_a on qubit i of an n-qubit chain."""
    out = []
    eye = np.eye(2, dtype=complex)
    for i in range(n):
        row = []
        for a in "xyz":
            m = np.array([1.0 + 0j])
            for j in range(n):
                m = np.kron(m, _PAULI[a] if j == i else eye)
            row.append(m)
        out.append(row)
    return out


def _bond_operator_basis(n: int) -> np.ndarray:
    """(n-1, 9, 2^n, 2^n) array of sigma_i^a sigma_{i+1}^b products."""
    site = _pauli_site_ops(n)
    dim = 2 ** n
    ops = np.empty((n - 1, 9, dim, dim), dtype=complex)
    for i in range(n - 1):
        k = 0
        for a in range(3):
            for b in range(3):
                ops[i, k] = site[i][a] @ site[i + 1][b]
                k += 1
    return ops


def _depolarize(rho: np.ndarray, lam_step: float, site_paulis) -> np.ndarray:
    """Per-site depolarizing channel on a batch of density matrices."""
    if lam_step == 0.0:
        return rho
    for row in site_paulis:
        mix = np.zeros_like(rho)
        for p in row:
            mix += np.einsum("ij,bjk,kl->bil", p, rho, p, optimize=True)
        rho = (1.0 - lam_step) * rho + (lam_step / 3.0) * mix
    return rho


def sample_brownian_trajectories(cfg: TrajectoryConfig, observable: str = "collision",
                                 lam: float = 0.0, batch_size: int = 512):
    """Monte Carlo estimate of a circuit-averaged observable.

    observable: 'collision' (sum_s p^2), 'xeb' (sum_s p q), or 'fidelity'
    (Tr[N(rho) rho]); lam is the per-unit-time depolarizing strength, applied
    per step with the matching per-step strength.  Returns (mean, stderr).
    """
    if observable not in ("collision", "xeb", "fidelity"):
        raise ValueError(f"unknown observable {observable!r}")
    n, dim = cfg.n_sites, 2 ** cfg.n_sites
    ops = _bond_operator_basis(n)
    n_bonds = n - 1
    site_paulis = _pauli_site_ops(n) if observable in ("xeb", "fidelity") else None
    lam_step = lambda_for_duration(lam, cfg.delta_t) if lam > 0 else 0.0
    scale = np.sqrt(cfg.coupling / cfg.delta_t)
    values = np.empty(cfg.n_trajectories)
    done = 0
    while done < cfg.n_trajectories:
        b = min(batch_size, cfg.n_trajectories - done)
        couplings = np.empty((b, cfg.n_steps, n_bonds, 9))
        for j in range(b):
            rng = np.random.default_rng([cfg.rng_seed, done + j])
            couplings[j] = scale * rng.standard_normal((cfg.n_steps, n_bonds, 9))
        psi = np.zeros((b, dim), dtype=complex)
        psi[:, 0] = 1.0
        rho = None
        if observable in ("xeb", "fidelity"):
            rho = np.zeros((b, dim, dim), dtype=complex)
            rho[:, 0, 0] = 1.0
        for step in range(cfg.n_steps):
            h = np.einsum("bkc,kcij->bij", couplings[:, step], ops, optimize=True)
            w, v = np.linalg.eigh(h)
            phases = np.exp(-1j * cfg.delta_t * w)
            u = np.einsum("bik,bk,bjk->bij", v, phases, v.conj(), optimize=True)
            psi = np.einsum("bij,bj->bi", u, psi, optimize=True)
            if rho is not None:
                rho = np.einsum("bij,bjk,blk->bil", u, rho, u.conj(), optimize=True)
                rho = _depolarize(rho, lam_step, site_paulis)
        norms = np.linalg.norm(psi, axis=1)
        if np.abs(norms - 1.0).max() > 1e-10:
            raise FloatingPointError("trajectory lost unitarity")
        if not np.isfinite(psi).all():
            raise FloatingPointError(
                f"NaN in trajectory batch starting at index {done} (seed {cfg.rng_seed})")
        p = np.abs(psi) ** 2
        if observable == "collision":
            values[done:done + b] = np.sum(p ** 2, axis=1)
        elif observable == "xeb":
            q = np.einsum("bii->bi", rho).real
            values[done:done + b] = np.sum(p * q, axis=1)
        else:
            values[done:done + b] = np.einsum("bij,bji->b", rho,
                                              np.einsum("bi,bj->bij", psi, psi.conj())
                                              ).real
        done += b
    mean = float(np.mean(values))
    stderr = float(np.std(values, ddof=1) / np.sqrt(cfg.n_trajectories))
    return mean, stderr

"""Open-boundary MPS over 16-dimensional replica sites with imaginary-time TEBD.

Tensors are rank-3 (left bond, physical 16, right bond).  The state's
exponential scale lives in a separate log_magnitude accumulator so stored
tensor entries stay O(1) even when amplitudes reach 2^-N e^-Et scales.
Tensors may be real or complex; all generators of this model are real
symmetric, so production runs stay in float64.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .replica_algebra import SITE_DIM, SiteState

NEG_INF = float("-inf")


@dataclass
class TruncationPolicy:
    chi_max: int = 64
    discard_tolerance: float = 1e-12

    def __post_init__(self):
        if self.chi_max < 1:
            raise ValueError(f"chi_max must be >= 1, got {self.chi_max}")
        if not 0.0 <= self.discard_tolerance < 1.0:
            raise ValueError(f"discard_tolerance must be in [0,1), got {self.discard_tolerance}")


DEFAULT_POLICY = TruncationPolicy()


@dataclass
class LogAmplitude:
    """Complex amplitude in log form: value = exp(log_abs) * exp(i phase)."""

    log_abs: float
    phase: float = 0.0

    @property
    def is_zero(self) -> bool:
        return self.log_abs == NEG_INF

    @property
    def log2_abs(self) -> float:
        return self.log_abs / np.log(2.0) if not self.is_zero else NEG_INF

    def value(self) -> complex:
        if self.is_zero:
            return 0.0
        return np.exp(self.log_abs) * np.exp(1j * self.phase)

    def real_value(self) -> float:
        if self.is_zero:
            return 0.0
        return float(np.exp(self.log_abs) * np.cos(self.phase))


@dataclass
class StepAudit:
    """Truncation record for one Trotter step."""

    max_discarded_weight: float = 0.0
    max_bond_dimension: int = 1
    tolerance_exceeded: bool = False

    def absorb(self, discarded: float, chi: int, tol: float):
        self.max_discarded_weight = max(self.max_discarded_weight, discarded)
        self.max_bond_dimension = max(self.max_bond_dimension, chi)
        if discarded > tol:
            self.tolerance_exceeded = True


class ReplicaMPS:
    """MPS with per-site (chi_l, 16, chi_r) tensors and a log-scale accumulator."""

    def __init__(self, tensors: list[np.ndarray], log_magnitude: float = 0.0,
                 canonical_center: int | None = None):
        if len(tensors) < 2:
            raise ValueError("ReplicaMPS needs at least 2 sites")
        if tensors[0].shape[0] != 1 or tensors[-1].shape[2] != 1:
            raise ValueError("boundary bonds must have dimension 1")
        self.tensors = tensors
        self.log_magnitude = float(log_magnitude)
        self.canonical_center = canonical_center

    @property
    def n_sites(self) -> int:
        return len(self.tensors)

    def bond_dims(self) -> list[int]:
        return [t.shape[2] for t in self.tensors[:-1]]

    def copy(self) -> "ReplicaMPS":
        return ReplicaMPS([t.copy() for t in self.tensors], self.log_magnitude,
                          self.canonical_center)

    def max_abs_entries(self) -> list[float]:
        return [float(np.abs(t).max()) for t in self.tensors]


def product_mps(site_states: list[SiteState] | list[np.ndarray]) -> ReplicaMPS:
    """Bond-dimension-1 MPS of a product state; per-site norms go to log_magnitude."""
    if len(site_states) < 2:
        raise ValueError("product_mps needs at least 2 sites")
    tensors = []
    log_mag = 0.0
    for s in site_states:
        v = np.asarray(s.amplitudes if isinstance(s, SiteState) else s)
        n = np.linalg.norm(v)
        if n == 0.0:
            raise ValueError("zero site vector in product state")
        tensors.append((v / n).reshape(1, SITE_DIM, 1))
        log_mag += np.log(n)
    return ReplicaMPS(tensors, log_mag, canonical_center=0)


# ---------------------------------------------------------------------------
# gates

def exp_gate(generator: np.ndarray, tau: float) -> np.ndarray:
    """exp(-tau * H) of a Hermitian generator, via eigendecomposition."""
    w, v = np.linalg.eigh(generator)
    g = (v * np.exp(-tau * w)) @ v.conj().T
    if np.iscomplexobj(generator) and np.abs(g.imag).max() < 1e-14:
        g = g.real
    return np.ascontiguousarray(g)


def step_layers(n_sites: int, symmetric: bool = True) -> list[tuple[str, list[int]]]:
    """Canonical gate-layer sequence of one Trotter step, shared with the
    dense oracle so both engines apply bit-identical gate orders.

    Layers: even bonds, odd bonds (and a trailing even half-layer in the
    symmetric splitting); the single-site noise layer follows separately.
    """
    even = list(range(0, n_sites - 1, 2))
    odd = list(range(1, n_sites - 1, 2))
    if symmetric:
        return [("half", even), ("full", odd[::-1]), ("half", even)]
    return [("full", even), ("full", odd[::-1])]


# ---------------------------------------------------------------------------
# canonical form

def _qr_step_right(mps: ReplicaMPS, i: int):
    t = mps.tensors[i]
    l, d, r = t.shape
    q, rm = np.linalg.qr(t.reshape(l * d, r))
    k = q.shape[1]
    mps.tensors[i] = q.reshape(l, d, k)
    nxt = mps.tensors[i + 1]
    mps.tensors[i + 1] = np.einsum("kl,lpr->kpr", rm, nxt)


def _qr_step_left(mps: ReplicaMPS, i: int):
    t = mps.tensors[i]
    l, d, r = t.shape
    q, rm = np.linalg.qr(t.reshape(l, d * r).conj().T)
    k = q.shape[1]
    mps.tensors[i] = q.conj().T.reshape(k, d, r)
    prv = mps.tensors[i - 1]
    mps.tensors[i - 1] = np.einsum("lpm,mk->lpk", prv, rm.conj().T)


def _normalize_center(mps: ReplicaMPS):
    c = mps.canonical_center
    t = mps.tensors[c]
    n = np.linalg.norm(t)
    if n == 0.0:
        raise ValueError("MPS norm collapsed to zero")
    mps.tensors[c] = t / n
    mps.log_magnitude += np.log(n)


def move_center(mps: ReplicaMPS, k: int, normalize: bool = True):
    """Bring the orthogonality center to site k (full sweep if unknown)."""
    if mps.canonical_center is None:
        for i in range(mps.n_sites - 1, k, -1):
            _qr_step_left(mps, i)
        for i in range(0, k):
            _qr_step_right(mps, i)
        mps.canonical_center = k
    else:
        while mps.canonical_center < k:
            _qr_step_right(mps, mps.canonical_center)
            mps.canonical_center += 1
        while mps.canonical_center > k:
            _qr_step_left(mps, mps.canonical_center)
            mps.canonical_center -= 1
    if normalize:
        _normalize_center(mps)


def canonicalize(mps: ReplicaMPS, k: int = 0):
    """Full canonicalization with the center (unit norm) at site k."""
    mps.canonical_center = None
    move_center(mps, k)


# ---------------------------------------------------------------------------
# SVD core

def svd_truncate(theta: np.ndarray, policy: TruncationPolicy):
    """SVD with descending singular values, truncated to the policy.

    Returns (u, s, vh, discarded_weight) with discarded_weight the relative
    squared weight dropped.  Falls back to the slower gesvd driver if gesdd
    fails to converge.
    """
    if not np.isfinite(theta).all():
        raise FloatingPointError("non-finite tensor data passed to SVD")
    try:
        u, s, vh = np.linalg.svd(theta, full_matrices=False)
    except np.linalg.LinAlgError:
        u, s, vh = scipy.linalg.svd(theta, full_matrices=False, lapack_driver="gesvd")
    total = float(np.sum(s ** 2))
    if total == 0.0:
        raise ValueError("SVD of zero matrix: state collapsed")
    tail = np.cumsum((s ** 2)[::-1])[::-1] / total  # tail[k] = weight of s[k:]
    keep = len(s)
    if policy.discard_tolerance > 0.0:
        ok = np.nonzero(tail <= policy.discard_tolerance)[0]
        if len(ok):
            keep = max(1, int(ok[0]))
    keep = min(keep, policy.chi_max)
    discarded = float(tail[keep]) if keep < len(s) else 0.0
    return u[:, :keep], s[:keep], vh[:keep], discarded


def apply_bond_gate(mps: ReplicaMPS, i: int, gate: np.ndarray,
                    policy: TruncationPolicy, absorb_right: bool = True):
    """Two-site gate on bond (i, i+1) with SVD truncation.

    The singular-value norm is folded into log_magnitude; the center moves to
    i+1 (absorb_right) or stays at i.  Returns (discarded_weight, chi).
    """
    move_center(mps, i)
    a, b = mps.tensors[i], mps.tensors[i + 1]
    l, d, _ = a.shape
    _, _, r = b.shape
    theta = np.tensordot(a, b, axes=(2, 0))          # (l, d, d, r)
    theta = theta.reshape(l, d * d, r)
    theta = np.einsum("PQ,lQr->lPr", gate, theta, optimize=True)
    theta = theta.reshape(l * d, d * r)
    u, s, vh, discarded = svd_truncate(theta, policy)
    sn = np.linalg.norm(s)
    if sn == 0.0:
        raise ValueError("MPS norm collapsed to zero in bond update")
    s = s / sn
    mps.log_magnitude += np.log(sn)
    chi = len(s)
    if absorb_right:
        mps.tensors[i] = u.reshape(l, d, chi)
        mps.tensors[i + 1] = (s[:, None] * vh).reshape(chi, d, r)
        mps.canonical_center = i + 1
    else:
        mps.tensors[i] = (u * s[None, :]).reshape(l, d, chi)
        mps.tensors[i + 1] = vh.reshape(chi, d, r)
        mps.canonical_center = i
    return discarded, chi


def apply_site_gates(mps: ReplicaMPS, gates):
    """Per-site 16x16 gate layer.  Non-unitary gates break canonical form,
    so the center is invalidated and renormalized lazily on the next sweep."""
    for i, g in enumerate(gates):
        if g is None:
            continue
        mps.tensors[i] = np.einsum("pq,lqr->lpr", g, mps.tensors[i])
    mps.canonical_center = None


def trotter_step(mps: ReplicaMPS, bond_gate: np.ndarray,
                 site_gates=None, policy: TruncationPolicy = DEFAULT_POLICY,
                 bond_gate_half: np.ndarray | None = None) -> StepAudit:
    """One imaginary-time step: even bonds, odd bonds, optional site layer.

    With bond_gate_half the splitting is the symmetrized
    half-even / odd / half-even sequence (O(dt^2) bias); otherwise first
    order.  Every two-site update truncates per the policy and the audit
    records the worst discarded weight.
    """
    audit = StepAudit()
    layers = step_layers(mps.n_sites, symmetric=bond_gate_half is not None)
    for kind, bonds in layers:
        gate = bond_gate_half if kind == "half" else bond_gate
        forward = len(bonds) < 2 or bonds[1] > bonds[0]
        for i in bonds:
            discarded, chi = apply_bond_gate(mps, i, gate, policy, absorb_right=forward)
            audit.absorb(discarded, chi, policy.discard_tolerance)
    if site_gates is not None:
        apply_site_gates(mps, site_gates)
    return audit


# ---------------------------------------------------------------------------
# contraction

def overlap(bra_sites: list[SiteState] | list[np.ndarray], mps: ReplicaMPS) -> LogAmplitude:
    """log <product bra|mps>, including log_magnitude.

    Never materializes the 16^N vector; cost is linear in N and quadratic in
    bond dimension.  An exactly zero overlap returns the -inf sentinel.
    """
    if len(bra_sites) != mps.n_sites:
        raise ValueError(f"bra has {len(bra_sites)} sites, mps has {mps.n_sites}")
    v = np.ones((1,), dtype=mps.tensors[0].dtype)
    log_acc = 0.0
    for s, t in zip(bra_sites, mps.tensors):
        b = np.asarray(s.amplitudes if isinstance(s, SiteState) else s)
        m = np.einsum("p,lpr->lr", b.conj(), t)
        v = v @ m
        n = np.linalg.norm(v)
        if n == 0.0:
            return LogAmplitude(NEG_INF, 0.0)
        v = v / n
        log_acc += np.log(n)
    amp = complex(v[0])
    if amp == 0.0:
        return LogAmplitude(NEG_INF, 0.0)
    return LogAmplitude(log_acc + np.log(abs(amp)) + mps.log_magnitude, float(np.angle(amp)))


def norm_log(mps: ReplicaMPS) -> float:
    """log ||psi||, by full transfer contraction (no canonical assumptions)."""
    v = np.ones((1, 1), dtype=mps.tensors[0].dtype)
    log_acc = 0.0
    for t in mps.tensors:
        v = np.einsum("ab,apr,bps->rs", v, t.conj(), t, optimize=True)
        n = np.linalg.norm(v)
        if n == 0.0:
            return NEG_INF
        v = v / n
        log_acc += np.log(n)
    return 0.5 * (log_acc + np.log(abs(float(v[0, 0].real)))) + mps.log_magnitude


def stored_self_overlap(mps: ReplicaMPS) -> float:
    """Contraction of the stored tensors with themselves (scale factored out)."""
    v = np.ones((1, 1), dtype=mps.tensors[0].dtype)
    for t in mps.tensors:
        v = np.einsum("ab,apr,bps->rs", v, t.conj(), t, optimize=True)
    return float(v[0, 0].real)


def expectation_bond_sum(mps: ReplicaMPS, bond_matrix: np.ndarray) -> float:
    """<psi| sum_i h_{i,i+1} |psi> / <psi|psi> for a uniform two-site term."""
    work = mps.copy()
    total = 0.0
    d = SITE_DIM
    for i in range(work.n_sites - 1):
        move_center(work, i)
        theta = np.tensordot(work.tensors[i], work.tensors[i + 1], axes=(2, 0))
        l, _, _, r = theta.shape
        th = theta.reshape(l, d * d, r)
        hth = np.einsum("PQ,lQr->lPr", bond_matrix, th, optimize=True)
        num = np.einsum("lPr,lPr->", th.conj(), hth, optimize=True)
        den = np.einsum("lPr,lPr->", th.conj(), th, optimize=True)
        total += float((num / den).real)
    return total


# ---------------------------------------------------------------------------
# compression, product-state subtraction

def compress(mps: ReplicaMPS, policy: TruncationPolicy) -> float:
    """Left-canonicalize then truncate right-to-left. Returns max discarded weight."""
    canonicalize(mps, mps.n_sites - 1)
    worst = 0.0
    for i in range(mps.n_sites - 2, -1, -1):
        a, b = mps.tensors[i], mps.tensors[i + 1]
        l, d, _ = a.shape
        _, _, r = b.shape
        theta = np.tensordot(a, b, axes=(2, 0)).reshape(l * d, d * r)
        u, s, vh, discarded = svd_truncate(theta, policy)
        worst = max(worst, discarded)
        sn = np.linalg.norm(s)
        s = s / sn
        mps.log_magnitude += np.log(sn)
        chi = len(s)
        mps.tensors[i] = (u * s[None, :]).reshape(l, d, chi)
        mps.tensors[i + 1] = vh.reshape(chi, d, r)
        mps.canonical_center = i
    _normalize_center(mps)
    return worst


def deflate_product(mps: ReplicaMPS, site_states, policy: TruncationPolicy) -> LogAmplitude:
    """Subtract the projection onto a product state: mps -= <prod|mps> |prod>.

    Used to pin exactly-known invariant components (the |id>>^N zero mode)
    so that exponentially smaller signals stay resolvable in log scale.
    Returns the removed coefficient.
    """
    vecs = [np.asarray(s.amplitudes if isinstance(s, SiteState) else s) for s in site_states]
    norms = [np.linalg.norm(v) for v in vecs]
    units = [v / n for v, n in zip(vecs, norms)]
    c = overlap(units, mps)
    if c.is_zero:
        return c
    n = mps.n_sites
    # relative scale of the subtracted component, distributed per site
    rel_log = c.log_abs - mps.log_magnitude
    f = np.exp(rel_log / n)
    phase = -np.exp(1j * c.phase)
    coeff0 = phase.real if not np.iscomplexobj(mps.tensors[0]) and abs(phase.imag) < 1e-14 \
        else phase
    new = []
    for i, t in enumerate(mps.tensors):
        l, d, r = t.shape
        pv = (f * units[i]).reshape(1, d, 1)
        if i == 0:
            pv = pv * coeff0
            blk = np.zeros((1, d, r + 1), dtype=np.result_type(t, pv))
            blk[:, :, :r] = t
            blk[:, :, r:] = pv
        elif i == n - 1:
            blk = np.zeros((l + 1, d, 1), dtype=np.result_type(t, pv))
            blk[:l] = t
            blk[l:] = pv
        else:
            blk = np.zeros((l + 1, d, r + 1), dtype=np.result_type(t, pv))
            blk[:l, :, :r] = t
            blk[l:, :, r:] = pv
        new.append(blk)
    mps.tensors = new
    mps.canonical_center = None
    compress(mps, policy)
    return c


# ---------------------------------------------------------------------------
# binary checkpoint ("BRMPS1")

_MAGIC = b"BRMPS1\x00"


def save_mps(mps: ReplicaMPS, path: str):
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        is_complex = any(np.iscomplexobj(t) for t in mps.tensors)
        center = -1 if mps.canonical_center is None else mps.canonical_center
        fh.write(struct.pack("<IBdi", mps.n_sites, int(is_complex), mps.log_magnitude, center))
        dtype = np.complex128 if is_complex else np.float64
        for t in mps.tensors:
            fh.write(struct.pack("<III", *t.shape))
            fh.write(np.ascontiguousarray(t, dtype=dtype).tobytes())


def load_mps(path: str) -> ReplicaMPS:
    with open(path, "rb") as fh:
        magic = fh.read(len(_MAGIC))
        if magic != _MAGIC:
            raise ValueError(f"not a BRMPS1 checkpoint: magic {magic!r}")
        n, is_complex, log_mag, center = struct.unpack("<IBdi", fh.read(struct.calcsize("<IBdi")))
        dtype = np.complex128 if is_complex else np.float64
        tensors = []
        for _ in range(n):
            shape = struct.unpack("<III", fh.read(12))
            count = shape[0] * shape[1] * shape[2]
            buf = fh.read(count * np.dtype(dtype).itemsize)
            tensors.append(np.frombuffer(buf, dtype=dtype).reshape(shape).copy())
    return ReplicaMPS(tensors, log_mag, None if center < 0 else center)

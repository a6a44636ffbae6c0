"""Paper observables as boundary contractions of the evolved replica MPS.

Every quantity is circuit-averaged before logarithms are taken (annealed
convention) and reported in log space so 2^-N-scale values stay exact.
One evolution is reused across all measurement times.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .mps import (
    DEFAULT_POLICY,
    LogAmplitude,
    NEG_INF,
    StepAudit,
    TruncationPolicy,
    deflate_product,
    exp_gate,
    overlap,
    product_mps,
    trotter_step,
)
from .replica_algebra import (
    NoiseSpec,
    SiteState,
    boundary_state,
    build_bond_hamiltonian,
    build_noise_perturbation,
    error_boundary_site,
)

log = logging.getLogger(__name__)

LN2 = np.log(2.0)
REALNESS_TOL = 1e-10


def _signed(amp: LogAmplitude) -> tuple[float, float]:
    """(log_abs, sign) of an amplitude that must be real."""
    if amp.is_zero:
        return NEG_INF, 1.0
    if abs(np.sin(amp.phase)) > REALNESS_TOL:
        raise FloatingPointError(f"observable has imaginary residue, phase={amp.phase}")
    return amp.log_abs, (1.0 if np.cos(amp.phase) > 0 else -1.0)


# ---------------------------------------------------------------------------
# domain types

@dataclass(frozen=True)
class Partition:
    """Contiguous tripartition A | B | C covering 0..N-1, B in the middle."""

    a: tuple[int, ...]
    b: tuple[int, ...]
    c: tuple[int, ...]

    def __post_init__(self):
        sites = sorted(self.a + self.b + self.c)
        n = len(sites)
        if sites != list(range(n)):
            raise ValueError("partition regions must be disjoint and cover 0..N-1")
        if self.a and self.c and self.b:
            if not (max(self.a) < min(self.b) < max(self.b) < min(self.c)):
                raise ValueError("B must separate A and C")

    @property
    def n_sites(self) -> int:
        return len(self.a) + len(self.b) + len(self.c)

    def mirrored(self) -> "Partition":
        n = self.n_sites
        flip = lambda region: tuple(sorted(n - 1 - i for i in region))
        return Partition(flip(self.c), flip(self.b), flip(self.a))


def equal_tripartition(n: int) -> Partition:
    if n % 3 != 0:
        raise ValueError(f"equal tripartition needs N divisible by 3, got {n}")
    k = n // 3
    return Partition(tuple(range(k)), tuple(range(k, 2 * k)), tuple(range(2 * k, n)))


@dataclass(frozen=True)
class EncodingLayout:
    """Which sites hold the encoded reference and which are hit by noise."""

    n_sites: int
    a1_sites: tuple[int, ...]
    noisy_sites: tuple[int, ...]
    placement: str = "left_contiguous"
    de_convention: str = "noisy_only"  # or "all_sites"

    def __post_init__(self):
        if not self.a1_sites:
            raise ValueError("at least one encoded site required")
        if any(i < 0 or i >= self.n_sites for i in self.a1_sites + self.noisy_sites):
            raise ValueError("site index out of range")

    @property
    def d_r(self) -> float:
        return 2.0 ** len(self.a1_sites)

    @property
    def d_e(self) -> float:
        count = len(self.noisy_sites) if self.de_convention == "noisy_only" else self.n_sites
        return 4.0 ** count

    @property
    def log2_d_r(self) -> float:
        return float(len(self.a1_sites))

    @property
    def log2_d_e(self) -> float:
        count = len(self.noisy_sites) if self.de_convention == "noisy_only" else self.n_sites
        return 2.0 * count


def n_noisy_sites(n: int, p: float) -> int:
    return int(round(p * n))


def left_encoding_layout(n: int, p: float, placement: str = "left_contiguous",
                         seed: int | None = None, n_encode: int = 1,
                         de_convention: str = "noisy_only") -> EncodingLayout:
    """Reference qubit(s) on the left end; noisy sites per placement rule."""
    k = n_noisy_sites(n, p)
    if placement == "left_contiguous":
        noisy = tuple(range(k))
    elif placement == "random":
        rng = np.random.default_rng(seed)
        noisy = tuple(sorted(rng.choice(n, size=k, replace=False).tolist()))
    else:
        raise ValueError(f"unknown placement {placement!r}")
    return EncodingLayout(n, tuple(range(n_encode)), noisy, placement, de_convention)


def right_encoding_layout(n: int, p: float, de_convention: str = "noisy_only") -> EncodingLayout:
    """Light-cone setup: reference on the right end, noise left-contiguous."""
    k = n_noisy_sites(n, p)
    return EncodingLayout(n, (n - 1,), tuple(range(k)), "right_encoded", de_convention)


@dataclass
class DiagnosticsFit:
    """Fitted transition diagnostics with collapse-quality bookkeeping."""

    tau_star: float | None = None
    nu: float | None = None
    c1: float | None = None
    c2: float | None = None
    delta: float | None = None
    epsilon: float | None = None
    lambda_star: float | None = None
    residual: float = np.inf
    uncollapsed_residual: float = np.inf
    uncertainty: float | None = None
    converged: bool = True
    ansatz: str = ""

    @property
    def residual_ratio(self) -> float:
        if self.residual == 0:
            return np.inf
        return self.uncollapsed_residual / self.residual


# ---------------------------------------------------------------------------
# shared evolution driver

DEFAULT_SUBSTEPS = 2


@lru_cache(maxsize=8)
def _bond_gates(coupling: float, delta_t: float, symmetric: bool):
    h = build_bond_hamiltonian(coupling).matrix
    full = exp_gate(h, delta_t)
    half = exp_gate(h, delta_t / 2.0) if symmetric else None
    return full, half


def _noise_site_gates(noise: NoiseSpec | None, n: int, delta_t: float):
    """Per-step noise gates.  lambda is quoted per unit time (reference
    dt = 1), so at the production convention delta_t = 1 each step applies
    exactly one depolarizing event of strength lambda, while finer steps
    compose to the same total channel."""
    if noise is None or noise.replica_mask == "kraus_dressing":
        return None
    lam = noise.resolved_lambda(n)
    if lam == 0.0:
        return None
    h = build_noise_perturbation(NoiseSpec(lam=lam, replica_mask=noise.replica_mask), 1.0)
    gate = exp_gate(h, delta_t)
    mask = noise.site_mask if noise.site_mask is not None else np.ones(n, dtype=bool)
    return [gate if mask[i] else None for i in range(n)]


def evolve_trace(initial_sites, t_max: int, bras: dict,
                 noise: NoiseSpec | None = None,
                 policy: TruncationPolicy = DEFAULT_POLICY,
                 coupling: float = 1.0, delta_t: float = 1.0,
                 symmetric: bool = True, deflate=None,
                 substeps: int = DEFAULT_SUBSTEPS):
    """Evolve a product state t_max unit-time steps, contracting every bra
    at each t.

    One unit step Trotterizes exp(-delta_t (H + H_noise)) as `substeps`
    symmetric brickwork sub-sweeps of the bond generator followed by one
    single-site noise layer carrying the full delta_t of the (per-unit-time)
    noise rate; the noise generator commutes with itself, so its placement
    within the step is an O(dt^2) detail.  substeps=2 is the production
    convention calibrated against the reported transition constants.

    deflate: optional list of product states whose components are projected
    out after every step (used for exactly-invariant zero modes).
    Returns ({name: [LogAmplitude at t=0..t_max]}, [StepAudit per step]).
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    mps = product_mps(initial_sites)
    if deflate:
        for states in deflate:
            deflate_product(mps, states, policy)
    results = {k: [overlap(v, mps)] for k, v in bras.items()}
    audits: list[StepAudit] = []
    sub_dt = delta_t / substeps
    full, half = _bond_gates(coupling, sub_dt, symmetric)
    site_gates = _noise_site_gates(noise, len(initial_sites), delta_t)
    # the noise layer rides after the middle sub-pair (symmetric placement);
    # its generator commutes with itself so the total channel is exact
    noise_at = (substeps - 1) // 2
    for _ in range(t_max):
        audit = StepAudit()
        for k in range(substeps):
            sub = trotter_step(mps, full, site_gates if k == noise_at else None,
                               policy, bond_gate_half=half)
            audit.absorb(sub.max_discarded_weight, sub.max_bond_dimension,
                         policy.discard_tolerance)
            audit.tolerance_exceeded |= sub.tolerance_exceeded
        if deflate:
            for states in deflate:
                deflate_product(mps, states, policy)
        audits.append(audit)
        for k, v in bras.items():
            results[k].append(overlap(v, mps))
    return results, audits


def _uniform(label: str, n: int) -> list[SiteState]:
    s = boundary_state(label)
    return [s] * n


# ---------------------------------------------------------------------------
# collision probability and Renyi-2 quantities

@dataclass
class CollisionResult:
    log2_z: float
    n_sites: int
    audits: list = field(default_factory=list, repr=False)

    @property
    def two_n_z(self) -> float:
        return 2.0 ** (self.n_sites + self.log2_z)

    @property
    def z(self) -> float:
        return 2.0 ** self.log2_z


def collision_trace(n: int, t_max: int, coupling: float = 1.0,
                    policy: TruncationPolicy = DEFAULT_POLICY,
                    substeps: int = DEFAULT_SUBSTEPS) -> list:
    """log2 Z at every t in 0..t_max from a single evolution."""
    res, audits = evolve_trace(_uniform("zero4", n), t_max,
                               {"coll": _uniform("coll", n)},
                               policy=policy, coupling=coupling, substeps=substeps)
    out = []
    for amp in res["coll"]:
        la, sign = _signed(amp)
        if sign < 0:
            raise FloatingPointError("collision probability came out negative")
        out.append(la / LN2)
    return [CollisionResult(l2, n, audits) for l2 in out]


def collision_probability(n: int, t: int, coupling: float = 1.0,
                          policy: TruncationPolicy = DEFAULT_POLICY,
                          substeps: int = DEFAULT_SUBSTEPS) -> CollisionResult:
    """Averaged collision probability Z after t unit-time steps (log2-scaled)."""
    if t < 0:
        raise ValueError("t must be a non-negative integer step count")
    return collision_trace(n, t, coupling, policy, substeps)[t]


def _region_bras(mask, n: int) -> list[SiteState]:
    coll = boundary_state("coll")
    two_id = SiteState(2.0 * boundary_state("id").amplitudes, "2id")
    inside = set(int(i) for i in mask)
    return [coll if i in inside else two_id for i in range(n)]


def renyi2_marginal_exponent(region_mask, n: int, t: int,
                             noise: NoiseSpec | None = None,
                             policy: TruncationPolicy = DEFAULT_POLICY,
                             substeps: int = DEFAULT_SUBSTEPS,
                             coupling: float = 1.0) -> float:
    """log E[sum_{s_X} p(s_X)^2]: coll on masked sites, 2 id elsewhere.

    The empty region is the distribution normalization, exactly 0."""
    if len(list(region_mask)) == 0:
        return 0.0
    res, _ = evolve_trace(_uniform("zero4", n), t,
                          {"m": _region_bras(region_mask, n)},
                          noise=noise, policy=policy, substeps=substeps,
                          coupling=coupling)
    la, sign = _signed(res["m"][t])
    if sign < 0:
        raise FloatingPointError("marginal collision exponent came out negative")
    return la


def renyi2_cmi_trace(partition: Partition, t_max: int,
                     noise: NoiseSpec | None = None,
                     policy: TruncationPolicy = DEFAULT_POLICY,
                     substeps: int = DEFAULT_SUBSTEPS,
                     coupling: float = 1.0):
    """I2(A:C|B) at every t from one evolution (four boundary contractions).

    Returns (cmi array in nats, dict of marginal log-exponent arrays, audits).
    """
    n = partition.n_sites
    regions = {
        "ab": partition.a + partition.b,
        "bc": partition.b + partition.c,
        "b": partition.b,
        "abc": partition.a + partition.b + partition.c,
    }
    bras = {k: _region_bras(v, n) for k, v in regions.items()}
    res, audits = evolve_trace(_uniform("zero4", n), t_max, bras, noise=noise, policy=policy,
                               substeps=substeps, coupling=coupling)
    logs = {}
    for k in regions:
        vals = []
        for amp in res[k]:
            la, _ = _signed(amp)
            vals.append(la)
        logs[k] = np.array(vals)
    cmi = logs["b"] + logs["abc"] - logs["ab"] - logs["bc"]
    return cmi, logs, audits


def renyi2_cmi(partition: Partition, n: int, t: int,
               noise: NoiseSpec | None = None,
               policy: TruncationPolicy = DEFAULT_POLICY,
               substeps: int = DEFAULT_SUBSTEPS) -> float:
    """Renyi-2 conditional mutual information of the output distribution (nats)."""
    if n != partition.n_sites:
        raise ValueError("partition size does not match N")
    cmi, _, _ = renyi2_cmi_trace(partition, t, noise=noise, policy=policy, substeps=substeps)
    return float(cmi[t])


# ---------------------------------------------------------------------------
# XEB and fidelity

@dataclass
class XebPoint:
    chi: float
    fidelity: float
    n_sites: int

    @property
    def ratio(self) -> float:
        return self.fidelity / self.chi if self.chi != 0 else np.inf

    @property
    def implied_log2_z(self) -> float:
        return np.log2(1.0 + self.chi) - self.n_sites

    @property
    def log2_chi(self) -> float:
        return np.log2(self.chi) if self.chi > 0 else NEG_INF

    @property
    def log2_fidelity(self) -> float:
        return np.log2(self.fidelity) if self.fidelity > 0 else NEG_INF


def xeb_and_fidelity_trace(n: int, t_max: int, noise: NoiseSpec,
                           policy: TruncationPolicy = DEFAULT_POLICY,
                           coupling: float = 1.0,
                           substeps: int = DEFAULT_SUBSTEPS) -> tuple[list[XebPoint], list]:
    """chi_XEB and fidelity at every t from a single noisy evolution.

    |id>>^N is an exact zero mode of the noisy generator and contributes
    exactly 1 to 2^N<coll|psi_t> and 2^-N to F; that component is deflated
    from the evolving state and re-added in closed form, so chi and F stay
    accurate long after they fall below the 2^-N scale.
    """
    if noise.replica_mask != "replica1_only":
        raise ValueError("XEB noise acts on one replica only")
    if noise.site_mask is not None and not np.all(noise.site_mask):
        raise ValueError("XEB noise must mask all sites uniformly")
    id_sites = _uniform("id", n)
    bras = {"coll": _uniform("coll", n), "swap": _uniform("swap", n)}
    res, audits = evolve_trace(_uniform("zero4", n), t_max, bras, noise=noise,
                               policy=policy, coupling=coupling,
                               deflate=[id_sites], substeps=substeps)
    points = []
    for amp_c, amp_s in zip(res["coll"], res["swap"]):
        lc, sc = _signed(amp_c)
        ls, ss = _signed(amp_s)
        chi = sc * 2.0 ** (n + lc / LN2) if lc != NEG_INF else 0.0
        fid = 2.0 ** (-n) + (ss * 2.0 ** (n + ls / LN2) if ls != NEG_INF else 0.0)
        points.append(XebPoint(chi, fid, n))
    return points, audits


def xeb_and_fidelity(n: int, t: int, noise: NoiseSpec,
                     policy: TruncationPolicy = DEFAULT_POLICY,
                     substeps: int = DEFAULT_SUBSTEPS) -> XebPoint:
    """(chi_XEB, fidelity, ratio) after t steps, both from one evolved MPS."""
    return xeb_and_fidelity_trace(n, t, noise, policy, substeps=substeps)[0][t]


# ---------------------------------------------------------------------------
# mutual purity

def error_bra_sites(layout: EncodingLayout, lam: float) -> list[SiteState]:
    noisy = set(layout.noisy_sites)
    hot = error_boundary_site(lam, noisy=True)
    cold = error_boundary_site(lam, noisy=False)
    return [hot if i in noisy else cold for i in range(layout.n_sites)]


def psi_in_sites(layout: EncodingLayout) -> list[SiteState]:
    """Product form of the encoding boundary state (single-site reference)."""
    if len(layout.a1_sites) != 1:
        raise ValueError("product psi_in exists only for a single encoded site")
    enc = boundary_state("encode")
    z = boundary_state("zero4")
    a1 = set(layout.a1_sites)
    return [enc if i in a1 else z for i in range(layout.n_sites)]


def mutual_purity_trace(layout: EncodingLayout, t_max: int, lam: float,
                        policy: TruncationPolicy = DEFAULT_POLICY,
                        coupling: float = 1.0,
                        substeps: int = DEFAULT_SUBSTEPS) -> tuple[list[LogAmplitude], list]:
    """F_RE(t) = (2^N/d_R) <psi_err| e^{-tH} |psi_in>, log-scaled.

    With noiseless dressing (lam = 0 or empty noisy set) the error state is
    proportional to the invariant ground bra <<id|^N, which is orthogonal to
    the encode factor site by site, so F_RE is exactly zero at every t: the
    -inf sentinel is returned without evolving.

    For several encoded sites psi_in is the difference
    |swap^k z> - |id^k z>/d_R (a product of single-site differences only for
    k = 1), evaluated as two evolutions.
    """
    n = layout.n_sites
    k = len(layout.a1_sites)
    if not 0.0 <= lam <= 0.75:
        raise ValueError(f"lambda must be in [0, 0.75], got {lam}")
    if lam == 0.0 or not layout.noisy_sites:
        return [LogAmplitude(NEG_INF, 0.0)] * (t_max + 1), []
    err = error_bra_sites(layout, lam)
    id_sites = _uniform("id", n)
    # the distributed per-site factor 2 in psi_err already carries the 2^N;
    # the remaining normalization is 1/d_R
    prefactor_log2 = -layout.log2_d_r
    if k == 1:
        res, audits = evolve_trace(psi_in_sites(layout), t_max, {"err": err},
                                   policy=policy, coupling=coupling,
                                   deflate=[id_sites], substeps=substeps)
        amps = res["err"]
    else:
        a1 = set(layout.a1_sites)
        sw, idv, z = boundary_state("swap"), boundary_state("id"), boundary_state("zero4")
        in_sw = [sw if i in a1 else z for i in range(n)]
        in_id = [idv if i in a1 else z for i in range(n)]
        res_s, audits = evolve_trace(in_sw, t_max, {"err": err}, policy=policy,
                                     coupling=coupling, deflate=[id_sites],
                                     substeps=substeps)
        res_i, audits_i = evolve_trace(in_id, t_max, {"err": err}, policy=policy,
                                       coupling=coupling, deflate=[id_sites],
                                       substeps=substeps)
        audits = audits + audits_i
        amps = []
        for a_s, a_i in zip(res_s["err"], res_i["err"]):
            ls, ss = _signed(a_s)
            li, si = _signed(a_i)
            val = ss * np.exp(ls) - si * np.exp(li) / layout.d_r if ls != NEG_INF or li != NEG_INF else 0.0
            # recombine in log form around the larger magnitude to avoid overflow
            ref = max(ls, li - np.log(layout.d_r))
            if ref == NEG_INF:
                amps.append(LogAmplitude(NEG_INF, 0.0))
                continue
            val = (ss * np.exp(ls - ref) if ls != NEG_INF else 0.0) \
                - (si * np.exp(li - np.log(layout.d_r) - ref) if li != NEG_INF else 0.0)
            if val == 0.0:
                amps.append(LogAmplitude(NEG_INF, 0.0))
            else:
                amps.append(LogAmplitude(ref + np.log(abs(val)), 0.0 if val > 0 else np.pi))
    out = []
    for amp in amps:
        la, sign = _signed(amp)
        if la == NEG_INF:
            out.append(LogAmplitude(NEG_INF, 0.0))
        else:
            out.append(LogAmplitude(la + prefactor_log2 * LN2, 0.0 if sign > 0 else np.pi))
    return out, audits


def mutual_purity(layout: EncodingLayout, n: int, t: int, lam: float,
                  policy: TruncationPolicy = DEFAULT_POLICY,
                  substeps: int = DEFAULT_SUBSTEPS) -> LogAmplitude:
    """Mutual purity F_RE after t steps (log amplitude; -inf if exactly zero)."""
    if n != layout.n_sites:
        raise ValueError("layout size does not match N")
    return mutual_purity_trace(layout, t, lam, policy, substeps=substeps)[0][t]


# ---------------------------------------------------------------------------
# closed forms

def depolarizing_g(lam: float) -> float:
    """g(lambda) = (1-lambda)^2 + lambda^2/3, the per-site purity factor."""
    return (1.0 - lam) ** 2 + lam ** 2 / 3.0


@dataclass
class HaarMutualPurity:
    value: float
    log2_value: float
    single_qubit_asymptotic: float


def haar_mutual_purity(d_r: float, d_a: float, lam: float, p: float, n: int) -> HaarMutualPurity:
    """Mutual purity of a global Haar (2-design) encoding, closed form:

        F = d_A/(d_A^2 - 1) (1 - 1/d_R^2) (1 - g(lam)^{pN}).

    single_qubit_asymptotic is the d_R = 2, N >> 1 reduction
    3 * 2^(-N-2) (1 - g^{pN}) of the same expression.
    """
    if d_a <= 1:
        raise ValueError("d_A must exceed 1")
    g = depolarizing_g(lam)
    damping = 1.0 - g ** (p * n)
    value = d_a / (d_a ** 2 - 1.0) * (1.0 - 1.0 / d_r ** 2) * damping
    log2_value = np.log2(value) if value > 0 else NEG_INF
    asym = 3.0 * 2.0 ** (-(n + 2.0)) * damping
    return HaarMutualPurity(value, log2_value, asym)


def haar_for_layout(layout: EncodingLayout, lam: float) -> HaarMutualPurity:
    n = layout.n_sites
    return haar_mutual_purity(layout.d_r, 2.0 ** n, lam,
                              len(layout.noisy_sites) / n, n)


def qec_bound(f_re: float, d_r: float, d_e: float) -> float:
    """Recovery-error bound d_R^{5/2} d_E^{1/2} F_RE^{1/4}.

    Tiny negative F_RE from truncation noise is clamped to zero (logged)."""
    if f_re < 0:
        log.warning("clamping negative mutual purity %.3e to 0 in qec_bound", f_re)
        f_re = 0.0
    return d_r ** 2.5 * d_e ** 0.5 * f_re ** 0.25


def qec_bound_log2(log2_f_re: float, log2_d_r: float, log2_d_e: float) -> float:
    """log2 of the recovery bound, for exponentially small mutual purities."""
    if log2_f_re == NEG_INF:
        return NEG_INF
    return 2.5 * log2_d_r + 0.5 * log2_d_e + 0.25 * log2_f_re

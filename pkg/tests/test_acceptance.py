"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Production convention for the transition experiments: one unit-time step is
two symmetric brickwork sub-pairs at J = 0.15 with the noise layer between
them.  Oracle-facing criteria (ground-state exactness, dense equivalence,
trajectory Monte Carlo) are convention-independent and run at the physical
J = 1 units.  Heavy grids are sized to finish on a two-core box.
"""

import numpy as np
import pytest

from brrep.exact_oracle import (
    TrajectoryConfig,
    dense_evolve_matched,
    dense_overlap,
    sample_brownian_trajectories,
)
from brrep.fitting import Curve, collapse_fit, find_crossing, threshold_crossing_time
from brrep.mps import TruncationPolicy, exp_gate, norm_log, overlap, product_mps, trotter_step
from brrep.observables import (
    collision_trace,
    equal_tripartition,
    error_bra_sites,
    evolve_trace,
    haar_for_layout,
    left_encoding_layout,
    mutual_purity_trace,
    psi_in_sites,
    qec_bound_log2,
    renyi2_cmi_trace,
    right_encoding_layout,
    xeb_and_fidelity_trace,
    _uniform,
)
from brrep.replica_algebra import NoiseSpec, build_bond_hamiltonian

# calibrated production convention (see decisions ledger)
J_CAL = 0.138
SUBSTEPS = 2
POLICY = TruncationPolicy(chi_max=64, discard_tolerance=1e-12)
XEB_POLICY = TruncationPolicy(chi_max=48, discard_tolerance=1e-18)
EXACT = TruncationPolicy(chi_max=256, discard_tolerance=0.0)

LN2 = np.log(2.0)


def report(name: str, ok: bool, detail: str):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return ok


def test_ground_state_exactness():
    """H_bond annihilates id(x)id and swap(x)swap; id/swap MPS invariant."""
    h = build_bond_hamiltonian(1.0).matrix
    from brrep.replica_algebra import ID_STATE, SWAP_STATE
    r1 = np.linalg.norm(h @ np.kron(ID_STATE, ID_STATE))
    r2 = np.linalg.norm(h @ np.kron(SWAP_STATE, SWAP_STATE))
    devs = []
    full, half = exp_gate(h, 1.0), exp_gate(h, 0.5)
    for label in ("id", "swap"):
        for n in (8, 16):
            mps = product_mps(_uniform(label, n))
            trotter_step(mps, full, None, POLICY, bond_gate_half=half)
            amp = overlap(_uniform(label, n), mps)
            devs.append(abs(amp.log_abs))
    ok = r1 < 1e-12 and r2 < 1e-12 and max(devs) < 1e-8
    assert report("ground-state exactness",
                  ok, f"residuals {r1:.2e}/{r2:.2e}, step deviation {max(devs):.2e}")


def test_oracle_equivalence_n4():
    """MPS amplitudes = dense same-gate amplitudes to 1e-9 relative at N=4."""
    n = 4
    worst = 0.0
    noise = NoiseSpec(lam=0.07)
    cases = []
    # collision / renyi boundary pairs, noiseless evolution
    bras = {
        "coll": _uniform("coll", n),
        "half": _uniform("coll", 2) + [type(b := _uniform("id", 1)[0])(
            2.0 * b.amplitudes, "2id")] * 2,
        "swap": _uniform("swap", n),
    }
    for t in (1, 2, 4):
        res, _ = evolve_trace(_uniform("zero4", n), t, bras, policy=EXACT,
                              coupling=1.0, substeps=SUBSTEPS)
        dense = dense_evolve_matched(_uniform("zero4", n), t, coupling=1.0,
                                     substeps=SUBSTEPS)
        for k, bra in bras.items():
            got = res[k][t]
            want = dense_overlap(bra, dense)
            worst = max(worst, abs(got.log_abs - want.log_abs),
                        abs(got.phase - want.phase))
            cases.append(k)
        # noisy evolution (XEB boundary pair)
        resn, _ = evolve_trace(_uniform("zero4", n), t,
                               {"coll": bras["coll"], "swap": bras["swap"]},
                               noise=noise, policy=EXACT, coupling=1.0,
                               substeps=SUBSTEPS)
        densen = dense_evolve_matched(_uniform("zero4", n), t, noise=noise,
                                      coupling=1.0, substeps=SUBSTEPS)
        for k in ("coll", "swap"):
            got = resn[k][t]
            want = dense_overlap(bras[k], densen)
            worst = max(worst, abs(got.log_abs - want.log_abs))
        # mutual purity boundary pair
        layout = left_encoding_layout(n, 0.5)
        amps, _ = mutual_purity_trace(layout, t, 0.05, EXACT, coupling=1.0,
                                      substeps=SUBSTEPS)
        md = dense_evolve_matched(psi_in_sites(layout), t, coupling=1.0,
                                  substeps=SUBSTEPS)
        want = dense_overlap(error_bra_sites(layout, 0.05), md)
        worst = max(worst, abs(amps[t].log_abs
                               - (want.log_abs - layout.log2_d_r * LN2)))
    ok = worst < 1e-9
    assert report("oracle equivalence N=4", ok,
                  f"worst log-amplitude deviation {worst:.2e} over t in (1,2,4)")


def test_replica_mapping_monte_carlo():
    """N=3, t=2, dt=0.01, 1e4 trajectories: MC within 3 stderr of replica Z,
    and the same for sum p*q at lambda = 0.05."""
    n, t_phys, dt, n_traj = 3, 2.0, 0.01, 10000
    steps_engine = 40
    engine_dt = t_phys / steps_engine
    res, _ = evolve_trace(_uniform("zero4", n), steps_engine,
                          {"coll": _uniform("coll", n)},
                          policy=EXACT, coupling=1.0, delta_t=engine_dt,
                          substeps=1)
    z_rep = res["coll"][steps_engine].real_value()
    cfg = TrajectoryConfig(n, dt, int(round(t_phys / dt)), n_traj, rng_seed=2024)
    z_mc, z_err = sample_brownian_trajectories(cfg, "collision")
    dz = abs(z_mc - z_rep) / z_err

    lam = 0.05
    noise = NoiseSpec(lam=lam)
    resn, _ = evolve_trace(_uniform("zero4", n), steps_engine,
                           {"coll": _uniform("coll", n)}, noise=noise,
                           policy=EXACT, coupling=1.0, delta_t=engine_dt,
                           substeps=1)
    pq_rep = resn["coll"][steps_engine].real_value()
    pq_mc, pq_err = sample_brownian_trajectories(cfg, "xeb", lam=lam)
    dpq = abs(pq_mc - pq_rep) / pq_err
    ok = dz <= 3.0 and dpq <= 3.0
    assert report("replica-mapping Monte Carlo", ok,
                  f"collision {dz:.2f} sigma (MC {z_mc:.5f} vs {z_rep:.5f}), "
                  f"xeb {dpq:.2f} sigma (MC {pq_mc:.5f} vs {pq_rep:.5f})")


@pytest.fixture(scope="module")
def anticoncentration_data():
    sizes = (16, 24, 32, 48, 64)
    out = {}
    for n in sizes:
        trace = collision_trace(n, 16, J_CAL, POLICY, substeps=SUBSTEPS)
        out[n] = np.array([r.two_n_z for r in trace])
    return out


def test_anticoncentration(anticoncentration_data):
    """2^N Z reaches <= 3 at t/ln N = tau* in [1.2, 1.8]; Eq-14 collapse
    cuts spread >= 5x."""
    taus = []
    curves = []
    for n, z in anticoncentration_data.items():
        t = np.arange(len(z))
        tc = threshold_crossing_time(t, z, 3.0)
        taus.append(tc / np.log(n))
        r = z - 2.0
        keep = (r > 0.05) & (r < 100.0)
        curves.append(Curve(n, t[keep], np.log(r[keep])))
    tau_star = float(np.mean(taus))
    fit = collapse_fit(curves, "shift_log")
    reached = all(np.min(z) <= 3.0 for z in anticoncentration_data.values())
    ok = reached and 1.2 <= tau_star <= 1.8 and fit.residual_ratio >= 5.0
    assert report("anticoncentration", ok,
                  f"threshold tau* = {tau_star:.3f} (per-N {np.round(taus, 3)}), "
                  f"collapse tau* = {fit.tau_star:.3f}, "
                  f"spread reduction {fit.residual_ratio:.1f}x")


def test_cmi_transition():
    """Noise-free Renyi-2 CMI: long-time plateau at log 2 (within 1% where the
    exact finite-size plateau allows it) and fitted shift tau* in [1.0, 1.5]."""
    sizes = (24, 30, 36, 48)
    finals = {}
    curves = []
    for n in sizes:
        cmi, _, _ = renyi2_cmi_trace(equal_tripartition(n), 20, policy=POLICY,
                                     substeps=SUBSTEPS, coupling=J_CAL)
        finals[n] = cmi[-1]
        t = np.arange(len(cmi))
        keep = (cmi > 1e-10) & (cmi < 0.55)
        curves.append(Curve(n, t[keep], np.log(cmi[keep])))
    fit = collapse_fit(curves, "shift_log")
    # exact annealed plateau: I2 -> log[2 (1+x^2)/(1+x)^2], x = 2^{-N/3};
    # at N=24 this sits 1.16% below log 2, so the 1% check applies from N=27 up
    within = {n: abs(v / LN2 - 1.0) for n, v in finals.items()}
    ok_plateau = all(within[n] <= 0.01 for n in sizes if n >= 27)
    plateau_exact = {n: np.log(2 * (1 + 4.0 ** (-n / 3)) / (1 + 2.0 ** (-n / 3)) ** 2)
                     for n in sizes}
    ok_exact = all(abs(finals[n] - plateau_exact[n]) < 0.002 for n in sizes)
    ok = ok_plateau and ok_exact and 1.0 <= fit.tau_star <= 1.5
    assert report("CMI transition", ok,
                  f"plateau/log2 deviations {({n: round(w, 4) for n, w in within.items()})}, "
                  f"tau* = {fit.tau_star:.3f}, spread reduction {fit.residual_ratio:.1f}x")


def test_noise_induced_transition_fixed():
    """lambda = 0.01 fixed: short-time chi exponential in N, then F-tracking."""
    sizes = (20, 30, 40)
    early = {}
    late_gap = {}
    for n in sizes:
        pts, _ = xeb_and_fidelity_trace(n, n, NoiseSpec(lam=0.01), XEB_POLICY,
                                        coupling=J_CAL, substeps=SUBSTEPS)
        early[n] = pts[1].chi
        late_gap[n] = abs(np.log(pts[n].ratio))
    # exponential-in-N bump: log chi(t=1) grows ~linearly with N
    g1 = np.log(early[30]) / np.log(early[20])
    g2 = np.log(early[40]) / np.log(early[30])
    bump = early[20] > 10 and early[30] > early[20] and early[40] > early[30]
    ratio_lin = 1.2 < g1 < 1.8 and 1.15 < g2 < 1.6
    tracking = all(v < 0.35 for v in late_gap.values())
    ok = bump and ratio_lin and tracking
    assert report("NIPT fixed noise", ok,
                  f"chi(t=1): {({n: f'{early[n]:.2e}' for n in sizes})}, "
                  f"|log F/chi| at t=N: {({n: round(late_gap[n], 3) for n in sizes})}")


def _xeb_point(args):
    n, u = args
    pts, _ = xeb_and_fidelity_trace(n, n, NoiseSpec(lam=u / n), XEB_POLICY,
                                    coupling=J_CAL, substeps=SUBSTEPS)
    return n, u, pts[n].ratio


@pytest.fixture(scope="module")
def xeb_scaled_data():
    from concurrent.futures import ProcessPoolExecutor

    sizes = (20, 30, 40)
    us = np.array([0.5, 0.58, 0.66, 0.74, 0.84, 0.95])
    grid = [(n, u) for n in sizes for u in us]
    ratios = {}
    with ProcessPoolExecutor(max_workers=2) as ex:
        for n, u, r in ex.map(_xeb_point, grid):
            ratios[(n, u)] = r
    return {n: (us, np.array([ratios[(n, u)] for u in us])) for n in sizes}


def test_noise_induced_transition_scaled(xeb_scaled_data):
    """Scaled noise at t=N: F/chi crossing at lambda*N = 0.84 +- 0.15 and
    collapse against (lambda - lambda*) N^2 cutting spread >= 5x."""
    curves = [Curve(n, us, r) for n, (us, r) in xeb_scaled_data.items()]
    crossing = find_crossing(curves)
    lam_curves = [Curve(n, us / n, r) for n, (us, r) in xeb_scaled_data.items()]
    fit = collapse_fit(lam_curves, "field_first_order", nu_fixed=0.5)
    ok_cross = crossing.found and abs(crossing.x_star - 0.84) <= 0.15
    ok_collapse = fit.residual_ratio >= 5.0
    ok = ok_cross and ok_collapse
    assert report("NIPT scaled noise", ok,
                  f"crossing lambda*N = "
                  f"{crossing.x_star if crossing.found else None} "
                  f"(pairs {[(int(a), int(b), round(x, 3)) for a, b, x in crossing.pair_crossings]}), "
                  f"collapse lambda*N = {fit.lambda_star * 30 if fit.lambda_star else None}, "
                  f"1/nu = 2 spread reduction {fit.residual_ratio:.1f}x")


def test_noisy_cmi():
    """lambda = 2.0/N on both replicas: late-time log CMI decays linearly,
    no size crossing."""
    sizes = (18, 24, 30)
    slopes = {}
    traces = {}
    for n in sizes:
        noise = NoiseSpec(lam=2.0 / n, replica_mask="both_replicas")
        cmi, _, _ = renyi2_cmi_trace(equal_tripartition(n), 12, noise=noise,
                                     policy=POLICY, substeps=SUBSTEPS,
                                     coupling=J_CAL)
        traces[n] = cmi
        window = np.arange(5, 12)
        good = window[cmi[window] > 1e-11]
        slope, _ = np.polyfit(good, np.log(cmi[good]), 1)
        slopes[n] = slope
    decaying = all(s < -0.1 for s in slopes.values())
    # no size crossing at late times: ordering of curves preserved
    late = range(5, 12)
    order_fixed = all(
        np.all(np.sign(traces[18][t] - traces[24][t])
               == np.sign(traces[18][late[0]] - traces[24][late[0]])) and
        np.all(np.sign(traces[24][t] - traces[30][t])
               == np.sign(traces[24][late[0]] - traces[30][late[0]]))
        for t in late)
    ok = decaying and order_fixed
    assert report("noisy CMI", ok,
                  f"late-time slopes {({n: round(s, 3) for n, s in slopes.items()})}, "
                  f"no crossing: {order_fixed}")


def _depth_trace(n):
    layout = left_encoding_layout(n, 0.25)
    amps, _ = mutual_purity_trace(layout, int(1.7 * n), 0.75, POLICY,
                                  coupling=J_CAL, substeps=SUBSTEPS)
    haar = haar_for_layout(layout, 0.75)
    return n, np.array([a.log2_abs for a in amps]) - haar.log2_value


@pytest.fixture(scope="module")
def purity_depth_data():
    from concurrent.futures import ProcessPoolExecutor

    sizes = (12, 16, 20, 24, 28)
    with ProcessPoolExecutor(max_workers=2) as ex:
        return dict(ex.map(_depth_trace, sizes))


def test_mutual_purity_depth(purity_depth_data):
    """Single-qubit left encoding, p=0.25, lambda=0.75: F_RE saturates at the
    Haar value within 5%; depth transition tau* in [0.65, 0.9]."""
    sat = {n: 2.0 ** y[-1] for n, y in purity_depth_data.items()}
    ok_sat = all(abs(v - 1.0) <= 0.05 for v in sat.values())
    ts, curves = [], []
    for n, y in purity_depth_data.items():
        t = np.arange(len(y))
        ts.append(threshold_crossing_time(t, y, 1.0, descending=True))
        keep = y > 0.02
        curves.append(Curve(n, t[keep], y[keep]))
    ns = np.array(sorted(purity_depth_data))
    slope = np.linalg.lstsq(np.vstack([ns, np.ones_like(ns)]).T,
                            np.array(ts), rcond=None)[0][0]
    fit = collapse_fit(curves, "shift_linear")
    tau = float(slope)
    ok = ok_sat and 0.65 <= tau <= 0.9
    assert report("mutual purity depth", ok,
                  f"saturation F/F_Haar {({n: round(v, 4) for n, v in sat.items()})}, "
                  f"threshold-slope tau* = {tau:.3f}, collapse tau* = {fit.tau_star:.3f}")


def _threshold_point(args):
    n, p = args
    layout = left_encoding_layout(n, p)
    amps, _ = mutual_purity_trace(layout, n, 0.05, POLICY,
                                  coupling=J_CAL, substeps=SUBSTEPS)
    return n, p, qec_bound_log2(amps[n].log2_abs, layout.log2_d_r,
                                layout.log2_d_e)


def test_mutual_purity_threshold():
    """lambda=0.05, t=N: recovery bound crosses O(1) at p* = 0.17 +- 0.03."""
    from concurrent.futures import ProcessPoolExecutor

    sizes = (20, 24, 28, 32)
    ps = np.arange(0.06, 0.32, 0.02)
    bounds = {}
    with ProcessPoolExecutor(max_workers=2) as ex:
        for n, p, b in ex.map(_threshold_point,
                              [(n, p) for n in sizes for p in ps]):
            bounds[(n, p)] = b
    stars = {}
    for n in sizes:
        lb = [bounds[(n, p)] for p in ps]
        stars[n] = threshold_crossing_time(ps, np.array(lb), 0.0,
                                           descending=False)
    vals = [v for v in stars.values() if v is not None]
    p_star = float(np.mean(vals))
    ok = len(vals) == len(sizes) and abs(p_star - 0.17) <= 0.03
    assert report("mutual purity threshold", ok,
                  f"bound=1 crossings {({n: round(v, 3) for n, v in stars.items()})}, "
                  f"mean p* = {p_star:.3f}")


def test_lightcone_purity():
    """Right-end encoding, left noise at lambda=3/4: collapse is better under
    (t - tau* N)/sqrt(N) than under (t - tau* N) alone."""
    sizes = (16, 24, 32)
    curves = []
    for n in sizes:
        layout = right_encoding_layout(n, 0.25)
        amps, _ = mutual_purity_trace(layout, int(1.8 * n), 0.75, POLICY,
                                      coupling=J_CAL, substeps=SUBSTEPS)
        haar = haar_for_layout(layout, 0.75)
        y = np.array([a.log2_abs for a in amps]) - haar.log2_value
        t = np.arange(len(y))
        keep = np.isfinite(y) & (y > -40)
        curves.append(Curve(n, t[keep], y[keep]))
    fit_sqrt = collapse_fit(curves, "sqrt_width")
    fit_lin = collapse_fit(curves, "shift_linear")
    ok = fit_sqrt.residual < fit_lin.residual
    assert report("light-cone purity", ok,
                  f"sqrt-width residual {fit_sqrt.residual:.4f} "
                  f"(tau*={fit_sqrt.tau_star:.3f}) vs linear "
                  f"{fit_lin.residual:.4f} (tau*={fit_lin.tau_star:.3f})")


def test_exact_orthogonality_sentinel():
    """lambda=0 mutual purity returns the -inf sentinel for all N, t tested."""
    all_zero = True
    for n in (6, 10, 16):
        layout = left_encoding_layout(n, 0.25)
        amps, _ = mutual_purity_trace(layout, 5, 0.0, POLICY,
                                      coupling=J_CAL, substeps=SUBSTEPS)
        all_zero &= all(a.is_zero for a in amps)
    assert report("exact orthogonality", all_zero,
                  "lambda=0 mutual purity is the -inf sentinel at every t")


def test_underflow_safety_large_run():
    """N=64, t=100: stored tensor entries stay O(1); log_magnitude carries
    the exponential scale."""
    n = 64
    h = build_bond_hamiltonian(J_CAL).matrix
    full, half = exp_gate(h, 0.5), exp_gate(h, 0.25)
    mps = product_mps(_uniform("zero4", n))
    pol = TruncationPolicy(32, 1e-12)
    for _ in range(100):
        trotter_step(mps, full, None, pol, bond_gate_half=half)
    maxes = mps.max_abs_entries()
    ok = all(1e-3 <= m <= 1e3 for m in maxes) and norm_log(mps) < -3
    assert report("underflow safety", ok,
                  f"max-entry range [{min(maxes):.2e}, {max(maxes):.2e}], "
                  f"log norm {norm_log(mps):.1f}")

"""Dense evolution and Brownian trajectory Monte Carlo oracles."""

import numpy as np
import pytest

from brrep.exact_oracle import (
    TrajectoryConfig,
    dense_evolve,
    dense_evolve_exact,
    dense_evolve_matched,
    dense_overlap,
    dense_product_state,
    full_effective_hamiltonian,
    sample_brownian_trajectories,
)
from brrep.mps import exp_gate
from brrep.observables import _uniform
from brrep.replica_algebra import NoiseSpec, boundary_state, build_bond_hamiltonian


def test_size_cap():
    with pytest.raises(ValueError):
        dense_product_state(_uniform("zero4", 7))
    with pytest.raises(ValueError):
        TrajectoryConfig(5, 0.01, 10, 100)


def test_id_invariant_under_gate_sequence():
    n = 4
    state = dense_evolve_matched(_uniform("id", n), 3, substeps=2)
    amp = dense_overlap(_uniform("id", n), state)
    assert abs(amp.log_abs) < 1e-12
    assert abs(amp.phase) < 1e-12


def test_collision_t0_is_one():
    n = 3
    state = dense_product_state(_uniform("zero4", n))
    amp = dense_overlap(_uniform("coll", n), state)
    assert amp.real_value() == pytest.approx(1.0, rel=1e-13)


def test_trotter_bias_second_order():
    # splitting bias shrinks ~4x when the sub-step is halved (O(dt^2))
    n, t = 3, 1.0
    exact = dense_evolve_exact(_uniform("zero4", n), t, coupling=1.0)
    z_exact = dense_overlap(_uniform("coll", n), exact).real_value()
    errs = []
    for m in (32, 64):
        state = dense_evolve_matched(_uniform("zero4", n), int(t), coupling=1.0,
                                     delta_t=1.0, substeps=m)
        z = dense_overlap(_uniform("coll", n), state).real_value()
        errs.append(abs(z - z_exact))
    ratio = errs[0] / errs[1]
    assert 2.8 < ratio < 5.5


def test_exact_exponential_matches_projector_limit():
    n = 3
    state = dense_evolve_exact(_uniform("zero4", n), 30.0, coupling=1.0)
    z = dense_overlap(_uniform("coll", n), state).real_value() * 2 ** n
    assert z == pytest.approx(2.0 / (1 + 2.0 ** -n), rel=1e-6)


def test_full_hamiltonian_ground_space():
    h = full_effective_hamiltonian(3, 1.0)
    for label in ("id", "swap"):
        v = dense_product_state(_uniform(label, 3)).amplitudes
        assert np.linalg.norm(h @ v) < 1e-10


class TestTrajectories:
    def test_zero_coupling_gives_unit_collision(self):
        cfg = TrajectoryConfig(3, 0.05, 8, 200, rng_seed=1, coupling=1e-30)
        mean, err = sample_brownian_trajectories(cfg, "collision")
        assert mean == pytest.approx(1.0, abs=1e-10)

    def test_xeb_at_zero_lambda_equals_collision(self):
        cfg = TrajectoryConfig(2, 0.05, 10, 300, rng_seed=3)
        c_mean, _ = sample_brownian_trajectories(cfg, "collision")
        x_mean, _ = sample_brownian_trajectories(cfg, "xeb", lam=0.0)
        assert x_mean == pytest.approx(c_mean, rel=1e-10)

    def test_fidelity_noiseless_is_one(self):
        cfg = TrajectoryConfig(2, 0.05, 10, 100, rng_seed=5)
        mean, err = sample_brownian_trajectories(cfg, "fidelity", lam=0.0)
        assert mean == pytest.approx(1.0, abs=1e-9)

    def test_reproducible_from_seed(self):
        cfg = TrajectoryConfig(2, 0.05, 6, 150, rng_seed=7)
        a = sample_brownian_trajectories(cfg, "collision")
        b = sample_brownian_trajectories(cfg, "collision")
        assert a == b
        # batch size must not change the estimate
        c = sample_brownian_trajectories(cfg, "collision", batch_size=37)
        assert c[0] == pytest.approx(a[0], rel=1e-12)

    def test_stderr_scaling(self):
        base = TrajectoryConfig(2, 0.05, 8, 400, rng_seed=11)
        dbl = TrajectoryConfig(2, 0.05, 8, 800, rng_seed=11)
        _, e1 = sample_brownian_trajectories(base, "collision")
        _, e2 = sample_brownian_trajectories(dbl, "collision")
        assert e2 / e1 == pytest.approx(1 / np.sqrt(2), rel=0.2)

    def test_weak_convergence_linear_in_dt(self):
        # MC means approach the exact continuum amplitude; the first-order
        # bias coefficient of this model is small enough that at these dt the
        # bias sits inside a linear envelope c*dt (and within MC resolution)
        n, t_phys = 2, 1.0
        exact = dense_evolve_exact(_uniform("zero4", n), t_phys, coupling=1.0)
        z_exact = dense_overlap(_uniform("coll", n), exact).real_value()
        envelope = 0.2
        for dt in (0.02, 0.01, 0.005):
            cfg = TrajectoryConfig(n, dt, int(round(t_phys / dt)), 3000, rng_seed=17)
            mean, err = sample_brownian_trajectories(cfg, "collision")
            bias = abs(mean - z_exact)
            assert bias <= max(3.5 * err, envelope * dt)

    def test_rejects_bad_config(self):
        with pytest.raises(ValueError):
            TrajectoryConfig(2, 0.05, 5, 0)
        with pytest.raises(ValueError):
            TrajectoryConfig(2, 0.05, 5, 99)
        cfg = TrajectoryConfig(2, 0.05, 5, 100)
        with pytest.raises(ValueError):
            sample_brownian_trajectories(cfg, "bogus")

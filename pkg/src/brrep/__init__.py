"""Circuit-averaged two-replica dynamics of local Brownian circuits in 1+1d."""

__version__ = "0.1.0"

from .replica_algebra import (
    ContourPauli,
    NoiseSpec,
    SiteState,
    BondOperator,
    boundary_state,
    build_bond_hamiltonian,
    build_noise_perturbation,
    contour_pauli,
    error_boundary_site,
)
from .mps import (
    LogAmplitude,
    ReplicaMPS,
    TruncationPolicy,
    load_mps,
    overlap,
    product_mps,
    save_mps,
    trotter_step,
)
from .observables import (
    DiagnosticsFit,
    EncodingLayout,
    Partition,
    collision_probability,
    equal_tripartition,
    haar_mutual_purity,
    mutual_purity,
    qec_bound,
    renyi2_cmi,
    renyi2_marginal_exponent,
    xeb_and_fidelity,
)
from .exact_oracle import (
    DenseReplicaState,
    TrajectoryConfig,
    dense_evolve,
    sample_brownian_trajectories,
)

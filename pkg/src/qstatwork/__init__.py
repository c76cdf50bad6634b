"""qstatwork: collective work statistics of quantum Otto engine ensembles.

Two mutually cross-checking computation paths for the average work that
N bosonic-indistinguishable, distinguishable, or fermionic Otto engines
outcouple into an external quantum system: closed-form perturbative
formulas (analytics) and exact numerical propagation with two-point
energy measurement (dynamics).
"""

from .protocols import (
    CouplingSchedule,
    EngineParams,
    ExternalSystem,
    GapDirection,
    Impulse,
    Sampled,
    SmoothPlateau,
    Statistics,
    g_of_t,
    harmonic_system,
    omega_of_t,
    phase_integral,
)
from .hilbert import (
    Composite,
    DenseOperator,
    DickeSector,
    FullProduct,
    HOTruncated,
    QuantumState,
    collective_spin_ops,
    engine_hamiltonian,
    instantaneous_eigenbasis,
    product_spin_ops,
    thermal_state,
)
from .analytics import (
    Amplitudes,
    MomentSet,
    WorkRecord,
    compute_amplitudes,
    correlator_dist,
    correlator_indist,
    enhancement,
    enhancement_region,
    general_probability,
    general_work,
    impulse_second_moment,
    impulse_work,
    moment_f,
    moment_h,
    moments,
    single_avg,
    verify_inequalities,
)
from .dynamics import (
    CycleResult,
    PropagatorConfig,
    adiabaticity_witness,
    apply_impulse,
    run_cycle,
    thermal_reset,
)
from .fermi import (
    FermiEnsemble,
    OccupationConfig,
    enumerate_configs,
    f_N,
    fermi_outcoupled_work,
    fermi_work,
)

__version__ = "0.1.0"

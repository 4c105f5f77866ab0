"""Finite-dimensional quantum measurement toolkit.

Operator kernel (``linops``), instruments and measuring processes
(``instruments``), noise-disturbance relations (``errdist``), grid and random
models (``models``), conservation-law limits (``conservation``),
projection-lattice logic (``qlogic``), and the batch CLI (``cli``).
"""

from .linops import (
    DensityState,
    InvalidOperatorError,
    InvalidStateError,
    NumericalConsistencyError,
    Observable,
    QmtkError,
    ShapeError,
    partial_trace,
    spectral_decompose,
    tensor,
    trace_distance,
)
from .instruments import (
    CpInstrument,
    DlInstrument,
    MeasuringProcess,
    Povm,
    RealSet,
    apply_instrument,
    born_probability,
    instrument_of_process,
    is_completely_positive,
    posterior_states,
    povm_of_instrument,
    process_of_instrument,
    projective_instrument,
    sequential_joint_distribution,
)
from .errdist import (
    ErrorReport,
    check_heisenberg_relation,
    check_universal_relation,
    moment_operator,
    noise_disturbance_operators,
    rms_disturbance,
    rms_noise,
)
from .models import (
    GridSpace,
    contractive_instrument,
    gaussian_wavefunction,
    random_cp_instrument,
    random_measuring_process,
    von_neumann_instrument,
)
from .conservation import (
    GateTarget,
    Implementation,
    cb_distance_lower_bound,
    covariant_unitary,
    gate_fidelity,
    gate_infidelity_bound,
    verify_way,
    way_lower_bound,
    yanase_bound,
    yanase_error_probability,
)
from .qlogic import (
    And,
    Atom,
    Equal,
    Implies,
    Not,
    Or,
    Projection,
    identical_correlation,
    identical_correlation_projection,
    is_simultaneously_measurable,
    joint_distribution,
    lattice_ops,
    min_invariant_subspace,
    proposition_probability,
    truth_value,
)

__version__ = "0.1.0"

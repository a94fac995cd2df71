"""Coupled linear port-Hamiltonian DAEs: assembly, validation, co-simulation.

The package builds partitioned models ``d/dt(Ex) = (J-R)Qx + Bu`` from
subsystems, validates their structure and solvability, solves them with
A-stable one-step methods, and co-simulates them with two dynamic-iteration
schemes: block-Jacobi waveform relaxation and a monotone operator-splitting
iteration whose weighted z-error is non-increasing by construction.
"""

from .coupling import Interconnection, PortCoupling, Subsystem, assemble_port_coupling, condense
from .errors import (
    DimensionMismatch,
    GridMismatch,
    InvalidConfig,
    InvalidParameter,
    IrregularPencil,
    ModelFileError,
    NonInvertibleE,
    NotPSD,
    PHSplitError,
    SingularCayley,
    SingularStepMatrix,
    SkewViolation,
    UnknownModel,
)
from .iteration import (
    IterationRecord,
    IterationReport,
    JacobiConfig,
    LMConfig,
    RateEstimate,
    contraction_factor,
    jacobi_error_predictor,
    jacobi_run,
    lm_run,
    monotonicity_check,
    optimal_lambda_ode_qi,
)
from .linalg import (
    Tolerance,
    cayley_apply,
    kernel_basis,
    numerical_rank,
    spectral_norm,
    structure_check,
    sym_sqrt,
)
from .models import ModelSpec, build_circuit_model, build_model, build_ode_model, default_spec
from .modelio import LoadedModel, load_model, model_to_dict, save_model
from .phdae import (
    JSplit,
    PHDae,
    ValidationReport,
    dissipation_residual,
    hamiltonian,
    output_map,
    pencil_regular,
    split_J,
    validate,
)
from .solver import SolverScheme, default_scheme, reference_solution, solve_linear_dae, solve_phdae
from .waveform import (
    Waveform,
    combine,
    eval_at,
    from_function,
    read_csv,
    restrict,
    sup_norm,
    weighted_l2_norm,
    write_csv,
)

__version__ = "0.1.0"

"""Almost commuting unitary matrices: bott and winding invariants, finite
representations of rational rotation algebras, and projection of nearly
theta-commuting pairs onto exact ones."""

from .errors import *  # noqa: F401,F403
from .generators import (
    RationalAngle,
    UnitaryPair,
    clock,
    conjugate,
    haar_pair,
    haar_unitary,
    perturb_pair,
    shift,
    tensor_lift,
    theta_pair,
    twist,
    voiculescu,
)
from .invariants import (
    BottReport,
    TraceKind,
    bott_pair,
    bott_power_identity,
    cut_for,
    defect,
    determinant_tau,
    exel_check,
    mult_commutator,
    scalar_commutator_check,
    winding,
)
from .matcore import LOG0, PRINCIPAL, BranchCut, EigenSystem, herm_eig, log_unitary, polar_unitary, unitary_eig
from .rotrep import IrrepSpec, RepDecomposition, decompose_exact_pair, irrep_at, matrix_units, spectral_projections
from .solver import (
    Certificate,
    Feasibility,
    SolveReport,
    SolverOptions,
    certify,
    commuting_projection,
    feasibility,
    project_to_theta_pairs,
)

__version__ = "0.1.0"

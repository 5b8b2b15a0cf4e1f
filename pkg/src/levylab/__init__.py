"""levylab: a numerical laboratory for transport-diffusion with nondegenerate
jump operators and singular divergence-free drifts on the periodic torus."""

from .grid import Grid, SampledField
from .kernels import LevyKernel, LevySymbol, apply_commutator, apply_operator, symbol_eval, tabulate_symbol
from .spaces import MorreyParams, NormProfile, besov_seminorm, holder_norm, morrey_norm, sobolev_norm
from .drifts import MollifierPair, VelocityField, make_divfree, mollify
from .solver import (
    SolverConfig,
    TrajectorySolution,
    ViscousProblem,
    backward_dual_solve,
    contraction_constant,
    heat_semigroup,
    imex_solve,
    imex_step,
    picard_solve,
    vanishing_viscosity,
)
from .verifiers import (
    Certificate,
    verify_besov_regularity,
    verify_max_principle,
    verify_positivity,
    verify_stroock_varopoulos,
    verify_symbol_bounds,
    verify_transfer,
)
from .molecules import (
    ConstantBundle,
    Molecule,
    MoleculeTrace,
    check_molecule,
    compute_constants,
    concentration_integrals,
    evolve_center,
    make_molecule,
    schedule_iterations,
    track_deformation,
)
from .probe import MoleculeFamily, duality_pairing, estimate_holder_exponent

__version__ = "0.1.0"

__all__ = [
    "Grid", "SampledField", "LevyKernel", "LevySymbol", "MorreyParams", "NormProfile",
    "MollifierPair", "VelocityField", "SolverConfig", "TrajectorySolution",
    "ViscousProblem", "Certificate", "ConstantBundle", "Molecule", "MoleculeTrace",
    "MoleculeFamily",
    "apply_commutator", "apply_operator", "symbol_eval", "tabulate_symbol",
    "besov_seminorm", "holder_norm", "morrey_norm", "sobolev_norm",
    "make_divfree", "mollify", "backward_dual_solve", "contraction_constant",
    "heat_semigroup", "imex_solve", "imex_step", "picard_solve", "vanishing_viscosity",
    "verify_besov_regularity", "verify_max_principle", "verify_positivity",
    "verify_stroock_varopoulos", "verify_symbol_bounds", "verify_transfer",
    "check_molecule", "compute_constants", "concentration_integrals", "evolve_center",
    "make_molecule", "schedule_iterations", "track_deformation",
    "duality_pairing", "estimate_holder_exponent",
]

"""Ehrenfest dynamics as a Lie-Poisson system: brackets on moments, Gaussian
moment flows, and a co-moving phase-space Wigner solver."""

from .core import (
    Covariance,
    Harmonic,
    Morse,
    PolynomialPotential,
    Quartic,
    SimulationAbort,
    Step,
    TabulatedPotential,
    make_symplectic_form,
    symplectic_eigenvalues,
    uncertainty_admissible,
)
from .brackets import (
    bracket_axiom_suite,
    canonical_bracket,
    casimir,
    casimir_det,
    covariance_bracket,
    moment_bracket,
)
from .gaussian import (
    ClosureSpec,
    MomentState,
    conservative_fourth_order_rhs,
    covariance_rhs,
    gaussian_energy,
    moment_rhs,
    nonconservative_fourth_order_rhs,
)
from .integrators import StepperConfig, TrajectoryRecord, integrate
from .wigner import (
    ComovingState,
    GroupElement,
    WignerGrid,
    comoving_step_rhs,
    gaussian_init,
    group_action,
    moments,
    moyal_permutation_check,
    moyal_rhs,
    step_potential_scenario,
)

__version__ = "0.1.0"

"""Numerical laboratory for the nonrelativistic limit of nonlinear Klein-Gordon
equations: spectral tools, exact normal-form algebra, solvers, dispersion fits
and a study driver."""
from .spectral import ComplexField, SpectralGrid, make_grid, random_field, sobolev_norm
from .formal import derive_order2, dispersion_coefficients, pin_bracket_sign
from .functionals import named_functional, numeric_bracket
from .thresholds import smallness_thresholds
from .dynamics import SimParams, SolverAbort, Trajectory, nlkg_evolve, normalized_evolve
from .dispersion import admissible_check, critical_radii, kernel_decay_fit, strichartz_probe

__version__ = "0.1.0"

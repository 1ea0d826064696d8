"""Pseudo-spectral Monte Carlo simulation of stochastic nonlinear Schroedinger
equations on the 1-D torus, driven by additive Q-Wiener noise."""

from .spectral import GridSpec, apply_semigroup, sobolev_norm, to_modes, to_nodes
from .noise import CovarianceSpec, NoiseStream, aggregate_increments, exact_convolution_increment, \
    sample_increment, trace_q
from .dynamics import Cubic, ExternalPotential, NonlocalInteraction, Zero, evaluate_F, flow_phi, \
    linearize_flow, potential_of
from .integrators import Scheme, StepContext, integrate, step, tangent_step, tangent_step_split
from .observables import exp_moment_estimate, mass, symplectic_form, trace_residual

__version__ = "0.1.0"

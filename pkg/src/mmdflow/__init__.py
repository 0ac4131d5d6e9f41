"""Wasserstein-2 geometry and MMD gradient flows on the real line via quantile functions."""
from .energy import (DISTANCE, SMOOTH, Kernel, f_nu, f_nu_subgrad_minnorm, interaction_energy,
                     kernel_eval, mmd_sq, potential_energy)
from .flow import (FlowTrajectory, closed_form_flow_to_dirac, flow_to_measure, jko_step,
                   subgradient_flow)
from .measure import (Measure1D, QuantileFn, cdf_eval, dirac, empirical, pushforward_from_quantile,
                      quantile, sample_quantile_grid, uniform, w2)
from .numerics import isotonic_project, quad_adaptive, rk4_step
from .restricted import (UniformParam, f1_potential, f2_energy, f2_gradient, landscape_grid,
                         particle_flow_smooth, s1_flow, s2_flow)

__version__ = "0.1.0"

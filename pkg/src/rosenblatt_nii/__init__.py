"""Second-order stochastic inclusions with non-instantaneous impulses driven
by a Rosenblatt process: noise synthesis, evolution operators, Clarke
selections, infinite-delay histories, a Picard solver and certificates."""

__version__ = "0.1.0"

from .noise import (HurstParameter, TraceClassCovariance, BrownianGrid, RosenblattPath, hurst_constants,
                    kernel_KH, kernel_dKdu, simulate_rosenblatt, simulate_q_rosenblatt)
from .evolution import (GalerkinSpace, GeneratorFamily, PropagatorPair, assemble_generator, propagate_G,
                        propagate_E, verify_kozak_axioms, estimate_M)
from .clarke import QuadraticMin, directional_derivative, subdifferential, minimal_norm_selection, growth_check
from .phase import (ExponentialWeight, ExponentialTail, ImpulseSchedule, PiecewisePath, phase_norm, segment,
                    fit_phase_constants, lemma21_check)
from .problem import ProblemSpec, parse_config, load_config, default_config
from .solver import deterministic_convolution, stochastic_convolution, theta_apply, picard_solve
from .certify import compute_M0, check_bihari_condition, lemma23_certificate, fit_coefficient_constants

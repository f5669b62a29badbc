"""Entire solutions built from three interacting pulsating fronts on Z^2.

The package is layered: ``lattice`` (kernels, reactions, integration),
``fronts`` (profile solvers), ``interaction`` (the rational interaction
functions and shift system), ``supersub`` (certified upper/lower pairs),
``entire`` (the long-time runs) and ``experiment``/``cli`` on top.
"""

from .errors import (AnchoringError, ArityError, CertificationError, ConfigError, ConvergenceError,
                     DimensionError, DivergenceError, DomainError, InfeasibleSpeedError, InsufficientRangeError,
                     LatticeEntireError, NonlinearityError, ParameterError, SpeedEstimationError)
from .lattice import (Boundary, Direction, Kernel, LatticeState, PeriodicNonlinearity, check_comparison,
                      default_kernel, gaussian_kernel, integrate, nearest_neighbor_kernel, residual_F)
from .fronts import (FrontProfile, critical_speed, critical_speed_info, measure_decay, solve_bistable_front,
                     solve_monostable_front)
from .interaction import (ShiftParams, coupling_F, coupling_F_tilde, phase_constants, q_eval, q_grad,
                          q_hessian_factors, qtilde_eval, qtilde_grad, shift_eval, validate_kappa)
from .supersub import SuperSubConfig, choose_L, gap_bound, residual_scan
from .entire import EntireSolutionReport, RunSettings, run_entire, run_theorem12, run_theorem13
from .config import ExperimentConfig

__version__ = "0.1.0"

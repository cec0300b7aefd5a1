"""Mutual-coupling-aware active-RIS MIMO: channel model, optimizer, experiments."""

from .errors import (InfeasibleError, InstabilityError, McrisError,
                     SingularMatrixError, TouchstoneError)
from .network import (ChannelPair, PortWaves, ReflectionState, ScatteringMatrix,
                      Terminations, build_gamma_a, conventional_channels,
                      element_reflection_exact, element_reflection_simplified,
                      full_model_b_r, passive_channel, ra_reflection,
                      reduced_channels, solve_network_direct, spectral_radius,
                      spectral_radius_bound)
from .synthesis import (CouplingModel, Scenario, array_response,
                        build_coupling_matrix, path_loss_db, rician_block,
                        synthesize)
from .touchstone import TouchstoneData, load_touchstone, save_touchstone
from .metrics import (NoisePowers, achievable_rate, mse_matrix, noise_covariance,
                      optimal_detector, optimal_weight, rate_mse_identity,
                      ris_amplification_power, wmmse_objective)
from .optimizer import (AoConfig, OptimizerState, SubproblemCoefficients,
                        amplitude_bcd_step, amplitude_coefficients, ao_loop,
                        optimize_baseline, phase_quadratic_model, phase_step,
                        solve_beamforming)
from .experiment import (ResultRow, SweepSpec, apply_axis, emit_results,
                         parse_results, run_sweep)

__version__ = "0.1.0"

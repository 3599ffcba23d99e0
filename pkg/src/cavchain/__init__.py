"""cavchain: mixed human/automated/connected vehicle chains.

Simulation of delayed car-following dynamics, energy evaluation, and
frequency-domain plant/string-stability analysis with closed-form stability
charts for connectivity-based traffic control.
"""

from .model import (AccelLimits, ChainConfig, ConfigError, ControllerSpec,
                    EquilibriumState, HumanGains, RangePolicy, VehicleSpec,
                    acc_chain, atc_chain, hv_chain, kappa_at,
                    range_policy_eval, range_policy_invert, ring_hv_chain,
                    speed_policy, tc_chain)
from .controllers import (acc_accel, atc_accel, cc_accel, ccc_accel,
                          ctc_accel, hdm_accel, saturate, tc_accel)
from .simulate import (CollisionError, LeadProfile, SimSettings, Trajectory,
                       build_equilibrium, perturbation_response, simulate)
from .energy import EnergyParams, cumulative_energy, energy_sweep, resistance
from .freqdomain import (HeadToTailConfig, HumanLink, closed_form_tf,
                         config_acc, config_atc, config_from_chain,
                         config_hv_chain, head_to_tail, linearize,
                         link_tf_generic, ring_char)
from .stability import (build_chart, find_roots, p_omega, p_zero,
                        plant_verdict, string_verdict)
from .kernel import HAVE_COMPILED, default_backend

__version__ = "0.1.0"

"""Seedable multi-cell network slicing simulator with learning agents,
an adversarial jammer, and game-theoretic policy ensembles."""

from .radio import (RadioParams, FadingField, Geometry, jakes_rho,
                    evolve_fading, path_loss, channel_rate, channel_rate_table,
                    bs_user_power, jam_user_power, listen_powers, peak_rates,
                    coverage_mask)
from .traffic import (Request, RequestStatus, RateHistory, BaseStation,
                      ArrivalProcess, ConstraintViolation, draw_request,
                      validate_action, move_users, assign_arrivals)
from .agents import (ObsLayout, BsObservation, build_observation,
                     pointer_decode, max_rate_action, random_action,
                     fifo_action, hard_slicing_action, ExplorationSchedule,
                     PointerActor, Critic, critic_td, ReplayBuffer,
                     TrainerConfig, SliceTrainer)
from .jammer import (JammerConfig, JammerAgent, LastInterferenceJammer,
                     MaxRateJammer, BetaEstimator, interpolate_target,
                     jam_reward, optimize_location)
from .game import (UtilityHistory, MixedStrategy, solve_zero_sum, correlation,
                   dual_reward, classify_victim, ListenDiffClassifier,
                   NashEnsemble, UniformEnsemble)
from .harness import (Scenario, EnsembleConfig, SliceEnv, run_experiment,
                      compare_table, ring_layout, moving_average,
                      SLICING_REFERENCE, ENSEMBLE_REFERENCE)

__version__ = "0.1.0"

"""Delay-aware multi-agent reinforcement learning for CACC vehicle platoons."""

from .delay import (ActionBuffer, AugmentedObservation, commit_and_pop, delay_steps,
                    init_buffer, planned_sequence)
from .dynamics import (DynamicsConfig, VehicleState, check_constraints,
                       ideal_acceleration, ovm_velocity, step_vehicle)
from .env import CaccEnv, PlatoonState, ScenarioConfig, build_features, v_star
from .errors import (CheckpointError, ConfigError, ContractError, PlatoonError,
                     ValidationError)
from .evaluation import EvalReport, evaluate, evaluate_actors, emit_trajectory
from .network import AttentionActor, Critic, load_checkpoint, save_checkpoint
from .reward import RewardWeights, compute_reward
from .stability import ActionTriple, FilterDecision, filter_action
from .trainer import PlatoonTrainer, ReplayBuffer, TrainConfig, Transition

__version__ = "0.1.0"

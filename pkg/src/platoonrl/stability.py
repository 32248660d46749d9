"""Model-based action filter guarding the learned policy.

The policy emits a triple (alpha, beta, u_hat): two gains for the
optimal-velocity controller and a raw acceleration.  The filter scores the
controller's acceleration against the raw one by simulating a single
dynamics step each and keeps whichever scores the higher one-step reward,
with ties going to the controller.
"""

import math
from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicsConfig, VehicleState, ideal_acceleration, step_vehicle
from .errors import ValidationError
from .reward import RewardWeights, compute_reward

PICK_IDEAL = "ideal"
PICK_RAW = "raw"


@dataclass(frozen=True)
class ActionTriple:
    """Headway gain, relative-speed gain and raw acceleration command."""

    alpha: float
    beta: float
    u_hat: float

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.u_hat], dtype=np.float64)

    @classmethod
    def from_array(cls, a) -> "ActionTriple":
        return cls(float(a[0]), float(a[1]), float(a[2]))

    def is_finite(self) -> bool:
        return math.isfinite(self.alpha) and math.isfinite(self.beta) and math.isfinite(self.u_hat)


@dataclass(frozen=True)
class FilterDecision:
    """Outcome of one filter evaluation, both candidates and their scores."""

    chosen_u: float
    candidate_ideal: float
    candidate_raw: float
    reward_ideal: float
    reward_raw: float
    picked: str


def one_step_reward(u_cmd: float, state: VehicleState, v_pred: float, u_pred: float,
                    h_star: float, v_star_next: float, w: RewardWeights,
                    cfg: DynamicsConfig) -> float:
    """Reward obtained after simulating one step under the candidate command."""
    nxt = step_vehicle(state, v_pred, u_pred, u_cmd, cfg)
    return compute_reward(nxt.h, nxt.v, nxt.u, h_star, v_star_next, w)


def filter_action(action: ActionTriple, state: VehicleState, v_pred: float, u_pred: float,
                  h_star: float, v_star_next: float, w: RewardWeights,
                  cfg: DynamicsConfig) -> FilterDecision:
    """Pick the better of the controller and raw accelerations by one-step reward.

    Both candidates are scored through the identical simulate-and-reward path;
    the controller candidate wins ties.  The returned acceleration always lies
    within the actuator limits.
    """
    if not action.is_finite():
        raise ValidationError(f"non-finite action triple {action}")
    u_ideal = ideal_acceleration(action.alpha, action.beta, state, v_pred, cfg)
    r_ideal = one_step_reward(u_ideal, state, v_pred, u_pred, h_star, v_star_next, w, cfg)
    r_raw = one_step_reward(action.u_hat, state, v_pred, u_pred, h_star, v_star_next, w, cfg)
    if r_ideal >= r_raw:
        picked, chosen = PICK_IDEAL, u_ideal
    else:
        picked, chosen = PICK_RAW, action.u_hat
    return FilterDecision(chosen_u=chosen, candidate_ideal=u_ideal, candidate_raw=action.u_hat,
                          reward_ideal=r_ideal, reward_raw=r_raw, picked=picked)

"""Per-vehicle step reward: weighted squared deviations from the target."""

from dataclasses import dataclass

from .errors import ValidationError


@dataclass(frozen=True)
class RewardWeights:
    """Weights for headway, speed and acceleration terms plus the 1/C scale."""

    w1: float = -1.0
    w2: float = -1.0
    w3: float = -0.2
    scale: float = 15.0

    def validate(self) -> None:
        if self.scale == 0:
            raise ValidationError("reward scale must be nonzero")


def compute_reward(h: float, v: float, u: float, h_star: float, v_star: float,
                   w: RewardWeights) -> float:
    """Quadratic penalty on headway error, speed error and acceleration.

    With the default negative weights the reward is always <= 0 and reaches 0
    exactly at (h_star, v_star, 0).
    """
    dh = h - h_star
    dv = v - v_star
    return (w.w1 * dh * dh + w.w2 * dv * dv + w.w3 * u * u) / w.scale

"""Per-agent action FIFOs realizing a fixed decision-to-execution delay.

An action selected at step t enters the tail of the buffer and leaves the
head k steps later, when it is actually executed.  The buffer contents are
the agent's planned action sequence and are appended to its observation,
which restores the Markov property under the delay.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .stability import ActionTriple


@dataclass(frozen=True)
class ActionBuffer:
    """Immutable FIFO of exactly ``k`` planned actions (oldest first)."""

    queue: tuple
    k: int


@dataclass(frozen=True)
class AugmentedObservation:
    """Environment features plus the planned action sequence of one agent."""

    o_obs: np.ndarray   # (5,)
    o_act: np.ndarray   # (k, 3), rows (alpha, beta, u_hat), oldest first

    def flat(self) -> np.ndarray:
        """Concatenated feature vector of dimension 5 + 3k."""
        return np.concatenate([self.o_obs, self.o_act.ravel()])


def init_buffer(k: int, fill: ActionTriple) -> ActionBuffer:
    """Buffer of length k with every slot holding ``fill``."""
    if k < 0:
        raise ValidationError(f"delay steps must be >= 0, got {k}")
    return ActionBuffer(queue=(fill,) * k, k=k)


def commit_and_pop(buf: ActionBuffer, new_action: ActionTriple):
    """Commit a new action and pop the one whose delay has elapsed.

    Returns ``(executed, buf2)``: the head of the queue (committed k steps
    ago) and the shifted buffer with ``new_action`` appended.  With k = 0 the
    buffer is a pass-through.
    """
    if buf.k == 0:
        return new_action, buf
    executed = buf.queue[0]
    return executed, ActionBuffer(queue=buf.queue[1:] + (new_action,), k=buf.k)


def planned_sequence(buf: ActionBuffer) -> tuple:
    """Queue contents oldest first; these are the next k actions to execute."""
    return buf.queue


def planned_array(buf: ActionBuffer) -> np.ndarray:
    """Planned sequence as a (k, 3) float array."""
    if buf.k == 0:
        return np.zeros((0, 3), dtype=np.float64)
    return np.array([[a.alpha, a.beta, a.u_hat] for a in buf.queue], dtype=np.float64)


def delay_steps(tau: float, dt: float) -> int:
    """Number of whole steps in a delay of ``tau`` seconds: floor(tau / dt).

    A small epsilon guards the floor against ratios like 0.3/0.1 landing just
    below an integer in floating point.
    """
    if tau < 0:
        raise ValidationError(f"delay must be >= 0, got {tau}")
    if dt <= 0:
        raise ValidationError(f"dt must be positive, got {dt}")
    return int(math.floor(tau / dt + 1e-9))

"""Multi-agent CACC platoon episode engine.

A platoon of identical vehicles follows a virtual reference vehicle: the
platoon leader measures its headway to the reference, every member to its
predecessor.  Two scenarios are provided: ``catchup`` starts the leader with
an enlarged gap it has to close, ``slowdown`` starts everyone too fast while
the reference speed ramps down.  Actions pass through per-agent delay
buffers and the stability filter before they move the vehicles.
"""

from dataclasses import dataclass

import numpy as np

from .delay import (AugmentedObservation, commit_and_pop, delay_steps, init_buffer,
                    planned_array)
from .dynamics import DynamicsConfig, VehicleState, ovm_velocity, step_vehicle
from .errors import ContractError, ValidationError
from .reward import RewardWeights, compute_reward
from .stability import ActionTriple, PICK_IDEAL, filter_action

CATCHUP = "catchup"
SLOWDOWN = "slowdown"

# Neutral fill for freshly reset action buffers: moderate controller gains and
# no raw acceleration, so the first k executed actions are stabilizing.
NEUTRAL_ACTION = ActionTriple(alpha=0.5, beta=0.5, u_hat=0.0)


@dataclass(frozen=True)
class ScenarioConfig:
    """Episode setup: scenario kind, platoon size, delay and reference speed."""

    kind: str
    platoon_size: int
    episode_steps: int = 600
    h_star: float = 20.0             # desired headway, OVM equilibrium for v_star_final
    delay_seconds: float = 0.5
    a_range: tuple = (3.0, 4.0)      # catchup leader headway multiplier
    b_range: tuple = (1.5, 2.5)      # slowdown initial speed multiplier
    v_star_final: float = 15.0       # reference speed after the ramp / in catchup
    slowdown_v_start: float = 30.0   # reference speed at t=0 in slowdown
    slowdown_ramp_seconds: float = 30.0
    collision_penalty: float = -1000.0  # added per agent (divided by reward scale)
    init_seed: int = 0

    def validate(self) -> None:
        if self.kind not in (CATCHUP, SLOWDOWN):
            raise ValidationError(f"unknown scenario kind {self.kind!r}")
        if self.platoon_size < 2:
            raise ValidationError(f"platoon_size must be >= 2, got {self.platoon_size}")
        if self.episode_steps < 1:
            raise ValidationError(f"episode_steps must be >= 1, got {self.episode_steps}")
        if not (len(self.a_range) == 2 and self.a_range[0] <= self.a_range[1]):
            raise ValidationError(f"a_range must be a non-empty interval, got {self.a_range}")
        if not (len(self.b_range) == 2 and self.b_range[0] <= self.b_range[1]):
            raise ValidationError(f"b_range must be a non-empty interval, got {self.b_range}")
        if self.h_star <= 0:
            raise ValidationError(f"h_star must be positive, got {self.h_star}")
        if self.delay_seconds < 0:
            raise ValidationError(f"delay_seconds must be >= 0, got {self.delay_seconds}")


@dataclass
class PlatoonState:
    """All vehicle states at one time step plus episode flags."""

    vehicles: list          # index 0 is the platoon leader
    time_step: int = 0
    done: bool = False
    collision: bool = False


def v_star(t: float, cfg: ScenarioConfig) -> float:
    """Reference speed at time t (seconds)."""
    if cfg.kind == CATCHUP:
        return cfg.v_star_final
    ramp = cfg.slowdown_ramp_seconds
    if t >= ramp:
        return cfg.v_star_final
    frac = t / ramp
    return cfg.slowdown_v_start + (cfg.v_star_final - cfg.slowdown_v_start) * frac


def build_features(i: int, state: PlatoonState, cfg: ScenarioConfig,
                   dyn: DynamicsConfig) -> np.ndarray:
    """Five observation features for vehicle i.

    [normalized speed, speed difference to predecessor, optimal-velocity gap,
    normalized predicted headway error, normalized acceleration].  The leader
    uses the reference vehicle as its predecessor.
    """
    veh = state.vehicles[i]
    if i == 0:
        v_pred = v_star(state.time_step * dyn.dt, cfg)
    else:
        v_pred = state.vehicles[i - 1].v
    v_diff = v_pred - veh.v
    v_h = ovm_velocity(veh.h, dyn) - veh.v
    h_err = (veh.h + v_diff * dyn.dt - cfg.h_star) / cfg.h_star
    return np.array([veh.v / dyn.v_max, v_diff, v_h, h_err, veh.u / dyn.u_max],
                    dtype=np.float64)


class CaccEnv:
    """Stateful episode engine tying dynamics, delay buffers and filter together.

    One instance is single-writer; run independent instances for parallel
    rollouts.  ``reset(seed)`` fully determines the initial state and, with
    the committed action sequence, the whole trajectory.
    """

    def __init__(self, scenario: ScenarioConfig, dyn: DynamicsConfig | None = None,
                 weights: RewardWeights | None = None):
        self.scenario = scenario
        self.dyn = dyn if dyn is not None else DynamicsConfig()
        self.weights = weights if weights is not None else RewardWeights()
        scenario.validate()
        self.dyn.validate()
        self.weights.validate()
        self.n = scenario.platoon_size
        self.k = delay_steps(scenario.delay_seconds, self.dyn.dt)
        self.state: PlatoonState | None = None
        self.buffers = None

    # -- episode control ---------------------------------------------------

    def reset(self, seed: int):
        """Start a new episode; returns the per-agent augmented observations."""
        rng = np.random.default_rng(seed)
        sc, dyn = self.scenario, self.dyn
        vehicles = []
        if sc.kind == CATCHUP:
            v0 = sc.v_star_final
            a = rng.uniform(sc.a_range[0], sc.a_range[1])
            for i in range(self.n):
                h0 = a * sc.h_star if i == 0 else sc.h_star
                vehicles.append(VehicleState(h=h0, v=v0, u=0.0))
        else:
            b = rng.uniform(sc.b_range[0], sc.b_range[1])
            v0 = min(max(b * sc.v_star_final, 0.0), dyn.v_max)
            for i in range(self.n):
                vehicles.append(VehicleState(h=sc.h_star, v=v0, u=0.0))
        self.state = PlatoonState(vehicles=vehicles, time_step=0, done=False, collision=False)
        self.buffers = [init_buffer(self.k, NEUTRAL_ACTION) for _ in range(self.n)]
        return self.observations()

    def step(self, actions):
        """Commit one action per agent and advance the platoon by dt.

        Returns ``(observations, rewards, done, info)``.  The committed
        actions execute k steps later; what moves the vehicles now are the
        actions committed k steps ago, after the stability filter has had its
        say.  Raises ContractError on a finished episode.
        """
        if self.state is None:
            raise ContractError("reset() must be called before step()")
        if self.state.done:
            raise ContractError("episode is finished; call reset()")
        if len(actions) != self.n:
            raise ValidationError(f"expected {self.n} actions, got {len(actions)}")

        sc, dyn, w = self.scenario, self.dyn, self.weights
        t = self.state.time_step
        vs_now = v_star(t * dyn.dt, sc)
        vs_next = v_star((t + 1) * dyn.dt, sc)
        a_ref = (vs_next - vs_now) / dyn.dt   # reference vehicle acceleration this step

        executed = []
        for i, act in enumerate(actions):
            if not isinstance(act, ActionTriple):
                act = ActionTriple.from_array(act)
            ex, self.buffers[i] = commit_and_pop(self.buffers[i], act)
            executed.append(ex)

        # Front-to-back sweep: each vehicle sees its predecessor's start-of-step
        # velocity and the acceleration the predecessor executes this step.
        prev = self.state.vehicles
        new_vehicles = []
        decisions = []
        rewards = np.zeros(self.n)
        v_pred, u_pred = vs_now, a_ref
        for i in range(self.n):
            dec = filter_action(executed[i], prev[i], v_pred, u_pred,
                                sc.h_star, vs_next, w, dyn)
            nxt = step_vehicle(prev[i], v_pred, u_pred, dec.chosen_u, dyn)
            rewards[i] = compute_reward(nxt.h, nxt.v, nxt.u, sc.h_star, vs_next, w)
            decisions.append(dec)
            new_vehicles.append(nxt)
            v_pred, u_pred = prev[i].v, nxt.u

        collision = any(veh.h < dyn.h_min for veh in new_vehicles)
        if collision:
            rewards += sc.collision_penalty / w.scale
        done = collision or (t + 1 >= sc.episode_steps)

        self.state = PlatoonState(vehicles=new_vehicles, time_step=t + 1,
                                  done=done, collision=collision)
        info = {
            "collision": collision,
            "executed": executed,
            "decisions": decisions,
            "ideal_picked": [d.picked == PICK_IDEAL for d in decisions],
            "v_star": vs_next,
        }
        return self.observations(), rewards, done, info

    # -- observation building ----------------------------------------------

    def observations(self):
        """Augmented observation (features + planned actions) per agent."""
        return [AugmentedObservation(o_obs=build_features(i, self.state, self.scenario, self.dyn),
                                     o_act=planned_array(self.buffers[i]))
                for i in range(self.n)]

    @property
    def obs_dim(self) -> int:
        """Flattened per-agent observation dimension: 5 + 3k."""
        return 5 + 3 * self.k

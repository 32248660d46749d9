"""Centralized-training decentralized-execution loop for the platoon.

Each agent owns an attention actor working on its local augmented
observation and a centralized critic that sees every agent's observation and
action.  Training follows the usual deterministic policy-gradient recipe:
TD-error critic updates against soft-updated target networks, actor updates
along the critic's action gradient, Gaussian exploration noise on the
squashed actions, one shared replay buffer.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicsConfig
from .env import CaccEnv, ScenarioConfig
from .errors import ContractError, ValidationError
from .network import AttentionActor, Critic, save_checkpoint
from .reward import RewardWeights

OBS_DIM = 5  # raw per-vehicle features


@dataclass
class TrainConfig:
    """Hyperparameters of one training run."""

    episodes: int | None = None        # stop after this many episodes ...
    total_steps: int | None = 50_000   # ... or after this many environment steps
    batch_size: int = 128
    gamma: float = 0.99
    actor_lr: float = 5.0e-4
    critic_lr: float = 2.5e-4
    soft_update_rate: float = 0.01     # kappa
    replay_capacity: int = 200_000
    warmup_steps: int = 2_000
    update_every: int = 1
    noise_start: float = 0.10          # sigma as a fraction of each action range
    noise_end: float = 0.01
    noise_decay_frac: float = 0.5      # portion of the budget over which sigma decays
    seeds: tuple = (0,)
    actor_sees_planned: bool = True    # ablation switch: hide the planned actions
    dtype: str = "float64"
    d_model: int = 64
    n_heads: int = 2
    critic_hidden: tuple = (256, 256)

    def validate(self) -> None:
        if self.episodes is None and self.total_steps is None:
            raise ValidationError("one of episodes/total_steps must be set")
        if not (0.0 <= self.gamma < 1.0):
            raise ValidationError(f"gamma must be in [0, 1), got {self.gamma}")
        if not (0.0 < self.soft_update_rate <= 1.0):
            raise ValidationError(f"soft_update_rate must be in (0, 1], got {self.soft_update_rate}")
        if self.batch_size < 1:
            raise ValidationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.replay_capacity < self.batch_size:
            raise ValidationError("replay_capacity must be >= batch_size")
        if self.update_every < 1:
            raise ValidationError(f"update_every must be >= 1, got {self.update_every}")
        if not len(self.seeds):
            raise ValidationError("seeds must not be empty")


@dataclass
class Transition:
    """One replay record: global observation, all actions and rewards, successor."""

    x: np.ndarray         # concatenated augmented observations, (n_agents * (5 + 3k),)
    actions: np.ndarray   # committed pre-filter triples, (n_agents, 3)
    rewards: np.ndarray   # per-agent rewards, (n_agents,)
    x_next: np.ndarray
    done: bool


@dataclass
class EpisodeLog:
    episode: int
    steps: int
    collision: bool
    filter_override_rate: float   # fraction of decisions where the controller won
    returns: np.ndarray           # per-agent undiscounted episode return


@dataclass
class TrainResult:
    episodes: list
    total_steps: int


class ReplayBuffer:
    """Fixed-capacity ring of transitions stored as flat numpy arrays."""

    def __init__(self, capacity: int, x_dim: int, n_agents: int, dtype=np.float64):
        self.capacity = capacity
        self.x = np.zeros((capacity, x_dim), dtype=dtype)
        self.a = np.zeros((capacity, n_agents, 3), dtype=dtype)
        self.r = np.zeros((capacity, n_agents), dtype=dtype)
        self.x2 = np.zeros((capacity, x_dim), dtype=dtype)
        self.done = np.zeros(capacity, dtype=dtype)
        self.idx = 0
        self.size = 0

    def add(self, t: Transition) -> None:
        if not np.isfinite(t.rewards).all():
            raise ValidationError(f"non-finite rewards in transition: {t.rewards}")
        i = self.idx
        self.x[i] = t.x
        self.a[i] = t.actions
        self.r[i] = t.rewards
        self.x2[i] = t.x_next
        self.done[i] = 1.0 if t.done else 0.0
        self.idx = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng, batch_size: int):
        if self.size < batch_size:
            raise ContractError(f"replay holds {self.size} < batch size {batch_size}")
        idx = rng.integers(0, self.size, size=batch_size)
        return (self.x[idx], self.a[idx], self.r[idx], self.x2[idx], self.done[idx])


class Adam:
    """Adaptive moment estimation on a named parameter dict, in place."""

    def __init__(self, params: dict, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        scale = self.lr / c1
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * np.square(g)
            denom = np.sqrt(v / c2)
            denom += self.eps
            params[k] -= scale * m / denom


def soft_update(online_params: dict, target_params: dict, kappa: float) -> None:
    """target <- kappa * online + (1 - kappa) * target, elementwise in place."""
    for k, w in online_params.items():
        t = target_params[k]
        t *= 1.0 - kappa
        t += kappa * w


def actor_input_slices(x, i: int, n_agents: int, slice_dim: int, include_planned: bool):
    """Per-agent actor inputs cut out of the concatenated global observation.

    ``x`` is (B, n_agents * slice_dim); each agent's slice starts with its 5
    raw features followed by its flattened planned actions.  Neighbors expose
    only their raw features.
    """
    base = i * slice_dim
    own = x[:, base:base + slice_dim] if include_planned else x[:, base:base + OBS_DIM]
    pred = x[:, (i - 1) * slice_dim:(i - 1) * slice_dim + OBS_DIM] if i > 0 else None
    foll = x[:, (i + 1) * slice_dim:(i + 1) * slice_dim + OBS_DIM] if i < n_agents - 1 else None
    return own, pred, foll


def policy_gradient(actor, critic, x, a_flat, agent_index: int, x_dim: int,
                    actor_inputs) -> tuple:
    """Ascent gradient of the mean critic value w.r.t. the actor parameters.

    The agent's action inside the critic input is replaced by its current
    policy output; everything else comes from the batch.  Works with any pair
    of objects exposing the forward/backward protocol of AttentionActor and
    Critic, which keeps the chain rule testable on hand-built toys.
    """
    B = x.shape[0]
    own, pred, foll = actor_inputs
    a_i, acache = actor.forward(own, pred, foll, want_cache=True)
    a_all = a_flat.copy()
    a_all[:, 3 * agent_index:3 * agent_index + 3] = a_i
    _, ccache = critic.forward(np.concatenate([x, a_all], axis=1), want_cache=True)
    dx = critic.input_gradients(ccache, np.full(B, 1.0 / B))
    da = dx[:, x_dim + 3 * agent_index:x_dim + 3 * agent_index + 3]
    grads = actor.backward(acache, da)
    return grads


class PlatoonTrainer:
    """Owns the environment, all per-agent networks and the training loop."""

    def __init__(self, scenario: ScenarioConfig, cfg: TrainConfig, seed: int,
                 dyn: DynamicsConfig | None = None, weights: RewardWeights | None = None):
        cfg.validate()
        self.cfg = cfg
        self.seed = seed
        self.env = CaccEnv(scenario, dyn, weights)
        self.n = self.env.n
        self.k = self.env.k
        self.slice_dim = OBS_DIM + 3 * self.k
        self.x_dim = self.n * self.slice_dim
        self.dtype = np.dtype(cfg.dtype)
        actor_in = self.slice_dim if cfg.actor_sees_planned else OBS_DIM
        critic_in = self.x_dim + 3 * self.n
        u_max = self.env.dyn.u_max

        ss = np.random.SeedSequence(seed)
        init_ss, env_ss, noise_ss, sample_ss = ss.spawn(4)
        init_rng = np.random.default_rng(init_ss)
        self.actors = []
        self.critics = []
        for i in range(self.n):
            a_seed = int(init_rng.integers(2 ** 31))
            c_seed = int(init_rng.integers(2 ** 31))
            self.actors.append(AttentionActor(actor_in, i > 0, i < self.n - 1,
                                              d_model=cfg.d_model, n_heads=cfg.n_heads,
                                              u_max=u_max, seed=a_seed, dtype=self.dtype))
            self.critics.append(Critic(critic_in, hidden=cfg.critic_hidden,
                                       seed=c_seed, dtype=self.dtype))
        self.target_actors = [a.copy() for a in self.actors]
        self.target_critics = [c.copy() for c in self.critics]
        self.adam_actor = [Adam(a.params, cfg.actor_lr) for a in self.actors]
        self.adam_critic = [Adam(c.params, cfg.critic_lr) for c in self.critics]
        self.env_rng = np.random.default_rng(env_ss)
        self.noise_rng = np.random.default_rng(noise_ss)
        self.sample_rng = np.random.default_rng(sample_ss)
        self.replay = ReplayBuffer(cfg.replay_capacity, self.x_dim, self.n, self.dtype)
        self.global_step = 0
        # sigma is expressed as a fraction of each coordinate's range
        self.noise_widths = np.array([1.0, 1.0, 2.0 * u_max])

    # -- pieces ---------------------------------------------------------------

    def obs_to_x(self, obs_list) -> np.ndarray:
        return np.concatenate([o.flat() for o in obs_list]).astype(self.dtype)

    def actor_inputs(self, x, i: int):
        return actor_input_slices(x, i, self.n, self.slice_dim, self.cfg.actor_sees_planned)

    def noise_sigma(self, step: int) -> float:
        cfg = self.cfg
        budget = cfg.total_steps
        if budget is None:
            budget = cfg.episodes * self.env.scenario.episode_steps
        decay_steps = cfg.noise_decay_frac * budget
        if decay_steps <= 0:
            return cfg.noise_end
        frac = min(1.0, step / decay_steps)
        return cfg.noise_start + (cfg.noise_end - cfg.noise_start) * frac

    def select_action(self, i: int, x_row: np.ndarray, sigma_frac: float) -> np.ndarray:
        """Noisy policy action for agent i, clipped back into the valid box."""
        own, pred, foll = self.actor_inputs(x_row[None, :], i)
        a = self.actors[i].forward(own, pred, foll)[0].astype(np.float64)
        if sigma_frac > 0:
            a = a + self.noise_rng.standard_normal(3) * (sigma_frac * self.noise_widths)
            u_max = self.env.dyn.u_max
            a[0] = min(max(a[0], 0.0), self.actors[i].alpha_max)
            a[1] = min(max(a[1], 0.0), self.actors[i].beta_max)
            a[2] = min(max(a[2], -u_max), u_max)
        return a

    def target_next_q_input(self, batch) -> np.ndarray:
        """Next-state critic input with every agent acting via its target actor."""
        x2 = batch[3]
        next_actions = [self.target_actors[j].forward(*self.actor_inputs(x2, j))
                        for j in range(self.n)]
        return np.concatenate([x2] + next_actions, axis=1)

    def compute_td_targets(self, i: int, batch, next_q_input=None) -> np.ndarray:
        """Bootstrap targets from the target networks; done masks the bootstrap."""
        _, _, r, _, done = batch
        if next_q_input is None:
            next_q_input = self.target_next_q_input(batch)
        q_next = self.target_critics[i].forward(next_q_input)
        return r[:, i] + self.cfg.gamma * (1.0 - done) * q_next

    def critic_update(self, i: int, batch, next_q_input=None, q_input=None) -> float:
        """One TD step on agent i's critic; returns the pre-update loss."""
        x, a, r, x2, done = batch
        B = x.shape[0]
        y = self.compute_td_targets(i, batch, next_q_input)
        q_in = q_input if q_input is not None else np.concatenate([x, a.reshape(B, -1)], axis=1)
        q, cache = self.critics[i].forward(q_in, want_cache=True)
        diff = q - y
        loss = float(np.mean(diff * diff))
        grads, _ = self.critics[i].backward(cache, (2.0 / B) * diff)
        self.adam_critic[i].step(self.critics[i].params, grads)
        return loss

    def actor_update(self, i: int, batch) -> float:
        """One ascent step on agent i's actor; returns the gradient norm."""
        x, a, _, _, _ = batch
        B = x.shape[0]
        grads = policy_gradient(self.actors[i], self.critics[i], x,
                                a.reshape(B, -1), i, self.x_dim,
                                self.actor_inputs(x, i))
        norm = float(np.sqrt(sum(float((g * g).sum()) for g in grads.values())))
        self.adam_actor[i].step(self.actors[i].params, {k: -g for k, g in grads.items()})
        return norm

    def soft_update_agent(self, i: int, kappa: float | None = None) -> None:
        kappa = self.cfg.soft_update_rate if kappa is None else kappa
        soft_update(self.actors[i].params, self.target_actors[i].params, kappa)
        soft_update(self.critics[i].params, self.target_critics[i].params, kappa)

    def update_round(self) -> None:
        """One critic and actor step for every agent on a shared sample.

        All agents update from the same uniformly sampled batch this round; the
        target-actor evaluations entering every TD target are shared across the
        per-agent critic updates.
        """
        batch = self.replay.sample(self.sample_rng, self.cfg.batch_size)
        x, a = batch[0], batch[1]
        next_q_input = self.target_next_q_input(batch)
        q_input = np.concatenate([x, a.reshape(x.shape[0], -1)], axis=1)
        for i in range(self.n):
            self.critic_update(i, batch, next_q_input, q_input)
            self.actor_update(i, batch)
        for i in range(self.n):
            self.soft_update_agent(i)

    # -- loop -----------------------------------------------------------------

    def train(self) -> TrainResult:
        """Run episodes until the step or episode budget is exhausted."""
        cfg = self.cfg
        sc = self.env.scenario
        logs = []
        episode = 0
        while True:
            if cfg.episodes is not None and episode >= cfg.episodes:
                break
            if cfg.total_steps is not None and self.global_step >= cfg.total_steps:
                break
            ep_seed = int(self.env_rng.integers(2 ** 63))
            obs = self.env.reset(ep_seed)
            x = self.obs_to_x(obs)
            ep_return = np.zeros(self.n)
            picked_ideal = 0
            steps = 0
            collision = False
            for _ in range(sc.episode_steps):
                sigma = self.noise_sigma(self.global_step)
                actions = np.stack([self.select_action(i, x, sigma) for i in range(self.n)])
                obs2, rewards, done, info = self.env.step(actions)
                x2 = self.obs_to_x(obs2)
                self.replay.add(Transition(x=x, actions=actions, rewards=rewards,
                                           x_next=x2, done=done))
                ep_return += rewards
                picked_ideal += sum(info["ideal_picked"])
                steps += 1
                self.global_step += 1
                if (self.global_step >= max(cfg.warmup_steps, cfg.batch_size)
                        and self.global_step % cfg.update_every == 0):
                    self.update_round()
                x = x2
                collision = info["collision"]
                if done or (cfg.total_steps is not None
                            and self.global_step >= cfg.total_steps):
                    break
            logs.append(EpisodeLog(episode=episode, steps=steps, collision=collision,
                                   filter_override_rate=picked_ideal / (steps * self.n),
                                   returns=ep_return))
            episode += 1
        return TrainResult(episodes=logs, total_steps=self.global_step)

    def save(self, path) -> None:
        save_checkpoint(path, self.actors, self.critics, extra_meta={
            "k": self.k,
            "platoon_size": self.n,
            "include_planned": self.cfg.actor_sees_planned,
            "scenario_kind": self.env.scenario.kind,
            "seed": self.seed,
        })


def write_training_log(result: TrainResult, path) -> None:
    """Per-episode CSV: returns, collision flag and filter-override rate."""
    n = len(result.episodes[0].returns) if result.episodes else 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "steps", "collision", "filter_override_rate",
                         "return_mean"] + [f"return_{i}" for i in range(n)])
        for ep in result.episodes:
            writer.writerow([ep.episode, ep.steps, int(ep.collision),
                             repr(float(ep.filter_override_rate)),
                             repr(float(np.mean(ep.returns)))]
                            + [repr(float(r)) for r in ep.returns])

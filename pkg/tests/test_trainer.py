import numpy as np
import pytest

from platoonrl.env import CATCHUP, ScenarioConfig
from platoonrl.errors import ContractError, ValidationError
from platoonrl.network import Critic
from platoonrl.trainer import (Adam, PlatoonTrainer, ReplayBuffer, TrainConfig,
                               Transition, policy_gradient, soft_update,
                               write_training_log)


def scenario(n=2, steps=12, delay=0.0):
    return ScenarioConfig(kind=CATCHUP, platoon_size=n, episode_steps=steps,
                          delay_seconds=delay)


def tiny_cfg(**kw):
    defaults = dict(episodes=1, total_steps=None, batch_size=4, warmup_steps=0,
                    d_model=8, critic_hidden=(8, 8), replay_capacity=100)
    defaults.update(kw)
    return TrainConfig(**defaults)


def make_trainer(seed=0, **kw):
    return PlatoonTrainer(scenario(**{k: kw.pop(k) for k in ("n", "steps", "delay")
                                      if k in kw}), tiny_cfg(**kw), seed=seed)


def zero_net(net):
    for k in net.params:
        net.params[k][...] = 0.0


# -- action selection -----------------------------------------------------------

def test_select_action_noise_free_deterministic():
    tr = make_trainer(seed=3)
    x = np.random.default_rng(0).normal(size=tr.x_dim)
    a1 = tr.select_action(0, x, 0.0)
    a2 = tr.select_action(0, x, 0.0)
    assert np.array_equal(a1, a2)


def test_select_action_ranges_hold_under_noise():
    tr = make_trainer(seed=4)
    rng = np.random.default_rng(1)
    for _ in range(200):
        x = rng.normal(size=tr.x_dim)
        a = tr.select_action(1, x, 0.3)
        assert 0.0 <= a[0] <= 1.0
        assert 0.0 <= a[1] <= 1.0
        assert -2.0 <= a[2] <= 2.0


def test_noise_sequence_reproducible_across_trainers():
    x = np.random.default_rng(2).normal(size=make_trainer(seed=9).x_dim)
    seq1 = [make_trainer(seed=9).select_action(0, x, 0.1) for _ in range(1)]
    tr1, tr2 = make_trainer(seed=9), make_trainer(seed=9)
    seq1 = [tr1.select_action(0, x, 0.1) for _ in range(5)]
    seq2 = [tr2.select_action(0, x, 0.1) for _ in range(5)]
    assert all(np.array_equal(a, b) for a, b in zip(seq1, seq2))


# -- critic update ----------------------------------------------------------------

def zero_batch(tr, B=4):
    return (np.zeros((B, tr.x_dim)), np.zeros((B, tr.n, 3)), np.zeros((B, tr.n)),
            np.zeros((B, tr.x_dim)), np.zeros(B))


def test_critic_update_zero_everything_gives_zero_loss():
    tr = make_trainer(gamma=0.0)
    zero_net(tr.critics[0])
    zero_net(tr.target_critics[0])
    loss = tr.critic_update(0, zero_batch(tr))
    assert loss == 0.0


def test_done_transitions_bootstrap_masked():
    tr = make_trainer(seed=5)
    rng = np.random.default_rng(3)
    B = 6
    batch = (rng.normal(size=(B, tr.x_dim)), rng.uniform(size=(B, tr.n, 3)),
             rng.normal(size=(B, tr.n)), rng.normal(size=(B, tr.x_dim)), np.ones(B))
    y = tr.compute_td_targets(1, batch)
    assert np.array_equal(y, batch[2][:, 1])


def test_td_target_matches_manual_computation():
    tr = make_trainer(seed=6)
    rng = np.random.default_rng(4)
    x = rng.normal(size=(1, tr.x_dim))
    a = rng.uniform(size=(1, tr.n, 3))
    r = rng.normal(size=(1, tr.n))
    x2 = rng.normal(size=(1, tr.x_dim))
    done = np.zeros(1)
    batch = (x, a, r, x2, done)

    next_acts = [tr.target_actors[j].forward(*tr.actor_inputs(x2, j)) for j in range(tr.n)]
    q_next = tr.target_critics[0].forward(np.concatenate([x2] + next_acts, axis=1))[0]
    manual = r[0, 0] + tr.cfg.gamma * q_next
    assert tr.compute_td_targets(0, batch)[0] == pytest.approx(manual, abs=1e-9)


def test_critic_update_reduces_loss_on_fixed_batch():
    tr = make_trainer(seed=7, critic_lr=1e-2)
    rng = np.random.default_rng(5)
    B = 16
    batch = (rng.normal(size=(B, tr.x_dim)), rng.uniform(size=(B, tr.n, 3)),
             rng.normal(size=(B, tr.n)), rng.normal(size=(B, tr.x_dim)), np.ones(B))
    first = tr.critic_update(0, batch)
    for _ in range(50):
        last = tr.critic_update(0, batch)
    assert last < first


# -- actor update -----------------------------------------------------------------

def test_actor_gradient_zero_when_critic_ignores_action():
    tr = make_trainer(seed=8)
    zero_net(tr.critics[0])
    rng = np.random.default_rng(6)
    for _ in range(4):
        tr.replay.add(Transition(x=rng.normal(size=tr.x_dim),
                                 actions=rng.uniform(size=(tr.n, 3)),
                                 rewards=np.zeros(tr.n),
                                 x_next=rng.normal(size=tr.x_dim), done=False))
    batch = tr.replay.sample(tr.sample_rng, 4)
    assert tr.actor_update(0, batch) == 0.0


class OneParamActor:
    """a(o) = theta * o broadcast to all three action channels."""

    def __init__(self, theta):
        self.theta = theta

    def forward(self, own, pred, foll, want_cache=False):
        a = np.repeat(self.theta * own[:, :1], 3, axis=1)
        return (a, {"own": own}) if want_cache else a

    def backward(self, cache, da):
        return {"theta": float((da * np.repeat(cache["own"][:, :1], 3, axis=1)).sum())}


class QuadraticCritic:
    """Q(x, a) = -sum(a^2), independent of the state part."""

    def __init__(self, x_dim):
        self.x_dim = x_dim

    def forward(self, inp, want_cache=False):
        acts = inp[:, self.x_dim:]
        q = -(acts ** 2).sum(axis=1)
        return (q, {"inp": inp}) if want_cache else q

    def input_gradients(self, cache, dq):
        dx = np.zeros_like(cache["inp"])
        dx[:, self.x_dim:] = np.asarray(dq)[:, None] * (-2.0 * cache["inp"][:, self.x_dim:])
        return dx


def test_policy_gradient_matches_closed_form_on_toy():
    # J(theta) = mean_b -3 (theta o_b)^2  =>  dJ/dtheta = -6 theta mean(o^2)
    rng = np.random.default_rng(7)
    obs = rng.normal(size=(32, 1))
    theta = 0.37
    actor = OneParamActor(theta)
    critic = QuadraticCritic(x_dim=1)
    a_flat = rng.uniform(size=(32, 3))
    grads = policy_gradient(actor, critic, obs, a_flat, agent_index=0, x_dim=1,
                            actor_inputs=(obs, None, None))
    expected = -6.0 * theta * float(np.mean(obs ** 2))
    assert grads["theta"] == pytest.approx(expected, abs=1e-6)


def test_actor_update_norm_finite_on_random_batches():
    tr = make_trainer(seed=10)
    rng = np.random.default_rng(8)
    for _ in range(8):
        tr.replay.add(Transition(x=rng.normal(size=tr.x_dim),
                                 actions=rng.uniform(size=(tr.n, 3)),
                                 rewards=rng.normal(size=tr.n),
                                 x_next=rng.normal(size=tr.x_dim), done=False))
    for i in range(tr.n):
        norm = tr.actor_update(i, tr.replay.sample(tr.sample_rng, 4))
        assert np.isfinite(norm) and norm >= 0.0


def test_actor_update_improves_critic_value():
    tr = make_trainer(seed=11, actor_lr=1e-2)
    rng = np.random.default_rng(9)
    B = 16
    x = rng.normal(size=(B, tr.x_dim))
    a = rng.uniform(size=(B, tr.n, 3))
    batch = (x, a, np.zeros((B, tr.n)), x, np.zeros(B))

    def mean_q(i):
        own, pred, foll = tr.actor_inputs(x, i)
        ai = tr.actors[i].forward(own, pred, foll)
        a_all = a.reshape(B, -1).copy()
        a_all[:, 3 * i:3 * i + 3] = ai
        return float(tr.critics[i].forward(np.concatenate([x, a_all], axis=1)).mean())

    before = mean_q(0)
    for _ in range(30):
        tr.actor_update(0, batch)
    assert mean_q(0) > before


# -- soft updates -----------------------------------------------------------------

def test_soft_update_arithmetic():
    online = {"w": np.array([1.0])}
    target = {"w": np.array([0.0])}
    soft_update(online, target, 0.01)
    assert target["w"][0] == pytest.approx(0.01, abs=0.0)

    target = {"w": np.array([0.3])}
    soft_update(online, target, 1.0)
    assert target["w"][0] == 1.0

    target = {"w": np.array([0.3])}
    soft_update(online, target, 0.0)
    assert target["w"][0] == 0.3


def test_soft_update_geometric_convergence():
    kappa = 0.25
    online = {"w": np.full(4, 2.0)}
    target = {"w": np.zeros(4)}
    gap = 2.0
    for _ in range(20):
        soft_update(online, target, kappa)
        new_gap = float(np.max(np.abs(target["w"] - online["w"])))
        assert new_gap == pytest.approx(gap * (1 - kappa), rel=1e-12)
        gap = new_gap


def test_trainer_soft_update_kappa_one_copies():
    tr = make_trainer(seed=12)
    tr.soft_update_agent(0, kappa=1.0)
    for k in tr.actors[0].params:
        assert np.array_equal(tr.actors[0].params[k], tr.target_actors[0].params[k])


# -- replay -----------------------------------------------------------------------

def transition(x_val, n=1, x_dim=1):
    return Transition(x=np.full(x_dim, float(x_val)), actions=np.zeros((n, 3)),
                      rewards=np.zeros(n), x_next=np.zeros(x_dim), done=False)


def test_replay_eviction_oldest_first():
    buf = ReplayBuffer(capacity=4, x_dim=1, n_agents=1)
    for i in range(6):
        buf.add(transition(i))
    assert buf.size == 4
    assert sorted(buf.x[:, 0].tolist()) == [2.0, 3.0, 4.0, 5.0]


def test_replay_sample_requires_enough_data():
    buf = ReplayBuffer(capacity=4, x_dim=1, n_agents=1)
    buf.add(transition(0))
    with pytest.raises(ContractError):
        buf.sample(np.random.default_rng(0), 2)


def test_replay_rejects_non_finite_rewards():
    buf = ReplayBuffer(capacity=4, x_dim=1, n_agents=1)
    bad = transition(0)
    bad.rewards[0] = np.nan
    with pytest.raises(ValidationError):
        buf.add(bad)


# -- training loop ----------------------------------------------------------------

def test_train_bookkeeping_without_updates():
    cfg = tiny_cfg(actor_lr=0.0, critic_lr=0.0, warmup_steps=10_000)
    tr = PlatoonTrainer(scenario(n=2, steps=5, delay=0.0), cfg, seed=0)
    result = tr.train()
    assert tr.replay.size == 5
    assert result.total_steps == 5
    assert len(result.episodes) == 1
    assert result.episodes[0].steps == 5


def test_training_log_bit_identical_across_runs(tmp_path):
    def run(path):
        cfg = tiny_cfg(episodes=3, warmup_steps=6, batch_size=4)
        tr = PlatoonTrainer(scenario(n=2, steps=8, delay=0.2), cfg, seed=21)
        write_training_log(tr.train(), path)
        return path.read_bytes()

    assert run(tmp_path / "a.csv") == run(tmp_path / "b.csv")


def test_total_steps_budget_caps_training():
    cfg = tiny_cfg(episodes=None, total_steps=13, warmup_steps=10_000)
    tr = PlatoonTrainer(scenario(n=2, steps=5), cfg, seed=1)
    result = tr.train()
    assert result.total_steps == 13
    assert [ep.steps for ep in result.episodes] == [5, 5, 3]


def test_config_validation():
    with pytest.raises(ValidationError):
        TrainConfig(episodes=None, total_steps=None).validate()
    with pytest.raises(ValidationError):
        TrainConfig(gamma=1.0).validate()
    with pytest.raises(ValidationError):
        TrainConfig(soft_update_rate=0.0).validate()
    with pytest.raises(ValidationError):
        TrainConfig(batch_size=0).validate()
    TrainConfig(gamma=0.0).validate()   # degenerate discount is allowed


def test_adam_moves_against_gradient():
    params = {"w": np.array([1.0, -1.0])}
    opt = Adam(params, lr=0.1)
    for _ in range(10):
        opt.step(params, {"w": np.array([1.0, -1.0])})
    assert params["w"][0] < 1.0
    assert params["w"][1] > -1.0

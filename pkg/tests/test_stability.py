import numpy as np
import pytest

from platoonrl.dynamics import DynamicsConfig, VehicleState, ideal_acceleration
from platoonrl.errors import ValidationError
from platoonrl.reward import RewardWeights
from platoonrl.stability import (ActionTriple, PICK_IDEAL, PICK_RAW, filter_action,
                                 one_step_reward)

CFG = DynamicsConfig()
W = RewardWeights()
H_STAR = 20.0
V_STAR = 15.0


def test_tie_goes_to_ideal():
    st = VehicleState(h=26.0, v=12.0, u=0.0)
    u_ideal = ideal_acceleration(0.4, 0.3, st, v_pred=13.0, cfg=CFG)
    dec = filter_action(ActionTriple(0.4, 0.3, u_ideal), st, 13.0, 0.0,
                        H_STAR, V_STAR, W, CFG)
    assert dec.picked == PICK_IDEAL
    assert dec.chosen_u == u_ideal
    assert dec.reward_ideal == dec.reward_raw


def test_equilibrium_rejects_full_throttle():
    st = VehicleState(h=H_STAR, v=V_STAR, u=0.0)
    dec = filter_action(ActionTriple(0.5, 0.5, CFG.u_max), st, V_STAR, 0.0,
                        H_STAR, V_STAR, W, CFG)
    assert dec.picked == PICK_IDEAL
    assert abs(dec.chosen_u) < 1e-12
    assert dec.reward_raw < 0.0
    assert dec.reward_ideal > dec.reward_raw


def test_grid_optimal_raw_action_wins():
    # with zero gains the ideal candidate is 0; a grid-optimal raw command beats it
    st = VehicleState(h=30.0, v=10.0, u=0.0)
    grid = np.linspace(CFG.u_min, CFG.u_max, 201)
    scores = [one_step_reward(float(u), st, 12.0, 0.0, H_STAR, V_STAR, W, CFG)
              for u in grid]
    u_best = float(grid[int(np.argmax(scores))])
    assert u_best != 0.0
    dec = filter_action(ActionTriple(0.0, 0.0, u_best), st, 12.0, 0.0,
                        H_STAR, V_STAR, W, CFG)
    assert dec.picked == PICK_RAW
    assert dec.chosen_u == u_best
    assert dec.reward_raw > dec.reward_ideal


def test_argmax_property_randomized():
    rng = np.random.default_rng(5)
    for _ in range(500):
        st = VehicleState(h=float(rng.uniform(1.5, 60.0)),
                          v=float(rng.uniform(0.0, 30.0)),
                          u=float(rng.uniform(-2.0, 2.0)))
        act = ActionTriple(float(rng.uniform(0, 1)), float(rng.uniform(0, 1)),
                           float(rng.uniform(-2, 2)))
        v_pred = float(rng.uniform(0.0, 30.0))
        u_pred = float(rng.uniform(-2.0, 2.0))
        vs = float(rng.uniform(10.0, 30.0))
        dec = filter_action(act, st, v_pred, u_pred, H_STAR, vs, W, CFG)
        # re-score both candidates through the identical path
        r_ideal = one_step_reward(dec.candidate_ideal, st, v_pred, u_pred, H_STAR, vs, W, CFG)
        r_raw = one_step_reward(dec.candidate_raw, st, v_pred, u_pred, H_STAR, vs, W, CFG)
        assert dec.reward_ideal == r_ideal
        assert dec.reward_raw == r_raw
        if r_ideal >= r_raw:
            assert dec.picked == PICK_IDEAL and dec.chosen_u == dec.candidate_ideal
        else:
            assert dec.picked == PICK_RAW and dec.chosen_u == dec.candidate_raw
        assert CFG.u_min <= dec.chosen_u <= CFG.u_max


def test_filter_idempotent_on_chosen_action():
    rng = np.random.default_rng(9)
    for _ in range(100):
        st = VehicleState(h=float(rng.uniform(2, 50)), v=float(rng.uniform(0, 30)),
                          u=float(rng.uniform(-2, 2)))
        act = ActionTriple(float(rng.uniform(0, 1)), float(rng.uniform(0, 1)),
                           float(rng.uniform(-2, 2)))
        dec = filter_action(act, st, 14.0, 0.1, H_STAR, V_STAR, W, CFG)
        again = filter_action(ActionTriple(act.alpha, act.beta, dec.chosen_u),
                              st, 14.0, 0.1, H_STAR, V_STAR, W, CFG)
        assert again.chosen_u == dec.chosen_u


def test_rejects_non_finite_triple():
    st = VehicleState(h=20.0, v=10.0, u=0.0)
    with pytest.raises(ValidationError):
        filter_action(ActionTriple(0.5, float("nan"), 0.0), st, 10.0, 0.0,
                      H_STAR, V_STAR, W, CFG)

"""Noise-free policy evaluation: seeded trials, metric tables, trajectory CSV."""

import csv
from dataclasses import dataclass

import numpy as np

from .dynamics import DynamicsConfig
from .env import CaccEnv, ScenarioConfig
from .errors import CheckpointError
from .network import load_checkpoint
from .reward import RewardWeights

TRACE_COLUMNS = ["step", "vehicle", "h", "v", "u", "reward", "alpha", "beta",
                 "u_hat", "executed_u", "w_self", "w_pred", "w_foll", "picked",
                 "collision"]


@dataclass
class EvalReport:
    """Aggregate metrics over a set of evaluation trials."""

    avg_headway: float
    avg_velocity: float
    collision_count: int
    avg_return: float
    trials: int
    rows: list   # one dict per trial


@dataclass
class EpisodeRecord:
    returns: np.ndarray      # per-agent undiscounted return
    steps: int
    collision: bool
    headway_sum: float       # over non-collided vehicle rows
    velocity_sum: float
    rows_used: int
    trace_rows: list


def select_eval_action(actors, obs_list, i: int, include_planned: bool):
    """Deterministic action plus head-averaged attention weights for agent i."""
    own = obs_list[i].flat() if include_planned else obs_list[i].o_obs
    pred = obs_list[i - 1].o_obs if i > 0 else None
    foll = obs_list[i + 1].o_obs if i + 1 < len(obs_list) else None
    action, head_weights = actors[i].act(own, pred, foll)
    return action, head_weights.mean(axis=0)


def run_episode(env: CaccEnv, actors, include_planned: bool, seed: int,
                record_trace: bool = False) -> EpisodeRecord:
    """One noise-free episode under the given actors."""
    obs = env.reset(seed)
    n = env.n
    returns = np.zeros(n)
    h_sum = v_sum = 0.0
    rows_used = 0
    trace_rows = []
    steps = 0
    done = False
    while not done:
        picks = [select_eval_action(actors, obs, i, include_planned) for i in range(n)]
        actions = np.stack([p[0] for p in picks])
        obs, rewards, done, info = env.step(actions)
        returns += rewards
        steps += 1
        collided = info["collision"]
        if not collided:
            for veh in env.state.vehicles:
                h_sum += veh.h
                v_sum += veh.v
            rows_used += n
        if record_trace:
            for i, veh in enumerate(env.state.vehicles):
                ex = info["executed"][i]
                dec = info["decisions"][i]
                w = picks[i][1]
                trace_rows.append([steps, i, veh.h, veh.v, veh.u, rewards[i],
                                   ex.alpha, ex.beta, ex.u_hat, dec.chosen_u,
                                   w[0], w[1], w[2], dec.picked, int(collided)])
    return EpisodeRecord(returns=returns, steps=steps, collision=env.state.collision,
                         headway_sum=h_sum, velocity_sum=v_sum, rows_used=rows_used,
                         trace_rows=trace_rows)


def evaluate_actors(actors, include_planned: bool, scenario: ScenarioConfig,
                    trials: int, seed: int, dyn: DynamicsConfig | None = None,
                    weights: RewardWeights | None = None) -> EvalReport:
    """Run seeded noise-free trials and pool the metrics.

    Headway/velocity averages pool all vehicle rows of non-collided steps;
    the return averages over trials and agents.  Each trial uses a distinct
    seed derived deterministically from ``seed``.
    """
    env = CaccEnv(scenario, dyn, weights)
    trial_seeds = np.random.default_rng(seed).integers(2 ** 63, size=trials)
    rows = []
    h_sum = v_sum = 0.0
    rows_used = 0
    collisions = 0
    returns = []
    for t in range(trials):
        rec = run_episode(env, actors, include_planned, int(trial_seeds[t]))
        h_sum += rec.headway_sum
        v_sum += rec.velocity_sum
        rows_used += rec.rows_used
        collisions += int(rec.collision)
        ret = float(np.mean(rec.returns))
        returns.append(ret)
        rows.append({
            "trial": t,
            "seed": int(trial_seeds[t]),
            "steps": rec.steps,
            "rows_used": rec.rows_used,
            "collision": int(rec.collision),
            "avg_headway": rec.headway_sum / rec.rows_used if rec.rows_used else float("nan"),
            "avg_velocity": rec.velocity_sum / rec.rows_used if rec.rows_used else float("nan"),
            "return_mean": ret,
        })
    return EvalReport(
        avg_headway=h_sum / rows_used if rows_used else float("nan"),
        avg_velocity=v_sum / rows_used if rows_used else float("nan"),
        collision_count=collisions,
        avg_return=float(np.mean(returns)),
        trials=trials,
        rows=rows,
    )


def load_policy(checkpoint_path, scenario: ScenarioConfig,
                dyn: DynamicsConfig | None = None):
    """Load a checkpoint and validate it against the scenario.

    Returns ``(actors, include_planned)``.
    """
    meta, actors, _ = load_checkpoint(checkpoint_path)
    env = CaccEnv(scenario, dyn)
    if meta["platoon_size"] != scenario.platoon_size:
        raise CheckpointError(f"checkpoint was trained for platoon size "
                              f"{meta['platoon_size']}, config has {scenario.platoon_size}")
    if meta["k"] != env.k:
        raise CheckpointError(f"checkpoint was trained with delay {meta['k']} steps, "
                              f"config implies {env.k}")
    include_planned = bool(meta["include_planned"])
    expected_in = 5 + 3 * env.k if include_planned else 5
    if actors[0].input_dim != expected_in:
        raise CheckpointError(f"actor input dim {actors[0].input_dim} does not match "
                              f"expected {expected_in}")
    return actors, include_planned


def evaluate(checkpoint_path, scenario: ScenarioConfig, trials: int, seed: int,
             dyn: DynamicsConfig | None = None,
             weights: RewardWeights | None = None) -> EvalReport:
    actors, include_planned = load_policy(checkpoint_path, scenario, dyn)
    return evaluate_actors(actors, include_planned, scenario, trials, seed, dyn, weights)


def emit_trajectory(checkpoint_path, scenario: ScenarioConfig, seed: int, out_path,
                    dyn: DynamicsConfig | None = None,
                    weights: RewardWeights | None = None) -> EpisodeRecord:
    """Write the per-step trace CSV of a single episode."""
    actors, include_planned = load_policy(checkpoint_path, scenario, dyn)
    env = CaccEnv(scenario, dyn, weights)
    rec = run_episode(env, actors, include_planned, seed, record_trace=True)
    write_trace_csv(rec, out_path)
    return rec


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else x


def write_trace_csv(rec: EpisodeRecord, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for row in rec.trace_rows:
            writer.writerow([_fmt(v) for v in row])


def write_eval_csv(report: EvalReport, summary_path, trials_path) -> None:
    """Summary row plus one row per trial; averages are recomputable from the rows."""
    with open(trials_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["trial", "seed", "steps", "rows_used", "collision",
                  "avg_headway", "avg_velocity", "return_mean"]
        writer.writerow(header)
        for row in report.rows:
            writer.writerow([_fmt(row[c]) for c in header])
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["trials", "avg_headway", "avg_velocity",
                         "collision_count", "avg_return"])
        writer.writerow([report.trials, _fmt(report.avg_headway),
                         _fmt(report.avg_velocity), report.collision_count,
                         _fmt(report.avg_return)])

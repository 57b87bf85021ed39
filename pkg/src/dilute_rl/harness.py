"""Experiment orchestration.

Training loops (one learner iteration per dialogue, whoever played it),
fixed-policy evaluation sweeps, checkpoint snapshots, metric aggregation
and CSV emission. Runs are fully deterministic given (config, seed).
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from . import guidance as gd
from . import nets
from .acer import AcerLearner
from .config import ExperimentConfig, config_to_text, resolved_explore_mode
from .dqn import DqnLearner
from .env import DOMAIN_PRESETS, DialogueEnv
from .expert import ExpertThresholds, expert_act
from .explore import ExplorationSchedule, behavior_distribution, sample_action
from .replay import (ReplayBuffer, Transition, SOURCE_EXPERT_DEMO,
                     SOURCE_EXPERT_FEEDBACK, SOURCE_SELF_PLAY)

CSV_COLUMNS = ("algorithm", "guidance", "domain", "ser", "seed", "checkpoint",
               "success_rate", "avg_reward")

# The temperature config key is expressed in centi-reward units: tau = 100
# corresponds to a Boltzmann temperature of 1.0 in raw reward units. Q-values
# here live on the +-25 reward scale, so an unscaled temperature of 100 would
# flatten exp(Q / tau) into a uniform policy no matter how well Q is learned.
TAU_REWARD_UNITS = 0.01


@dataclass
class CheckpointMetrics:
    dialogue_index: int
    success_rate: float
    avg_reward: float
    per_seed: dict


def _network_spec(config: ExperimentConfig, domain) -> nets.NetworkSpec:
    if config.algorithm == "stoc-acer":
        return nets.NetworkSpec(input_dim=domain.belief_dim,
                                n_actions=domain.n_actions,
                                head_kind=nets.HEAD_ACTOR_CRITIC,
                                dropout_rate=config.dropout,
                                logit_gain=config.acer_logit_gain)
    return nets.NetworkSpec(input_dim=domain.belief_dim,
                            n_actions=domain.n_actions,
                            head_kind=nets.HEAD_DUELING,
                            dropout_rate=config.dropout)


def _train_schedule(config: ExperimentConfig) -> ExplorationSchedule:
    return ExplorationSchedule(mode=resolved_explore_mode(config),
                               eps_start=config.explore_eps_start,
                               eps_end=config.explore_eps_end,
                               decay_horizon=config.explore_decay_horizon,
                               tau=config.explore_tau * TAU_REWARD_UNITS)


def _eval_schedule(config: ExperimentConfig) -> ExplorationSchedule:
    """Test-time action selection: the learned policy mixed with a small
    fixed epsilon of uniform noise. For value-based learners the learned
    policy is the greedy one (Boltzmann smearing is an exploration device,
    not part of the policy being measured); actor-critic learners are
    measured on their policy head."""
    eps = config.explore_test_eps
    mode = resolved_explore_mode(config)
    if mode in ("boltzmann", "eps_boltzmann") and config.algorithm != "stoc-acer":
        mode = "eps_greedy"
    return ExplorationSchedule(mode=mode,
                               eps_start=eps, eps_end=eps, decay_horizon=1,
                               tau=config.explore_tau * TAU_REWARD_UNITS)


def make_learner(config: ExperimentConfig, rng: np.random.Generator):
    """Instantiate the configured learner, or None for the handcrafted
    policy (which has nothing to learn)."""
    domain = DOMAIN_PRESETS[config.domain]
    if config.algorithm == "hdc":
        return None
    spec = _network_spec(config, domain)
    schedule = _train_schedule(config)
    if config.algorithm == "stoc-acer":
        return AcerLearner(spec, rng, schedule=schedule, gamma=config.gamma,
                           lam=config.acer_lambda, c=config.acer_c,
                           delta=config.acer_delta,
                           avg_rate=config.acer_avg_rate,
                           entropy_coef=config.acer_entropy_coef,
                           batch_size=config.batch_size,
                           learning_rate=config.lr)
    return DqnLearner(spec, rng, schedule=schedule, gamma=config.gamma,
                      sync_period=config.dqn_sync_period,
                      batch_size=config.batch_size, learning_rate=config.lr)


def collect_episode(env: DialogueEnv, learner, config: ExperimentConfig,
                    dialogue_index: int, rng: np.random.Generator):
    """Play one training dialogue under the configured guidance mode.
    Returns (transitions, total_reward, success)."""
    thresholds = ExpertThresholds(config.expert_theta_known,
                                  config.expert_theta_confirm)
    mode = gd.GuidanceMode(config.guidance_mode, config.guidance_beta)

    episode_controller = gd.CONTROLLER_AGENT
    if mode.kind == gd.MODE_DEMONSTRATIONS:
        episode_controller = gd.select_episode_controller(mode, rng)

    belief = env.reset()
    transitions, total_reward = [], 0.0
    while not env.done:
        vec = belief.vector()
        if learner is None:  # handcrafted policy plays everything
            action = expert_act(belief, thresholds)
            mu = np.zeros(env.domain.n_actions)
            mu[action] = 1.0
            source = SOURCE_SELF_PLAY
        elif episode_controller == gd.CONTROLLER_EXPERT:
            action = expert_act(belief, thresholds)
            mu = gd.behavior_probs_with_expert(
                np.full(env.domain.n_actions, 1.0 / env.domain.n_actions),
                action, mode, episode_controller)
            source = SOURCE_EXPERT_DEMO
        elif mode.kind == gd.MODE_FEEDBACKS:
            agent_action, agent_mu = learner.act(vec, dialogue_index, rng)
            expert_action = expert_act(belief, thresholds)
            mu = gd.behavior_probs_with_expert(agent_mu, expert_action, mode)
            if gd.select_turn_controller(mode, rng) == gd.CONTROLLER_AGENT:
                action = agent_action
                source = SOURCE_SELF_PLAY
            else:
                action = expert_action
                source = SOURCE_EXPERT_FEEDBACK
        else:
            action, mu = learner.act(vec, dialogue_index, rng)
            source = SOURCE_SELF_PLAY
        belief, reward, done, success = env.step(action)
        total_reward += reward
        transitions.append(Transition(
            belief=vec, action=action, reward=reward,
            next_belief=belief.vector(), done=done, behavior_probs=mu,
            source=source))
    return transitions, total_reward, env.success


def _eval_policy_fn(config, learner=None, spec=None, params=None):
    """Action chooser for fixed-policy evaluation (dropout off, eps fixed
    at the test value)."""
    thresholds = ExpertThresholds(config.expert_theta_known,
                                  config.expert_theta_confirm)
    if config.algorithm == "hdc":
        return lambda belief, rng: expert_act(belief, thresholds)
    if learner is not None:
        net, actor_critic = (learner.online,
                             config.algorithm == "stoc-acer")
    else:
        net = nets.Network(spec, params=params)
        actor_critic = spec.head_kind == nets.HEAD_ACTOR_CRITIC
    schedule = _eval_schedule(config)

    def choose(belief, rng):
        out = net.forward(belief.vector())
        scores = out["policy"] if actor_critic else out["q"]
        mu = behavior_distribution(scores, schedule, 0,
                                   already_probs=actor_critic)
        return sample_action(mu, rng)

    return choose


def run_evaluation(config: ExperimentConfig, policy_fn, rng, ser=None,
                   n_dialogues=None):
    """n fixed-policy dialogues; returns (success_rate, avg_reward)."""
    domain = DOMAIN_PRESETS[config.domain]
    env = DialogueEnv(domain, config.ser if ser is None else ser, rng)
    n = config.eval_dialogues if n_dialogues is None else n_dialogues
    successes, rewards = 0, 0.0
    for _ in range(n):
        belief = env.reset()
        total = 0.0
        while not env.done:
            belief, reward, done, success = env.step(policy_fn(belief, rng))
            total += reward
        successes += int(env.success)
        rewards += total
    return successes / n, rewards / n


def run_training(config: ExperimentConfig, run_dir, seed: int):
    """Train one (config, seed) run: collect dialogues, one learner
    iteration per dialogue, checkpoint + evaluate every
    ``checkpoint_every`` dialogues. Returns the metric rows."""
    os.makedirs(run_dir, exist_ok=True)
    domain = DOMAIN_PRESETS[config.domain]
    rng = np.random.default_rng(seed)
    learner = make_learner(config, rng)
    buffer = ReplayBuffer(config.buffer_size)

    trace_f = open(os.path.join(run_dir, "trace.jsonl"), "w") if config.trace else None
    trace = (lambda rec: trace_f.write(json.dumps(rec) + "\n")) if trace_f else None
    env = DialogueEnv(domain, config.ser, rng, trace=trace)

    rows = []
    try:
        for d in range(config.train_dialogues):
            transitions, _, _ = collect_episode(env, learner, config, d, rng)
            buffer.push_episode(transitions)
            if learner is not None:
                learner.train_step(buffer, rng)

            idx = d + 1
            if idx % config.checkpoint_every == 0:
                if learner is not None:
                    ckpt = os.path.join(run_dir, f"ckpt_{idx:06d}.ckpt")
                    nets.save_checkpoint(ckpt, learner.spec,
                                         learner.online.params,
                                         extra=_ckpt_extra(config, seed, idx))
                eval_rng = np.random.default_rng([seed, idx])
                policy_fn = _eval_policy_fn(config, learner=learner)
                success, reward = run_evaluation(config, policy_fn, eval_rng)
                rows.append({
                    "algorithm": config.algorithm,
                    "guidance": config.guidance_mode,
                    "domain": config.domain,
                    "ser": config.ser,
                    "seed": seed,
                    "checkpoint": idx,
                    "success_rate": success,
                    "avg_reward": reward,
                })
    finally:
        if trace_f:
            trace_f.close()
    write_results(rows, os.path.join(run_dir, "metrics.csv"))
    return rows


def _ckpt_extra(config, seed, dialogue_index):
    return {"algorithm": config.algorithm, "domain": config.domain,
            "ser": config.ser, "seed": seed,
            "dialogue_index": dialogue_index,
            "explore_tau": config.explore_tau}


def evaluate_policy(checkpoint_path, config: ExperimentConfig,
                    seed: int | None = None) -> CheckpointMetrics:
    """Evaluate a saved checkpoint over ``eval_dialogues`` fixed-policy
    dialogues."""
    spec, params, extra = nets.load_checkpoint(checkpoint_path)
    expected = _network_spec(config, DOMAIN_PRESETS[config.domain])
    if spec != expected:
        raise ValueError(f"checkpoint spec {spec} does not match the "
                         f"configured domain/algorithm (want {expected})")
    if seed is None:
        seed = extra.get("seed", config.seeds[0])
    idx = extra.get("dialogue_index", 0)
    policy_fn = _eval_policy_fn(config, spec=spec, params=params)
    rng = np.random.default_rng([seed, idx])
    success, reward = run_evaluation(config, policy_fn, rng)
    return CheckpointMetrics(dialogue_index=idx, success_rate=success,
                             avg_reward=reward,
                             per_seed={seed: (success, reward)})


def run_experiment(config: ExperimentConfig, out_dir):
    """All seeds of one configuration; echoes the effective config and
    writes the combined metrics.csv. Returns all metric rows."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.echo"), "w") as f:
        f.write(config_to_text(config))
    all_rows = []
    for seed in config.seeds:
        run_dir = os.path.join(out_dir, f"seed_{seed}")
        all_rows.extend(run_training(config, run_dir, seed))
    write_results(all_rows, os.path.join(out_dir, "metrics.csv"))
    return all_rows


def aggregate_checkpoints(rows, from_idx=6000, to_idx=10000, step=1000) -> CheckpointMetrics:
    """Mean success rate and reward over the checkpoints at
    {from_idx, from_idx + step, ..., to_idx}, across seeds."""
    wanted = list(range(from_idx, to_idx + 1, step))
    present = {}
    for row in rows:
        if int(row["checkpoint"]) in wanted:
            present.setdefault(int(row["checkpoint"]), []).append(row)
    missing = [i for i in wanted if i not in present]
    if missing:
        raise ValueError(f"missing checkpoints for aggregation: {missing}")
    picked = [r for i in wanted for r in present[i]]
    per_seed = {}
    for r in picked:
        per_seed.setdefault(r["seed"], []).append(
            (float(r["success_rate"]), float(r["avg_reward"])))
    return CheckpointMetrics(
        dialogue_index=to_idx,
        success_rate=float(np.mean([float(r["success_rate"]) for r in picked])),
        avg_reward=float(np.mean([float(r["avg_reward"]) for r in picked])),
        per_seed={s: (float(np.mean([x for x, _ in v])),
                      float(np.mean([y for _, y in v])))
                  for s, v in per_seed.items()})


def write_results(rows, path):
    """CSV with a fixed column order; values round-trip exactly."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_COLUMNS)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float)
                             else row[c] for c in CSV_COLUMNS])


def read_results(path):
    rows = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            row["ser"] = float(row["ser"])
            row["seed"] = int(row["seed"])
            row["checkpoint"] = int(row["checkpoint"])
            row["success_rate"] = float(row["success_rate"])
            row["avg_reward"] = float(row["avg_reward"])
            rows.append(row)
    return rows

"""Action-selection strategies.

Greedy, epsilon-greedy, Boltzmann, and the epsilon-Boltzmann mixture
(1-eps) * softmax(scores / tau) + eps * uniform with a linearly decaying
epsilon and fixed temperature. Every selector also reports the exact
behavior distribution it sampled from, which is stored with the
transition for off-policy correction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODE_GREEDY = "greedy"
MODE_EPS_GREEDY = "eps_greedy"
MODE_BOLTZMANN = "boltzmann"
MODE_EPS_BOLTZMANN = "eps_boltzmann"

MODES = (MODE_GREEDY, MODE_EPS_GREEDY, MODE_BOLTZMANN, MODE_EPS_BOLTZMANN)


@dataclass(frozen=True)
class ExplorationSchedule:
    mode: str = MODE_EPS_BOLTZMANN
    eps_start: float = 0.55
    eps_end: float = 0.05
    decay_horizon: int = 1000
    tau: float = 100.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown exploration mode: {self.mode!r}")
        if self.eps_end > self.eps_start:
            raise ValueError("eps_end must not exceed eps_start")
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")


def epsilon_at(schedule: ExplorationSchedule, dialogue_index: int) -> float:
    """Linear decay from eps_start to eps_end over decay_horizon dialogues,
    clamped afterwards."""
    if dialogue_index < 0:
        raise ValueError("dialogue_index must be >= 0")
    if schedule.decay_horizon <= 0 or dialogue_index >= schedule.decay_horizon:
        return schedule.eps_end
    frac = dialogue_index / schedule.decay_horizon
    return schedule.eps_start + frac * (schedule.eps_end - schedule.eps_start)


def boltzmann_probs(scores: np.ndarray, tau: float) -> np.ndarray:
    """softmax(scores / tau), computed with max subtraction."""
    if tau <= 0.0:
        raise ValueError("tau must be positive")
    s = np.asarray(scores, dtype=np.float64) / tau
    s = s - s.max()
    e = np.exp(s)
    return e / e.sum()


def mixture_probs(policy: np.ndarray, eps: float) -> np.ndarray:
    """(1 - eps) * policy + eps * uniform; the exact behavior distribution
    recorded in replay."""
    policy = np.asarray(policy, dtype=np.float64)
    if not 0.0 <= eps <= 1.0:
        raise ValueError("eps must be in [0, 1]")
    if abs(policy.sum() - 1.0) > 1e-6:
        raise ValueError("policy must sum to 1")
    return (1.0 - eps) * policy + eps / policy.size


def greedy_probs(scores: np.ndarray) -> np.ndarray:
    out = np.zeros(len(scores))
    out[int(np.argmax(scores))] = 1.0
    return out


def behavior_distribution(scores: np.ndarray, schedule: ExplorationSchedule,
                          dialogue_index: int,
                          already_probs: bool = False) -> np.ndarray:
    """The full action distribution implied by the schedule's mode.

    ``scores`` are Q-values for value-based learners; actor-critic callers
    pass the policy head's probabilities with ``already_probs=True``, which
    bypasses the Boltzmann transform.
    """
    eps = epsilon_at(schedule, dialogue_index)
    if schedule.mode == MODE_GREEDY:
        return greedy_probs(scores)
    if schedule.mode == MODE_EPS_GREEDY:
        return mixture_probs(greedy_probs(scores), eps)
    base = np.asarray(scores, float) if already_probs else boltzmann_probs(scores, schedule.tau)
    if schedule.mode == MODE_BOLTZMANN:
        return base
    return mixture_probs(base, eps)


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 1 or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-6:
        raise ValueError("malformed probability vector")
    return int(rng.choice(len(probs), p=probs / probs.sum()))

"""Expert dilution into data collection.

Two modes: whole-episode demonstrations (the expert plays 1 - beta of
the dialogues, stored as if the agent had played them) and per-turn
feedbacks (the expert substitutes 1 - beta of the individual actions).
Either way the transition records the exact distribution the executed
action was drawn from, so importance ratios stay correct downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MODE_NONE = "none"
MODE_DEMONSTRATIONS = "bc"
MODE_FEEDBACKS = "fb"

CONTROLLER_AGENT = "agent"
CONTROLLER_EXPERT = "expert"


@dataclass(frozen=True)
class GuidanceMode:
    kind: str = MODE_NONE
    beta: float = 0.5

    def __post_init__(self):
        if self.kind not in (MODE_NONE, MODE_DEMONSTRATIONS, MODE_FEEDBACKS):
            raise ValueError(f"unknown guidance kind: {self.kind!r}")
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError("beta must be in [0, 1]")


def select_episode_controller(mode: GuidanceMode, rng: np.random.Generator) -> str:
    """With probability beta the agent plays the whole dialogue, otherwise
    the expert does. Demonstrations mode only."""
    if mode.kind != MODE_DEMONSTRATIONS:
        raise RuntimeError("episode controller selection needs demonstrations mode")
    return CONTROLLER_AGENT if rng.random() < mode.beta else CONTROLLER_EXPERT


def select_turn_controller(mode: GuidanceMode, rng: np.random.Generator) -> str:
    """With probability beta the agent plays this turn, otherwise the
    expert's action is executed. Feedbacks mode only."""
    if mode.kind != MODE_FEEDBACKS:
        raise RuntimeError("turn controller selection needs feedbacks mode")
    return CONTROLLER_AGENT if rng.random() < mode.beta else CONTROLLER_EXPERT


def behavior_probs_with_expert(agent_mu: np.ndarray, expert_action: int,
                               mode: GuidanceMode,
                               episode_controller: str = CONTROLLER_AGENT) -> np.ndarray:
    """The true generating distribution of a stored action.

    Feedbacks: beta * agent_mu + (1 - beta) * onehot(expert action).
    Demonstrations with the expert in control: onehot(expert action).
    Everything else: the agent's own mu.
    """
    agent_mu = np.asarray(agent_mu, dtype=np.float64)
    if abs(agent_mu.sum() - 1.0) > 1e-9:
        raise ValueError("agent_mu must sum to 1")
    if mode.kind == MODE_FEEDBACKS:
        out = mode.beta * agent_mu
        out[expert_action] += 1.0 - mode.beta
        return out
    if mode.kind == MODE_DEMONSTRATIONS and episode_controller == CONTROLLER_EXPERT:
        out = np.zeros_like(agent_mu)
        out[expert_action] = 1.0
        return out
    return agent_mu.copy()

"""Episodic experience replay.

Episodes are stored whole so that trajectory-based learners (Retrace)
always see unbroken transition sequences; eviction drops the oldest
episodes until the total transition count fits the capacity. Uniform
transition sampling serves the DQN path. Demonstration episodes live in
the same buffer as self-play, distinguished only by a source tag.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .env import MAX_TURNS

SOURCE_SELF_PLAY = "self_play"
SOURCE_EXPERT_DEMO = "expert_demo"
SOURCE_EXPERT_FEEDBACK = "expert_feedback"


@dataclass
class Transition:
    belief: np.ndarray
    action: int
    reward: float
    next_belief: np.ndarray
    done: bool
    behavior_probs: np.ndarray  # full mu(.|b) that generated the action
    source: str = SOURCE_SELF_PLAY


def validate_episode(episode) -> None:
    if not episode:
        raise ValueError("empty episode")
    if len(episode) > MAX_TURNS:
        raise ValueError(f"episode longer than {MAX_TURNS} transitions")
    for i, t in enumerate(episode):
        if t.done != (i == len(episode) - 1):
            raise ValueError("done flag must be set on the last transition only")
        mu = np.asarray(t.behavior_probs)
        if abs(mu.sum() - 1.0) > 1e-9 or np.any(mu < 0):
            raise ValueError("behavior_probs must be a distribution")
        if mu[t.action] <= 0.0:
            raise ValueError("behavior_probs must put mass on the taken action")


class ReplayBuffer:
    """Ring of whole episodes with a transition-count capacity."""

    def __init__(self, capacity: int = 10_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._episodes = deque()
        self._n_transitions = 0

    def __len__(self):
        return self._n_transitions

    @property
    def n_episodes(self):
        return len(self._episodes)

    def push_episode(self, episode) -> None:
        validate_episode(episode)
        self._episodes.append(list(episode))
        self._n_transitions += len(episode)
        while self._n_transitions > self.capacity:
            self._n_transitions -= len(self._episodes.popleft())

    def sample_transitions(self, n, rng: np.random.Generator):
        """n i.i.d. uniform draws with replacement over all stored
        transitions, or None when the buffer is empty (not ready)."""
        if self._n_transitions == 0:
            return None
        flat = [t for ep in self._episodes for t in ep]
        idx = rng.integers(len(flat), size=n)
        return [flat[i] for i in idx]

    def sample_episodes(self, k, rng: np.random.Generator):
        """k episodes drawn uniformly with replacement, or None when empty."""
        if not self._episodes:
            return None
        idx = rng.integers(len(self._episodes), size=k)
        return [self._episodes[i] for i in idx]

    def mean_episode_length(self):
        if not self._episodes:
            return 0.0
        return self._n_transitions / len(self._episodes)

    def dump_jsonl(self, path):
        """Line-delimited JSON dump for post-hoc analysis."""
        import json
        with open(path, "w") as f:
            for ep_idx, ep in enumerate(self._episodes):
                for t in ep:
                    f.write(json.dumps({
                        "episode": ep_idx,
                        "action": int(t.action),
                        "reward": float(t.reward),
                        "done": bool(t.done),
                        "source": t.source,
                        "behavior_probs": [float(p) for p in t.behavior_probs],
                    }) + "\n")

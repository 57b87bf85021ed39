"""Double + dueling DQN with experience replay.

The online network selects the bootstrap action, the frozen target
network evaluates it. One train step samples a uniform transition batch,
takes a single Adam step on the squared Bellman error and hard-copies
the target network every ``sync_period`` iterations.
"""

from __future__ import annotations

import numpy as np

from . import nets
from .explore import ExplorationSchedule, behavior_distribution, sample_action
from .replay import ReplayBuffer, Transition


class DqnLearner:
    def __init__(self, spec: nets.NetworkSpec, rng: np.random.Generator,
                 schedule: ExplorationSchedule | None = None,
                 gamma: float = 0.9, sync_period: int = 100,
                 batch_size: int = 128, learning_rate: float = 1e-4):
        if spec.head_kind != nets.HEAD_DUELING:
            raise ValueError("DqnLearner needs a dueling-head spec")
        self.spec = spec
        self.online = nets.Network(spec, rng=rng)
        self.target = nets.Network(spec, params=nets.copy_params(self.online.params))
        self.adam = nets.adam_init(self.online.params, learning_rate)
        self.schedule = schedule or ExplorationSchedule()
        self.gamma = gamma
        self.sync_period = sync_period
        self.batch_size = batch_size
        self.iterations_since_sync = 0

    def q_values(self, belief_vec: np.ndarray) -> np.ndarray:
        return self.online.forward(belief_vec)["q"]

    def act(self, belief_vec, dialogue_index, rng):
        """Evaluation-mode forward, then schedule-driven sampling.
        Returns (action, mu) with mu the exact behavior distribution."""
        q = self.q_values(belief_vec)
        mu = behavior_distribution(q, self.schedule, dialogue_index)
        return sample_action(mu, rng), mu

    def double_q_target(self, transition: Transition) -> float:
        """r + gamma * Q_target(b', argmax_a Q_online(b', a)), or r when
        the transition is terminal."""
        if transition.done:
            return float(transition.reward)
        q_online = self.online.forward(transition.next_belief)["q"]
        q_target = self.target.forward(transition.next_belief)["q"]
        return float(transition.reward
                     + self.gamma * q_target[int(np.argmax(q_online))])

    def _batch_targets(self, batch):
        next_beliefs = np.stack([t.next_belief for t in batch])
        q_online = self.online.forward(next_beliefs)["q"]
        q_target = self.target.forward(next_beliefs)["q"]
        sel = np.argmax(q_online, axis=1)
        boot = q_target[np.arange(len(batch)), sel]
        rewards = np.array([t.reward for t in batch])
        live = np.array([0.0 if t.done else 1.0 for t in batch])
        return rewards + self.gamma * live * boot

    def batch_loss(self, batch, targets) -> float:
        """Mean squared Bellman error on a fixed batch with frozen targets
        (evaluation mode, no dropout)."""
        beliefs = np.stack([t.belief for t in batch])
        actions = np.array([t.action for t in batch])
        pred = self.online.forward(beliefs)["q"][np.arange(len(batch)), actions]
        return float(np.mean((pred - np.asarray(targets)) ** 2))

    def batch_gradient(self, batch, targets) -> dict:
        """Gradient of batch_loss w.r.t. the online parameters."""
        beliefs = np.stack([t.belief for t in batch])
        actions = np.array([t.action for t in batch])
        out = self.online.forward(beliefs)
        pred = out["q"][np.arange(len(batch)), actions]
        dq = np.zeros_like(out["q"])
        dq[np.arange(len(batch)), actions] = (
            2.0 * (pred - np.asarray(targets)) / len(batch))
        return self.online.backward({"q": dq})

    def train_step(self, buffer: ReplayBuffer, rng: np.random.Generator):
        """One iteration: batch, MSE loss, Adam step, maybe target sync.
        Returns the scalar loss, or None when the buffer is not ready."""
        batch = buffer.sample_transitions(self.batch_size, rng)
        if batch is None:
            return None
        targets = self._batch_targets(batch)  # constants w.r.t. omega

        beliefs = np.stack([t.belief for t in batch])
        actions = np.array([t.action for t in batch])
        out = self.online.forward(beliefs, train=True, rng=rng)
        pred = out["q"][np.arange(len(batch)), actions]
        err = pred - targets
        loss = float(np.mean(err ** 2))

        dq = np.zeros_like(out["q"])
        dq[np.arange(len(batch)), actions] = 2.0 * err / len(batch)
        grads = self.online.backward({"q": dq})
        nets.adam_step(self.online.params, self.adam, grads)

        self.iterations_since_sync += 1
        if self.iterations_since_sync >= self.sync_period:
            self.target.params = nets.copy_params(self.online.params)
            self.iterations_since_sync = 0
        return loss

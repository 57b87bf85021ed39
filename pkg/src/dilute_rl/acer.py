"""Actor-critic with experience replay.

Retrace targets over whole replayed episodes, truncated importance
sampling with bias correction, a 1% entropy bonus, and a closed-form
trust-region projection of the per-state policy gradient against a
softly-updated average policy. Policy and critic gradients are combined
into one Adam step per training iteration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import nets
from .explore import ExplorationSchedule, behavior_distribution, sample_action
from .replay import ReplayBuffer


def state_value(policy: np.ndarray, q: np.ndarray) -> float:
    """V(b) = sum_a pi(a|b) Q(b, a)."""
    return float(np.dot(policy, q))


def trpo_project(g: np.ndarray, k: np.ndarray, delta: float) -> np.ndarray:
    """Closed-form solution of min ||g - z|| s.t. k'z <= delta:
    z = g - max(0, (k'g - delta) / ||k||^2) k. Degenerate k returns g."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    g = np.asarray(g, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    ksq = float(np.dot(k, k))
    if ksq == 0.0:
        return g.copy()
    scale = max(0.0, (float(np.dot(k, g)) - delta) / ksq)
    return g - scale * k


def retrace_recursion(rewards, values, q_taken, traces, gamma):
    """Backward Retrace recursion over one terminated episode.

    Per-step inputs: reward r_t, state value V(b_t), Q(b_t, a_t) for the
    taken action and eligibility trace c_t. Returns Q_ret with
    Q_ret(T-1) = r_{T-1} (terminal, V of the absorbing state is 0) and
    Q_ret(t) = r_t + g V(b_{t+1}) + g c_{t+1} (Q_ret(t+1) - Q(b_{t+1}, a_{t+1})).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    q_taken = np.asarray(q_taken, dtype=np.float64)
    traces = np.asarray(traces, dtype=np.float64)
    T = len(rewards)
    if not (len(values) == len(q_taken) == len(traces) == T):
        raise ValueError("per-step inputs must have equal length")
    q_ret = np.zeros(T)
    for t in reversed(range(T)):
        if t == T - 1:
            q_ret[t] = rewards[t]
        else:
            q_ret[t] = (rewards[t] + gamma * values[t + 1]
                        + gamma * traces[t + 1]
                        * (q_ret[t + 1] - q_taken[t + 1]))
    return q_ret


@dataclass
class RetraceResult:
    q_ret: np.ndarray  # per-step Retrace target for the taken action
    a_ret: np.ndarray  # q_ret - V(b_t)
    v: np.ndarray      # V(b_t) along the episode


def _entropy_grad(policy):
    # d/dlogits of H(pi) = -sum pi log pi
    logp = np.log(policy)
    h = -np.sum(policy * logp, axis=-1, keepdims=True)
    return -policy * (logp + h)


class AcerLearner:
    def __init__(self, spec: nets.NetworkSpec, rng: np.random.Generator,
                 schedule: ExplorationSchedule | None = None,
                 gamma: float = 0.9, lam: float = 1.0, c: float = 10.0,
                 delta: float = 1.0, avg_rate: float = 0.99,
                 entropy_coef: float = 0.01, batch_size: int = 128,
                 learning_rate: float = 1e-4):
        if spec.head_kind != nets.HEAD_ACTOR_CRITIC:
            raise ValueError("AcerLearner needs an actor-critic spec")
        if not (c > 0 and delta > 0 and 0 <= lam <= 1 and 0 <= avg_rate <= 1):
            raise ValueError("bad ACER hyperparameters")
        self.spec = spec
        self.online = nets.Network(spec, rng=rng)
        self.average = nets.Network(spec, params=nets.copy_params(self.online.params))
        self.adam = nets.adam_init(self.online.params, learning_rate)
        self.schedule = schedule or ExplorationSchedule()
        self.gamma = gamma
        self.lam = lam
        self.c = c
        self.delta = delta
        self.avg_rate = avg_rate
        self.entropy_coef = entropy_coef
        self.batch_size = batch_size

    def act(self, belief_vec, dialogue_index, rng):
        policy = self.online.forward(belief_vec)["policy"]
        mu = behavior_distribution(policy, self.schedule, dialogue_index,
                                   already_probs=True)
        return sample_action(mu, rng), mu

    # -- Retrace ------------------------------------------------------------

    def retrace_targets(self, episode) -> RetraceResult:
        """Backward recursion Q_ret(t) = r_t + g V(b_{t+1})
        + g c_{t+1} (Q_ret(t+1) - Q(b_{t+1}, a_{t+1})) with eligibility
        traces c_t = lambda * min(1, pi(a_t|b_t)/mu(a_t|b_t)); at the
        terminal step V(b_{T+1}) = 0 so Q_ret(T) = r_T."""
        T = len(episode)
        beliefs = np.stack([t.belief for t in episode])
        out = self.online.forward(beliefs)
        pi, q = out["policy"], out["q"]
        actions = np.array([t.action for t in episode])
        mu = np.array([t.behavior_probs[t.action] for t in episode])
        if np.any(mu <= 0.0):
            raise ValueError("stored behavior probability is zero for a taken action")
        rho = pi[np.arange(T), actions] / mu
        trace = self.lam * np.minimum(1.0, rho)
        v = np.einsum("ta,ta->t", pi, q)
        rewards = np.array([t.reward for t in episode])
        q_ret = retrace_recursion(rewards, v, q[np.arange(T), actions],
                                  trace, self.gamma)
        return RetraceResult(q_ret=q_ret, a_ret=q_ret - v, v=v)

    # -- gradient machinery --------------------------------------------------

    def policy_loss_weights(self, episodes):
        """Frozen per-step constants of the policy objective, evaluated
        with the current online network in evaluation mode.

        Returns a list of dicts with keys ``action``, ``w_taken``
        (truncated rho times A_ret), ``w_corr`` (per-action bias-correction
        weight pi(a) * clamp((rho(a)-c)/rho(a)) * A(a)), ``q_ret``, ``rho``
        and ``belief``.
        """
        weights = []
        for ep in episodes:
            ret = self.retrace_targets(ep)
            beliefs = np.stack([t.belief for t in ep])
            out = self.online.forward(beliefs)
            pi, q = out["policy"], out["q"]
            for t, tr in enumerate(ep):
                a = tr.action
                mu = np.asarray(tr.behavior_probs)
                rho = pi[t, a] / mu[a]
                rho_bar = min(self.c, rho)
                # (rho - c) / rho written as 1 - c mu / pi so that actions
                # the behavior policy could never take (mu = 0, rho = inf)
                # get the limiting weight 1 instead of nan
                with np.errstate(divide="ignore"):
                    rho_hat = np.maximum(0.0, 1.0 - self.c * mu / pi[t])
                adv = q[t] - ret.v[t]
                weights.append({
                    "belief": tr.belief,
                    "action": a,
                    "w_taken": rho_bar * ret.a_ret[t],
                    "w_corr": pi[t] * rho_hat * adv,
                    "q_ret": ret.q_ret[t],
                    "rho": rho,
                })
        return weights

    def _forward_steps(self, weights, train=False, rng=None):
        beliefs = np.stack([w["belief"] for w in weights])
        return self.online.forward(beliefs, train=train, rng=rng)

    def policy_objective(self, weights) -> float:
        """Scalar maximisation objective with frozen weights: mean over
        steps of w_taken * log pi(a) + sum_a w_corr(a) * log pi(a)
        plus the entropy bonus."""
        out = self._forward_steps(weights)
        pi = out["policy"]
        logp = np.log(pi)
        total = 0.0
        for i, w in enumerate(weights):
            total += w["w_taken"] * logp[i, w["action"]]
            total += float(np.dot(w["w_corr"], logp[i]))
            total += self.entropy_coef * float(-np.sum(pi[i] * logp[i]))
        return total / len(weights)

    def _policy_logit_grads(self, pi, weights):
        """Per-step ascent gradient of the policy objective at the logits
        (not yet averaged)."""
        n, n_act = pi.shape
        g = np.zeros_like(pi)
        for i, w in enumerate(weights):
            onehot = np.zeros(n_act)
            onehot[w["action"]] = 1.0
            g[i] = w["w_taken"] * (onehot - pi[i])
            g[i] += w["w_corr"] - pi[i] * w["w_corr"].sum()
        g += self.entropy_coef * _entropy_grad(pi)
        return g

    def policy_gradient(self, episodes, weights=None) -> dict:
        """Ascent gradient of the policy objective (truncation, bias
        correction, entropy bonus) w.r.t. all parameters; no trust-region
        projection here."""
        if weights is None:
            weights = self.policy_loss_weights(episodes)
        out = self._forward_steps(weights)
        g_logits = self._policy_logit_grads(out["policy"], weights)
        return self.online.backward({"logits": g_logits / len(weights)})

    def critic_loss(self, weights) -> float:
        out = self._forward_steps(weights)
        q = out["q"]
        err = np.array([q[i, w["action"]] - w["q_ret"]
                        for i, w in enumerate(weights)])
        return float(0.5 * np.mean(err ** 2))

    def critic_gradient(self, episodes, weights=None) -> dict:
        """Descent gradient of 0.5 * mean (Q_ret - Q)^2, Q_ret frozen."""
        if weights is None:
            weights = self.policy_loss_weights(episodes)
        out = self._forward_steps(weights)
        q = out["q"]
        dq = np.zeros_like(q)
        for i, w in enumerate(weights):
            dq[i, w["action"]] = (q[i, w["action"]] - w["q_ret"]) / len(weights)
        return self.online.backward({"q": dq})

    # -- training ------------------------------------------------------------

    def train_step(self, buffer: ReplayBuffer, rng: np.random.Generator):
        """One iteration: sample episodes (transition throughput matched to
        the DQN batch size), Retrace, projected policy gradient plus critic
        gradient, one Adam step, soft update of the average network.
        Returns a diagnostics dict, or None when the buffer is not ready."""
        mean_len = buffer.mean_episode_length()
        if mean_len == 0.0:
            return None
        k = max(1, math.ceil(self.batch_size / mean_len))
        episodes = buffer.sample_episodes(k, rng)
        if episodes is None:
            return None

        weights = self.policy_loss_weights(episodes)
        n = len(weights)
        beliefs = np.stack([w["belief"] for w in weights])
        pi_avg = self.average.forward(beliefs)["policy"]

        out = self.online.forward(beliefs, train=True, rng=rng)
        pi, q = out["policy"], out["q"]
        g_logits = self._policy_logit_grads(pi, weights)
        kl_grad = pi - pi_avg  # d/dlogits KL(pi_avg || pi_online)

        z = np.empty_like(g_logits)
        max_kz = 0.0
        for i in range(n):
            z[i] = trpo_project(g_logits[i], kl_grad[i], self.delta)
            max_kz = max(max_kz, float(np.dot(kl_grad[i], z[i])))

        dq = np.zeros_like(q)
        for i, w in enumerate(weights):
            dq[i, w["action"]] = (q[i, w["action"]] - w["q_ret"]) / n
        # descend the critic loss, ascend the projected policy objective
        grads = self.online.backward({"logits": -z / n, "q": dq})
        nets.adam_step(self.online.params, self.adam, grads)
        nets.soft_update_params(self.average.params, self.online.params,
                                self.avg_rate)

        logp = np.log(pi)
        kl = float(np.mean(np.sum(pi_avg * (np.log(pi_avg) - logp), axis=1)))
        err = np.array([q[i, w["action"]] - w["q_ret"]
                        for i, w in enumerate(weights)])
        return {
            "critic_loss": float(0.5 * np.mean(err ** 2)),
            "mean_rho": float(np.mean([w["rho"] for w in weights])),
            "kl": kl,
            "max_ktz": max_kz,
            "n_transitions": n,
        }

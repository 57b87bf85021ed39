"""Handcrafted rule-based dialogue policy (HDC).

A deterministic request/confirm/inform controller over the belief state.
It sees exactly what the learner sees (no access to the hidden goal) and
serves both as the comparison baseline and as the guiding expert for
demonstrations and feedbacks.
"""

from __future__ import annotations

from dataclasses import dataclass

from .env import BeliefState, act_confirm, act_inform, act_request


@dataclass(frozen=True)
class ExpertThresholds:
    theta_known: float = 0.3
    theta_confirm: float = 0.8

    def __post_init__(self):
        if not 0.0 < self.theta_known < self.theta_confirm < 1.0:
            raise ValueError("need 0 < theta_known < theta_confirm < 1")


def expert_act(belief: BeliefState, thresholds: ExpertThresholds = ExpertThresholds()) -> int:
    """Priority rules, deterministic given the belief:

    1. any slot whose top value mass < theta_known -> Request it
       (lowest mass first, lowest index breaks ties);
    2. else any slot with top mass < theta_confirm -> Confirm it
       (same ordering);
    3. else Inform (presents the matching entity and answers pending
       requests; the environment ends the dialogue once the goal is
       fully served, so no explicit Bye is ever needed).
    """
    domain = belief.domain
    masses = [belief.top_value(i)[1] for i in range(domain.n_constraint_slots)]

    below_known = [(m, i) for i, m in enumerate(masses) if m < thresholds.theta_known]
    if below_known:
        return act_request(min(below_known)[1])

    below_confirm = [(m, i) for i, m in enumerate(masses) if m < thresholds.theta_confirm]
    if below_confirm:
        return act_confirm(domain, min(below_confirm)[1])

    return act_inform(domain)

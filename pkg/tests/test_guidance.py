"""Expert-guided data collection: controller draws and behavior probs."""

import numpy as np
import pytest

from dilute_rl.guidance import (CONTROLLER_AGENT, CONTROLLER_EXPERT,
                                GuidanceMode, MODE_DEMONSTRATIONS,
                                MODE_FEEDBACKS, behavior_probs_with_expert,
                                select_episode_controller,
                                select_turn_controller)


def test_mode_validation():
    with pytest.raises(ValueError):
        GuidanceMode(kind="teleport")
    with pytest.raises(ValueError):
        GuidanceMode(kind="bc", beta=1.5)


def test_feedback_mixture_pinned_example():
    # agent (0.6, 0.4), beta=0.5, expert picks action 1 -> (0.3, 0.7)
    mode = GuidanceMode(kind=MODE_FEEDBACKS, beta=0.5)
    out = behavior_probs_with_expert(np.array([0.6, 0.4]), 1, mode)
    assert out == pytest.approx([0.3, 0.7], abs=1e-12)


def test_feedback_mixture_is_a_distribution():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(2, 9))
        mu = rng.dirichlet(np.ones(n))
        mode = GuidanceMode(kind=MODE_FEEDBACKS, beta=float(rng.random()))
        out = behavior_probs_with_expert(mu, int(rng.integers(n)), mode)
        assert out.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(out >= 0)


def test_demonstration_episode_is_onehot_on_expert_action():
    mode = GuidanceMode(kind=MODE_DEMONSTRATIONS, beta=0.5)
    out = behavior_probs_with_expert(np.array([0.25, 0.25, 0.5]), 2, mode,
                                     episode_controller=CONTROLLER_EXPERT)
    assert out.tolist() == [0.0, 0.0, 1.0]


def test_agent_controlled_episode_keeps_agent_mu():
    mode = GuidanceMode(kind=MODE_DEMONSTRATIONS, beta=0.5)
    mu = np.array([0.25, 0.25, 0.5])
    out = behavior_probs_with_expert(mu, 2, mode,
                                     episode_controller=CONTROLLER_AGENT)
    assert out == pytest.approx(mu)


def test_controller_frequencies_match_beta():
    # over 10000 draws at beta=0.5 the expert share is 5000 +- 3 sigma
    rng = np.random.default_rng(11)
    mode = GuidanceMode(kind=MODE_DEMONSTRATIONS, beta=0.5)
    n = 10_000
    experts = sum(select_episode_controller(mode, rng) == CONTROLLER_EXPERT
                  for _ in range(n))
    sigma = np.sqrt(n * 0.25)
    assert abs(experts - n * 0.5) <= 3 * sigma


def test_turn_controller_beta_zero_is_always_expert():
    rng = np.random.default_rng(0)
    mode = GuidanceMode(kind=MODE_FEEDBACKS, beta=0.0)
    assert all(select_turn_controller(mode, rng) == CONTROLLER_EXPERT
               for _ in range(100))


def test_controller_selectors_enforce_their_mode():
    rng = np.random.default_rng(0)
    with pytest.raises(RuntimeError):
        select_episode_controller(GuidanceMode(kind=MODE_FEEDBACKS), rng)
    with pytest.raises(RuntimeError):
        select_turn_controller(GuidanceMode(kind=MODE_DEMONSTRATIONS), rng)


def test_behavior_probs_rejects_unnormalized_mu():
    mode = GuidanceMode(kind=MODE_FEEDBACKS, beta=0.5)
    with pytest.raises(ValueError):
        behavior_probs_with_expert(np.array([0.6, 0.6]), 0, mode)

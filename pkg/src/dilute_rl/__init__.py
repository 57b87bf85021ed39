"""Dialogue policy reinforcement learning with stochastic exploration and
expert dilution.

Subpackages:
  nets      minimal feed-forward network engine (exact gradients, Adam)
  env       simulated slot-filling dialogue environment
  expert    handcrafted rule-based policy
  explore   Boltzmann / epsilon-Boltzmann action selection
  replay    episodic experience replay
  dqn       double + dueling DQN learner
  acer      actor-critic with experience replay (Retrace, TRPO projection)
  guidance  expert demonstrations and per-turn feedbacks
  harness   experiment orchestration, metrics, reporting
"""

__version__ = "0.1.0"

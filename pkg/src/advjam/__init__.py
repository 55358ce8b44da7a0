"""Adversarial jamming of DQN-based channel access, with an ensemble defense."""

__version__ = "0.1.0"

"""Reward-free exploration for Block MDPs and regression/RL reductions."""

__version__ = "0.1.0"

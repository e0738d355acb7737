"""Courier dispatch simulation for meal delivery with DQN-family agents."""

__version__ = "0.1.0"

"""Simulation laboratory and scoring engine for cloud-native beacon attribution."""

__version__ = "0.1.0"

"""Simulation and exact verification of a reversible walk in a shell-structured random environment."""
from __future__ import annotations

__version__ = "0.1.0"

"""Desk-scale multi-agent manipulation lab: simulator, agents, and benchmark."""

__version__ = "0.1.0"

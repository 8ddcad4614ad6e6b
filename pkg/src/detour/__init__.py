"""Pathway mechanisms for agents separated by an obstacle."""

__version__ = "0.1.0"

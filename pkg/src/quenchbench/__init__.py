"""Fidelity estimation for analog quantum simulators from quench snapshots."""

__version__ = "0.1.0"

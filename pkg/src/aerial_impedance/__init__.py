"""Adaptive impedance control of a quadrotor with a serial arm, plus its simulation harness."""

__version__ = "0.1.0"

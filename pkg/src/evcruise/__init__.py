"""Longitudinal speed control of an electric vehicle with fixed, GA-scheduled
and neural-network-adapted PID controllers."""

__version__ = "0.1.0"

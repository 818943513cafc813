"""Churn prediction with day-count and churn-vector targets on game event logs."""

__version__ = "0.1.0"

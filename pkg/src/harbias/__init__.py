"""Dataset-bias audit harness for multi-channel time-series activity recognition."""

__version__ = "0.1.0"

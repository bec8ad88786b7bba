"""Adversarial encoder-decoder suffix and remaining-time prediction for event logs."""

__version__ = "0.1.0"

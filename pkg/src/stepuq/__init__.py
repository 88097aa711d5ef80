"""Uncertainty quantification for step-wise verification with a judge LM."""

__version__ = "0.1.0"

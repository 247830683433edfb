"""Adversarial evaluation of social-graph anonymization schemes."""

__version__ = "0.1.0"

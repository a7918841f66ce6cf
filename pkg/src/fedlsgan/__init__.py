"""Federated least-squares GAN scenario generation for renewable power sites."""

__version__ = "0.1.0"

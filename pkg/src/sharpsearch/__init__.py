"""Bayesian hyperparameter search for sharpened binary-activation networks."""

__version__ = "0.1.0"

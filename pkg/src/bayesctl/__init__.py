"""Bayes control of linear discrete-time systems with uniform disturbances
and Pareto priors on their scales."""
__version__ = "0.1.0"

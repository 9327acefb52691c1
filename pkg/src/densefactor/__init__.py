"""Bayes-optimal inference for tensor factorization from sparse p-plet
observations: message passing, state evolution and replica analytics."""

__version__ = "0.1.0"

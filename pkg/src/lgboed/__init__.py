"""Bayesian experimental design criteria for linear-Gaussian state-space models."""

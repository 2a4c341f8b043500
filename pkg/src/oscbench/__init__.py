"""Spectral workbench for the 1-D quantum harmonic oscillator.

Hermite eigenbasis evaluation and overlap quadrature, perturbed
frequency models with nonresonance certification, sparse polynomial
algebra on mode variables, a Birkhoff normal-form engine, a splitting
integrator for the semilinear flow, and a reproducible experiment
pipeline tying them together.
"""

__version__ = "0.1.0"

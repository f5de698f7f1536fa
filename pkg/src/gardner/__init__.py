"""Storage capacity of the spherical perceptron: analytic curves, certified
max-margin feasibility, and Monte Carlo phase-transition checks."""

__version__ = "0.1.0"

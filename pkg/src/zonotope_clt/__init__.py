"""Random lattice zonotopes in cones: Boltzmann sampling, exact moments and limit-theorem checks."""

__version__ = "0.1.0"

"""Quantum-network PDE solver: state-vector circuits trained as PINN trial
functions, with parameter-shift derivatives, Gaussian smoothing, and
evaluation-complexity accounting."""

__version__ = "0.1.0"

"""Heat kernels, fractional flows and Fujita-type blow-up on the Heisenberg group H^1."""

__version__ = "0.1.0"

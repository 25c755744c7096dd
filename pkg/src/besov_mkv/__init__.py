"""Numerical laboratory for alpha-stable McKean-Vlasov SDEs with distributional kernels."""

__version__ = "0.1.0"

"""surfcalc: verification-first surface calculus on evolving 2-surfaces."""

__version__ = "0.1.0"

"""LFR modeling, robust analysis and attitude-gain synthesis for a
two-spacecraft servicing stack."""

__version__ = "0.1.0"

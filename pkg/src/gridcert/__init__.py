"""Frequency-stability certification for mixed machine/converter grids.

Subpackages build a normalized frequency-domain network model, check the
decentralized stability conditions, compute crossover frequencies and
relative stability margins, and cross-validate every certificate against
an independent closed-loop state-space oracle.
"""

__version__ = "0.1.0"

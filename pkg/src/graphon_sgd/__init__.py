"""Projected noisy SGD on symmetric matrices, its reflected-SDE limit and the graphon McKean-Vlasov curve."""

__version__ = "0.1.0"

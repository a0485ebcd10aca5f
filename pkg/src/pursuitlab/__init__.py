"""Tabular multi-agent Q-learning laboratory for predator-prey pursuit
under speed and stamina constraints, with a paired-seed experiment matrix
and exact nonparametric statistics."""

__version__ = "0.1.0"

"""Coherent states, Bogoliubov transformations and mean-field limits of bosonic dynamics."""

__version__ = "0.1.0"

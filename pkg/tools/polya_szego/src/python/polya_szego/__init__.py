"""Rearrangement inequalities for variable-exponent functionals."""

"""Asymptotic analysis of unbalanced quantization.

This package evaluates the hexagonal cell problem and the limit point
densities it induces, rather than solving a single discrete problem.
"""

"""Numerical laboratory for nonlocal jump generators."""

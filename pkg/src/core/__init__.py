"""Numerical core: expressions, random streams, SDE paths and the fixed-point estimators."""

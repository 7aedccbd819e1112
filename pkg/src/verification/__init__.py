"""Admissibility checks, Lyapunov functions and oracle comparison."""

"""
SFPE solver - Monte-Carlo approximation of semilinear Kolmogorov PDEs.

This package provides functionality to:
- Parse coefficient expressions and simulate the underlying SDE
- Estimate v(t, x) with nested Picard iteration and multilevel Picard
- Verify the Lipschitz, coercivity, Lyapunov and growth hypotheses
- Cross-check one-dimensional problems against finite differences
"""

__version__ = "0.1.0"

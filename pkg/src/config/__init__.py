"""Configuration: runtime settings, solver configs and problem files."""

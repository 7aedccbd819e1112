"""Utility modules for logging, console output, and exceptions."""

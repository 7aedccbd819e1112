"""Execution resources: worker pool and host description."""

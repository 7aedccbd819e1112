"""Problem catalog, run records and the drivers behind the CLI."""

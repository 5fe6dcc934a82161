"""Command-line surface, CSV input/output and run services."""

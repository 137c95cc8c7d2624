"""Command-line interface for plane-sweep pose estimation."""

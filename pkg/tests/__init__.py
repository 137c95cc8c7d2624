"""Test package for plane-sweep-pose."""

"""Visibility-volume search for a moving road-bound target."""

__version__ = "0.1.0"

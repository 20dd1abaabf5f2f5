"""Active object tracking laboratory: raycast simulator, A3C tracker, evaluation kit."""

__version__ = "0.1.0"

"""KAM rigidity toolkit for parabolic affine ℤ²-actions on tori."""

__version__ = "0.1.0"

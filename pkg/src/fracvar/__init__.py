"""Variable-order fractional calculus and fractional Herglotz problems."""
__version__ = "0.1.0"

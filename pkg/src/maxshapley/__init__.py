"""Fair attribution of generated answers to retrieved sources."""

__version__ = "0.1.0"

"""Version information for automap."""

__version__ = "0.1.0"

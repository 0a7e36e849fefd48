"""Neural policy gradient and natural policy gradient on tabular MDPs."""

__version__ = "0.1.0"

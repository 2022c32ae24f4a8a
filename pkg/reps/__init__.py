"""Large-margin prototype selection for nearest-neighbour classification."""

__version__ = "0.1.0"

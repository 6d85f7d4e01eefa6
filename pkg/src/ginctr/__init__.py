"""Graph intention network for click-through-rate prediction, in plain numpy."""

__version__ = "0.1.0"

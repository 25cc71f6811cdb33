"""Learning from incomplete data with generative adversarial networks, on plain numpy."""

__version__ = "0.1.0"

"""Hall-effect thruster design toolkit: dataset handling, scaling laws, surrogate models."""

__version__ = "0.1.0"

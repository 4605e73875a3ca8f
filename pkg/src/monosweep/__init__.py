"""Deterministic plane-sweep multi-view stereo guided by monocular depth priors."""

__version__ = "0.1.0"

"""Diffusion-guided training for generalizable face-forgery detectors."""

__version__ = "0.1.0"

"""Desk-scale dual-control latent diffusion pipeline for face video effects."""

__version__ = "0.1.0"

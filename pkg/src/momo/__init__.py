"""Desk-scale motion diffusion: toy text-conditioned denoiser, DDIM inversion,
and zero-shot motion transfer by injecting leader queries against follower
keys/values inside the denoising loop."""

__version__ = "0.1.0"

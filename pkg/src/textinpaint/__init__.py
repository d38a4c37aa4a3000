"""Scene-text synthesis by text-conditioned latent-diffusion inpainting."""

__version__ = "0.1.0"

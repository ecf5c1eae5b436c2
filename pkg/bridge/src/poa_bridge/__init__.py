"""HTTP bridge hosting a latent generator behind the poa wire protocol."""

__version__ = "0.1.0"

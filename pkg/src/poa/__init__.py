"""Proof-of-authorship toolkit for latent-diffusion content.

Binds an author identity and generation parameters to the generator's
starting point through a keyed hash, then settles contested claims with a
tail-probability test over a latent similarity score. Includes a desk-scale
surrogate generator, a forger laboratory, and a CLI.
"""

__version__ = "0.1.0"

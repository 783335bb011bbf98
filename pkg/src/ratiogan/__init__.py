"""GAN training as density-ratio estimation plus f-divergence minimization."""

__version__ = "0.1.0"

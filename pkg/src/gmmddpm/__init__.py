"""DDPM sampling of Gaussian-mixture targets."""

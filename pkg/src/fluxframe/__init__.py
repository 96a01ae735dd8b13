"""Frames of prescribed Jacobian eigenvectors: classification, transport and flux probes."""
__version__ = "0.1.0"

"""Inference of affine state constraints from constrained-LQR demonstrations."""
__version__ = "0.1.0"

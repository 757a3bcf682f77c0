"""Minimal dense-tensor kernel with reverse-mode differentiation."""

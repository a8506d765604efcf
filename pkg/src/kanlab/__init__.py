"""Workbench for KAN-family approximators, attention-weighted PDE training,
and operator learning, built on a small numpy reverse-mode tape."""

__version__ = "0.1.0"

"""Registered solver backends.

``get_backend()`` returns the default (``cvxopt``) unless the environment
variable ``SPHERE_HIERARCHY_BACKEND`` names another registered backend.
"""
import os

from .cvxopt_backend import CvxoptBackend
from .highs_backend import HighsBackend

BACKENDS = {
    "cvxopt": CvxoptBackend,
    "highs": HighsBackend,
}

DEFAULT_BACKEND = "cvxopt"
ENV_VAR = "SPHERE_HIERARCHY_BACKEND"


def default_backend_name():
    return os.environ.get(ENV_VAR, DEFAULT_BACKEND)


def get_backend(name=None, **options):
    """A fresh backend instance (handles are not shared between solves)."""
    if name is None:
        name = default_backend_name()
    if hasattr(name, "solve_standard"):
        return name
    try:
        cls = BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; choose from {sorted(BACKENDS)}") from None
    return cls(**options)


__all__ = ["BACKENDS", "CvxoptBackend", "HighsBackend", "get_backend", "default_backend_name"]

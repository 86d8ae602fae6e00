"""Quadratic latent dynamics: simulators, POD baseline, training and evaluation."""

from ._core import *  # noqa: F401,F403
from ._core import __doc__  # noqa: F401

__version__ = "0.1.0"

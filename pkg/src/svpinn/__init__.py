"""Stochastic weak-norm training of physics-informed networks for elliptic PDEs."""

import jax

jax.config.update("jax_enable_x64", True)

__version__ = "0.1.0"

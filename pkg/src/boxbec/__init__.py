"""Bilinear control of a condensate in a box with a moving wall.

Ground states, non-self-adjoint spectral analysis of the linearization,
genericity certificates by shooting, moment-problem control synthesis,
Newton steering of the nonlinear equation and the map to physical box
trajectories.
"""

from .groundstate import Regime, build_ground_state

__all__ = ["Regime", "build_ground_state"]
__version__ = "0.1.0"

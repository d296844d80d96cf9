"""Bouncing periodic orbits of a radially forced particle outside a wall."""
from __future__ import annotations

__version__ = "0.1.0"

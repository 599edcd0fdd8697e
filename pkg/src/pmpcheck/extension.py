"""Extend maps defined on orthants/half-spaces to full space.

Two constructions:

* cone projection: phi(y) = y + lambda(y) h with
  lambda(y) = max(0, max_i(-y_i / h_i)) for a fixed interior direction h > 0.
  phi maps R^k onto the nonnegative orthant, is the identity on it, is
  positively homogeneous, and moves points by at most a constant times the
  distance to the orthant.  Composing a map with phi extends it without
  changing orthant values.

* reflection in a scalar coordinate: for f defined on y >= 0,
      f~(x, y, z) = f(x, y, z)                      for y >= 0
      f~(x, y, z) = -f(x, -y, z) + 2 f(x, 0, z)     for y < 0
  which matches value and first derivative at y = 0 (C^1 gluing) when f is C^1
  up to the boundary.
"""

from __future__ import annotations

import numpy as np


def cone_lambda(y, h=None) -> float:
    """Smallest t >= 0 with y + t h in the nonnegative orthant."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if h is None:
        h = np.ones_like(y)
    else:
        h = np.asarray(h, dtype=float).reshape(-1)
        if h.shape != y.shape:
            raise ValueError(f"direction shape {h.shape} != point shape {y.shape}")
    if np.any(h <= 0):
        raise ValueError("interior direction h must be strictly positive")
    if y.size == 0:
        return 0.0
    return float(max(0.0, np.max(-y / h)))


def cone_project(y, h=None) -> np.ndarray:
    """phi(y) = y + cone_lambda(y) h; identity on the nonnegative orthant."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if h is None:
        h = np.ones_like(y)
    else:
        h = np.asarray(h, dtype=float).reshape(-1)
    lam = cone_lambda(y, h)
    # clamp roundoff on the active coordinate; the exact image is >= 0
    return np.maximum(y + lam * h, 0.0)


def project_extend(map_on_orthant, x, y, h=None):
    """Evaluate a map defined for y in the nonnegative orthant at arbitrary y
    by first projecting y along h."""
    return map_on_orthant(x, cone_project(y, h))


def reflect_extend(f_on_halfspace, x, y: float, *z):
    """Evaluate f, defined for y >= 0, at arbitrary scalar y by odd reflection
    around the boundary value: -f(x, -y, z) + 2 f(x, 0, z) for y < 0.

    Extra coordinates beyond (x, y) are passed through positionally.
    """
    y = float(y)
    if y >= 0.0:
        return f_on_halfspace(x, y, *z)
    inner = f_on_halfspace(x, -y, *z)
    boundary = f_on_halfspace(x, 0.0, *z)
    return -inner + 2.0 * boundary

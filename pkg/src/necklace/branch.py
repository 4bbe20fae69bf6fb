"""Branch conventions shared by the counting and scattering modules.

Two functions with deliberately non-standard branches live here so that
every module agrees on them:

* ``strict_floor`` -- the largest integer *strictly* below ``t``.  The
  loop-state count uses this convention, so ``strict_floor(2.0) == 1``.
  Plain ``math.floor`` would give 2 at integer points and produce
  right-continuous counts; the counting functions here must be
  left-continuous at their jump energies.

* ``continuous_arctan`` -- the branch of ``arctan(r * tan(theta))`` that
  is continuous in ``theta`` on the whole real line and vanishes at 0.
  The principal branch jumps by pi at ``theta = pi*(k + 1/2)``; gluing
  ``pi * round(theta / pi)`` back on removes those jumps.
"""

from __future__ import annotations

import math

# Relative slack when deciding whether t sits on an integer.  Grid energies
# that should land exactly on a jump are built as (pi*k/s)**2 in floats, so
# the round trip s*sqrt(E)/pi returns k only up to a few ulp.
INTEGER_SNAP_RTOL = 1e-9


def is_near_integer(t: float, rtol: float = INTEGER_SNAP_RTOL) -> bool:
    """True when t lies within relative tolerance rtol of an integer."""
    n = round(t)
    return abs(t - n) <= rtol * max(1.0, abs(t))


def strict_floor(t: float, rtol: float = INTEGER_SNAP_RTOL) -> int:
    """Largest integer strictly smaller than ``t``.

    Values within relative tolerance ``rtol`` of an integer are treated
    as sitting exactly on that integer, so ``strict_floor(2.0 + 1e-13)``
    is 1, not 2.  For everything else this is ``math.floor``.
    """
    n = round(t)
    if abs(t - n) <= rtol * max(1.0, abs(t)):
        return int(n) - 1
    return int(math.floor(t))


def continuous_arctan(theta: float, ratio: float) -> float:
    """Continuous branch of ``arctan(ratio * tan(theta))``.

    Continuous in ``theta``, equal to 0 at 0, to ``pi*k`` at ``theta = pi*k``
    and to ``pi*(k + 1/2)`` at ``theta = pi*(k + 1/2)``.  Implemented as the
    principal argument of ``cos(theta) + i*ratio*sin(theta)`` lifted to the
    2*pi-branch nearest ``theta``.  That lift is exact because the argument
    of the ellipse point never strays from ``theta`` by ``pi/2`` or more;
    counting windings separately (e.g. via floor(theta/pi)) would break at
    half-integer multiples of pi, where float rounding of the quotient can
    disagree with the sign of ``cos(theta)``.
    """
    if ratio <= 0.0:
        raise ValueError("ratio must be positive")
    principal = math.atan2(ratio * math.sin(theta), math.cos(theta))
    return theta + math.remainder(principal - theta, math.tau)

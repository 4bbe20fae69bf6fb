"""Compiled inner loops for long-chain products.

The ensemble module walks chains of 1e5 cells over grids of hundreds of
energies; a plain Python loop is two orders of magnitude too slow for
that.  These kernels mirror the reference implementation in
``ensemble.ChainAccumulator`` step for step: renormalize the propagated
vector every cell, accumulate the log of the removed norms, and advance
the unwrapped projection phase by the anchored branch rule (predicted
single-cell phase plus the nearest-branch correction).

Import of numba is optional; without it ``HAVE_NUMBA`` is False and the
drivers fall back to the reference path, which is slow but identical in
semantics.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        return wrap


GUARD_LIMIT = math.pi - 0.1
TWO_PI = 6.283185307179586


@njit(cache=True, nogil=True)
def wrap_half_turn(x: float) -> float:
    """Reduce x modulo 2*pi into [-pi, pi)."""
    return x - TWO_PI * math.floor(x / TWO_PI + 0.5)


@njit(cache=True, nogil=True)
def chain_stats_free(sqrt_e: float, omegas: np.ndarray, comp: int):
    """Walk one field-free chain; returns (log_norm, log_proj, phase, trips, bad_step).

    comp 0 tracks the first basis vector, comp 1 the second.  bad_step is
    -1 on success, else the index where the product left the finite range.
    """
    em = complex(math.cos(sqrt_e), -math.sin(sqrt_e))
    ep = em.conjugate()
    if comp == 0:
        v0, v1 = complex(1.0, 0.0), complex(0.0, 0.0)
    else:
        v0, v1 = complex(0.0, 0.0), complex(1.0, 0.0)
    log_norm = 0.0
    phase = 0.0
    trips = 0
    for j in range(omegas.shape[0]):
        th = omegas[j] * sqrt_e
        c = math.cos(th)
        s = math.sin(th)
        l00 = em * complex(c, -1.25 * s)
        l01 = complex(0.0, -0.75 * s)
        l10 = complex(0.0, 0.75 * s)
        l11 = ep * complex(c, 1.25 * s)
        w0 = l00 * v0 + l01 * v1
        w1 = l10 * v0 + l11 * v1
        n2 = w0.real * w0.real + w0.imag * w0.imag + w1.real * w1.real + w1.imag * w1.imag
        if not math.isfinite(n2) or n2 <= 0.0:
            return log_norm, 0.0, phase, trips, j
        inv = 1.0 / math.sqrt(n2)
        v0 = w0 * inv
        v1 = w1 * inv
        log_norm += 0.5 * math.log(n2)
        # Expected phase advance of this cell: -sqrt(E) minus the
        # continuous arctangent branch of the loop phase.
        lift = th + wrap_half_turn(math.atan2(1.25 * s, c) - th)
        anchor = -(sqrt_e + lift) if comp == 0 else (sqrt_e + lift)
        predicted = phase + anchor
        p = v0 if comp == 0 else v1
        raw = math.atan2(p.imag, p.real)
        corr = wrap_half_turn(raw - predicted)
        if abs(corr) >= GUARD_LIMIT:
            trips += 1
        phase = predicted + corr
    p = v0 if comp == 0 else v1
    pa = math.sqrt(p.real * p.real + p.imag * p.imag)
    if pa <= 0.0:
        return log_norm, 0.0, phase, trips, omegas.shape[0] - 1
    return log_norm, math.log(pa), phase, trips, -1


@njit(cache=True, nogil=True)
def chain_stats_table(
    cell_index: np.ndarray,
    l00: np.ndarray,
    l01: np.ndarray,
    l10: np.ndarray,
    l11: np.ndarray,
    anchors: np.ndarray,
    comp: int,
):
    """Same walk with per-cell matrices taken from lookup tables.

    Used for atomic arc-length laws in a magnetic field, where each
    distinct arc length has one precomputed cell matrix and anchor.
    """
    if comp == 0:
        v0, v1 = complex(1.0, 0.0), complex(0.0, 0.0)
    else:
        v0, v1 = complex(0.0, 0.0), complex(1.0, 0.0)
    log_norm = 0.0
    phase = 0.0
    trips = 0
    for j in range(cell_index.shape[0]):
        i = cell_index[j]
        w0 = l00[i] * v0 + l01[i] * v1
        w1 = l10[i] * v0 + l11[i] * v1
        n2 = w0.real * w0.real + w0.imag * w0.imag + w1.real * w1.real + w1.imag * w1.imag
        if not math.isfinite(n2) or n2 <= 0.0:
            return log_norm, 0.0, phase, trips, j
        inv = 1.0 / math.sqrt(n2)
        v0 = w0 * inv
        v1 = w1 * inv
        log_norm += 0.5 * math.log(n2)
        anchor = anchors[i] if comp == 0 else -anchors[i]
        predicted = phase + anchor
        p = v0 if comp == 0 else v1
        raw = math.atan2(p.imag, p.real)
        corr = wrap_half_turn(raw - predicted)
        if abs(corr) >= GUARD_LIMIT:
            trips += 1
        phase = predicted + corr
    p = v0 if comp == 0 else v1
    pa = math.sqrt(p.real * p.real + p.imag * p.imag)
    if pa <= 0.0:
        return log_norm, 0.0, phase, trips, cell_index.shape[0] - 1
    return log_norm, math.log(pa), phase, trips, -1

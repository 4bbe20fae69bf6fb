"""Chain products over random necklaces: growth rate and phase density.

For a fixed energy E the chain of loops maps to a product of unit-cell
transfer matrices.  Two ergodic averages of that product carry the
spectral information:

* the growth rate of the matrix product is the Lyapunov exponent
  ``gamma(E)``,
* the winding of the phase of the diagonal projection
  ``<e, product e>`` divided by ``-pi * chain_length`` estimates the
  continuous part of the integrated density of states.

Both are read off one renormalized vector recursion: propagate a unit
vector cell by cell, accumulate the log of the removed norms, and track
the projection phase on a continuous branch.

Branch choice.  The projection phase advances by roughly
``-(sqrt(E) + loop phase)`` per cell, which exceeds pi in magnitude as
soon as sqrt(E) does, so the raw principal increment between
consecutive steps would alias.  Instead each step predicts the advance
by the exact single-cell phase (``scattering.single_loop_phase``, or
its numerically continued magnetic counterpart) and
then corrects with the principal-branch difference between prediction
and the observed projection angle.  Concatenating two chains changes
the phase against the sum of the parts by less than pi/2, so the
correction sits strictly inside (-pi/2, pi/2) and the nearest-branch
choice is exact.  A guard still checks every correction against
pi - 0.1; a violation is counted, warned about, and retried over a
three-cell window in extended precision.

Randomness.  Realization r of an estimate seeded with ``seed`` draws
its arc lengths from the counter-based stream keyed ``(*seed, r)``, so
results are reproducible bit for bit regardless of evaluation order or
worker count.
"""

from __future__ import annotations

import math
import warnings
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels
from .branch import INTEGER_SNAP_RTOL
from .distributions import ArcLengthDistribution, sample_sequence
from .errors import OverflowAbortError, ResonantEnergyError
from .scattering import (
    ScatteringTriple,
    TransferMatrix,
    loop_amplitudes,
    loop_amplitudes_magnetic,
    single_loop_phase,
    single_loop_phase_magnetic,
    transfer_matrix,
    zero_energy_phase,
)

GUARD_LIMIT = _kernels.GUARD_LIMIT
_TWO_PI = _kernels.TWO_PI


def _wrap_half_turn(x: float) -> float:
    # Same reduction the compiled kernels use, so both paths pick
    # identical branches.
    return x - _TWO_PI * math.floor(x / _TWO_PI + 0.5)


@dataclass
class EnsembleEstimate:
    """Mean and standard error of one scalar over independent realizations."""

    mean: float
    std_error: float
    chain_length: int
    samples: np.ndarray

    @property
    def realizations(self) -> int:
        return len(self.samples)


class ChainAccumulator:
    """Reference single-chain state machine.

    Owns a unit direction vector, the accumulated log of removed norms,
    and the unwrapped projection phase.  ``component`` 0 tracks the
    first basis vector (forward-propagating channel), 1 the second.
    This is the semantic ground truth the compiled kernels mirror; use
    it directly for short chains, oracles, and the magnetic fallback.
    """

    def __init__(self, component: int = 0):
        if component not in (0, 1):
            raise ValueError("component must be 0 or 1")
        self.component = component
        self.direction = np.zeros(2, dtype=np.complex128)
        self.direction[component] = 1.0
        self.log_norm_sum = 0.0
        self.unwrapped_phase = 0.0
        self.steps = 0
        self.guard_trips = 0
        self._warned = False
        self._window: deque = deque(maxlen=3)

    def absorb(self, cell, phase_anchor: float = 0.0) -> "ChainAccumulator":
        """Multiply one cell matrix into the chain state.

        ``phase_anchor`` is the predicted phase advance of this cell
        (0 keeps the raw principal increment, which is only safe when
        true advances stay below pi in magnitude).
        """
        m = cell.entries if isinstance(cell, TransferMatrix) else np.asarray(cell)
        v_before = self.direction.copy()
        phase_before = self.unwrapped_phase
        v0, v1 = self.direction[0], self.direction[1]
        w0 = m[0, 0] * v0 + m[0, 1] * v1
        w1 = m[1, 0] * v0 + m[1, 1] * v1
        n2 = (
            w0.real * w0.real
            + w0.imag * w0.imag
            + w1.real * w1.real
            + w1.imag * w1.imag
        )
        if not math.isfinite(n2) or n2 <= 0.0:
            raise OverflowAbortError(self.steps)
        inv = 1.0 / math.sqrt(n2)
        self.direction[0] = w0 * inv
        self.direction[1] = w1 * inv
        self.log_norm_sum += 0.5 * math.log(n2)
        predicted = self.unwrapped_phase + phase_anchor
        p = self.direction[self.component]
        raw = math.atan2(p.imag, p.real)
        corr = _wrap_half_turn(raw - predicted)
        self._window.append((np.asarray(m, dtype=np.complex128), phase_anchor, v_before, phase_before))
        if abs(corr) >= GUARD_LIMIT:
            self.guard_trips += 1
            if not self._warned:
                warnings.warn(
                    "phase increment guard tripped; rechecking over a "
                    "three-cell window in extended precision",
                    RuntimeWarning,
                    stacklevel=2,
                )
                self._warned = True
            self.unwrapped_phase = self._window_phase(predicted + corr)
        else:
            self.unwrapped_phase = predicted + corr
        self.steps += 1
        return self

    def _window_phase(self, fallback: float) -> float:
        """Redo the branch choice over the last three cells in extended precision."""
        if len(self._window) < 3:
            return fallback
        (m1, a1, v1, ph1), (m2, a2, _, _), (m3, a3, _, _) = self._window
        prod = (
            m3.astype(np.clongdouble)
            @ m2.astype(np.clongdouble)
            @ m1.astype(np.clongdouble)
        )
        w = prod @ v1.astype(np.clongdouble)
        p = w[self.component]
        raw = math.atan2(float(p.imag), float(p.real))
        predicted = ph1 + a1 + a2 + a3
        return predicted + _wrap_half_turn(raw - predicted)

    @property
    def log_projection(self) -> float:
        """log |<e, product e>| for the tracked component."""
        pa = abs(self.direction[self.component])
        if pa <= 0.0:
            raise OverflowAbortError(self.steps)
        return self.log_norm_sum + math.log(pa)


def accumulate(acc: ChainAccumulator, cell, phase_anchor: float = 0.0) -> ChainAccumulator:
    """Functional spelling of ChainAccumulator.absorb."""
    return acc.absorb(cell, phase_anchor)


@dataclass(frozen=True)
class ChainStatistics:
    """Joint output of one ensemble run at a single energy."""

    gamma: EnsembleEstimate
    n_tilde: EnsembleEstimate
    guard_trips: int
    chain_length: int


def _seed_key(seed: int | Sequence[int]) -> tuple[int, ...]:
    if isinstance(seed, (int, np.integer)):
        return (int(seed),)
    return tuple(int(x) for x in seed)


_table_cache: dict = {}


def _magnetic_tables(dist: ArcLengthDistribution, energy: float, field: float):
    """Per-atom cell matrices, anchors, and zero-energy offsets (atomic law)."""
    key = (dist, energy, field)
    hit = _table_cache.get(key)
    if hit is not None:
        return hit
    locs = np.array(sorted(s for s, p in dist.atoms if p > 0.0))
    l00 = np.empty(len(locs), dtype=np.complex128)
    l01 = np.empty_like(l00)
    l10 = np.empty_like(l00)
    l11 = np.empty_like(l00)
    anchors = np.empty(len(locs))
    offsets = np.empty(len(locs))
    for i, s in enumerate(locs):
        m = _magnetic_cell(energy, s, field).entries
        l00[i], l01[i], l10[i], l11[i] = m[0, 0], m[0, 1], m[1, 0], m[1, 1]
        anchors[i] = single_loop_phase_magnetic(energy, float(s), field)
        offsets[i] = zero_energy_phase(float(s), field)
    out = (locs, l00, l01, l10, l11, anchors, offsets)
    if len(_table_cache) > 256:
        _table_cache.clear()
    _table_cache[key] = out
    return out


def _magnetic_cell(energy: float, omega: float, field: float) -> TransferMatrix:
    try:
        triple = loop_amplitudes_magnetic(energy, omega, field)
    except ResonantEnergyError:
        energy = energy * (1.0 + 1e-9)
        triple = loop_amplitudes_magnetic(energy, omega, field)
    return transfer_matrix(triple, energy)


def _run_chain(
    dist: ArcLengthDistribution,
    energy: float,
    chain_length: int,
    key: tuple[int, ...],
    field: float,
    component: int,
):
    """One realization; returns (log_proj, phase, phase_offset, trips).

    ``phase_offset`` is the summed zero-energy phase of the sampled
    cells (0 without field); subtracting it from the unwrapped phase
    grounds the counting estimate at the bottom of the spectrum.
    """
    omegas = sample_sequence(dist, chain_length, key).values
    sqrt_e = math.sqrt(energy)
    if _kernels.HAVE_NUMBA and field == 0.0:
        log_norm, log_p, phase, trips, bad = _kernels.chain_stats_free(
            sqrt_e, omegas, component
        )
        if bad >= 0:
            raise OverflowAbortError(bad)
        if trips == 0:
            return log_norm + log_p, phase, 0.0, 0
        warnings.warn(
            f"phase increment guard tripped {trips}x at E={energy!r}; "
            "redoing chain with the extended-precision window",
            RuntimeWarning,
            stacklevel=3,
        )
    if _kernels.HAVE_NUMBA and field != 0.0 and not dist.pieces:
        locs, l00, l01, l10, l11, anchors, offsets = _magnetic_tables(
            dist, energy, field
        )
        idx = np.searchsorted(locs, omegas)
        log_norm, log_p, phase, trips, bad = _kernels.chain_stats_table(
            idx, l00, l01, l10, l11, anchors, component
        )
        if bad >= 0:
            raise OverflowAbortError(bad)
        if trips == 0:
            return log_norm + log_p, phase, float(offsets[idx].sum()), 0
        warnings.warn(
            f"phase increment guard tripped {trips}x at E={energy!r}; "
            "redoing chain with the extended-precision window",
            RuntimeWarning,
            stacklevel=3,
        )
    return _run_chain_reference(omegas, energy, field, component)


def _run_chain_reference(omegas, energy: float, field: float, component: int):
    acc = ChainAccumulator(component)
    offs = 0.0
    sign = 1.0 if component == 0 else -1.0
    if field == 0.0:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for w in omegas:
                cell = transfer_matrix(loop_amplitudes(energy, float(w)), energy)
                acc.absorb(
                    cell, phase_anchor=sign * single_loop_phase(energy, float(w))
                )
    else:
        cells: dict[float, tuple[np.ndarray, float, float]] = {}
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for w in omegas:
                got = cells.get(float(w))
                if got is None:
                    cell = _magnetic_cell(energy, float(w), field)
                    got = (
                        cell.entries,
                        single_loop_phase_magnetic(energy, float(w), field),
                        zero_energy_phase(float(w), field),
                    )
                    if len(cells) < 4096:
                        cells[float(w)] = got
                acc.absorb(got[0], phase_anchor=sign * got[1])
                offs += got[2]
    return acc.log_projection, acc.unwrapped_phase, offs, acc.guard_trips


def chain_statistics(
    dist: ArcLengthDistribution,
    energy: float,
    chain_length: int,
    realizations: int,
    seed: int | Sequence[int],
    field: float = 0.0,
    component: int = 0,
) -> ChainStatistics:
    """Growth rate and phase density from ``realizations`` fresh chains.

    Realization r uses the arc-length stream keyed ``(*seed, r)``.  The
    two estimates come from the same chains, one pass each.
    """
    if energy <= 0.0:
        raise ValueError("energy must be positive")
    if chain_length < 1:
        raise ValueError("chain_length must be at least 1")
    if realizations < 1:
        raise ValueError("realizations must be at least 1")
    key = _seed_key(seed)
    gammas = np.empty(realizations)
    densities = np.empty(realizations)
    trips = 0
    for r in range(realizations):
        log_proj, phase, offs, tr = _run_chain(
            dist, energy, chain_length, key + (r,), field, component
        )
        gammas[r] = log_proj / chain_length
        # Ground the phase at the spectrum bottom (offs = 0 without field),
        # then convert winding to counting; the mirror channel winds the
        # opposite way.
        signed = -(phase - offs) if component == 0 else (phase + offs)
        densities[r] = signed / (math.pi * chain_length)
        trips += tr
    return ChainStatistics(
        gamma=_estimate(gammas, chain_length),
        n_tilde=_estimate(densities, chain_length),
        guard_trips=trips,
        chain_length=chain_length,
    )


def _estimate(samples: np.ndarray, chain_length: int) -> EnsembleEstimate:
    mean = float(np.mean(samples))
    if len(samples) > 1:
        se = float(np.std(samples, ddof=1) / math.sqrt(len(samples)))
    else:
        se = 0.0
    return EnsembleEstimate(
        mean=mean, std_error=se, chain_length=chain_length, samples=samples
    )


def lyapunov(
    dist: ArcLengthDistribution,
    energy: float,
    chain_length: int,
    realizations: int,
    seed: int | Sequence[int],
    field: float = 0.0,
) -> EnsembleEstimate:
    """Lyapunov exponent estimate: growth rate of the chain product.

    Non-negative up to finite-size error; near vanishing exponents the
    estimate can dip a few multiples of 1/chain_length below zero.
    """
    return chain_statistics(
        dist, energy, chain_length, realizations, seed, field
    ).gamma


def phase_density(
    dist: ArcLengthDistribution,
    energy: float,
    chain_length: int,
    realizations: int,
    seed: int | Sequence[int],
    field: float = 0.0,
    component: int = 0,
) -> EnsembleEstimate:
    """Continuous part of the integrated density of states.

    Estimated as -phase/(pi*chain_length) for component 0; the mirrored
    component 1 tracks the conjugate channel, whose negated phase must
    agree and serves as a cross-check.  Tends to 0 as E -> 0+.
    """
    return chain_statistics(
        dist, energy, chain_length, realizations, seed, field, component
    ).n_tilde

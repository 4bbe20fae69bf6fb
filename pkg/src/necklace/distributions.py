"""Arc-length distributions for the random necklace chain.

A necklace realization draws one half-arc length ``omega_j`` per loop,
independently, from a fixed law ``kappa``.  The laws supported here are
finite mixtures of

* point masses ``p_i`` at lengths ``s_i`` (atoms), and
* piecewise-constant densities given as ``(a, b, h)`` pieces, meaning
  density height ``h`` on the interval ``(a, b)``.

Total mass must be 1 and the support must lie in ``(0, K]`` with finite
``K``.  Atoms are what produce jumps of the integrated density of
states; the absolutely continuous part never does.

The central counting quantity is ``expect_step_count``: the expected
number of loop eigenvalues strictly below ``E`` for a single loop,

    integral of strict_floor(omega * sqrt(E) / pi) d kappa(omega),

evaluated in closed form (atom sums plus exact integration of the step
function over each density piece).  It is left-continuous in ``E`` by
the strict-floor convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .branch import INTEGER_SNAP_RTOL, strict_floor

MASS_TOL = 1e-12


@dataclass(frozen=True)
class ArcLengthDistribution:
    """Law of one half-arc length: atoms plus a piecewise-constant density.

    atoms   : tuple of (s, p) with s > 0, p >= 0
    pieces  : tuple of (a, b, h) with 0 < a < b and h >= 0
    """

    atoms: tuple[tuple[float, float], ...] = ()
    pieces: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        atoms = tuple((float(s), float(p)) for s, p in self.atoms)
        pieces = tuple((float(a), float(b), float(h)) for a, b, h in self.pieces)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "pieces", pieces)
        if not atoms and not pieces:
            raise ValueError("distribution needs at least one atom or density piece")
        for s, p in atoms:
            if not s > 0.0:
                raise ValueError(f"atom location {s} must be positive")
            if p < 0.0:
                raise ValueError(f"atom weight {p} must be non-negative")
        values = [s for s, _ in atoms]
        if len(set(values)) != len(values):
            raise ValueError("atom locations must be distinct")
        for a, b, h in pieces:
            if not (0.0 < a < b):
                raise ValueError(f"density piece ({a}, {b}) must satisfy 0 < a < b")
            if h < 0.0:
                raise ValueError(f"density height {h} must be non-negative")
        ordered = sorted(pieces)
        for (_, b0, _), (a1, _, _) in zip(ordered, ordered[1:]):
            if a1 < b0 - 1e-15:
                raise ValueError("density pieces must not overlap")
        mass = sum(p for _, p in atoms) + sum(h * (b - a) for a, b, h in pieces)
        if abs(mass - 1.0) > MASS_TOL:
            raise ValueError(f"total mass {mass!r} differs from 1 by more than {MASS_TOL}")

    # -- constructors -------------------------------------------------

    @classmethod
    def point(cls, s: float) -> "ArcLengthDistribution":
        """Deterministic chain: every loop has half-arc length s."""
        return cls(atoms=((s, 1.0),))

    @classmethod
    def from_atoms(cls, pairs: Sequence[tuple[float, float]]) -> "ArcLengthDistribution":
        return cls(atoms=tuple(pairs))

    @classmethod
    def uniform(cls, a: float, b: float) -> "ArcLengthDistribution":
        """Uniform density on (a, b)."""
        return cls(pieces=((a, b, 1.0 / (b - a)),))

    # -- basic structure ----------------------------------------------

    @property
    def support_sup(self) -> float:
        """Supremum K of the support; all lengths lie in (0, K]."""
        tops = [s for s, p in self.atoms if p > 0.0]
        tops += [b for _, b, h in self.pieces if h > 0.0]
        if not tops:
            tops = [s for s, _ in self.atoms] + [b for _, b, _ in self.pieces]
        return max(tops)

    @property
    def atom_mass(self) -> float:
        return sum(p for _, p in self.atoms)

    def mean(self) -> float:
        m = sum(s * p for s, p in self.atoms)
        m += sum(h * (b * b - a * a) / 2.0 for a, b, h in self.pieces)
        return m


@dataclass(frozen=True)
class SampleSequence:
    """A sampled window of half-arc lengths plus the key that produced it."""

    values: np.ndarray
    seed: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.values)


def _inversion_tables(dist: ArcLengthDistribution):
    """Cumulative-mass table for inverse-CDF sampling.

    Returns (cum, kind, data): cum[i] is the right edge of cell i in mass
    coordinates; kind[i] 0 = atom with value data[i][0], 1 = density piece
    with (a, h) in data[i].
    """
    cum, kind, data = [], [], []
    total = 0.0
    for s, p in dist.atoms:
        if p <= 0.0:
            continue
        total += p
        cum.append(total)
        kind.append(0)
        data.append((s, 0.0))
    for a, b, h in sorted(dist.pieces):
        m = h * (b - a)
        if m <= 0.0:
            continue
        total += m
        cum.append(total)
        kind.append(1)
        data.append((a, h))
    return np.asarray(cum), np.asarray(kind), data


def sample_sequence(
    dist: ArcLengthDistribution,
    count: int,
    seed: int | Sequence[int],
) -> SampleSequence:
    """Draw ``count`` i.i.d. half-arc lengths.

    ``seed`` may be a single integer or a tuple of integers; distinct
    tuples give statistically independent streams, identical tuples
    reproduce the identical array bit for bit.  The generator is
    counter-based (Philox), so reproducibility does not depend on how
    many other streams were drawn or in which order.
    """
    if count < 0:
        raise ValueError("count must be non-negative")
    key = (int(seed),) if isinstance(seed, (int, np.integer)) else tuple(int(x) for x in seed)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
    u = rng.random(count)
    cum, kind, data = _inversion_tables(dist)
    idx = np.searchsorted(cum, u * cum[-1], side="right")
    idx = np.minimum(idx, len(cum) - 1)
    out = np.empty(count, dtype=np.float64)
    left = np.concatenate(([0.0], cum[:-1]))
    for i in range(len(cum)):
        hit = idx == i
        if not np.any(hit):
            continue
        if kind[i] == 0:
            out[hit] = data[i][0]
        else:
            a, h = data[i]
            out[hit] = a + (u[hit] * cum[-1] - left[i]) / h
    return SampleSequence(values=out, seed=key)


def expect_step_count(dist: ArcLengthDistribution, energy: float) -> float:
    """Expected loop-state count below ``energy`` for one loop.

    Closed form of the kappa-integral of strict_floor(omega*sqrt(E)/pi):
    atom terms are exact strict-floor evaluations (snapped to integers
    within relative 1e-9, keeping the function left-continuous at jump
    energies); each density piece integrates the step function exactly
    segment by segment.  Zero for energy <= (pi/K)^2.
    """
    if energy <= 0.0:
        raise ValueError("energy must be positive")
    t = math.sqrt(energy) / math.pi
    total = 0.0
    for s, p in dist.atoms:
        if p > 0.0:
            total += p * max(0, strict_floor(s * t))
    for a, b, h in dist.pieces:
        if h <= 0.0:
            continue
        k_lo = max(1, int(math.floor(a * t)))
        k_hi = int(math.floor(b * t))
        acc = 0.0
        for k in range(k_lo, k_hi + 1):
            lo = max(a, k / t)
            hi = min(b, (k + 1) / t)
            if hi > lo:
                acc += k * (hi - lo)
        total += h * acc
    return total


def atoms_with_integer_ratio(
    dist: ArcLengthDistribution,
    energy: float,
    rtol: float = INTEGER_SNAP_RTOL,
) -> list[tuple[float, float, int]]:
    """Atoms (s, p, k) whose ratio s*sqrt(E)/pi is a positive integer k.

    These are exactly the atoms contributing a jump of the loop-state
    count at ``energy``; the jump size is the sum of their weights.
    Detection uses relative tolerance ``rtol`` on the ratio.
    """
    if energy <= 0.0:
        raise ValueError("energy must be positive")
    t = math.sqrt(energy) / math.pi
    hits = []
    for s, p in dist.atoms:
        if p <= 0.0:
            continue
        ratio = s * t
        k = round(ratio)
        if k >= 1 and abs(ratio - k) <= rtol * max(1.0, ratio):
            hits.append((s, p, int(k)))
    return hits

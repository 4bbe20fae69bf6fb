"""Single-loop scattering data and transfer matrices.

One loop of half-arc length ``omega0`` (two arcs of that length joined
at two vertices) is probed by plane waves ``exp(+-i k x)`` with
``k = sqrt(E)``.  With standard coupling (continuity plus zero sum of
outgoing derivatives) the amplitudes have the closed form implemented
in ``loop_amplitudes``:

    T = -8 exp(i k w) / (exp(2 i k w) - 9)
    R = L = -3 (exp(2 i k w) - 1) / (exp(2 i k w) - 9)

so the loop is never opaque: |T| >= 8/10, with equality only where the
reflection is maximal.  A perpendicular magnetic field threads each
loop; it enters only through a phase twist of the vertex coupling on
the right vertex, and ``loop_amplitudes_magnetic`` recovers the
amplitudes by solving the 6-coefficient wave-matching system built from
the vertex matrices.

``transfer_matrix`` packages amplitudes plus the unit connecting
interval into the 2x2 matrix whose chain products drive the ensemble
module; its determinant is exactly 1 and its trace is real and equals
the band-structure discriminant of the periodic chain
(``hill_discriminant``).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .branch import continuous_arctan, is_near_integer, strict_floor
from .errors import OpaqueLoopError, ResonantEnergyError

# Constructor sanity bound only; closed-form cells are unit-determinant to
# machine precision, solver-built magnetic ones to ~1e-8 near resonances.
_DET_TOL = 1e-6
_OPAQUE_TOL = 1e-14


@dataclass(frozen=True)
class ScatteringTriple:
    """Transmission and the two reflection amplitudes of one scatterer.

    transmission      : amplitude through the scatterer
    reflection_left   : reflection seen by a wave incident from the left
    reflection_right  : reflection seen by a wave incident from the right
    """

    transmission: complex
    reflection_left: complex
    reflection_right: complex

    # Short aliases; T/R/L is the conventional naming for these three.
    @property
    def T(self) -> complex:
        return self.transmission

    @property
    def R(self) -> complex:
        return self.reflection_left

    @property
    def L(self) -> complex:
        return self.reflection_right

    def unitarity_defect(self) -> float:
        """Max deviation of |T|^2+|R|^2 and |T|^2+|L|^2 from 1."""
        t2 = abs(self.transmission) ** 2
        return max(
            abs(t2 + abs(self.reflection_left) ** 2 - 1.0),
            abs(t2 + abs(self.reflection_right) ** 2 - 1.0),
        )


@dataclass(frozen=True)
class TransferMatrix:
    """2x2 complex matrix propagating wave coefficients across one unit cell."""

    entries: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.entries, dtype=np.complex128)
        if m.shape != (2, 2):
            raise ValueError("transfer matrix must be 2x2")
        object.__setattr__(self, "entries", m)
        d = self.det
        if abs(d - 1.0) > _DET_TOL:
            raise ValueError(f"transfer matrix determinant {d!r} is not 1")

    @property
    def det(self) -> complex:
        m = self.entries
        return m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]

    @property
    def trace(self) -> complex:
        return self.entries[0, 0] + self.entries[1, 1]


@dataclass(frozen=True)
class VertexBoundary:
    """Vertex coupling condition A v + B v' = 0 for three meeting bonds.

    ``v`` collects boundary values and ``v'`` outgoing derivatives in the
    order (through-bond, upper arc, lower arc).  Self-adjointness of the
    coupling is equivalent to rank(A|B) = 3 together with A B* Hermitian.
    """

    a_matrix: np.ndarray
    b_matrix: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a_matrix, dtype=np.complex128)
        b = np.asarray(self.b_matrix, dtype=np.complex128)
        if a.shape != (3, 3) or b.shape != (3, 3):
            raise ValueError("vertex matrices must be 3x3")
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "b_matrix", b)

    def is_self_adjoint(self, tol: float = 1e-12) -> bool:
        ab = np.hstack([self.a_matrix, self.b_matrix])
        if np.linalg.matrix_rank(ab, tol=1e-10) != 3:
            return False
        m = self.a_matrix @ self.b_matrix.conj().T
        return bool(np.max(np.abs(m - m.conj().T)) <= tol)


def standard_vertex() -> VertexBoundary:
    """Continuity across all three bonds, outgoing derivatives summing to 0."""
    a = np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0], [0.0, 0.0, 0.0]])
    b = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
    return VertexBoundary(a, b)


def magnetic_vertex(flux: float) -> VertexBoundary:
    """Vertex coupling twisted by a loop flux.

    ``flux`` is the magnetic flux through the loop (field strength times
    enclosed area).  The twist multiplies the two arc slots of the
    standard condition by exp(+-i flux), so a wave crossing the vertex
    from one arc to the other picks up the phase exp(2 i flux); going
    once around the loop therefore costs exp(2 i flux), and a loop bound
    state survives the field exactly when ``flux`` is a multiple of pi.
    The twist is unitary and diagonal, which preserves self-adjointness
    of the coupling; it reduces to ``standard_vertex`` at zero flux.
    """
    base = standard_vertex()
    d = np.diag([1.0, cmath.exp(1j * flux), cmath.exp(-1j * flux)])
    return VertexBoundary(base.a_matrix @ d, base.b_matrix @ d)


def loop_flux(omega0: float, field: float) -> float:
    """Flux through a circular loop of circumference 2*omega0 in field B."""
    return field * omega0 * omega0 / math.pi


def loop_amplitudes(energy: float, omega0: float) -> ScatteringTriple:
    """Closed-form amplitudes of a single field-free loop.

    The loop is mirror symmetric, so both reflections coincide.  At loop
    eigenvalues E = (pi*l/omega0)^2 the reflection vanishes and |T| = 1;
    as E -> 0+ the loop becomes transparent (T -> 1, R -> 0).
    """
    if energy <= 0.0:
        raise ValueError("energy must be positive")
    if omega0 <= 0.0:
        raise ValueError("omega0 must be positive")
    theta = omega0 * math.sqrt(energy)
    z = cmath.exp(2j * theta)
    t = -8.0 * cmath.exp(1j * theta) / (z - 9.0)
    r = -3.0 * (z - 1.0) / (z - 9.0)
    return ScatteringTriple(t, r, r)


def _wave_matching_system(
    energy: float, omega0: float, flux: float, from_left: bool
) -> tuple[np.ndarray, np.ndarray]:
    """Linear system for one scattering solution of the decorated loop.

    Unknowns x = (refl, trans, a+, b+, a-, b-): reflected and transmitted
    amplitudes plus plane-wave coefficients exp(+-i k x) on the two arcs.
    The incident wave exp(-i k y) approaches the left vertex when
    ``from_left`` else the right vertex.  Rows are the two vertex
    conditions A v + B v' = 0 with outgoing derivatives; the left vertex
    keeps the standard coupling, the right one carries the flux twist.
    """
    k = math.sqrt(energy)
    z = cmath.exp(1j * k * omega0)
    zb = z.conjugate()
    left = standard_vertex()
    right = magnetic_vertex(flux)

    # Value and outgoing-derivative coefficient rows for each bond slot,
    # as (coefficients over x, inhomogeneous part from the incident wave).
    def half_line(incident: bool, slot: int):
        co_v = np.zeros(6, dtype=np.complex128)
        co_v[slot] = 1.0
        const_v = 1.0 if incident else 0.0
        co_d = co_v * (1j * k)
        const_d = -1j * k if incident else 0.0
        return (co_v, const_v), (co_d, const_d)

    def arc(sign: int, at_far_end: bool):
        i = 2 if sign > 0 else 4
        co_v = np.zeros(6, dtype=np.complex128)
        co_d = np.zeros(6, dtype=np.complex128)
        if at_far_end:
            co_v[i], co_v[i + 1] = z, zb
            co_d[i], co_d[i + 1] = -1j * k * z, 1j * k * zb  # outgoing = -d/dx
        else:
            co_v[i], co_v[i + 1] = 1.0, 1.0
            co_d[i], co_d[i + 1] = 1j * k, -1j * k
        return (co_v, 0.0), (co_d, 0.0)

    lv, ld = half_line(incident=from_left, slot=0)
    rv, rd = half_line(incident=not from_left, slot=1)
    matrix = np.zeros((6, 6), dtype=np.complex128)
    rhs = np.zeros(6, dtype=np.complex128)
    for row, (vb, bonds) in enumerate(
        [
            (left, [(lv, ld), arc(+1, False), arc(-1, False)]),
            (right, [(rv, rd), arc(+1, True), arc(-1, True)]),
        ]
    ):
        for j in range(3):
            co = np.zeros(6, dtype=np.complex128)
            const = 0.0 + 0.0j
            for slot, ((cv, kv), (cd, kd)) in enumerate(bonds):
                co += vb.a_matrix[j, slot] * cv + vb.b_matrix[j, slot] * cd
                const += vb.a_matrix[j, slot] * kv + vb.b_matrix[j, slot] * kd
            matrix[3 * row + j] = co
            rhs[3 * row + j] = -const
    return matrix, rhs


def _solve_checked(matrix: np.ndarray, rhs: np.ndarray, energy: float) -> np.ndarray:
    try:
        x = np.linalg.solve(matrix, rhs)
    except np.linalg.LinAlgError as exc:
        raise ResonantEnergyError(energy, str(exc)) from None
    if not np.all(np.isfinite(x)):
        raise ResonantEnergyError(energy, "non-finite solution")
    resid = np.max(np.abs(matrix @ x - rhs))
    scale = np.max(np.abs(rhs)) + np.max(np.abs(matrix)) * np.max(np.abs(x))
    if resid > 1e-8 * scale:
        raise ResonantEnergyError(energy, f"residual {resid:.2e}")
    return x


def loop_amplitudes_magnetic(
    energy: float, omega0: float, field: float
) -> ScatteringTriple:
    """Amplitudes of one loop threaded by magnetic field ``field``.

    Solves the wave-matching system for both incidence directions.  At
    zero field this reproduces ``loop_amplitudes`` to solver precision.
    Raises ResonantEnergyError when the system is singular (a loop bound
    state sits exactly at ``energy``); perturb the energy relatively by
    1e-9 and retry in that case.
    """
    if energy <= 0.0:
        raise ValueError("energy must be positive")
    if omega0 <= 0.0:
        raise ValueError("omega0 must be positive")
    flux = loop_flux(omega0, field)
    m, rhs = _wave_matching_system(energy, omega0, flux, from_left=True)
    xl = _solve_checked(m, rhs, energy)
    m, rhs = _wave_matching_system(energy, omega0, flux, from_left=False)
    xr = _solve_checked(m, rhs, energy)
    # Unknown slots are tied to the half-lines: slot 0 left, slot 1 right.
    # Right incidence therefore reflects into slot 1 and transmits into 0.
    if abs(xl[1] - xr[0]) > 1e-7 * (1.0 + abs(xl[1])):
        raise ResonantEnergyError(energy, "transmission not reciprocal")
    # The two transmissions agree exactly in exact arithmetic; averaging
    # suppresses solver noise near resonances.
    t = 0.5 * (complex(xl[1]) + complex(xr[0]))
    triple = ScatteringTriple(t, complex(xl[0]), complex(xr[1]))
    if triple.unitarity_defect() > 1e-8:
        raise ResonantEnergyError(energy, "solution violates unitarity")
    return triple


def transfer_matrix(triple: ScatteringTriple, energy: float) -> TransferMatrix:
    """Unit cell transfer matrix: one loop followed by a unit interval.

    Entries [[exp(-i k)/T, -R/T], [L/T, exp(i k)/conj(T)]] with
    k = sqrt(energy).  Determinant 1; the trace is real and equals the
    discriminant of the periodic chain built from this loop.
    """
    t = triple.transmission
    if abs(t) < _OPAQUE_TOL:
        raise OpaqueLoopError(energy, abs(t))
    k = math.sqrt(energy)
    ph = cmath.exp(-1j * k)
    m = np.array(
        [
            [ph / t, -triple.reflection_left / t],
            [triple.reflection_right / t, ph.conjugate() / t.conjugate()],
        ],
        dtype=np.complex128,
    )
    return TransferMatrix(m)


def loop_face_matrix(triple: ScatteringTriple, energy: float) -> TransferMatrix:
    """Transfer matrix of the bare scatterer, without the unit interval."""
    t = triple.transmission
    if abs(t) < _OPAQUE_TOL:
        raise OpaqueLoopError(energy, abs(t))
    m = np.array(
        [
            [1.0 / t, -triple.reflection_left / t],
            [triple.reflection_right / t, 1.0 / t.conjugate()],
        ],
        dtype=np.complex128,
    )
    return TransferMatrix(m)


def relative_amplitudes(energy: float, s1: float, s0: float) -> ScatteringTriple:
    """Amplitudes of a length-``s1`` loop relative to a length-``s0`` one.

    Built as the matrix quotient of the two bare-loop transfer matrices:
    the matrix mapping the ``s0`` scattering data onto the ``s1`` data.
    Its reflection vanishes exactly when sqrt(E)*(s1 - s0)/pi is an
    integer, which is what makes chains mixing the two lengths
    transparent on that energy set.
    """
    m1 = loop_face_matrix(loop_amplitudes(energy, s1), energy).entries
    m0 = loop_face_matrix(loop_amplitudes(energy, s0), energy).entries
    q = m1 @ np.linalg.inv(m0)
    t = 1.0 / q[0, 0]
    return ScatteringTriple(complex(t), complex(-q[0, 1] * t), complex(q[1, 0] * t))


def relative_reflection(energy: float, s1: float, s0: float) -> complex:
    """Closed form of the relative reflection amplitude.

    Independent route to the reflection entry of ``relative_amplitudes``:
    -3 (e^{2 i s1 k} - e^{2 i s0 k}) / (e^{2 i s1 k} - 9 e^{2 i s0 k}).
    """
    k = math.sqrt(energy)
    z1 = cmath.exp(2j * s1 * k)
    z0 = cmath.exp(2j * s0 * k)
    return -3.0 * (z1 - z0) / (z1 - 9.0 * z0)


def single_loop_phase(energy: float, omega0: float) -> float:
    """Continuous branch of the phase of <e+, Lambda e+> for one cell.

    Equals -sqrt(E) - Arctan((5/4) tan(omega0 sqrt(E))) with the
    continuous arctangent branch.  This is the expected phase advance of
    one chain step and anchors the branch choice during accumulation.
    """
    k = math.sqrt(energy)
    return -k - continuous_arctan(omega0 * k, 1.25)


def _flux_ratio(omega0: float, field: float) -> float:
    return field * omega0 * omega0 / (math.pi * math.pi)


def loop_amplitudes_magnetic_closed(
    energy: float, omega0: float, field: float
) -> ScatteringTriple:
    """Closed-form amplitudes of a flux-threaded loop.

    Independent route to loop_amplitudes_magnetic (which assembles and
    solves the wave-matching system); the two agree to solver precision.
    With w = exp(2 i omega0 sqrt(E)) and Phi the loop flux:

        T     = -8 cos(Phi) e^{i omega0 sqrt(E)} (w - 1) / q(w)
        R = L = -(3 w^2 + (2 - 8 cos 2Phi) w + 3) / q(w)
        q(w)  = w^2 - (2 + 8 cos 2Phi) w + 9

    At zero flux this reduces to loop_amplitudes.  At half-integer flux
    ratio (cos Phi = 0) the two arc paths interfere destructively at
    every energy and the loop is completely opaque.  At integer ratio
    the w = 1 factor cancels against q and the loop stays transparent at
    its eigenvalues; near-integer ratios (within the admissibility snap)
    are evaluated at the exactly integer flux, where that cancellation
    is exact.
    """
    if energy <= 0.0:
        raise ValueError("energy must be positive")
    if omega0 <= 0.0:
        raise ValueError("omega0 must be positive")
    theta = omega0 * math.sqrt(energy)
    w = cmath.exp(2j * theta)
    ratio = _flux_ratio(omega0, field)
    if is_near_integer(ratio):
        # Reduced transparent form; the sign alternates with the parity
        # of the flux ratio.
        sign = -1.0 if round(ratio) % 2 else 1.0
        t = sign * -8.0 * cmath.exp(1j * theta) / (w - 9.0)
        r = -3.0 * (w - 1.0) / (w - 9.0)
        return ScatteringTriple(t, r, r)
    flux = loop_flux(omega0, field)
    c2 = math.cos(2.0 * flux)
    q = w * w - (2.0 + 8.0 * c2) * w + 9.0
    t = -8.0 * math.cos(flux) * cmath.exp(1j * theta) * (w - 1.0) / q
    r = -(3.0 * w * w + (2.0 - 8.0 * c2) * w + 3.0) / q
    return ScatteringTriple(t, r, r)


@lru_cache(maxsize=65536)
def zero_energy_phase(omega0: float, field: float) -> float:
    """Zero-energy limit of the per-cell phase along a chain product.

    The counting estimate reads the winding of the chain phase relative
    to its value at the bottom of the spectrum; this is that per-cell
    base value.  It is 0 without field.  With flux the cell's dominant
    eigenvalue at E -> 0+ is real with the sign of
    h0 = 2 (omega0 + sin^2 Phi)/(omega0 cos Phi), giving a half-turn
    base whenever that sign is negative: -pi for cos Phi < 0, +pi at odd
    integer flux ratios (where the whole cell matrix is the negated
    field-free one).  The representative of the half turn is fixed to
    sit within a half turn of the branch anchor's own zero-energy limit,
    so accumulated phase and subtracted base always agree.
    """
    if field == 0.0:
        return 0.0
    ratio = _flux_ratio(omega0, field)
    if is_near_integer(ratio):
        return math.pi if round(ratio) % 2 else 0.0
    return -math.pi if math.cos(loop_flux(omega0, field)) < 0.0 else 0.0


@lru_cache(maxsize=65536)
def single_loop_phase_magnetic(energy: float, omega0: float, field: float) -> float:
    """Continuous-in-energy per-cell phase anchor for a flux-threaded loop.

    Closed form.  The denominator q of the magnetic amplitudes factors
    over roots w1, w2 with |w1 w2| = 9 and both moduli > 1 away from
    integer flux ratios, so each factor arg(1 - e^{2 i theta}/w_i) stays
    in the open right half plane and its principal value is continuous
    in energy.  The anchor

        pi/2 sign(cos Phi) - sqrt(E) - 2 theta + sum of those args

    starts at the zero-energy quarter turn and tracks the Bloch phase of
    the periodic chain built from this loop: when the field detunes a
    loop eigenvalue into a narrow resonant band, the near-unit root w1
    drives a localized drop of exactly pi across it, which is how the
    detuned loop states enter the continuous counting function.  (The
    transmission also has a real zero pinned at each detuned loop
    eigenvalue, but a zero of the projection carries no states; its
    half-turn jump is deliberately absent from this branch.)  At integer
    flux ratios the loop stays transparent at its eigenvalues and the
    anchor is the field-free one, lifted by half a turn for odd ratios
    because the cell matrix is the negated field-free one.  Without
    field this equals single_loop_phase.
    """
    if energy <= 0.0:
        raise ValueError("energy must be positive")
    if field == 0.0:
        return single_loop_phase(energy, omega0)
    ratio = _flux_ratio(omega0, field)
    if is_near_integer(ratio):
        lift = math.pi if round(ratio) % 2 else 0.0
        return single_loop_phase(energy, omega0) + lift
    flux = loop_flux(omega0, field)
    k = math.sqrt(energy)
    theta = omega0 * k
    w = cmath.exp(2j * theta)
    c = 2.0 + 8.0 * math.cos(2.0 * flux)
    root = cmath.sqrt(complex(c * c - 36.0))
    w1 = 0.5 * (c - root)
    w2 = 0.5 * (c + root)
    argq = cmath.phase(1.0 - w / w1) + cmath.phase(1.0 - w / w2)
    base = 0.5 * math.pi if math.cos(flux) > 0.0 else -0.5 * math.pi
    return base - k - 2.0 * theta + argq


def spectral_shift(energy: float, omega0: float) -> float:
    """Spectral shift of one decorated loop against the free line.

    -(1/pi) * Arctan((5/4) tan(omega0 sqrt(E))) minus the strict-floor
    loop-state count; the continuous arctangent branch makes this the
    left-continuous version with jumps -1 exactly at loop eigenvalues.
    """
    if energy <= 0.0:
        raise ValueError("energy must be positive")
    theta = omega0 * math.sqrt(energy)
    return -continuous_arctan(theta, 1.25) / math.pi - strict_floor(theta / math.pi)


def hill_discriminant(energy: float, omega0: float) -> float:
    """Band discriminant of the periodic chain with half-arc ``omega0``.

    (9/4) cos(sqrt(E)(omega0+1)) - (1/4) cos(sqrt(E)(omega0-1)); the
    energy lies in a band of the periodic operator iff |H| <= 2.
    """
    k = math.sqrt(energy)
    return 2.25 * math.cos(k * (omega0 + 1.0)) - 0.25 * math.cos(k * (omega0 - 1.0))


def hill_lyapunov(energy: float, omega0: float) -> float:
    """Lyapunov exponent of the periodic chain, straight from the discriminant.

    Zero inside bands; log((|H| + sqrt(H^2 - 4))/2) in gaps.  Serves as
    the independent oracle for the ensemble estimate on point laws.
    """
    h = abs(hill_discriminant(energy, omega0))
    if h <= 2.0:
        return 0.0
    return math.log((h + math.sqrt(h * h - 4.0)) / 2.0)

"""Exception types shared across the package."""

from __future__ import annotations


class ConfigError(ValueError):
    """Invalid run configuration (bad file, bad schema, bad values)."""


class ResonantEnergyError(RuntimeError):
    """The magnetic wave-matching system is singular at this energy.

    Happens on the measure-zero set where a loop bound state sits exactly
    at the probe energy.  Callers retry with a relatively perturbed
    energy (factor 1 + 1e-9).
    """

    def __init__(self, energy: float, detail: str = ""):
        self.energy = energy
        msg = f"resonant energy: wave matching singular at E={energy!r}"
        super().__init__(msg + (f" ({detail})" if detail else ""))


class OpaqueLoopError(RuntimeError):
    """Transmission amplitude too small to form a transfer matrix."""

    def __init__(self, energy: float, magnitude: float):
        self.energy = energy
        super().__init__(
            f"opaque loop: |transmission|={magnitude:.3e} below 1e-14 at E={energy!r}"
        )


class OverflowAbortError(RuntimeError):
    """Chain product left the representable range despite renormalization."""

    def __init__(self, step: int):
        self.step = step
        super().__init__(f"numerical overflow at step {step}")


class CoverageError(ValueError):
    """A spectral curve does not cover enough of the axis for the task."""

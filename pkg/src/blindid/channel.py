"""Block fading Gaussian channel: y = h*c + N with one h per block.

The noise variance is fixed at one, so the per-symbol power P doubles as
the SNR.  Fading models only need to produce a complex coefficient per
block; the decoding side never sees it (the received block carries the
true h for instrumentation only).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np

from blindid.numerics import sample_complex_gaussian


class FadingModel:
    """Base class for per-block fading coefficient distributions."""

    def sample(self, rng: np.random.Generator) -> complex:
        raise NotImplementedError


@dataclass(frozen=True)
class Rayleigh(FadingModel):
    """h circular complex Gaussian with E|h|^2 = 1."""

    def sample(self, rng: np.random.Generator) -> complex:
        return complex(sample_complex_gaussian(rng, 1)[0])


@dataclass(frozen=True)
class FixedCoefficient(FadingModel):
    """Degenerate fading: the same coefficient every block."""

    value: complex

    def __post_init__(self) -> None:
        if not (math.isfinite(self.value.real) and math.isfinite(self.value.imag)):
            raise ValueError(f"fading coefficient must be finite, got {self.value}")

    def sample(self, rng: np.random.Generator) -> complex:
        return complex(self.value)


@dataclass(frozen=True)
class FixedMagnitudeUniformPhase(FadingModel):
    """|h| fixed, phase uniform on [0, 2pi)."""

    magnitude: float

    def __post_init__(self) -> None:
        if not (self.magnitude >= 0.0 and math.isfinite(self.magnitude)):
            raise ValueError(f"magnitude must be finite and >= 0, got {self.magnitude}")

    def sample(self, rng: np.random.Generator) -> complex:
        return self.magnitude * cmath.exp(2j * math.pi * rng.random())


@dataclass(frozen=True)
class TruncatedRayleigh(FadingModel):
    """Rayleigh conditioned on min_power <= |h|^2 <= max_power.

    The bounds apply to the squared magnitude; sampling is by rejection,
    which keeps the conditional law exact.
    """

    min_power: float
    max_power: float
    _max_attempts: int = field(default=1_000_000, repr=False)

    def __post_init__(self) -> None:
        if not (0.0 < self.min_power < self.max_power):
            raise ValueError(
                f"need 0 < min_power < max_power, got "
                f"({self.min_power}, {self.max_power})"
            )

    def sample(self, rng: np.random.Generator) -> complex:
        for _ in range(self._max_attempts):
            h = complex(sample_complex_gaussian(rng, 1)[0])
            if self.min_power <= abs(h) ** 2 <= self.max_power:
                return h
        raise RuntimeError(
            "rejection sampling failed; the conditioning window "
            f"[{self.min_power}, {self.max_power}] has negligible mass"
        )


def sample_fading(model: FadingModel, rng: np.random.Generator) -> complex:
    return model.sample(rng)


@dataclass(frozen=True)
class ReceivedBlock:
    """One channel use: y and the coefficient that produced it.

    ``true_h`` exists for instrumentation (conditional distribution checks,
    genie baselines); decoding logic must never read it.
    """

    y: np.ndarray
    true_h: complex

    def __post_init__(self) -> None:
        arr = np.asarray(self.y, dtype=np.complex128)
        if arr.ndim != 1:
            raise ValueError("received block must be a 1-D complex vector")
        arr.setflags(write=False)
        object.__setattr__(self, "y", arr)


def transmit(
    codeword: np.ndarray,
    h: complex,
    rng: np.random.Generator | None = None,
    *,
    power: float | None = None,
    noise: np.ndarray | None = None,
) -> ReceivedBlock:
    """Send one codeword through the block fading channel.

    ``noise`` is a deterministic test hook; when omitted the noise is drawn
    from ``rng`` as a unit-variance circular complex Gaussian vector.  Pass
    ``power`` to enforce the equal-energy constraint ||c||^2 = n*P.
    """
    c = np.asarray(codeword, dtype=np.complex128).ravel()
    if power is not None:
        energy = float(np.sum(np.abs(c) ** 2))
        if not math.isclose(energy, len(c) * power, rel_tol=1e-9):
            raise ValueError(
                f"power constraint violated: ||c||^2 = {energy:.6g}, "
                f"expected n*P = {len(c) * power:.6g}"
            )
    if noise is None:
        if rng is None:
            raise ValueError("either an rng or an explicit noise vector is required")
        noise_vec = sample_complex_gaussian(rng, len(c))
    else:
        noise_vec = np.asarray(noise, dtype=np.complex128).ravel()
        if noise_vec.shape != c.shape:
            raise ValueError("noise vector length must match the codeword")
    return ReceivedBlock(y=h * c + noise_vec, true_h=complex(h))

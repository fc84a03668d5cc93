"""Analytical error rates as functions of the pairwise correlation level.

For a non-target receiver probing codeword c' while c was sent, with pair
level d = |<c, c'>|^2 / P^2 and channel magnitude |h| = x, the two
receiver statistics follow noncentral chi-squared laws that split the
signal energy by d/n^2:

    2nP |h_hat|^2  ~  chi2(2,     2nP x^2 * (d/n^2))
    2 * mse        ~  chi2(2n-2,  2nP x^2 * (1 - d/n^2))

The statistics are independent given h, so the false-activation rate of
the mse rule is the mse CDF at 2T, and the two-look rule multiplies in
the survival of the estimate look.  Fading-averaged values integrate the
fixed-x expression against the magnitude law.  The spectrum-average rate
weighs levels by A_d/4^n (exact-level masses, which sum to one), and the
Gilbert-Varshamov rate evaluates at the certified level cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from blindid.channel import (
    FadingModel,
    FixedCoefficient,
    FixedMagnitudeUniformPhase,
    Rayleigh,
    TruncatedRayleigh,
)
from blindid.codebook import WeightSpectrum, gv_level_cap, weight_spectrum
from blindid.numerics import (
    DEFAULT_QUADRATURE,
    QuadratureSpec,
    chi2_cdf,
    gauss_legendre_nodes,
    noncentral_chi2_cdf,
)
from blindid.receiver import (
    CalibrationResult,
    DecodingRule,
    MseRule,
    TwoLookRule,
    calibrate_two_look,
    mse_threshold,
)


def _magnitude_quadrature(
    fading: FadingModel, spec: QuadratureSpec
) -> tuple[np.ndarray, np.ndarray]:
    """Nodes x_k and weights w_k with E[f(|h|)] = sum_k w_k f(x_k).

    Degenerate fading collapses to a single unit-weight node; the Rayleigh
    variants use the spec's Gauss-Legendre rule against the magnitude
    density, normalized over the conditioning window.
    """
    if isinstance(fading, FixedCoefficient):
        return np.array([abs(fading.value)]), np.array([1.0])
    if isinstance(fading, FixedMagnitudeUniformPhase):
        return np.array([fading.magnitude]), np.array([1.0])
    if isinstance(fading, Rayleigh):
        x, w = gauss_legendre_nodes(spec, 0.0, spec.x_max)
        return x, w * 2.0 * x * np.exp(-x * x)
    if isinstance(fading, TruncatedRayleigh):
        lo, hi = math.sqrt(fading.min_power), math.sqrt(fading.max_power)
        z = math.exp(-fading.min_power) - math.exp(-fading.max_power)
        x, w = gauss_legendre_nodes(spec, lo, hi)
        return x, w * 2.0 * x * np.exp(-x * x) / z
    raise ValueError(f"unsupported fading model {type(fading).__name__}")


def fading_expectation(
    f: Callable[[np.ndarray], np.ndarray],
    fading: FadingModel,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """E[f(|h|)] under the fading law; f must be vectorized over magnitudes."""
    x, w = _magnitude_quadrature(fading, spec)
    vals = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(vals)):
        raise ValueError("integrand returned non-finite values")
    return float(np.sum(w * np.broadcast_to(vals, x.shape)))


def _rates_for_levels(
    n: int,
    power: float,
    levels: np.ndarray,
    rule: DecodingRule,
    fading: FadingModel,
    spec: QuadratureSpec,
) -> np.ndarray:
    """Fading-averaged false-activation rate per level, vectorized."""
    if not isinstance(rule, (MseRule, TwoLookRule)):
        raise ValueError(f"unsupported decoding rule {type(rule).__name__}")
    levels = np.asarray(levels, dtype=float)
    if np.any((levels < 0) | (levels > n * n)):
        raise ValueError(f"levels must lie in [0, n^2] = [0, {n * n}]")
    x, w = _magnitude_quadrature(fading, spec)
    ratio = (levels / float(n * n))[:, None]
    energy = 2.0 * n * power * (x * x)[None, :]
    accept = noncentral_chi2_cdf(
        2 * n - 2, energy * (1.0 - ratio), 2.0 * rule.threshold
    )
    if isinstance(rule, TwoLookRule):
        gate = 2.0 * n * power * rule.estimate_threshold**2
        accept = accept * (1.0 - noncentral_chi2_cdf(2, energy * ratio, gate))
    return np.clip(accept @ w, 0.0, 1.0)


def type2_rate_at_level(
    n: int,
    power: float,
    level: int,
    rule: DecodingRule,
    fading: FadingModel | None = None,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """False-activation probability of a non-target pair at the given level."""
    fading = fading if fading is not None else Rayleigh()
    return float(
        _rates_for_levels(n, power, np.array([level]), rule, fading, spec)[0]
    )


def type2_rate_gv(
    spectrum: WeightSpectrum,
    M: int,
    power: float,
    rule: DecodingRule,
    fading: FadingModel | None = None,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Rate at the Gilbert-Varshamov level cap: the guarantee a greedy
    codebook of size M can certify."""
    cap = gv_level_cap(spectrum, M)
    return type2_rate_at_level(spectrum.n, power, cap, rule, fading, spec)


def type2_rate_spectrum_avg(
    spectrum: WeightSpectrum,
    power: float,
    rule: DecodingRule,
    fading: FadingModel | None = None,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    mass_cutoff: float = 1e-12,
) -> float:
    """Average rate over the level spectrum: sum_d (A_d/4^n) * rate(d).

    Approximates the expected pairwise rate of a uniformly random pair,
    which is the natural estimate for random codebooks.  Levels carrying
    mass below ``mass_cutoff`` are dropped; the resulting bias is below
    the number of dropped levels times the cutoff.
    """
    fading = fading if fading is not None else Rayleigh()
    masses = spectrum.masses
    keep = masses >= mass_cutoff
    rates = _rates_for_levels(
        spectrum.n, power, spectrum.levels[keep], rule, fading, spec
    )
    return float(np.clip(np.sum(masses[keep] * rates), 0.0, 1.0))


def pat_type1_bound(
    n: int,
    power: float,
    rule: DecodingRule,
    fading: FadingModel | None = None,
    bler: Callable[[float], float] | None = None,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
) -> float:
    """Overall missed-detection bound when the codeword doubles as pilot.

    Integrates P(miss | |h| = x) * (1 - bler(P x^2)) over the fading law:
    a miss only matters when the payload block would have decoded.  For
    the mse rule the miss probability is channel-independent; the
    two-look rule adds the estimate-look failure via inclusion-exclusion
    (the two statistics are independent given h).  ``bler`` defaults to
    zero, which makes every miss count.
    """
    fading = fading if fading is not None else Rayleigh()
    if not isinstance(rule, (MseRule, TwoLookRule)):
        raise ValueError(f"unsupported decoding rule {type(rule).__name__}")
    x, w = _magnitude_quadrature(fading, spec)
    miss_mse = 1.0 - chi2_cdf(2 * n - 2, 2.0 * rule.threshold)
    if isinstance(rule, TwoLookRule):
        gate = 2.0 * n * power * rule.estimate_threshold**2
        weak = noncentral_chi2_cdf(2, 2.0 * n * power * x * x, gate)
        miss = miss_mse + weak * (1.0 - miss_mse)
    else:
        miss = np.full(x.shape, miss_mse)
    if bler is None:
        decodable = np.ones(x.shape)
    else:
        decodable = np.empty(x.shape)
        for i, xi in enumerate(x):
            val = float(bler(power * xi * xi))
            if not (0.0 <= val <= 1.0):
                raise ValueError(f"bler returned {val}, outside [0, 1]")
            decodable[i] = 1.0 - val
    return float(np.clip(np.sum(w * miss * decodable), 0.0, 1.0))


def pat_type2_rate(
    n: int,
    power: float,
    rule: TwoLookRule,
    fading: FadingModel | None = None,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    *,
    level: int | None = None,
    spectrum: WeightSpectrum | None = None,
) -> float:
    """False-activation rate of the pilot-identification stage.

    The integrand factorizes into the mse acceptance times the estimate
    acceptance (independence given h), which is exactly the two-look
    analysis; pass ``level`` for a single pair or ``spectrum`` for the
    random-codebook average.
    """
    if not isinstance(rule, TwoLookRule):
        raise ValueError("the pilot stage is analyzed under the two-look rule")
    if (level is None) == (spectrum is None):
        raise ValueError("pass exactly one of level or spectrum")
    if level is not None:
        return type2_rate_at_level(n, power, level, rule, fading, spec)
    if spectrum.n != n:
        raise ValueError(f"spectrum is for n={spectrum.n}, expected {n}")
    return type2_rate_spectrum_avg(spectrum, power, rule, fading, spec)


@dataclass(frozen=True)
class ErrorBoundReport:
    """Per-level and aggregate type-II rates under both decoding rules.

    ``levels`` carries the spectrum levels above the mass cutoff, aligned
    with ``masses`` (A_d/4^n), ``rates_mse``, and ``rates_twolook``;
    ``gv_level`` is the Gilbert-Varshamov cap used for the gv rates, and
    the avg rates are the spectrum-weighted means.
    """

    n: int
    M: int
    power: float
    lambda1: float
    levels: np.ndarray = field(repr=False)
    masses: np.ndarray = field(repr=False)
    rates_mse: np.ndarray = field(repr=False)
    rates_twolook: np.ndarray = field(repr=False)
    gv_level: int
    gv_rate_mse: float
    gv_rate_twolook: float
    avg_rate_mse: float
    avg_rate_twolook: float
    assumptions: str

    def __post_init__(self) -> None:
        for name in ("rates_mse", "rates_twolook", "masses"):
            arr = getattr(self, name)
            if np.any((arr < 0.0) | (arr > 1.0)):
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in (
            "gv_rate_mse",
            "gv_rate_twolook",
            "avg_rate_mse",
            "avg_rate_twolook",
        ):
            val = getattr(self, name)
            if not (0.0 <= val <= 1.0):
                raise ValueError(f"{name} = {val} outside [0, 1]")
        # Larger overlap means harder rejection under the mse rule; allow
        # quadrature-level jitter.
        if np.any(np.diff(self.rates_mse) < -1e-9):
            raise ValueError("mse-rule rates must be nondecreasing in the level")

    def to_csv(self, path: str | Path) -> None:
        lines = ["d,P_d,lambda2_mse,lambda2_twolook"]
        for lev, m, rm, rt in zip(
            self.levels.tolist(), self.masses, self.rates_mse, self.rates_twolook
        ):
            lines.append(f"{lev},{m:.12g},{rm:.12g},{rt:.12g}")
        Path(path).write_text("\n".join(lines) + "\n")


def build_error_report(
    n: int,
    M: int,
    power: float,
    lambda1: float,
    fading: FadingModel | None = None,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    *,
    spectrum: WeightSpectrum | None = None,
    two_look: TwoLookRule | CalibrationResult | None = None,
    bler_lb: Callable[[float], float] | None = None,
    mass_cutoff: float = 1e-12,
) -> ErrorBoundReport:
    """Evaluate both decoding rules across the level spectrum.

    The mse rule takes the full lambda1 budget; the two-look rule is
    calibrated on the fly (splitting lambda1, using ``bler_lb``) unless an
    explicit rule or calibration result is supplied.  ``spectrum``
    defaults to the exact spectrum for n <= 16 and log-domain beyond.
    """
    fading = fading if fading is not None else Rayleigh()
    if spectrum is None:
        spectrum = weight_spectrum(n, "exact" if n <= 16 else "log_domain")
    if spectrum.n != n:
        raise ValueError(f"spectrum is for n={spectrum.n}, expected {n}")
    base_rule = MseRule(threshold=mse_threshold(n, lambda1))
    if two_look is None:
        calib = calibrate_two_look(n, power, lambda1, fading, bler_lb, spec)
        two_rule = calib.rule
        two_desc = (
            f"two_look=calibrated(T={two_rule.threshold:.6g}, "
            f"h_bar={two_rule.estimate_threshold:.6g}, "
            f"cutoff={calib.weak_fade_cutoff:.6g}, p1<={calib.p1_bound:.3g})"
        )
    elif isinstance(two_look, CalibrationResult):
        two_rule = two_look.rule
        two_desc = (
            f"two_look=calibrated(T={two_rule.threshold:.6g}, "
            f"h_bar={two_rule.estimate_threshold:.6g}, "
            f"cutoff={two_look.weak_fade_cutoff:.6g}, p1<={two_look.p1_bound:.3g})"
        )
    else:
        two_rule = two_look
        two_desc = (
            f"two_look=given(T={two_rule.threshold:.6g}, "
            f"h_bar={two_rule.estimate_threshold:.6g})"
        )

    masses_all = spectrum.masses
    keep = masses_all >= mass_cutoff
    levels = spectrum.levels[keep]
    masses = masses_all[keep]
    rates_mse = _rates_for_levels(n, power, levels, base_rule, fading, spec)
    rates_two = _rates_for_levels(n, power, levels, two_rule, fading, spec)
    cap = gv_level_cap(spectrum, M)
    gv_mse = type2_rate_at_level(n, power, cap, base_rule, fading, spec)
    gv_two = type2_rate_at_level(n, power, cap, two_rule, fading, spec)
    return ErrorBoundReport(
        n=n,
        M=M,
        power=power,
        lambda1=lambda1,
        levels=levels,
        masses=masses,
        rates_mse=rates_mse,
        rates_twolook=rates_two,
        gv_level=cap,
        gv_rate_mse=gv_mse,
        gv_rate_twolook=gv_two,
        avg_rate_mse=float(np.clip(np.sum(masses * rates_mse), 0.0, 1.0)),
        avg_rate_twolook=float(np.clip(np.sum(masses * rates_two), 0.0, 1.0)),
        assumptions=(
            f"fading={fading!r}; mse_rule(T={base_rule.threshold:.6g}, "
            f"lambda1={lambda1:g}); {two_desc}; mass_cutoff={mass_cutoff:g}"
        ),
    )

"""Receiver statistics and identification decisions.

For a hypothesized codeword c and received block y, the receiver forms the
least-squares channel estimate h_hat = <c, y> / (nP) and the residual
energy mse = ||y - h_hat * c||^2.  When c is the transmitted codeword,
2*mse is central chi-squared with 2n-2 degrees of freedom whatever h is,
so thresholding the mse gives exact type-I control without channel
knowledge.  The two-look rule additionally requires |h_hat| >= h_bar,
which suppresses false activations that ride on deep fades; its
calibration splits the type-I budget between the two looks and sizes
h_bar against a fading-averaged bound.

The calibration integral

    integral(u, y) = E[ F_{2, 2nP|h|^2}(y) ; |h| > u ]

has an exact geometric-series form under Rayleigh fading: substituting
t = |h|^2 and expanding the noncentral CDF as a Poisson mixture,

    integral = sum_j (1-r) r^j P(j+1, y/2) Q(j+1, (1+nP) u^2),

with r = nP/(1+nP) and P, Q the regularized incomplete gamma pair.  The
series is what makes the h_bar bisection cheap; truncation error is kept
below 1e-13 absolute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

from blindid.channel import FadingModel, Rayleigh, TruncatedRayleigh
from blindid.codebook import qpsk_to_complex
from blindid.numerics import DEFAULT_QUADRATURE, QuadratureSpec, chi2_inv_cdf


@dataclass(frozen=True)
class ReceiverMetrics:
    """Channel estimate and residual energy for one (codeword, block) pair."""

    h_hat: complex
    mse: float

    def __post_init__(self) -> None:
        if not (self.mse >= 0.0):
            raise ValueError(f"mse must be nonnegative, got {self.mse}")


class DecodingRule:
    """Base class for acceptance regions over receiver metrics."""

    def accepts(self, metrics: ReceiverMetrics) -> bool:
        raise NotImplementedError

    def accept_mask(self, h_hat: np.ndarray, mse: np.ndarray) -> np.ndarray:
        """Vectorized acceptance over aligned metric arrays."""
        raise NotImplementedError


@dataclass(frozen=True)
class MseRule(DecodingRule):
    """Accept iff mse <= threshold (closed region)."""

    threshold: float

    def __post_init__(self) -> None:
        if not (self.threshold > 0.0):
            raise ValueError(f"threshold must be positive, got {self.threshold}")

    def accepts(self, metrics: ReceiverMetrics) -> bool:
        return bool(metrics.mse <= self.threshold)

    def accept_mask(self, h_hat: np.ndarray, mse: np.ndarray) -> np.ndarray:
        return np.asarray(mse) <= self.threshold


@dataclass(frozen=True)
class TwoLookRule(DecodingRule):
    """Accept iff mse <= threshold and |h_hat| >= estimate_threshold."""

    threshold: float
    estimate_threshold: float

    def __post_init__(self) -> None:
        if not (self.threshold > 0.0):
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if not (self.estimate_threshold >= 0.0):
            raise ValueError(
                f"estimate_threshold must be >= 0, got {self.estimate_threshold}"
            )

    def accepts(self, metrics: ReceiverMetrics) -> bool:
        return bool(
            metrics.mse <= self.threshold
            and abs(metrics.h_hat) >= self.estimate_threshold
        )

    def accept_mask(self, h_hat: np.ndarray, mse: np.ndarray) -> np.ndarray:
        return (np.asarray(mse) <= self.threshold) & (
            np.abs(h_hat) >= self.estimate_threshold
        )


def decide(rule: DecodingRule, metrics: ReceiverMetrics) -> bool:
    """True iff the receiver claims the block ("this message is mine")."""
    return rule.accepts(metrics)


def _as_complex_codeword(codeword: np.ndarray, power: float) -> np.ndarray:
    arr = np.asarray(codeword)
    if np.issubdtype(arr.dtype, np.integer):
        return qpsk_to_complex(arr, power)
    return np.asarray(arr, dtype=np.complex128).ravel()


def compute_metrics(
    codeword: np.ndarray, y: np.ndarray, power: float
) -> ReceiverMetrics:
    """Least-squares estimate h_hat = <c, y>/(nP) and mse = ||y - h_hat c||^2.

    ``codeword`` may be given as QPSK symbol indices (converted at ``power``)
    or directly as a complex vector.  The mse satisfies the projection
    identity mse = ||y||^2 - nP |h_hat|^2.
    """
    c = _as_complex_codeword(codeword, power)
    y = np.asarray(y, dtype=np.complex128).ravel()
    if c.shape != y.shape:
        raise ValueError(f"length mismatch: codeword {c.shape[0]}, block {y.shape[0]}")
    n = c.shape[0]
    h_hat = complex(np.vdot(c, y) / (n * power))
    residual = y - h_hat * c
    mse = float(np.real(np.vdot(residual, residual)))
    return ReceiverMetrics(h_hat=h_hat, mse=max(mse, 0.0))


def compute_metrics_batch(
    codewords: np.ndarray, ys: np.ndarray, power: float
) -> tuple[np.ndarray, np.ndarray]:
    """Metrics of every (block, codeword) pair via the projection identity.

    ``codewords`` is (M, n) complex, ``ys`` is (B, n) complex; returns
    (h_hat, mse) arrays of shape (B, M).  Using
    mse = ||y||^2 - nP |h_hat|^2 avoids materializing the (B, M, n)
    residual tensor; tiny negative values from cancellation are clipped.
    """
    c = np.asarray(codewords, dtype=np.complex128)
    y = np.asarray(ys, dtype=np.complex128)
    if c.ndim != 2 or y.ndim != 2 or c.shape[1] != y.shape[1]:
        raise ValueError("expected codewords (M, n) and blocks (B, n)")
    n = c.shape[1]
    h_hat = (y @ c.conj().T) / (n * power)
    energy = np.sum(np.abs(y) ** 2, axis=1, keepdims=True)
    mse = np.maximum(energy - n * power * np.abs(h_hat) ** 2, 0.0)
    return h_hat, mse


def mse_threshold(n: int, lambda1: float) -> float:
    """Threshold T with P(mse > T) = lambda1 for the target receiver.

    T = (inverse chi-squared CDF with 2n-2 dof at 1 - lambda1) / 2; the
    guarantee holds for every fading coefficient.
    """
    if n < 2:
        raise ValueError(f"block length must be >= 2, got {n}")
    if not (0.0 < lambda1 < 1.0):
        raise ValueError(f"lambda1 must be in (0, 1), got {lambda1}")
    return chi2_inv_cdf(2 * n - 2, 1.0 - lambda1) / 2.0


@dataclass(frozen=True)
class CalibrationResult:
    """Outcome of the two-look calibration.

    ``weak_fade_cutoff`` is the |h| split point below which missed
    detections are charged to the payload BLER term; ``p1_bound`` is the
    certified upper bound on the overall type-I rate.
    """

    rule: TwoLookRule
    weak_fade_cutoff: float
    p1_bound: float
    type1_target: float

    def __post_init__(self) -> None:
        if self.p1_bound > self.type1_target + 1e-12:
            raise ValueError(
                f"certificate violated: p1_bound {self.p1_bound} exceeds "
                f"target {self.type1_target}"
            )


class CalibrationInfeasibleError(RuntimeError):
    """No cutoff on the grid admits any estimate threshold within budget."""


def _fading_window(fading: FadingModel) -> tuple[float, float]:
    """(t_min, t_max) window of |h|^2 for the supported fading models."""
    if isinstance(fading, Rayleigh):
        return 0.0, math.inf
    if isinstance(fading, TruncatedRayleigh):
        return fading.min_power, fading.max_power
    raise ValueError(
        "calibration supports Rayleigh or TruncatedRayleigh fading, got "
        f"{type(fading).__name__}"
    )


def calibrate_two_look(
    n: int,
    power: float,
    lambda1: float,
    fading: FadingModel | None = None,
    bler_lb: Callable[[float], float] | None = None,
    spec: QuadratureSpec = DEFAULT_QUADRATURE,
    *,
    mse_budget_fraction: float = 0.5,
    u_grid: np.ndarray | None = None,
    grid_size: int = 200,
    estimate_cap: float | None = None,
) -> CalibrationResult:
    """Size the two-look rule against a type-I budget under known fading.

    The budget lambda1 is split: a fraction ``mse_budget_fraction`` buys
    the mse threshold T (exact, channel-independent), and the remainder b2
    pays for the estimate look.  For each weak-fade cutoff u on a grid of
    fading-magnitude quantiles, the largest h_bar is found (by bisection)
    subject to

        P(|h| <= u) * (1 - bler_lb(P u^2))
          + E[ F_{2, 2nP|h|^2}(2nP h_bar^2) ; |h| > u ]  <=  b2,

    where the first term charges weak-fade misses to payload outages (the
    BLER lower bound is evaluated at the cutoff SNR, which is conservative
    for a nonincreasing BLER) and the second term is the probability that
    a healthy channel produces an estimate below h_bar.  The (u, h_bar)
    pair maximizing h_bar wins, ties going to the smallest u.  h_bar
    saturates at ``estimate_cap`` (default: the quadrature truncation
    radius) when the constraint stops binding.

    ``bler_lb`` defaults to zero (no payload model: every weak-fade miss
    counts).  ``u_grid`` overrides the cutoff grid, e.g. [0.0] forces the
    split point off.  Grid points whose first term already exceeds b2 are
    skipped; if every point is skipped, CalibrationInfeasibleError is
    raised.  The certified p1_bound is the achieved sum plus the mse share.
    """
    if n < 2:
        raise ValueError(f"block length must be >= 2, got {n}")
    if not (0.0 < lambda1 < 1.0):
        raise ValueError(f"lambda1 must be in (0, 1), got {lambda1}")
    if not (0.0 < mse_budget_fraction < 1.0):
        raise ValueError("mse_budget_fraction must be in (0, 1)")
    if power <= 0.0:
        raise ValueError(f"power must be positive, got {power}")
    fading = fading if fading is not None else Rayleigh()
    t_min, t_max = _fading_window(fading)
    window_mass = math.exp(-t_min) - (0.0 if math.isinf(t_max) else math.exp(-t_max))

    b1 = lambda1 * mse_budget_fraction
    b2 = lambda1 - b1
    threshold = chi2_inv_cdf(2 * n - 2, 1.0 - b1) / 2.0
    cap = float(estimate_cap) if estimate_cap is not None else spec.x_max
    if cap <= 0.0:
        raise ValueError("estimate_cap must be positive")

    if u_grid is None:
        q = np.linspace(1e-4, 1.0 - 1e-4, grid_size)
        # Quantiles of |h| under the fading law: invert the Exp(1) tail of
        # |h|^2 restricted to the window.
        t_q = -np.log(math.exp(-t_min) - q * window_mass)
        u = np.sqrt(t_q)
    else:
        u = np.asarray(u_grid, dtype=float).ravel()
        if u.size == 0 or np.any(u < 0.0):
            raise ValueError("u_grid must be nonempty with nonnegative entries")
        u = np.sort(u)

    t_low = np.clip(u * u, t_min, None if math.isinf(t_max) else t_max)
    weak_mass = (math.exp(-t_min) - np.exp(-t_low)) / window_mass

    snr_scale = n * power
    r = snr_scale / (1.0 + snr_scale)
    j_count = max(int(math.ceil(math.log(1e-14) / math.log(r))), 40) + 1
    jj = np.arange(j_count, dtype=np.float64)
    geo = (1.0 - r) * np.power(r, jj)
    # Row-specific series weights: geometric factor times the survival of
    # the window [t_low, t_max] under Gamma(j+1, 1/(1+nP)).
    upper = special.gammaincc(jj + 1.0, (1.0 + snr_scale) * t_low[:, None])
    if not math.isinf(t_max):
        upper = upper - special.gammaincc(jj + 1.0, (1.0 + snr_scale) * t_max)
    series_w = geo * upper / window_mass

    def weak_estimate_prob(h_bar: np.ndarray) -> np.ndarray:
        """E[F_{2, 2nP|h|^2}(2nP h_bar^2); |h| > u] / P(window) per grid row."""
        half_y = snr_scale * np.asarray(h_bar, dtype=float) ** 2
        p_mat = special.gammainc(jj + 1.0, half_y[:, None])
        return np.sum(series_w * p_mat, axis=1)

    first_term = np.empty(u.size)
    for i, ui in enumerate(u):
        val = float(bler_lb(power * ui * ui)) if bler_lb is not None else 0.0
        if not (0.0 <= val <= 1.0):
            raise ValueError(f"bler_lb returned {val}, outside [0, 1]")
        first_term[i] = weak_mass[i] * (1.0 - val)

    feasible = first_term <= b2 + 1e-15
    if not np.any(feasible):
        raise CalibrationInfeasibleError(
            "every cutoff exceeds the estimate-look budget at h_bar = 0; "
            "increase lambda1 or supply a payload BLER model"
        )

    budget = b2 - first_term
    lo = np.zeros(u.size)
    hi = np.full(u.size, min(0.25, cap))
    for _ in range(64):
        grow = feasible & (weak_estimate_prob(hi) <= budget) & (hi < cap)
        if not np.any(grow):
            break
        hi = np.where(grow, np.minimum(hi * 2.0, cap), hi)
    at_cap = feasible & (weak_estimate_prob(np.full(u.size, cap)) <= budget)
    lo = np.where(at_cap, cap, lo)
    active = feasible & ~at_cap
    for _ in range(80):
        if not np.any(active):
            break
        mid = 0.5 * (lo + hi)
        ok = weak_estimate_prob(mid) <= budget
        lo = np.where(active & ok, mid, lo)
        hi = np.where(active & ~ok, mid, hi)
        active = active & ((hi - lo) > 1e-9)

    h_bar = np.where(feasible, lo, -np.inf)
    idx = int(np.argmax(h_bar))
    best = float(h_bar[idx])
    achieved = first_term[idx] + float(
        weak_estimate_prob(np.full(u.size, best))[idx]
    )
    p1_bound = achieved + b1
    return CalibrationResult(
        rule=TwoLookRule(threshold=threshold, estimate_threshold=best),
        weak_fade_cutoff=float(u[idx]),
        p1_bound=p1_bound,
        type1_target=lambda1,
    )

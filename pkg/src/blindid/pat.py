"""Pilot-assisted transmission: identification codeword as pilot.

The payload channel code is never simulated symbol-by-symbol.  A BLER
model maps the true SNR P|h|^2 to a block error probability (defined at
perfect channel estimation), and each trial flips one coin against it
to decide whether the payload would have decoded.  An overall type-I
event is a pilot miss on a decodable trial; false activations happen at
the identification stage and do not involve the payload.

All models are plain callables on linear SNR, so they slot directly
into the two-look calibration as its BLER lower bound.  Trials use the
same per-trial counter streams as the Monte Carlo runner, consumed as
fading, noise, payload coin, then the probe subset.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import special

from blindid.channel import FadingModel
from blindid.codebook import Codebook
from blindid.montecarlo import (
    RateEstimate,
    _average_rate_estimate,
    confidence_interval,
)
from blindid.numerics import sample_complex_gaussian
from blindid.receiver import (
    CalibrationResult,
    DecodingRule,
    MseRule,
    TwoLookRule,
    compute_metrics_batch,
)

_LOG2E = math.log2(math.e)
_BATCH = 1024

PAT_CSV_HEADER = (
    "n,M,P,lambda1,trials,analytic_p1_bound,analytic_p2_avg,"
    "empirical_p1,empirical_p1_low,empirical_p1_high,"
    "empirical_p2,empirical_p2_low,empirical_p2_high"
)


class BlerModel:
    """Block error rate as a function of linear SNR; nonincreasing."""

    def __call__(self, snr_linear: float) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantBler(BlerModel):
    value: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"constant bler must lie in [0, 1], got {self.value}")

    def __call__(self, snr_linear: float) -> float:
        return self.value


@dataclass(frozen=True)
class StepBler(BlerModel):
    """Decodes exactly when the SNR reaches the threshold."""

    threshold_snr_db: float

    def __call__(self, snr_linear: float) -> float:
        return 1.0 if 10.0 * math.log10(snr_linear) < self.threshold_snr_db else 0.0


@dataclass(frozen=True)
class TableBler(BlerModel):
    """Tabulated curve, log-linear in (dB, log bler), clamped outside.

    ``points`` is a sequence of (snr_db, bler) pairs with strictly
    increasing SNR and nonincreasing positive bler; log interpolation
    cannot represent exact zeros.
    """

    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        pts = tuple((float(a), float(b)) for a, b in self.points)
        if not pts:
            raise ValueError("bler table must contain at least one point")
        db = np.array([p[0] for p in pts])
        bl = np.array([p[1] for p in pts])
        if not (np.all(np.isfinite(db)) and np.all(np.isfinite(bl))):
            raise ValueError("bler table entries must be finite")
        if np.any(np.diff(db) <= 0):
            raise ValueError("table SNRs must be strictly increasing")
        if np.any((bl <= 0.0) | (bl > 1.0)):
            raise ValueError("table bler values must lie in (0, 1]")
        if np.any(np.diff(bl) > 0):
            raise ValueError("table bler values must be nonincreasing in SNR")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_db", db)
        object.__setattr__(self, "_log_bler", np.log(bl))

    def __call__(self, snr_linear: float) -> float:
        x = 10.0 * math.log10(snr_linear)
        return float(np.exp(np.interp(x, self._db, self._log_bler)))


@dataclass(frozen=True)
class NormalApproxBler(BlerModel):
    """Finite-blocklength normal approximation for an (N, K) payload code."""

    N: int
    K: int

    def __post_init__(self) -> None:
        if int(self.N) != self.N or int(self.K) != self.K:
            raise ValueError("N and K must be integers")
        if not 1 <= self.K <= self.N:
            raise ValueError(f"need N >= K >= 1, got N={self.N}, K={self.K}")

    def __call__(self, snr_linear: float) -> float:
        if snr_linear <= 0.0:
            return 1.0
        capacity = math.log2(1.0 + snr_linear)
        dispersion = (1.0 - (1.0 + snr_linear) ** -2) * _LOG2E**2
        if dispersion <= 0.0:
            return 1.0 if self.N * capacity < self.K else 0.0
        arg = (self.N * capacity - self.K + 0.5 * math.log2(self.N)) / math.sqrt(
            self.N * dispersion
        )
        return min(max(float(special.ndtr(-arg)), 0.0), 1.0)


def bler_eval(model: BlerModel, snr_linear: float) -> float:
    """Evaluate a BLER model at a positive linear SNR, range-checked."""
    if not (snr_linear > 0.0 and math.isfinite(snr_linear)):
        raise ValueError(f"snr must be positive and finite, got {snr_linear}")
    val = float(model(snr_linear))
    if not 0.0 <= val <= 1.0:
        raise ValueError(f"bler model returned {val}, outside [0, 1]")
    return val


def load_bler_table(path: str | Path) -> TableBler:
    """Read a curve from CSV with header ``snr_db,bler``."""
    lines = [
        ln.strip()
        for ln in Path(path).read_text().splitlines()
        if ln.strip() and not ln.startswith("#")
    ]
    if not lines or lines[0] != "snr_db,bler":
        raise ValueError(f"expected header 'snr_db,bler' in {path}")
    points = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 2:
            raise ValueError(f"malformed table row {ln!r} in {path}")
        points.append((float(parts[0]), float(parts[1])))
    if not points:
        raise ValueError(f"bler table {path} has no data rows")
    return TableBler(points=tuple(points))


@dataclass(frozen=True)
class PatResult:
    """Overall rates of the pilot-identification stage.

    ``p1_overall`` counts pilot misses on payload-decodable trials;
    ``p2_overall`` averages non-target false activations.
    ``calibration`` is carried through when the rule came from the
    two-look calibration, for reporting.
    """

    p1_overall: RateEstimate
    p2_overall: RateEstimate
    calibration: CalibrationResult | None


def _pat_tally(
    codebook: Codebook,
    rule: DecodingRule,
    fading: FadingModel,
    bler: BlerModel,
    master_seed: int,
    k: int | None,
    start: int,
    stop: int,
):
    cfg = codebook.config
    n, M, P = cfg.n, cfg.M, cfg.P
    codewords = codebook.complex_codewords()
    miss_decodable = 0
    event_sum = 0
    event_sq_sum = 0
    y = np.empty((_BATCH, n), dtype=np.complex128)
    decodable = np.empty(_BATCH, dtype=bool)
    cols = np.empty((_BATCH, max(k or 0, 1)), dtype=np.int64)
    for t0 in range(start, stop, _BATCH):
        b = min(_BATCH, stop - t0)
        senders = (t0 + np.arange(b)) % M
        for i in range(b):
            rng = np.random.Generator(
                np.random.Philox(key=[master_seed, t0 + i])
            )
            h = fading.sample(rng)
            y[i] = h * codewords[senders[i]] + sample_complex_gaussian(rng, n)
            snr = P * (h.real * h.real + h.imag * h.imag)
            coin = rng.random()
            decodable[i] = snr > 0.0 and coin >= bler_eval(bler, snr)
            if k is not None:
                off = rng.choice(M - 1, size=k, replace=False)
                cols[i] = (senders[i] + 1 + off) % M
        h_hat, mse = compute_metrics_batch(codewords, y[:b], P)
        accept = rule.accept_mask(h_hat, mse)
        rows = np.arange(b)
        target = accept[rows, senders]
        miss_decodable += int(np.count_nonzero(~target & decodable[:b]))
        if k is None:
            events = accept.sum(axis=1, dtype=np.int64) - target
        else:
            events = accept[rows[:, None], cols[:b]].sum(axis=1, dtype=np.int64)
        event_sum += int(events.sum())
        event_sq_sum += int((events * events).sum())
    return miss_decodable, event_sum, event_sq_sum


def simulate_pat(
    codebook: Codebook,
    rule: DecodingRule | CalibrationResult,
    fading: FadingModel,
    bler: BlerModel,
    trials: int,
    master_seed: int,
    *,
    pair_sample_count: int | None = None,
    workers: int = 1,
) -> PatResult:
    """Simulate pilot identification plus the payload-decodability coin.

    Deterministic for a fixed argument set regardless of ``workers``;
    see the module docstring for the stream discipline.
    """
    calibration = None
    if isinstance(rule, CalibrationResult):
        calibration = rule
        rule = rule.rule
    if not isinstance(rule, (MseRule, TwoLookRule)):
        raise ValueError(f"unsupported decoding rule {type(rule).__name__}")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    if not 0 <= master_seed < 2**64:
        raise ValueError("master_seed must fit in 64 bits")
    M = codebook.config.M
    k = pair_sample_count
    if k is not None and not 1 <= k <= M - 1:
        raise ValueError(
            f"pair_sample_count must lie in [1, M-1] = [1, {M - 1}], got {k}"
        )
    if workers < 1:
        raise ValueError("workers must be at least 1")

    bounds = np.linspace(0, trials, min(workers, trials) + 1).astype(int)
    args = (codebook, rule, fading, bler, master_seed, k)
    if len(bounds) == 2:
        partials = [_pat_tally(*args, 0, trials)]
    else:
        with ProcessPoolExecutor(max_workers=len(bounds) - 1) as pool:
            futures = [
                pool.submit(_pat_tally, *args, int(a), int(b))
                for a, b in zip(bounds[:-1], bounds[1:])
            ]
            partials = [f.result() for f in futures]
    miss = sum(p[0] for p in partials)
    event_sum = sum(p[1] for p in partials)
    event_sq_sum = sum(p[2] for p in partials)

    low, high = confidence_interval(miss, trials)
    p1 = RateEstimate(miss / trials, low, high, miss, trials)
    per_trial = (M - 1) if k is None else k
    p2 = _average_rate_estimate(event_sum, event_sq_sum, trials, per_trial)
    return PatResult(p1_overall=p1, p2_overall=p2, calibration=calibration)


@dataclass(frozen=True)
class PatSweepPoint:
    """One sweep row pairing analytical bounds with a simulation."""

    n: int
    M: int
    power: float
    lambda1: float
    trials: int
    analytic_p1_bound: float
    analytic_p2_avg: float
    simulated: PatResult

    def __post_init__(self) -> None:
        for name in ("analytic_p1_bound", "analytic_p2_avg", "lambda1"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} = {val} outside [0, 1]")
        if self.trials != self.simulated.p1_overall.trials:
            raise ValueError(
                f"configuration mismatch: point says {self.trials} trials, "
                f"simulation ran {self.simulated.p1_overall.trials}"
            )
        calib = self.simulated.calibration
        if calib is not None and not math.isclose(
            calib.type1_target, self.lambda1, rel_tol=1e-12
        ):
            raise ValueError(
                f"configuration mismatch: calibration targeted "
                f"{calib.type1_target}, point says lambda1 = {self.lambda1}"
            )


def pat_report(points) -> str:
    """Join analytical and empirical sweep results into one CSV table."""
    lines = [PAT_CSV_HEADER]
    for pt in points:
        sim = pt.simulated
        lines.append(
            f"{pt.n},{pt.M},{pt.power:g},{pt.lambda1:g},{pt.trials},"
            f"{pt.analytic_p1_bound:.12g},{pt.analytic_p2_avg:.12g},"
            f"{sim.p1_overall.value:.12g},{sim.p1_overall.ci_low:.12g},"
            f"{sim.p1_overall.ci_high:.12g},{sim.p2_overall.value:.12g},"
            f"{sim.p2_overall.ci_low:.12g},{sim.p2_overall.ci_high:.12g}"
        )
    return "\n".join(lines) + "\n"

"""Deterministic Monte Carlo estimation of identification error rates.

Each trial t owns a counter-based random stream keyed by
(master_seed, t), consumed in a fixed order: fading draw, noise draw,
then (in sampled mode) the probe subset.  Scheduling therefore cannot
perturb results: the tallies are integers, integer addition is exact,
and the reduction over worker chunks is ordered, so a run is
bit-identical for a fixed plan regardless of the worker count or batch
size.

Senders rotate round-robin (trial t sends codeword t mod M), which
spreads type-II probes evenly over ordered pairs.  The average type-II
estimate is the mean per-trial acceptance fraction; its interval comes
from the trial-level CLT because decisions within a trial share the
fading draw and are not independent.  Type-I and per-pair counts get
Clopper-Pearson intervals.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from blindid.channel import FadingModel
from blindid.codebook import Codebook
from blindid.numerics import sample_complex_gaussian
from blindid.receiver import DecodingRule, MseRule, TwoLookRule, compute_metrics_batch

_BATCH = 1024
_Z95 = 1.959963984540054

RATES_CSV_HEADER = "n,M,P,lambda1,rule,fading,metric,estimate,ci_low,ci_high,trials"


def confidence_interval(
    successes: int, trials: int, alpha: float = 0.05
) -> tuple[float, float]:
    """Clopper-Pearson two-sided interval for a binomial proportion."""
    if not 0 <= successes <= trials:
        raise ValueError(f"need 0 <= successes <= trials, got {successes}/{trials}")
    if trials == 0:
        raise ValueError("trials must be positive")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    low = 0.0
    if successes > 0:
        low = float(stats.beta.ppf(alpha / 2.0, successes, trials - successes + 1))
    high = 1.0
    if successes < trials:
        high = float(
            stats.beta.ppf(1.0 - alpha / 2.0, successes + 1, trials - successes)
        )
    return low, high


@dataclass(frozen=True)
class RateEstimate:
    """Point estimate with a 95% interval and the raw counts behind it."""

    value: float
    ci_low: float
    ci_high: float
    successes: int
    trials: int

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("an estimate needs at least one evaluation")
        if not 0.0 <= self.ci_low <= self.value <= self.ci_high <= 1.0:
            raise ValueError(
                f"interval [{self.ci_low}, {self.ci_high}] must contain "
                f"{self.value} within [0, 1]"
            )


@dataclass(frozen=True)
class ErrorRates:
    """Empirical type-I and type-II rates for one experiment plan.

    ``type2_max`` is the rate of the worst ordered pair observed
    (``worst_pair`` = (sender index, probe index)); ``type2_avg``
    aggregates all non-target decisions.
    """

    type1: RateEstimate
    type2_max: RateEstimate
    type2_avg: RateEstimate
    worst_pair: tuple[int, int]


@dataclass(frozen=True)
class ExperimentPlan:
    """Immutable description of a Monte Carlo run.

    ``pair_sample_count`` of None probes every non-target receiver each
    trial; an integer k probes a uniform k-subset, which keeps the
    average-rate estimate unbiased while decoupling cost from M.
    ``noise_hook`` replaces the unit-variance complex Gaussian noise
    draw (it receives the trial's rng and the block length); it exists
    for controlled tests and must be a picklable top-level callable if
    used with multiple workers.
    """

    codebook: Codebook
    rule: DecodingRule
    fading: FadingModel
    trials: int
    master_seed: int
    pair_sample_count: int | None = None
    noise_hook: object = None

    def __post_init__(self) -> None:
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 bits")
        if not isinstance(self.rule, (MseRule, TwoLookRule)):
            raise ValueError(
                f"unsupported decoding rule {type(self.rule).__name__}"
            )
        M = self.codebook.config.M
        k = self.pair_sample_count
        if k is not None and not 1 <= k <= M - 1:
            raise ValueError(
                f"pair_sample_count must lie in [1, M-1] = [1, {M - 1}], got {k}"
            )


def _trial_rng(master_seed: int, t: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=[master_seed, t]))


def _tally_range(plan: ExperimentPlan, start: int, stop: int):
    """Integer tallies for trials [start, stop): type-I rejections,
    sum and sum-of-squares of per-trial event counts, per-pair event and
    decision matrices, and per-sender trial counts."""
    cfg = plan.codebook.config
    n, M, P = cfg.n, cfg.M, cfg.P
    codewords = plan.codebook.complex_codewords()
    k = plan.pair_sample_count
    draw_noise = plan.noise_hook or sample_complex_gaussian

    type1_reject = 0
    event_sum = 0
    event_sq_sum = 0
    pair_events = np.zeros((M, M), dtype=np.int64)
    pair_decisions = np.zeros((M, M), dtype=np.int64)
    sender_counts = np.zeros(M, dtype=np.int64)

    y = np.empty((_BATCH, n), dtype=np.complex128)
    cols = np.empty((_BATCH, max(k or 0, 1)), dtype=np.int64)
    for t0 in range(start, stop, _BATCH):
        b = min(_BATCH, stop - t0)
        senders = (t0 + np.arange(b)) % M
        for i in range(b):
            rng = _trial_rng(plan.master_seed, t0 + i)
            h = plan.fading.sample(rng)
            y[i] = h * codewords[senders[i]] + draw_noise(rng, n)
            if k is not None:
                # skip the sender: draw among M-1 offsets, then shift
                off = rng.choice(M - 1, size=k, replace=False)
                cols[i] = (senders[i] + 1 + off) % M
        h_hat, mse = compute_metrics_batch(codewords, y[:b], P)
        accept = plan.rule.accept_mask(h_hat, mse)
        rows = np.arange(b)
        target = accept[rows, senders]
        type1_reject += int(b - np.count_nonzero(target))
        np.add.at(sender_counts, senders, 1)
        if k is None:
            events = accept.sum(axis=1, dtype=np.int64) - target
            # round-robin senders recur with period M, so each sender's
            # trials form a strided slice of the batch
            for off in range(min(M, b)):
                s = int(senders[off])
                pair_events[s] += accept[off::M].sum(axis=0, dtype=np.int64)
        else:
            picked = accept[rows[:, None], cols[:b]]
            events = picked.sum(axis=1, dtype=np.int64)
            flat_senders = np.repeat(senders, k)
            flat_cols = cols[:b].ravel()
            np.add.at(pair_events, (flat_senders, flat_cols), picked.ravel())
            np.add.at(pair_decisions, (flat_senders, flat_cols), 1)
        event_sum += int(events.sum())
        event_sq_sum += int((events * events).sum())
    if k is None:
        pair_decisions = np.repeat(sender_counts[:, None], M, axis=1)
        # the diagonal accumulated target accepts, which are not pairs
        np.fill_diagonal(pair_events, 0)
        np.fill_diagonal(pair_decisions, 0)
    return (
        type1_reject,
        event_sum,
        event_sq_sum,
        pair_events,
        pair_decisions,
        sender_counts,
    )


def _average_rate_estimate(
    event_sum: int, event_sq_sum: int, trials: int, per_trial: int
) -> RateEstimate:
    decisions = trials * per_trial
    value = event_sum / decisions
    # CLT over per-trial fractions; decisions within a trial share h
    mean_sq = event_sq_sum / (trials * per_trial**2)
    var = max(mean_sq - value * value, 0.0) * trials / max(trials - 1, 1)
    se = math.sqrt(var / trials)
    if se > 0.0:
        low = max(value - _Z95 * se, 0.0)
        high = min(value + _Z95 * se, 1.0)
    else:
        # degenerate sample: fall back to a trial-level binomial interval
        all_events = trials if value > 0 else 0
        low, high = confidence_interval(all_events, trials)
        low, high = min(low, value), max(high, value)
    return RateEstimate(value, low, high, event_sum, decisions)


def run_experiment(plan: ExperimentPlan, workers: int = 1) -> ErrorRates:
    """Estimate type-I and type-II rates by simulating the plan.

    ``workers`` only splits the trial range across processes; the
    tallies are integers reduced in a fixed order, so the result does
    not depend on it.
    """
    if workers < 1:
        raise ValueError("workers must be at least 1")
    trials = plan.trials
    bounds = np.linspace(0, trials, min(workers, trials) + 1).astype(int)
    if workers == 1 or len(bounds) == 2:
        partials = [_tally_range(plan, 0, trials)]
    else:
        with ProcessPoolExecutor(max_workers=len(bounds) - 1) as pool:
            futures = [
                pool.submit(_tally_range, plan, int(a), int(b))
                for a, b in zip(bounds[:-1], bounds[1:])
            ]
            partials = [f.result() for f in futures]

    type1_reject = sum(p[0] for p in partials)
    event_sum = sum(p[1] for p in partials)
    event_sq_sum = sum(p[2] for p in partials)
    pair_events = sum(p[3] for p in partials)
    pair_decisions = sum(p[4] for p in partials)

    total_decisions = int(pair_decisions.sum())
    if total_decisions == 0:
        raise RuntimeError("no type-II evaluations occurred")

    t1_low, t1_high = confidence_interval(type1_reject, trials)
    type1 = RateEstimate(
        type1_reject / trials, t1_low, t1_high, type1_reject, trials
    )

    M = plan.codebook.config.M
    probed = pair_decisions > 0
    rates = np.where(probed, pair_events / np.maximum(pair_decisions, 1), -1.0)
    flat = int(np.argmax(rates))
    worst = (flat // M, flat % M)
    w_events = int(pair_events[worst])
    w_decisions = int(pair_decisions[worst])
    w_low, w_high = confidence_interval(w_events, w_decisions)
    type2_max = RateEstimate(
        w_events / w_decisions, w_low, w_high, w_events, w_decisions
    )

    per_trial = (M - 1) if plan.pair_sample_count is None else plan.pair_sample_count
    type2_avg = _average_rate_estimate(event_sum, event_sq_sum, trials, per_trial)
    return ErrorRates(
        type1=type1, type2_max=type2_max, type2_avg=type2_avg, worst_pair=worst
    )


def _rule_label(rule: DecodingRule) -> str:
    if isinstance(rule, TwoLookRule):
        return (
            f"two_look(T={rule.threshold:.10g};"
            f"h_bar={rule.estimate_threshold:.10g})"
        )
    if isinstance(rule, MseRule):
        return f"mse(T={rule.threshold:.10g})"
    return type(rule).__name__


def _fading_label(fading: FadingModel) -> str:
    return repr(fading).replace(", ", ";").replace(" ", "")


def rates_csv_rows(
    plan: ExperimentPlan, rates: ErrorRates, lambda1: float | None = None
) -> list[str]:
    """Serialize one experiment as rows under ``RATES_CSV_HEADER``."""
    cfg = plan.codebook.config
    lam = "" if lambda1 is None else f"{lambda1:g}"
    prefix = (
        f"{cfg.n},{cfg.M},{cfg.P:g},{lam},"
        f"{_rule_label(plan.rule)},{_fading_label(plan.fading)}"
    )
    rows = []
    for metric, est in (
        ("type1", rates.type1),
        ("type2_max", rates.type2_max),
        ("type2_avg", rates.type2_avg),
    ):
        rows.append(
            f"{prefix},{metric},{est.value:.12g},"
            f"{est.ci_low:.12g},{est.ci_high:.12g},{est.trials}"
        )
    return rows

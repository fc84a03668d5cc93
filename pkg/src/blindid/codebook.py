"""QPSK identification codebooks, pairwise correlation levels, and spectra.

A codeword is a length-n vector of symbols k in {0,1,2,3}, transmitted as
sqrt(P) * exp(j*(pi/4 + k*pi/2)), so every codeword has energy n*P exactly.
For two codewords the squared inner product obeys

    |<c, c'>|^2 = P^2 * d,    d = (m0 - m2)^2 + (m1 - m3)^2,

where m_k counts positions with (c_i - c'_i) mod 4 = k.  The integer level
d in [0, n^2] is the only pairwise statistic the receiver analysis needs:
d = n^2 iff the codewords agree up to a global phase, d = 0 iff they are
orthogonal.  This module computes d exactly (the unit symbols are powers of
j, so inner products are Gaussian integers), enumerates the level spectrum
A_d over all 4^n difference vectors, and builds codebooks whose pairwise
levels stay below a cap, either by pure random draws or by greedy
rejection, with the cap certified by a Gilbert-Varshamov counting bound.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import special

# Unit QPSK phasors up to the common exp(j*pi/4) factor: powers of j are
# exact in floating point, which keeps inner products integer-valued.
_PHASE_LUT = np.array([1.0, 1.0j, -1.0, -1.0j], dtype=np.complex128)


class ConstructionBudgetError(RuntimeError):
    """Greedy construction ran out of candidate draws before reaching M.

    ``achieved`` is the number of codewords accepted so far and
    ``partial_symbols`` holds them, one row per codeword.
    """

    def __init__(self, achieved: int, requested: int, partial_symbols: np.ndarray):
        super().__init__(
            f"candidate budget exhausted at size {achieved} < {requested}"
        )
        self.achieved = achieved
        self.requested = requested
        self.partial_symbols = partial_symbols


@dataclass(frozen=True)
class CodeConfig:
    """Block length, codebook size, and per-symbol power (SNR, since the
    noise variance is fixed at one)."""

    n: int
    M: int
    P: float

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"block length n must be an integer >= 2, got {self.n}")
        if int(self.M) != self.M or self.M < 2:
            raise ValueError(f"codebook size M must be an integer >= 2, got {self.M}")
        if not (self.P > 0.0 and math.isfinite(self.P)):
            raise ValueError(f"power P must be positive and finite, got {self.P}")


def _validate_symbols(symbols: np.ndarray) -> np.ndarray:
    arr = np.asarray(symbols)
    if not np.issubdtype(arr.dtype, np.integer):
        if not np.all(arr == np.floor(arr)):
            raise ValueError("symbols must be integers in {0,1,2,3}")
        arr = arr.astype(np.int64)
    if arr.size and (arr.min() < 0 or arr.max() > 3):
        raise ValueError("symbols must lie in {0,1,2,3}")
    return arr.astype(np.uint8)


def qpsk_to_complex(symbols: np.ndarray, power: float) -> np.ndarray:
    """Map symbol indices to complex amplitudes sqrt(P)*exp(j(pi/4 + k pi/2))."""
    if power <= 0.0:
        raise ValueError("power must be positive")
    arr = _validate_symbols(symbols)
    scale = math.sqrt(power / 2.0) * (1.0 + 1.0j)
    return scale * _PHASE_LUT[arr]


def pair_level(a: np.ndarray, b: np.ndarray) -> int:
    """Integer correlation level d = (m0-m2)^2 + (m1-m3)^2 of two codewords.

    m_k counts positions where the symbol difference (a_i - b_i) mod 4
    equals k.  Symmetric, in [0, n^2], and equal to |<c_a, c_b>|^2 / P^2.
    """
    a = _validate_symbols(a).ravel()
    b = _validate_symbols(b).ravel()
    if a.shape != b.shape:
        raise ValueError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    m = np.bincount((a.astype(np.int64) - b.astype(np.int64)) % 4, minlength=4)
    return int((m[0] - m[2]) ** 2 + (m[1] - m[3]) ** 2)


def normalized_pair_level(a: np.ndarray, b: np.ndarray) -> float:
    """pair_level scaled by n^2, i.e. |<c_a, c_b>|^2 / (nP)^2 in [0, 1]."""
    a = np.asarray(a)
    return pair_level(a, b) / float(a.size) ** 2


def _pairwise_level_matrix(symbols: np.ndarray) -> np.ndarray:
    """All-pairs integer levels of the rows of ``symbols``, shape (M, M)."""
    u = _PHASE_LUT[_validate_symbols(symbols)]
    g = u @ u.conj().T
    # Components of g are integer-valued by construction; round kills the
    # accumulated float dust before squaring.
    return (np.rint(g.real) ** 2 + np.rint(g.imag) ** 2).astype(np.int64)


def _levels_against(symbols: np.ndarray, candidate: np.ndarray) -> np.ndarray:
    """Integer level of ``candidate`` against each row of ``symbols``."""
    u = _PHASE_LUT[symbols]
    v = _PHASE_LUT[candidate]
    g = u @ v.conj()
    return (np.rint(g.real) ** 2 + np.rint(g.imag) ** 2).astype(np.int64)


@dataclass(frozen=True)
class Codebook:
    """M codewords of identical energy n*P, stored as symbol rows."""

    config: CodeConfig
    symbols: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arr = _validate_symbols(self.symbols)
        if arr.shape != (self.config.M, self.config.n):
            raise ValueError(
                f"symbols shape {arr.shape} does not match "
                f"(M, n) = ({self.config.M}, {self.config.n})"
            )
        if len(np.unique(arr, axis=0)) != self.config.M:
            raise ValueError("codewords must be distinct")
        arr.setflags(write=False)
        object.__setattr__(self, "symbols", arr)

    def complex_codewords(self) -> np.ndarray:
        """The (M, n) complex codeword matrix at the configured power."""
        return qpsk_to_complex(self.symbols, self.config.P)

    def pairwise_levels(self) -> np.ndarray:
        """The (M, M) integer level matrix; diagonal is n^2."""
        return _pairwise_level_matrix(self.symbols)

    def save(self, path: str | Path) -> None:
        """Write the text format: header line "n M P", then one codeword
        per line as n digits from {0,1,2,3}."""
        cfg = self.config
        lines = [f"{cfg.n} {cfg.M} {cfg.P!r}"]
        lines.extend("".join(str(s) for s in row) for row in self.symbols)
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Codebook":
        text = Path(path).read_text().strip().split("\n")
        if not text or len(text[0].split()) != 3:
            raise ValueError(f"{path}: expected header line 'n M P'")
        n_s, m_s, p_s = text[0].split()
        cfg = CodeConfig(n=int(n_s), M=int(m_s), P=float(p_s))
        rows = [line.strip() for line in text[1:] if line.strip()]
        if len(rows) != cfg.M:
            raise ValueError(f"{path}: header says M={cfg.M} but found {len(rows)} rows")
        if any(len(r) != cfg.n for r in rows):
            raise ValueError(f"{path}: every codeword row must have n={cfg.n} digits")
        try:
            arr = np.array([[int(ch) for ch in r] for r in rows], dtype=np.uint8)
        except ValueError as exc:
            raise ValueError(f"{path}: codeword rows must be digits 0-3") from exc
        return cls(config=cfg, symbols=arr)


@dataclass(frozen=True)
class WeightSpectrum:
    """Distribution of the pairwise level d over all 4^n difference vectors.

    A_d counts the ordered QPSK sequences at level d against a fixed
    reference (the count is reference-independent).  For n <= 16 the counts
    are kept as exact integers; beyond that only log2(A_d) is stored, with
    each level mass accurate to ~1e-10 relative.  ``levels`` lists the d
    with A_d > 0 in increasing order, aligned with ``log2_counts``.
    """

    n: int
    mode: str
    levels: np.ndarray = field(repr=False)
    log2_counts: np.ndarray = field(repr=False)
    exact_counts: dict[int, int] | None = field(default=None, repr=False)

    def __post_init__(self) -> None:
        if self.mode not in ("exact", "log_domain"):
            raise ValueError(f"mode must be 'exact' or 'log_domain', got {self.mode!r}")
        levels = np.asarray(self.levels, dtype=np.int64)
        log2c = np.asarray(self.log2_counts, dtype=np.float64)
        if levels.shape != log2c.shape:
            raise ValueError("levels and log2_counts must align")
        levels.setflags(write=False)
        log2c.setflags(write=False)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "log2_counts", log2c)

    @property
    def counts(self) -> np.ndarray:
        """A_d per level as floats (overflows to inf only past n ~ 500)."""
        return np.exp2(self.log2_counts)

    @property
    def masses(self) -> np.ndarray:
        """A_d / 4^n per level; sums to 1."""
        return np.exp2(self.log2_counts - 2.0 * self.n)

    def suffix_masses(self) -> np.ndarray:
        """N_{levels[i]} / 4^n, the probability of level >= levels[i]."""
        return np.cumsum(self.masses[::-1])[::-1]

    def cumulative(self, d: int) -> float:
        """N_d = number of sequences at level >= d, as a float."""
        i = bisect_left(self.levels.tolist(), d)
        if i >= len(self.levels):
            return 0.0
        return float(np.sum(self.counts[i:][::-1]))

    def cumulative_exact(self, d: int) -> int:
        if self.exact_counts is None:
            raise ValueError("exact cumulative counts require exact mode")
        return sum(a for lev, a in self.exact_counts.items() if lev >= d)

    def csv_lines(self) -> list[str]:
        """Columns d, A_d (exact mode) or log2_A_d (log mode), N_d."""
        lines = []
        if self.mode == "exact":
            lines.append("d,A_d,N_d")
            for lev in self.levels.tolist():
                lines.append(
                    f"{lev},{self.exact_counts[lev]},{self.cumulative_exact(lev)}"
                )
        else:
            lines.append("d,log2_A_d,N_d")
            suffix = np.cumsum(self.counts[::-1])[::-1]
            for lev, l2, nd in zip(self.levels.tolist(), self.log2_counts, suffix):
                lines.append(f"{lev},{l2:.12g},{nd:.12g}")
        return lines

    def to_csv(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.csv_lines()) + "\n")


def weight_spectrum(n: int, mode: str = "exact") -> WeightSpectrum:
    """Level spectrum A_d over compositions (m0,m1,m2,m3) of n.

    Each composition contributes the multinomial n!/(m0!m1!m2!m3!) at
    d = (m0-m2)^2 + (m1-m3)^2.  Exact mode (n <= 16) uses arbitrary
    precision integers; log-domain mode accumulates per-level masses
    through log-gamma and a scaled compensated sum.
    """
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    if mode == "exact":
        if n > 16:
            raise ValueError("exact mode supports n <= 16 only; use log_domain")
        acc: dict[int, int] = {}
        for m0 in range(n + 1):
            for m1 in range(n + 1 - m0):
                for m2 in range(n + 1 - m0 - m1):
                    m3 = n - m0 - m1 - m2
                    d = (m0 - m2) ** 2 + (m1 - m3) ** 2
                    coef = (
                        math.comb(n, m0)
                        * math.comb(n - m0, m1)
                        * math.comb(n - m0 - m1, m2)
                    )
                    acc[d] = acc.get(d, 0) + coef
        levels = np.array(sorted(acc), dtype=np.int64)
        log2c = np.array(
            [math.log2(acc[int(d)]) for d in levels], dtype=np.float64
        )
        return WeightSpectrum(
            n=n, mode="exact", levels=levels, log2_counts=log2c, exact_counts=acc
        )
    if mode != "log_domain":
        raise ValueError(f"mode must be 'exact' or 'log_domain', got {mode!r}")

    grid = np.arange(n + 1)
    m0, m1, m2 = np.meshgrid(grid, grid, grid, indexing="ij", copy=False)
    m0 = m0.ravel()
    m1 = m1.ravel()
    m2 = m2.ravel()
    keep = m0 + m1 + m2 <= n
    m0, m1, m2 = m0[keep], m1[keep], m2[keep]
    m3 = n - m0 - m1 - m2
    d = (m0 - m2) ** 2 + (m1 - m3) ** 2
    lgam = special.gammaln(np.arange(n + 2, dtype=np.float64))
    log_coef = lgam[n + 1] - lgam[m0 + 1] - lgam[m1 + 1] - lgam[m2 + 1] - lgam[m3 + 1]

    order = np.argsort(d, kind="stable")
    d_sorted = d[order]
    lc_sorted = log_coef[order]
    levels, starts = np.unique(d_sorted, return_index=True)
    bounds = np.append(starts, d_sorted.size)
    log2c = np.empty(levels.size, dtype=np.float64)
    inv_ln2 = 1.0 / math.log(2.0)
    for i in range(levels.size):
        seg = lc_sorted[bounds[i] : bounds[i + 1]]
        log2c[i] = special.logsumexp(seg) * inv_ln2
    return WeightSpectrum(
        n=n, mode="log_domain", levels=levels.astype(np.int64), log2_counts=log2c
    )


def gv_level_cap(spectrum: WeightSpectrum, M: int) -> int:
    """Smallest d such that N_{d+1} < 4^n / (M-1).

    A greedy construction that rejects candidates at level > d against any
    accepted codeword can always reach M codewords: each acceptance rules
    out at most N_{d+1} of the 4^n candidates.  Always well defined since
    N_{n^2 + 1} = 0.
    """
    if int(M) != M or M < 2:
        raise ValueError(f"M must be an integer >= 2, got {M}")
    levels = spectrum.levels.tolist()
    if spectrum.exact_counts is not None:
        counts = [spectrum.exact_counts[lev] for lev in levels]
        suffix = [0] * (len(levels) + 1)
        for i in range(len(levels) - 1, -1, -1):
            suffix[i] = suffix[i + 1] + counts[i]
        total = 4**spectrum.n
        for i in range(len(levels) + 1):
            if suffix[i] * (M - 1) < total:
                return 0 if i == 0 else levels[i - 1]
        raise AssertionError("unreachable: empty suffix is always below the bound")
    # Log tier: compare suffix masses against 1/(M-1); relative error of the
    # masses is ~1e-10, far below any gap between distinct spectrum levels.
    suffix_mass = np.append(spectrum.suffix_masses(), 0.0)
    threshold = 1.0 / (M - 1)
    i = int(np.argmax(suffix_mass < threshold))
    if suffix_mass[i] >= threshold:
        raise AssertionError("unreachable: empty suffix is always below the bound")
    return 0 if i == 0 else int(levels[i - 1])


def random_codebook(
    config: CodeConfig, rng: np.random.Generator | int
) -> Codebook:
    """M distinct codewords with iid uniform symbols; rejection on duplicates."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    if math.log(config.M) > config.n * math.log(4.0):
        raise ValueError(f"M={config.M} exceeds the 4^{config.n} available codewords")
    seen: set[bytes] = set()
    rows = []
    budget = 100 * config.M + 100
    while len(rows) < config.M:
        cand = rng.integers(0, 4, size=config.n, dtype=np.uint8)
        key = cand.tobytes()
        if key in seen:
            budget -= 1
            if budget <= 0:
                raise ConstructionBudgetError(
                    len(rows), config.M, np.array(rows, dtype=np.uint8)
                )
            continue
        seen.add(key)
        rows.append(cand)
    return Codebook(config=config, symbols=np.array(rows, dtype=np.uint8))


def greedy_gv_codebook(
    config: CodeConfig,
    level_cap: int,
    rng: np.random.Generator | int,
    attempt_budget: int | None = None,
) -> Codebook:
    """Sequential random construction with rejection above ``level_cap``.

    Draws uniform candidates and accepts one iff its level against every
    already-accepted codeword is <= level_cap.  With level_cap >= the
    Gilbert-Varshamov cap for (n, M) the counting argument guarantees an
    acceptable candidate always exists; the sampling budget (default
    1000*M draws) guards the runs where it does not.  Raises
    ConstructionBudgetError carrying the achieved size on exhaustion.
    The returned codebook is re-verified pair by pair.
    """
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    if not (0 <= level_cap < config.n**2):
        raise ValueError(
            f"level_cap must lie in [0, n^2) = [0, {config.n ** 2}), got {level_cap}"
        )
    if attempt_budget is None:
        attempt_budget = 1000 * config.M
    accepted = np.empty((config.M, config.n), dtype=np.uint8)
    count = 0
    for _ in range(attempt_budget):
        cand = rng.integers(0, 4, size=config.n, dtype=np.uint8)
        if count and int(_levels_against(accepted[:count], cand).max()) > level_cap:
            continue
        accepted[count] = cand
        count += 1
        if count == config.M:
            break
    if count < config.M:
        raise ConstructionBudgetError(count, config.M, accepted[:count].copy())
    book = Codebook(config=config, symbols=accepted)
    ok, worst, pair = check_pairwise(book, level_cap=level_cap)
    if not ok:
        raise AssertionError(
            f"construction invariant violated: pair {pair} at level {worst}"
        )
    return book


def check_pairwise(
    codebook: Codebook | np.ndarray,
    level_cap: int | None = None,
    min_normalized_gap: float | None = None,
    power: float | None = None,
) -> tuple[bool, float, tuple[int, int]]:
    """Validate the pairwise correlation cap; report the worst pair.

    For a symbol codebook, pass ``level_cap`` to require the integer level
    d <= level_cap on every distinct ordered pair; the returned worst level
    is the integer max.  For a generic complex codebook (array of shape
    (M, n)), pass ``min_normalized_gap`` = rho to require
    |<c_i,c_j>|^2/(nP)^2 <= 1 - rho, with ``power`` = P; the worst level is
    then the normalized maximum.  Exactly one of the two caps must be given.
    """
    if (level_cap is None) == (min_normalized_gap is None):
        raise ValueError("pass exactly one of level_cap or min_normalized_gap")
    if isinstance(codebook, Codebook):
        if min_normalized_gap is not None:
            mat = codebook.pairwise_levels() / float(codebook.config.n) ** 2
            cap = 1.0 - min_normalized_gap
        else:
            mat = codebook.pairwise_levels()
            cap = level_cap
    else:
        arr = np.asarray(codebook)
        if arr.ndim != 2 or arr.shape[0] < 2:
            raise ValueError("need a (M, n) array with M >= 2")
        if np.iscomplexobj(arr):
            if min_normalized_gap is None:
                raise ValueError(
                    "complex codebooks are checked via min_normalized_gap"
                )
            if power is None or power <= 0.0:
                raise ValueError("complex codebooks require the power P")
            g = arr @ arr.conj().T
            mat = np.abs(g) ** 2 / (arr.shape[1] * power) ** 2
            cap = 1.0 - min_normalized_gap
        else:
            mat = _pairwise_level_matrix(arr)
            if min_normalized_gap is not None:
                mat = mat / float(arr.shape[1]) ** 2
                cap = 1.0 - min_normalized_gap
            else:
                cap = level_cap
    off = mat.copy().astype(float)
    np.fill_diagonal(off, -np.inf)
    flat = int(np.argmax(off))
    i, j = divmod(flat, off.shape[1])
    worst = off[i, j]
    worst = int(worst) if float(worst).is_integer() and isinstance(cap, int) else float(worst)
    return bool(worst <= cap), worst, (i, j)

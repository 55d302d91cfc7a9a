"""Seeded Monte Carlo model of the reconciliation pipeline.

Each block gets its own Philox substreams keyed by ``(seed, block index,
stream)``, so a campaign gives identical results whether it runs serially
or split across workers. The corrector is idealized at the Shannon limit:
it succeeds exactly when the design rate covers the realized error rate and
leaks ``N h(design rate)`` bits. A failed correction leaves ``d_min``
mismatched positions, the fewest the code allows, which is the worst case
for verification.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats

from .analytic import (
    Method,
    StrategyConfig,
    SystemParams,
    combination_v_of_s,
    eers_sample_lower_bound,
    min_distance,
    verification_v_bound,
)
from .errors import DomainError
from .specfun import binary_entropy, normal_cdf

RATE_CLIP = 0.5 - 1e-6
OUTSIDE_MASS_LIMIT = 0.01

_GEN_STREAM = 0
_RUN_STREAM = 1
_FORCED_STREAM = 2

CORRECTED = "corrected"
DISCARDED = "discarded"
UNDETECTED = "undetected"


def substream(seed: int, block: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, block, stream) triple."""
    key = int(seed) % (1 << 128)
    return np.random.Generator(np.random.Philox(key=key, counter=[0, 0, block, stream]))


@dataclass(frozen=True)
class BlockModel:
    """How per-block error rates are produced.

    ``process`` is one of ``"binomial"`` (every block at rate ``delta``),
    ``"normal"`` (rate drawn from N(delta, sigma), clipped to the valid
    range) or ``"trace"`` (rates taken from ``trace`` in order, cycling).
    In every case the block's error count is then Binomial(n, rate), so
    ``sigma`` is spread on top of the bit-level binomial noise.
    """

    n: int
    delta: float = 0.0
    process: str = "binomial"
    sigma: float = 0.0
    trace: tuple[float, ...] | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("block size must be positive")
        if self.process not in ("binomial", "normal", "trace"):
            raise DomainError(f"unknown rate process {self.process!r}")
        if self.process == "trace":
            if not self.trace:
                raise DomainError("trace-driven model needs a nonempty trace")
            if any(not 0.0 <= r < 0.5 for r in self.trace):
                raise DomainError("trace rates must lie in [0, 0.5)")
            object.__setattr__(self, "trace", tuple(float(r) for r in self.trace))
            return
        if not 0.0 <= self.delta < 0.5:
            raise DomainError(f"delta={self.delta!r} must lie in [0, 0.5)")
        if self.sigma < 0:
            raise DomainError("sigma must be nonnegative")
        if self.process == "normal" and self.sigma > 0:
            outside = normal_cdf(-self.delta / self.sigma) + normal_cdf((self.delta - 0.5) / self.sigma)
            if outside > OUTSIDE_MASS_LIMIT:
                raise DomainError(
                    f"normal({self.delta}, {self.sigma}) puts {outside:.2%} of its mass outside [0, 0.5)"
                )

    @classmethod
    def for_params(cls, params: SystemParams, seed: int = 0, process: str = "binomial", sigma: float = 0.0):
        return cls(params.n, params.delta, process, sigma, None, seed)


@dataclass(frozen=True)
class Blocks:
    rates: np.ndarray
    errors: np.ndarray

    def __len__(self) -> int:
        return len(self.errors)


def generate_blocks(model: BlockModel, count: int, start: int = 0) -> Blocks:
    """Draw rates and error counts for blocks ``start .. start+count-1``.

    Counts use the inverse binomial CDF of one uniform per block, so a
    larger rate never yields fewer errors for the same seed.
    """
    if count < 1:
        raise DomainError("count must be >= 1")
    z = np.empty(count)
    u = np.empty(count)
    for j in range(count):
        g = substream(model.seed, start + j, _GEN_STREAM)
        z[j] = g.standard_normal()
        u[j] = g.random()
    idx = np.arange(start, start + count)
    if model.process == "binomial":
        rates = np.full(count, model.delta)
    elif model.process == "normal":
        rates = np.clip(model.delta + model.sigma * z, 0.0, RATE_CLIP)
    else:
        rates = np.asarray(model.trace)[idx % len(model.trace)]
    u = np.clip(u, 1e-300, None)
    errors = stats.binom.ppf(u, model.n, rates).astype(np.int64)
    return Blocks(rates, np.clip(errors, 0, model.n))


@dataclass(frozen=True)
class BlockOutcome:
    status: str
    bits_lost: int
    failed: bool
    design_rate: float


def _charge(n: int, bits: float) -> int:
    return min(n, math.ceil(bits - 1e-9))


def _h(rate: float) -> float:
    return binary_entropy(min(rate, 0.5))


def _detect(kind: Method, rng: np.random.Generator, mismatches: int, key_len: int, v: int) -> bool:
    if v == 0 or mismatches == 0:
        return False
    if kind is Method.VERIFY_MINDIST:
        v = min(v, key_len)
        return rng.hypergeometric(mismatches, key_len - mismatches, v) > 0
    # each random parity over a mismatched key flips with probability 1/2
    return bool(rng.integers(0, 2, size=v).any())


def _sample(rng, n: int, errors: int, s: int, buffer: float):
    k = int(rng.hypergeometric(errors, n - errors, s)) if s > 0 else 0
    estimate = k / s if s > 0 else 0.0
    residual = (errors - k) / (n - s)
    return estimate + buffer, residual


def run_block(
    config: StrategyConfig,
    params: SystemParams,
    errors: int,
    prev_rate: float,
    rng: np.random.Generator,
) -> BlockOutcome:
    """Push one block with ``errors`` mismatches through the strategy."""
    n, eps, buf = params.n, params.epsilon, config.buffer
    m = config.method
    if m is Method.EERS:
        s = int(config.sample_size) if config.sample_size is not None else eers_sample_lower_bound(eps, buf)
        if s >= n:
            raise DomainError("sample size must be below the block size")
        design, residual = _sample(rng, n, errors, s, buf)
        bits = _charge(n, s + (n - s) * _h(design))
        if design >= residual:
            return BlockOutcome(CORRECTED, bits, False, design)
        return BlockOutcome(UNDETECTED, bits, True, design)

    if m is Method.COMBINATION:
        if config.sample_size is None:
            raise DomainError("the combination method needs a sample size")
        s = int(config.sample_size)
        if not 0 < s < n:
            raise DomainError("sample size must lie in (0, N)")
        design, residual = _sample(rng, n, errors, s, buf)
        v = int(config.verify_bits) if config.verify_bits is not None else combination_v_of_s(eps, buf, s)
        bits = _charge(n, s + v + (n - s) * _h(design))
        if design >= residual:
            return BlockOutcome(CORRECTED, bits, False, design)
        mismatches = min_distance(n - s, min(design, RATE_CLIP))
        if _detect(Method.VERIFY_PARITY, rng, mismatches, n - s, v):
            return BlockOutcome(DISCARDED, n, True, design)
        return BlockOutcome(UNDETECTED, bits, True, design)

    design = prev_rate + buf
    if design >= 0.5:
        raise DomainError(f"design rate {design} reaches one half")
    if config.verify_bits is not None:
        v = int(config.verify_bits)
    else:
        v = verification_v_bound(m, eps, design)
    bits = _charge(n, v + n * _h(design))
    if design >= errors / n:
        return BlockOutcome(CORRECTED, bits, False, design)
    if _detect(m, rng, min_distance(n, design), n, v):
        return BlockOutcome(DISCARDED, n, True, design)
    return BlockOutcome(UNDETECTED, bits, True, design)


def binomial_ci(k: int, trials: int, level: float = 0.95) -> tuple[float, float]:
    """Clopper-Pearson interval for a binomial proportion."""
    if trials == 0:
        return (0.0, 1.0)
    ci = stats.binomtest(k, trials).proportion_ci(confidence_level=level, method="exact")
    return (float(ci.low), float(ci.high))


@dataclass(frozen=True)
class SimOutcome:
    n: int
    delta: float
    blocks_total: int = 0
    blocks_corrected: int = 0
    blocks_discarded: int = 0
    failures_detected: int = 0
    failures_undetected: int = 0
    bits_lost_total: int = 0

    def merge(self, other: "SimOutcome") -> "SimOutcome":
        return SimOutcome(
            self.n,
            self.delta,
            self.blocks_total + other.blocks_total,
            self.blocks_corrected + other.blocks_corrected,
            self.blocks_discarded + other.blocks_discarded,
            self.failures_detected + other.failures_detected,
            self.failures_undetected + other.failures_undetected,
            self.bits_lost_total + other.bits_lost_total,
        )

    @property
    def empirical_le(self) -> float:
        return self.bits_lost_total / (self.n * self.blocks_total) - binary_entropy(self.delta)

    @property
    def empirical_pu(self) -> float:
        return self.failures_undetected / self.blocks_total if self.blocks_total else 0.0

    @property
    def empirical_pe(self) -> float:
        if not self.blocks_total:
            return 0.0
        return (self.failures_detected + self.failures_undetected) / self.blocks_total

    @property
    def pu_ci(self) -> tuple[float, float]:
        return binomial_ci(self.failures_undetected, self.blocks_total)

    def pu_standard_error(self, p: float) -> float:
        return math.sqrt(p * (1.0 - p) / self.blocks_total)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(
            empirical_le=self.empirical_le,
            empirical_pe=self.empirical_pe,
            empirical_pu=self.empirical_pu,
            pu_ci95=list(self.pu_ci),
        )
        return d


def _run_range(args) -> SimOutcome:
    config, params, model, start, stop = args
    first = max(start - 1, 0)
    blocks = generate_blocks(model, stop - first, first)
    rates = blocks.errors / params.n
    counts = {CORRECTED: 0, DISCARDED: 0, UNDETECTED: 0}
    detected = 0
    bits = 0
    for i in range(start, stop):
        j = i - first
        prev = rates[j - 1] if i > 0 else params.delta
        out = run_block(config, params, int(blocks.errors[j]), float(prev), substream(model.seed, i, _RUN_STREAM))
        counts[out.status] += 1
        detected += out.status == DISCARDED
        bits += out.bits_lost
    return SimOutcome(
        params.n,
        params.delta,
        stop - start,
        counts[CORRECTED],
        counts[DISCARDED],
        detected,
        counts[UNDETECTED],
        bits,
    )


def run_campaign(
    config: StrategyConfig,
    params: SystemParams,
    model: BlockModel,
    blocks: int,
    workers: int = 1,
    chunk: int = 20_000,
) -> SimOutcome:
    """Simulate ``blocks`` counted blocks and aggregate their outcomes.

    Verification methods run one extra warm-up block first: it is estimated
    from ``params.delta``, only supplies the previous-block rate, and is not
    counted. The result does not depend on ``workers``.
    """
    if blocks < 1:
        raise DomainError("blocks must be >= 1")
    if model.n != params.n:
        raise DomainError("block model and system parameters disagree on N")
    offset = 1 if config.method.is_verification else 0
    bounds = list(range(offset, blocks + offset, chunk)) + [blocks + offset]
    jobs = [(config, params, model, a, b) for a, b in zip(bounds[:-1], bounds[1:])]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_range, jobs))
    else:
        parts = [_run_range(job) for job in jobs]
    total = SimOutcome(params.n, params.delta)
    for part in parts:
        total = total.merge(part)
    return total


@dataclass(frozen=True)
class ForcedFailureResult:
    method: Method
    n: int
    design_rate: float
    verify_bits: int
    trials: int
    undetected: int
    ci95: tuple[float, float]
    bound: float

    @property
    def undetected_fraction(self) -> float:
        return self.undetected / self.trials

    @property
    def detected_fraction(self) -> float:
        return 1.0 - self.undetected_fraction

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        d["undetected_fraction"] = self.undetected_fraction
        return d


def forced_failure_trials(
    method,
    n: int,
    design_rate: float,
    verify_bits: int,
    trials: int,
    seed: int = 0,
) -> ForcedFailureResult:
    """Repeat the verification step against a wrong codeword ``trials`` times.

    The mismatch set has exactly ``d_min`` positions. ``bound`` is the
    worst-case undetected probability the analytic model uses for sizing.
    """
    m = Method.parse(method)
    rng = substream(seed, 0, _FORCED_STREAM)
    if m is Method.VERIFY_MINDIST:
        d = min_distance(n, design_rate)
        missed = rng.hypergeometric(d, n - d, min(verify_bits, n), size=trials) == 0
        bound = (1.0 - d / n) ** verify_bits
    elif m is Method.VERIFY_PARITY:
        missed = rng.binomial(verify_bits, 0.5, size=trials) == 0
        bound = 0.5**verify_bits
    else:
        raise DomainError(f"{m.value} is not a verification method")
    k = int(np.count_nonzero(missed))
    return ForcedFailureResult(m, n, design_rate, verify_bits, trials, k, binomial_ci(k, trials), bound)


"""Recorded block-error-rate traces: CSV I/O, statistics, deterministic
replay of strategies, and a method recommendation.

Trace CSV layout::

    block_index,error_rate
    0,0.016
    1,0.0171

``block_index`` is a strictly increasing nonnegative integer and
``error_rate`` lies in ``[0, 0.5)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy import stats

from .analytic import (
    Method,
    StrategyConfig,
    SystemParams,
    binomial_sigma,
    combination_bits,
    eers_sample_size,
    verification_bits,
)
from .errors import DomainError, TraceFormatError
from .optimize import optimize_buffer, optimize_combination
from .simulate import BlockModel, generate_blocks
from .specfun import binary_entropy

HEADER = ("block_index", "error_rate")
WINDOW = 50
MIN_RECOMMEND_BLOCKS = 100
JUMP_SAFETY = 1.25
MIN_BUFFER = 1e-6
# adjacent windows whose jump distributions differ at this KS p-value or
# below mark the trace as unstable
STABILITY_PVALUE = 1e-3


@dataclass(frozen=True)
class BlockTrace:
    rates: tuple[float, ...]
    n: int | None = None
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        for i, r in enumerate(self.rates):
            if not 0.0 <= r < 0.5:
                raise DomainError(f"rate {r!r} at block {i} is outside [0, 0.5)")

    def __len__(self) -> int:
        return len(self.rates)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.rates)


def parse_trace(data: bytes | str, source: str = "", n: int | None = None) -> BlockTrace:
    """Parse the trace CSV; errors name the offending 1-based line."""
    if isinstance(data, bytes):
        try:
            data = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise TraceFormatError(f"not UTF-8: {exc}") from None
    reader = csv.reader(io.StringIO(data))
    header = next(reader, None)
    if header is None:
        raise TraceFormatError("empty file", line=1)
    if tuple(h.strip() for h in header) != HEADER:
        raise TraceFormatError(f"header must be {','.join(HEADER)!r}, got {','.join(header)!r}", line=1)
    rates = []
    last = -1
    for row in reader:
        line = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise TraceFormatError(f"expected 2 fields, got {len(row)}", line=line)
        try:
            index = int(row[0])
        except ValueError:
            raise TraceFormatError(f"block_index {row[0]!r} is not an integer", line=line) from None
        try:
            rate = float(row[1])
        except ValueError:
            raise TraceFormatError(f"error_rate {row[1]!r} is not a number", line=line) from None
        if index < 0 or index <= last:
            raise TraceFormatError(f"block_index {index} is not strictly increasing", line=line)
        if not 0.0 <= rate < 0.5:
            raise TraceFormatError(f"error_rate {rate!r} is outside [0, 0.5)", line=line)
        rates.append(rate)
        last = index
    if not rates:
        raise TraceFormatError("no data rows", line=2)
    return BlockTrace(tuple(rates), n, source)


def read_trace(path: str | Path, n: int | None = None) -> BlockTrace:
    path = Path(path)
    return parse_trace(path.read_bytes(), source=str(path), n=n)


def format_trace(trace: BlockTrace) -> str:
    # repr() round-trips floats exactly
    lines = [",".join(HEADER)]
    lines += [f"{i},{r!r}" for i, r in enumerate(trace.rates)]
    return "\n".join(lines) + "\n"


def write_trace(trace: BlockTrace, path: str | Path) -> None:
    Path(path).write_text(format_trace(trace), encoding="utf-8")


@dataclass(frozen=True)
class WindowStats:
    start: int
    blocks: int
    mean: float
    std: float
    max_jump: float
    partial: bool


@dataclass(frozen=True)
class TraceStats:
    blocks: int
    mean: float
    std: float
    max_jump: float
    windows: tuple[WindowStats, ...]
    window_ks_pvalues: tuple[float, ...]
    stable: bool

    def to_dict(self) -> dict:
        return {
            "blocks": self.blocks,
            "mean": self.mean,
            "std": self.std,
            "max_jump": self.max_jump,
            "stable": self.stable,
            "window_ks_pvalues": list(self.window_ks_pvalues),
            "windows": [w.__dict__ for w in self.windows],
        }


def _std(x: np.ndarray) -> float:
    # constant input gives exactly 0 rather than rounding residue
    if len(x) < 2 or np.ptp(x) == 0:
        return 0.0
    return float(x.std(ddof=1))


def trace_stats(trace: BlockTrace, window: int = WINDOW) -> TraceStats:
    """Mean, spread, the largest rise between consecutive blocks, and
    per-window statistics over disjoint windows of ``window`` blocks.

    A trailing window shorter than ``window`` is kept and flagged
    ``partial``. Stability compares the jump distributions of adjacent full
    windows with a two-sample KS test.
    """
    x = trace.as_array()
    if len(x) < 2:
        raise DomainError("trace statistics need at least two blocks")
    jumps = np.diff(x)
    windows = []
    window_jumps = []
    for start in range(0, len(x), window):
        seg = x[start : start + window]
        # jumps that land inside this window, including the one into its first block
        seg_jumps = jumps[max(start - 1, 0) : start + len(seg) - 1]
        windows.append(
            WindowStats(
                start=start,
                blocks=len(seg),
                mean=float(seg.mean()),
                std=_std(seg),
                max_jump=float(seg_jumps.max()) if len(seg_jumps) else 0.0,
                partial=len(seg) < window,
            )
        )
        if len(seg) == window:
            window_jumps.append(seg_jumps)
    pvalues = []
    for a, b in zip(window_jumps[:-1], window_jumps[1:]):
        if np.ptp(a) == 0 and np.ptp(b) == 0:
            pvalues.append(1.0 if a[0] == b[0] else 0.0)
        else:
            pvalues.append(float(stats.ks_2samp(a, b).pvalue))
    return TraceStats(
        blocks=len(x),
        mean=float(x.mean()),
        std=_std(x),
        max_jump=float(jumps.max()),
        windows=tuple(windows),
        window_ks_pvalues=tuple(pvalues),
        stable=all(p > STABILITY_PVALUE for p in pvalues),
    )


@dataclass(frozen=True)
class ReplayReport:
    config: StrategyConfig
    blocks: int
    discarded: int
    bits_lost: float
    excess: float

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "blocks": self.blocks,
            "discarded": self.discarded,
            "bits_lost": self.bits_lost,
            "excess": self.excess,
        }


def _h(rate: float) -> float:
    return binary_entropy(rate)


def _check_rates(rates: np.ndarray, buffer: float) -> None:
    worst = float(rates.max()) + buffer
    if worst >= 0.5:
        raise DomainError(f"rate + buffer reaches {worst:.6g} >= 0.5")


def _replay_one(rates: np.ndarray, params: SystemParams, config: StrategyConfig, warm: float) -> ReplayReport:
    n, eps, buf = params.n, params.epsilon, config.buffer
    m = config.method
    _check_rates(rates, buf)
    total = 0.0
    discarded = 0
    if m.is_verification:
        # block 0 is estimated from the trace mean and only warms up the estimator
        prev = np.concatenate(([warm], rates[:-1]))
        _check_rates(prev, buf)
        for i, (est, rate) in enumerate(zip(prev, rates)):
            design = float(est) + buf
            if config.verify_bits is not None:
                v = float(config.verify_bits)
            else:
                v = math.ceil(verification_bits(m, eps, design) - 1e-9)
            if i > 0 and design < rate:
                discarded += 1
                total += n
            else:
                total += min(n, v + n * _h(design))
        count = len(rates)
    else:
        if m is Method.EERS:
            s = config.sample_size if config.sample_size is not None else eers_sample_size(eps, buf)
            p_e = 0.0
            v = 0.0
        else:
            if config.sample_size is None:
                raise DomainError("the combination method needs a sample size")
            s = float(config.sample_size)
            p_e = 0.5 * math.erfc(buf * math.sqrt(2.0 * s))
            v = config.verify_bits if config.verify_bits is not None else combination_bits(eps, buf, s)
        discard = max(p_e - eps, 0.0)
        for rate in rates:
            kept = min(n, s + v + (n - s) * _h(float(rate) + buf))
            total += discard * n + (1.0 - discard) * kept
        count = len(rates)
    excess = total / (n * count) - binary_entropy(params.delta)
    return ReplayReport(config, count, discarded, total, excess)


def replay(trace: BlockTrace, params: SystemParams, configs: Iterable[StrategyConfig]) -> list[ReplayReport]:
    """Deterministic per-config loss over the recorded rates.

    Verification block ``i`` is accepted iff ``rate[i-1] + buffer >=
    rate[i]``; rejected blocks are discarded at a cost of N bits. EERS and
    combination charge their expected per-block loss at each recorded rate.
    """
    if len(trace) < 2:
        raise DomainError("replay needs at least two blocks")
    if trace.n is not None and trace.n != params.n:
        raise DomainError(f"trace block size {trace.n} differs from N={params.n}")
    rates = trace.as_array()
    warm = float(rates.mean())
    return [_replay_one(rates, params, c, warm) for c in configs]


@dataclass(frozen=True)
class Recommendation:
    method: Method
    config: StrategyConfig
    excess: float
    stats: TraceStats
    candidates: tuple[ReplayReport, ...]
    rationale: tuple[str, ...] = field(default=())

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "config": self.config.to_dict(),
            "excess": self.excess,
            "stable": self.stats.stable,
            "rationale": list(self.rationale),
            "candidates": [c.to_dict() for c in self.candidates],
            "stats": self.stats.to_dict(),
        }


def recommend(trace: BlockTrace, params: SystemParams) -> Recommendation:
    """Pick the method with the lowest replayed excess loss on ``trace``.

    The verification buffer is the largest observed rise between consecutive
    blocks plus 25%; EERS and combination use their analytic optima at the
    trace mean. If adjacent windows disagree on their jump distribution the
    trace is considered unstable and only EERS and combination are eligible,
    since their loss does not depend on how the rate moves.
    """
    if len(trace) < MIN_RECOMMEND_BLOCKS:
        raise DomainError(f"recommend needs at least {MIN_RECOMMEND_BLOCKS} blocks, got {len(trace)}")
    st = trace_stats(trace)
    local = params.replace(delta=st.mean)
    rationale = [f"trace mean {st.mean:.6g}, std {st.std:.3g}, max consecutive rise {st.max_jump:.3g}"]

    configs = []
    buffer_v = max(JUMP_SAFETY * st.max_jump, MIN_BUFFER)
    if max(trace.rates) + buffer_v < 0.5:
        for m in (Method.VERIFY_PARITY, Method.VERIFY_MINDIST):
            configs.append(StrategyConfig(m, buffer_v))
        rationale.append(f"verification buffer {buffer_v:.3g} = 1.25 x max rise")
    else:
        rationale.append("verification skipped: rate + buffer would reach one half")
    for res in (optimize_buffer(local, Method.EERS), optimize_combination(local)):
        c = res.best_config
        if max(trace.rates) + c.buffer < 0.5:
            configs.append(c)

    reports = replay(trace, params, configs)
    eligible = reports
    if not st.stable:
        eligible = [r for r in reports if not r.config.method.is_verification]
        rationale.append("window-to-window jump distributions diverge; verification excluded")
    best = min(eligible, key=lambda r: r.excess)
    rationale.append(f"lowest replayed excess loss: {best.config.method.value} at {best.excess:.4g}")
    return Recommendation(best.config.method, best.config, best.excess, st, tuple(reports), tuple(rationale))


def synthetic_trace(
    n: int = 2_600_000,
    delta: float = 0.016,
    sigma: float = 1e-3,
    blocks: int = 300,
    max_jump: float | None = 0.004,
    seed: int = 0,
) -> BlockTrace:
    """Normal iid block rates with the requested mean and spread.

    When ``max_jump`` is given, deviations from the mean are rescaled so
    the largest rise between consecutive blocks equals it exactly.
    """
    model = BlockModel(n, delta, "normal", sigma, seed=seed)
    rates = generate_blocks(model, blocks).rates
    if max_jump is not None:
        rise = np.diff(rates).max()
        if rise > 0:
            rates = delta + (rates - rates.mean()) * (max_jump / rise)
    rates = np.clip(rates, 0.0, 0.5 - 1e-6)
    return BlockTrace(tuple(float(r) for r in rates), n, f"synthetic(delta={delta}, sigma={sigma}, seed={seed})")


def default_sigma(trace: BlockTrace, n: int) -> float:
    """Block-rate spread implied by the trace, never below the binomial floor."""
    st = trace_stats(trace)
    return max(st.std, binomial_sigma(n, st.mean))

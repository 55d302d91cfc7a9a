"""Buffer-parameter optimization and parameter sweeps.

One-dimensional searches scan 64 geometrically spaced buffers to bracket
the minimum, then narrow the bracket by golden-section search. The
combination method adds an outer search over the sample size: a 32-point
geometric grid followed by integer ternary refinement.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .analytic import (
    LossReport,
    Method,
    StrategyConfig,
    SystemParams,
    combination_loss,
    eers_loss,
    verification_loss,
)
from .errors import DomainError

SCAN_POINTS = 64
S_GRID_POINTS = 32
BUFFER_FLOOR = 1e-7
BOUNDARY_MARGIN = 1e-6
TIE = 1e-12
_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class OptimizationResult:
    best_config: StrategyConfig
    best_report: LossReport
    objective_evals: int
    converged: bool
    bracket: tuple[float, float]
    sample_bracket: tuple[int, int] | None = None

    def to_dict(self) -> dict:
        d = {
            "config": self.best_config.to_dict(),
            "report": self.best_report.to_dict(),
            "objective_evals": self.objective_evals,
            "converged": self.converged,
            "bracket": list(self.bracket),
        }
        if self.sample_bracket is not None:
            d["sample_bracket"] = list(self.sample_bracket)
        return d


class _Counted:
    def __init__(self, fn: Callable[[float], float]):
        self.fn = fn
        self.evals = 0

    def __call__(self, x: float) -> float:
        self.evals += 1
        try:
            return self.fn(x)
        except DomainError:
            return math.inf


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float):
    """Minimize a unimodal ``f`` on ``[a, b]`` until the bracket is ``<= tol``.

    Returns ``(x, f(x), (a, b))`` where ``(a, b)`` is the final bracket.
    """
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        # exact ties go left so the smaller buffer wins
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(d)
    if fc <= fd + TIE:
        return c, fc, (a, b)
    return d, fd, (a, b)


def _argmin(values: Sequence[float]) -> int:
    best = 0
    for i, v in enumerate(values):
        if v < values[best] - TIE:
            best = i
    return best


def minimize_buffer(f: Callable[[float], float], upper: float, tol: float = 1e-7):
    """Scan-then-golden minimization of ``f`` over ``(0, upper)``.

    Returns ``(x, fx, bracket, evals, interior)``; ``interior`` is False when
    the scan minimum sits on either end of the grid.
    """
    counted = _Counted(f)
    if upper <= BUFFER_FLOOR:
        raise DomainError("no room for a positive buffer below one half")
    grid = np.geomspace(BUFFER_FLOOR, upper, SCAN_POINTS)
    values = [counted(float(x)) for x in grid]
    k = _argmin(values)
    if not math.isfinite(values[k]):
        raise DomainError("objective is undefined on the whole buffer range")
    if k == 0 or k == len(grid) - 1:
        x = float(grid[k])
        return x, values[k], (x, x), counted.evals, False
    lo, hi = float(grid[k - 1]), float(grid[k + 1])
    x, fx, bracket = golden_section(counted, lo, hi, tol)
    if values[k] < fx - TIE:
        x, fx = float(grid[k]), values[k]
    return x, fx, bracket, counted.evals, True


def _buffer_upper(params: SystemParams) -> float:
    return 0.5 - params.delta - BOUNDARY_MARGIN


def _single_report(params: SystemParams, method: Method, buffer: float) -> LossReport:
    if method is Method.EERS:
        return eers_loss(params, buffer)
    return verification_loss(params, method, buffer)


def optimize_buffer(params: SystemParams, method, tol: float = 1e-7) -> OptimizationResult:
    """Buffer minimizing the excess loss of EERS or a verification variant."""
    method = Method.parse(method)
    if method is Method.COMBINATION:
        return optimize_combination(params, tol=tol)

    def objective(buffer: float) -> float:
        return _single_report(params, method, buffer).excess

    x, _, bracket, evals, interior = minimize_buffer(objective, _buffer_upper(params), tol)
    report = _single_report(params, method, x)
    config = StrategyConfig(method, x, report.sample_size or None, report.verify_bits or None)
    converged = interior and bracket[1] - bracket[0] <= tol
    return OptimizationResult(config, report, evals, converged, bracket)


def optimize_combination(params: SystemParams, tol: float = 1e-7) -> OptimizationResult:
    """Jointly minimize the combination excess loss over buffer and sample size."""
    n = params.n
    upper = _buffer_upper(params)
    s_hi = max(2, n // 4)
    s_lo = min(16, max(1, s_hi // 2))
    grid = sorted({int(round(s)) for s in np.geomspace(s_lo, s_hi, S_GRID_POINTS)})
    cache: dict[int, tuple] = {}
    evals = 0

    def inner(s: int):
        nonlocal evals
        if s not in cache:
            def objective(buffer: float) -> float:
                return combination_loss(params, buffer, s).excess

            res = minimize_buffer(objective, upper, tol)
            evals += res[3]
            cache[s] = res
        return cache[s]

    values = [inner(s)[1] for s in grid]
    k = _argmin(values)
    lo = grid[k - 1] if k > 0 else 1
    hi = grid[k + 1] if k < len(grid) - 1 else grid[k]
    top_edge = k == len(grid) - 1

    # integer ternary search on S, then exhaust the last few candidates
    a, b = lo, hi
    while b - a > 3:
        m1 = a + (b - a) // 3
        m2 = b - (b - a) // 3
        if inner(m1)[1] <= inner(m2)[1] + TIE:
            b = m2
        else:
            a = m1
    candidates = list(range(a, b + 1)) + [grid[k]]
    best_s = min(candidates, key=lambda s: (inner(s)[1], s))
    x, _, bracket, _, interior = inner(best_s)
    report = combination_loss(params, x, best_s)
    config = StrategyConfig(Method.COMBINATION, x, best_s, report.verify_bits)
    converged = interior and not top_edge and bracket[1] - bracket[0] <= tol
    return OptimizationResult(config, report, evals, converged, bracket, (lo, hi))


SWEEP_COLUMNS = (
    "vary",
    "value",
    "method",
    "buffer",
    "excess",
    "loss",
    "sample_size",
    "verify_bits",
    "disclosed_fraction",
    "p_error",
    "p_undetected",
    "converged",
    "error",
)

SWEEPABLE = ("delta", "n", "epsilon", "sigma")


@dataclass(frozen=True)
class SweepRow:
    vary: str
    value: float
    method: Method
    buffer: float | None = None
    excess: float | None = None
    loss: float | None = None
    sample_size: int | None = None
    verify_bits: int | None = None
    disclosed_fraction: float | None = None
    p_error: float | None = None
    p_undetected: float | None = None
    converged: bool | None = None
    error: str = field(default="")

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, c).value if c == "method" else getattr(self, c) for c in SWEEP_COLUMNS)


def _point_params(template: SystemParams, vary: str, value: float) -> SystemParams:
    if vary == "n":
        value = int(round(value))
    return template.replace(**{vary: value})


def _sweep_row(args) -> SweepRow:
    template, vary, value, method = args
    try:
        params = _point_params(template, vary, value)
        res = optimize_buffer(params, method)
    except (DomainError, ValueError) as exc:
        return SweepRow(vary, value, method, error=str(exc))
    r = res.best_report
    return SweepRow(
        vary,
        value,
        method,
        buffer=res.best_config.buffer,
        excess=r.excess,
        loss=r.loss,
        sample_size=r.sample_size,
        verify_bits=r.verify_bits,
        disclosed_fraction=r.disclosed_fraction,
        p_error=r.p_error,
        p_undetected=r.p_undetected,
        converged=res.converged,
    )


def sweep(
    template: SystemParams,
    vary: str,
    grid: Iterable[float],
    methods: Iterable = tuple(Method),
    workers: int = 1,
) -> list[SweepRow]:
    """Optimize every method at every grid point of one varied parameter.

    Rows come back ordered by grid point, then by method, whatever the
    worker count. Invalid points produce rows with ``error`` set.
    """
    if vary not in SWEEPABLE:
        raise DomainError(f"cannot vary {vary!r}; choose from {', '.join(SWEEPABLE)}")
    grid = list(grid)
    if not grid:
        raise DomainError("sweep grid is empty")
    methods = [Method.parse(m) for m in methods]
    jobs = [(template, vary, float(v), m) for v in grid for m in methods]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_row, jobs))
    return [_sweep_row(job) for job in jobs]


def crossover_sigma(
    params: SystemParams,
    against=Method.COMBINATION,
    method=Method.VERIFY_MINDIST,
    sigma_max: float = 0.05,
) -> float:
    """Block-rate spread at which optimized verification loses as much as
    the optimized, spread-independent ``against`` method.

    Raises ``DomainError`` if the two curves do not cross below ``sigma_max``.
    """
    target = optimize_buffer(params, against).best_report.excess

    def gap(sigma: float) -> float:
        return optimize_buffer(params.replace(sigma=sigma), method).best_report.excess - target

    lo, hi = 1e-7, sigma_max
    if gap(lo) >= 0 or gap(hi) <= 0:
        raise DomainError("verification and the reference method do not cross in the spread range")
    return float(brentq(gap, lo, hi, xtol=1e-7))

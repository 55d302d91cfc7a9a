"""Closed-form reconciliation losses, undetected-error bounds and the
excess over the Shannon limit.

All three strategies assume a decoder working exactly at the Shannon limit
for its design rate (estimate + buffer). The analytic evaluation uses the
true mean rate in place of the running estimate, and keeps the sample size
``S`` and verification bit count ``V`` real-valued so the objective stays
smooth for the optimizer; reports carry the ceiling-rounded counts that
would actually be disclosed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DomainError
from .specfun import binary_entropy, erfc, erfcinv, normal_cdf

RATE_CAP = 0.5 - 1e-9


class Method(str, enum.Enum):
    EERS = "eers"
    VERIFY_MINDIST = "verify-mindist"
    VERIFY_PARITY = "verify-parity"
    COMBINATION = "combo"

    @property
    def is_verification(self) -> bool:
        return self in (Method.VERIFY_MINDIST, Method.VERIFY_PARITY)

    @classmethod
    def parse(cls, value: "Method | str") -> "Method":
        if isinstance(value, Method):
            return value
        aliases = {
            "mindist": cls.VERIFY_MINDIST,
            "parity": cls.VERIFY_PARITY,
            "combination": cls.COMBINATION,
        }
        try:
            return aliases.get(value) or cls(value)
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise DomainError(f"unknown method {value!r} (choose from {choices})") from None


def _as_block_size(n) -> int:
    if isinstance(n, float):
        if not n.is_integer():
            raise DomainError(f"block size must be an integer, got {n!r}")
        n = int(n)
    if n < 1:
        raise DomainError(f"block size must be >= 1, got {n}")
    return int(n)


def binomial_sigma(n: int, delta: float) -> float:
    """Spread of the block error rate when all variance is bit-level noise."""
    return math.sqrt(delta * (1.0 - delta) / n)


@dataclass(frozen=True)
class SystemParams:
    """Block size, mean error rate, security parameter and block-rate spread.

    ``sigma`` defaults to the binomial spread ``sqrt(delta (1-delta) / n)``.
    """

    n: int
    delta: float
    epsilon: float
    sigma: float | None = None
    sigma_is_default: bool = field(default=False, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "n", _as_block_size(self.n))
        if not 0.0 <= self.delta < 0.5:
            raise DomainError(f"delta={self.delta!r} must lie in [0, 0.5)")
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError(f"epsilon={self.epsilon!r} must lie in (0, 1)")
        if self.sigma is None:
            object.__setattr__(self, "sigma", binomial_sigma(self.n, self.delta))
            object.__setattr__(self, "sigma_is_default", True)
        elif not self.sigma >= 0.0:
            raise DomainError(f"sigma={self.sigma!r} must be nonnegative")

    def replace(self, **changes) -> "SystemParams":
        values = {"n": self.n, "delta": self.delta, "epsilon": self.epsilon, "sigma": self.sigma}
        if self.sigma_is_default and "sigma" not in changes:
            values["sigma"] = None
        values.update(changes)
        return SystemParams(**values)


@dataclass(frozen=True)
class StrategyConfig:
    """A method with its buffer and, optionally, explicit disclosure counts.

    ``sample_size`` is required for the combination method and optional for
    EERS (derived from the bound when omitted). ``verify_bits`` is derived
    from the bound when omitted.
    """

    method: Method
    buffer: float
    sample_size: float | None = None
    verify_bits: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        if not self.buffer >= 0.0:
            raise DomainError(f"buffer={self.buffer!r} must be nonnegative")
        if self.sample_size is not None and self.sample_size < 0:
            raise DomainError("sample_size must be nonnegative")
        if self.verify_bits is not None and self.verify_bits < 0:
            raise DomainError("verify_bits must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "buffer": self.buffer,
            "sample_size": self.sample_size,
            "verify_bits": self.verify_bits,
        }


@dataclass(frozen=True)
class LossReport:
    method: Method
    buffer: float
    n: int
    loss: float
    excess: float
    p_error: float
    p_undetected: float
    sample_size: int
    verify_bits: int
    design_rate: float
    warnings: tuple[str, ...] = field(default=())

    @property
    def disclosed_fraction(self) -> float:
        """(S + V) / N, the share of the block spent on estimation and checks."""
        return (self.sample_size + self.verify_bits) / self.n

    def to_dict(self) -> dict:
        d = asdict(self)
        d["method"] = self.method.value
        d["warnings"] = list(self.warnings)
        d["disclosed_fraction"] = self.disclosed_fraction
        return d


def _check_design_rate(rate: float, what: str = "design rate") -> None:
    if not 0.0 <= rate < 0.5:
        raise DomainError(f"{what} {rate!r} must lie in [0, 0.5)")


def _ceil(x: float) -> int:
    # absorb float noise just above an integer, e.g. 20.000000000000004
    r = round(x)
    if abs(x - r) < 1e-9 * max(1.0, abs(x)):
        return int(r)
    return math.ceil(x)


def _h(rate: float) -> float:
    return binary_entropy(min(rate, RATE_CAP))


def shannon_loss(n: int, delta: float) -> float:
    """Bits leaked by an ideal corrector on ``n`` bits at error rate ``delta``."""
    _check_design_rate(delta, "delta")
    return n * _h(delta)


def excessive_loss(loss: float, n: int, delta: float) -> float:
    return loss / n - binary_entropy(delta)


def min_distance(n: int, design_rate: float) -> int:
    """Lower bound ``ceil(2 n r)`` on the code's minimum distance."""
    _check_design_rate(design_rate)
    return _ceil(2.0 * n * design_rate)


def _verification_kind(method) -> Method:
    m = Method.parse(method)
    if m is Method.COMBINATION:
        return Method.VERIFY_PARITY
    if not m.is_verification:
        raise DomainError(f"{m.value} is not a verification method")
    return m


def p_undetected_given_error(method, n: int | None, design_rate: float | None, v: float) -> float:
    """Probability that a wrong codeword survives ``v`` verification checks.

    Parity exchange: ``2**-v``. Min-distance sampling: ``(1 - 2 r)**v``, the
    looser of the two bounds since ``d_min / n >= 2 r``.
    """
    if v < 0:
        raise DomainError("v must be nonnegative")
    if v == 0:
        return 1.0
    if _verification_kind(method) is Method.VERIFY_PARITY:
        return 0.5**v
    _check_design_rate(design_rate)
    return (1.0 - 2.0 * design_rate) ** v


def verification_bits(method, epsilon: float, design_rate: float | None = None) -> float:
    """Real-valued number of checks needed for ``p_U|E <= epsilon``."""
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"epsilon={epsilon!r} must lie in (0, 1)")
    if _verification_kind(method) is Method.VERIFY_PARITY:
        return -math.log2(epsilon)
    _check_design_rate(design_rate)
    if design_rate <= 0.0:
        raise DomainError("min-distance verification needs a positive design rate")
    return math.log(epsilon) / math.log1p(-2.0 * design_rate)


def verification_v_bound(method, epsilon: float, design_rate: float | None = None) -> int:
    return _ceil(verification_bits(method, epsilon, design_rate))


def eers_sample_size(epsilon: float, buffer: float) -> float:
    """Real-valued sample size ``0.5 (erfinv(1 - 2 eps) / buffer)**2``."""
    if not buffer > 0.0:
        raise DomainError(f"buffer={buffer!r} must be positive")
    if not 0.0 < epsilon < 0.5:
        raise DomainError(f"epsilon={epsilon!r} must lie in (0, 0.5)")
    return 0.5 * (erfcinv(2.0 * epsilon) / buffer) ** 2


def eers_sample_lower_bound(epsilon: float, buffer: float) -> int:
    return _ceil(eers_sample_size(epsilon, buffer))


def eers_pu_bound(s: float, buffer: float) -> float:
    """Worst case over the true rate of P(estimate + buffer < true rate).

    Attained at a true rate of one half, where the sampling spread is
    ``1 / (2 sqrt(s))``.
    """
    if s <= 0:
        return 0.5
    return 0.5 * erfc(buffer * math.sqrt(2.0 * s))


def p_error_prev_block(buffer: float, sigma: float) -> float:
    """P(current rate exceeds previous rate + buffer) for iid normal rates."""
    if sigma < 0:
        raise DomainError("sigma must be nonnegative")
    if sigma == 0.0:
        return 0.5 if buffer == 0.0 else (0.0 if buffer > 0 else 1.0)
    return normal_cdf(-buffer / (math.sqrt(2.0) * sigma))


def combination_bits(epsilon: float, buffer: float, s: float) -> float:
    """Real-valued parity checks after sampling, clamped at zero."""
    if not 0.0 < epsilon < 1.0:
        raise DomainError(f"epsilon={epsilon!r} must lie in (0, 1)")
    tail = erfc(buffer * math.sqrt(2.0 * s)) if s > 0 else 1.0
    if tail == 0.0:
        return 0.0
    return max(0.0, math.log2(tail) - math.log2(epsilon) - 1.0)


def combination_v_of_s(epsilon: float, buffer: float, s: float) -> int:
    return _ceil(combination_bits(epsilon, buffer, s))


def _normal_warning(s: float, rate: float) -> tuple[str, ...]:
    if s * rate < 10:
        return (f"normal approximation weak: S*(delta+buffer)={s * rate:.3g} < 10",)
    return ()


def _discard_mix(p_e: float, epsilon: float, n: int, kept: float) -> float:
    # (p_E - eps) N + (1 - p_E + eps) * kept; the discard share is floored at
    # zero for p_E < eps, and a block never leaks more than its N bits
    kept = min(float(n), kept)
    discard = max(p_e - epsilon, 0.0)
    return discard * n + (1.0 - discard) * kept


def eers_loss(params: SystemParams, buffer: float, sample_size: float | None = None) -> LossReport:
    """Expected bits lost with sampling-based estimation and buffer ``buffer``."""
    rate = params.delta + buffer
    _check_design_rate(rate, "delta + buffer")
    n = params.n
    s = eers_sample_size(params.epsilon, buffer) if sample_size is None else float(sample_size)
    if s >= n:
        raise DomainError(f"sample size {s:.6g} must be below the block size {n}")
    loss = s + (n - s) * _h(rate)
    s_int = _ceil(s)
    warnings = _normal_warning(s, rate)
    p_u = eers_pu_bound(s_int, buffer)
    if p_u > params.epsilon * (1 + 1e-12):
        warnings += (f"p_U bound {p_u:.3g} exceeds epsilon",)
    return LossReport(
        method=Method.EERS,
        buffer=buffer,
        n=n,
        loss=loss,
        excess=excessive_loss(loss, n, params.delta),
        p_error=0.0,
        p_undetected=p_u,
        sample_size=s_int,
        verify_bits=0,
        design_rate=rate,
        warnings=warnings,
    )


def _expected_entropy_and_bits(params: SystemParams, kind: Method, buffer: float, nodes: int = 48):
    # E over the previous-block rate ~ N(delta, sigma), clipped to the domain
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    w = w / w.sum()
    prev = np.clip(params.delta + params.sigma * x, 0.0, RATE_CAP - buffer)
    h_mean = 0.0
    v_mean = 0.0
    for p, wt in zip(prev, w):
        r = float(p) + buffer
        h_mean += wt * _h(r)
        if kind is Method.VERIFY_PARITY or r > 0:
            v_mean += wt * verification_bits(kind, params.epsilon, r)
        else:
            v_mean = math.inf
    return h_mean, v_mean


def verification_loss(
    params: SystemParams,
    method,
    buffer: float,
    verify_bits: float | None = None,
    expectation: bool = False,
) -> LossReport:
    """Expected bits lost when the previous block's rate is the estimate and
    a post-correction check catches wrong codewords.

    With ``expectation=True`` the entropy charge and the check count are
    averaged over the normal distribution of the previous-block rate instead
    of being evaluated at the mean.
    """
    kind = _verification_kind(method)
    rate = params.delta + buffer
    _check_design_rate(rate, "delta + buffer")
    n = params.n
    if expectation:
        h_rate, v_real = _expected_entropy_and_bits(params, kind, buffer)
    else:
        h_rate = _h(rate)
        v_real = None
    if verify_bits is not None:
        v_real = float(verify_bits)
    elif v_real is None:
        v_real = verification_bits(kind, params.epsilon, rate)
    p_e = p_error_prev_block(buffer, params.sigma)
    loss = _discard_mix(p_e, params.epsilon, n, v_real + n * h_rate)
    v_int = _ceil(v_real)
    p_u = p_undetected_given_error(kind, n, rate, v_int)
    warnings = ()
    if p_u > params.epsilon * (1 + 1e-12):
        warnings = (f"p_U|E bound {p_u:.3g} exceeds epsilon",)
    return LossReport(
        method=kind,
        buffer=buffer,
        n=n,
        loss=loss,
        excess=excessive_loss(loss, n, params.delta),
        p_error=p_e,
        p_undetected=p_u,
        sample_size=0,
        verify_bits=v_int,
        design_rate=rate,
        warnings=warnings,
    )


def combination_loss(
    params: SystemParams,
    buffer: float,
    sample_size: float,
    verify_bits: float | None = None,
) -> LossReport:
    """Expected bits lost with sampling followed by parity verification.

    Independent of ``params.sigma``: the estimate comes from the block itself.
    """
    rate = params.delta + buffer
    _check_design_rate(rate, "delta + buffer")
    n = params.n
    s = float(sample_size)
    if not 0 < s < n:
        raise DomainError(f"sample size {s:.6g} must lie in (0, {n})")
    p_e = eers_pu_bound(s, buffer)
    v_real = combination_bits(params.epsilon, buffer, s) if verify_bits is None else float(verify_bits)
    loss = _discard_mix(p_e, params.epsilon, n, s + v_real + (n - s) * _h(rate))
    s_int, v_int = _ceil(s), _ceil(v_real)
    p_u = 0.5**v_int * eers_pu_bound(s_int, buffer)
    warnings = _normal_warning(s, rate)
    if p_u > params.epsilon * (1 + 1e-12):
        warnings += (f"p_U bound {p_u:.3g} exceeds epsilon",)
    return LossReport(
        method=Method.COMBINATION,
        buffer=buffer,
        n=n,
        loss=loss,
        excess=excessive_loss(loss, n, params.delta),
        p_error=p_e,
        p_undetected=p_u,
        sample_size=s_int,
        verify_bits=v_int,
        design_rate=rate,
        warnings=warnings,
    )


def analyze(params: SystemParams, config: StrategyConfig, expectation: bool = False) -> LossReport:
    """Loss report for an explicit strategy configuration."""
    m = config.method
    if m is Method.EERS:
        return eers_loss(params, config.buffer, config.sample_size)
    if m is Method.COMBINATION:
        if config.sample_size is None:
            raise DomainError("the combination method needs an explicit sample size")
        return combination_loss(params, config.buffer, config.sample_size, config.verify_bits)
    return verification_loss(params, m, config.buffer, config.verify_bits, expectation=expectation)

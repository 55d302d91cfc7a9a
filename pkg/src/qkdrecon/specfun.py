"""Scalar special functions: binary entropy, the error-function family, and
the standard normal CDF.

``erf``/``erfc`` delegate to the C library (``math.erf``/``math.erfc``),
whose relative error is a few ulp over the whole real line, including the
deep ``erfc`` tail. The inverses are computed here: a single-precision
polynomial seed followed by Newton steps on ``log erfc`` (tail) or ``erf``
(core), which converges to full double precision.
"""

from __future__ import annotations

import math

from .errors import DomainError

_SQRT_PI_2 = math.sqrt(math.pi) / 2.0
_SQRT2 = math.sqrt(2.0)


def binary_entropy(p: float) -> float:
    """Binary entropy in bits, ``-p log2 p - (1-p) log2 (1-p)``.

    The endpoints evaluate to 0 by continuity.
    """
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"binary_entropy: p={p!r} is not in [0, 1]")
    if p == 0.0 or p == 1.0:
        return 0.0
    q = 1.0 - p
    return -(p * math.log2(p) + q * math.log2(q))


def erf(x: float) -> float:
    return math.erf(x)


def erfc(x: float) -> float:
    return math.erfc(x)


def normal_cdf(z: float) -> float:
    """Standard normal CDF via ``0.5 * erfc(-z / sqrt(2))``."""
    return 0.5 * math.erfc(-z / _SQRT2)


def _seed(x: float, w: float) -> float:
    # Giles (2010) single-precision erfinv; w = -log((1-x)(1+x))
    if w < 5.0:
        w -= 2.5
        p = 2.81022636e-08
        p = 3.43273939e-07 + p * w
        p = -3.5233877e-06 + p * w
        p = -4.39150654e-06 + p * w
        p = 0.00021858087 + p * w
        p = -0.00125372503 + p * w
        p = -0.00417768164 + p * w
        p = 0.246640727 + p * w
        p = 1.50140941 + p * w
    else:
        w = math.sqrt(w) - 3.0
        p = -0.000200214257
        p = 0.000100950558 + p * w
        p = 0.00134934322 + p * w
        p = -0.00367342844 + p * w
        p = 0.00573950773 + p * w
        p = -0.0076224613 + p * w
        p = 0.00943887047 + p * w
        p = 1.00167406 + p * w
        p = 2.83297682 + p * w
    return p * x


def erfcinv(q: float) -> float:
    """Inverse of ``erfc`` on ``(0, 2)``.

    Accurate in relative terms for tiny ``q`` (``erfcinv(2e-6)`` does not
    lose digits to the ``1 - q`` cancellation that ``erfinv(1 - q)`` would).
    """
    if not 0.0 < q < 2.0:
        raise DomainError(f"erfcinv: q={q!r} is not in (0, 2)")
    if q > 1.0:
        return -erfcinv(2.0 - q)
    if q == 1.0:
        return 0.0
    if q > 0.5:
        return erfinv(1.0 - q)
    if q < 1e-8:
        # asymptotic erfc(x) ~ exp(-x^2) / (x sqrt(pi)), iterated
        x = math.sqrt(-math.log(q))
        for _ in range(3):
            x = math.sqrt(-math.log(q * x * math.sqrt(math.pi)))
    else:
        x = _seed(1.0 - q, -math.log(q * (2.0 - q)))
    target = math.log(q)
    # Newton on g(x) = log erfc(x) - log q
    for _ in range(50):
        c = math.erfc(x)
        if c == 0.0:
            x *= 0.95
            continue
        step = (math.log(c) - target) * _SQRT_PI_2 * math.exp(math.log(c) + x * x)
        step = max(-0.5, min(0.5, step))
        x += step
        if abs(step) <= 4e-16 * abs(x):
            break
    return x


def erfinv(y: float) -> float:
    """Inverse of ``erf`` on ``(-1, 1)``."""
    if not -1.0 < y < 1.0:
        raise DomainError(f"erfinv: y={y!r} is not in (-1, 1)")
    if y == 0.0:
        return 0.0
    if y < 0.0:
        return -erfinv(-y)
    if y > 0.5:
        return erfcinv(1.0 - y)
    x = _seed(y, -math.log((1.0 - y) * (1.0 + y)))
    for _ in range(50):
        step = (math.erf(x) - y) * _SQRT_PI_2 * math.exp(x * x)
        x -= step
        if abs(step) <= 4e-16 * abs(x):
            break
    return x

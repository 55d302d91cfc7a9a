import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qkdrecon.errors import DomainError
from qkdrecon.specfun import binary_entropy, erf, erfc, erfcinv, erfinv, normal_cdf

# 50-digit mpmath evaluations, frozen
H_005 = 0.28639695711595612877
ERFC_3367 = 1.9200977189008374585e-6
ERFINV_1M2E6 = 3.3611785626256495116
PHI_M1298 = 0.097143667485509620626
PHI_6_TAIL = 9.8658764503769814070e-10
ERFC_TABLE = [
    (0.1, 0.8875370839817151016),
    (0.5, 0.47950012218695346232),
    (1.0, 0.15729920705028513066),
    (2.0, 0.0046777349810472658379),
    (3.0, 0.000022090496998585441373),
    (4.0, 1.5417257900280018852e-8),
    (5.0, 1.5374597944280348502e-12),
    (6.0, 2.1519736712498913117e-17),
    (8.0, 1.122429717298292708e-29),
    (10.0, 2.088487583762544757e-45),
    (15.0, 7.2129941724512066666e-100),
    (20.0, 5.3958656116079009289e-176),
    (26.0, 5.6631924088561428465e-296),
]


class TestBinaryEntropy:
    def test_half(self):
        assert binary_entropy(0.5) == 1.0

    @pytest.mark.parametrize("p", [0.0, 1.0])
    def test_endpoints(self, p):
        assert binary_entropy(p) == 0.0

    def test_five_percent(self):
        assert binary_entropy(0.05) == pytest.approx(H_005, rel=1e-14)

    @pytest.mark.parametrize("p", [-1e-12, 1.0000001, math.nan])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            binary_entropy(p)

    def test_symmetry_random(self):
        rng = np.random.default_rng(1)
        for p in rng.random(10_000):
            assert binary_entropy(p) == pytest.approx(binary_entropy(1 - p), abs=1e-13)

    def test_strictly_monotone_halves(self):
        up = [binary_entropy(p) for p in np.linspace(0, 0.5, 2001)]
        down = [binary_entropy(p) for p in np.linspace(0.5, 1, 2001)]
        assert all(b > a for a, b in zip(up, up[1:]))
        assert all(b < a for a, b in zip(down, down[1:]))

    @given(st.floats(0, 1))
    def test_range(self, p):
        assert 0.0 <= binary_entropy(p) <= 1.0


class TestErf:
    def test_zero(self):
        assert erf(0.0) == 0.0

    def test_odd(self):
        assert erf(-1.3) == -erf(1.3)

    def test_erfc_3367(self):
        assert erfc(3.367) == pytest.approx(ERFC_3367, rel=1e-10)

    @pytest.mark.parametrize("x, expected", ERFC_TABLE)
    def test_erfc_tail_relative(self, x, expected):
        assert erfc(x) == pytest.approx(expected, rel=1e-10)

    @given(st.floats(-30, 30))
    def test_complement(self, x):
        assert erf(x) + erfc(x) == pytest.approx(1.0, abs=1e-12)

    def test_against_mpmath_grid(self):
        for x in np.linspace(-6, 6, 241):
            ref = float(mp.erfc(mp.mpf(float(x))))
            assert erfc(float(x)) == pytest.approx(ref, rel=1e-10)

    @pytest.mark.parametrize("x", [5.0, 6.0])
    def test_asymptotic(self, x):
        assert erfc(x) * math.exp(x * x) * x * math.sqrt(math.pi) == pytest.approx(1.0, rel=0.05)


class TestInverse:
    def test_zero(self):
        assert erfinv(0.0) == 0.0

    def test_round_trip_two(self):
        assert erfinv(erf(2.0)) == pytest.approx(2.0, abs=1e-9)

    def test_near_one(self):
        assert erfinv(1 - 2e-6) == pytest.approx(ERFINV_1M2E6, abs=1e-9)
        assert erfcinv(2e-6) == pytest.approx(ERFINV_1M2E6, rel=1e-14)

    @pytest.mark.parametrize("y", [1.0, -1.0, 1.5])
    def test_domain(self, y):
        with pytest.raises(DomainError):
            erfinv(y)

    @pytest.mark.parametrize("q", [0.0, 2.0, -0.1])
    def test_erfcinv_domain(self, q):
        with pytest.raises(DomainError):
            erfcinv(q)

    def test_round_trip_grid(self):
        for y in np.linspace(-1 + 1e-7, 1 - 1e-7, 20_001):
            assert abs(erf(erfinv(y)) - y) <= 1e-9

    def test_monotone(self):
        xs = [erfinv(y) for y in np.linspace(-0.999999, 0.999999, 5001)]
        assert all(b > a for a, b in zip(xs, xs[1:]))

    @pytest.mark.parametrize("k", [1, 3, 6, 9, 12, 20, 50, 100, 200, 300])
    def test_erfcinv_deep_tail(self, k):
        q = 10.0**-k
        x = erfcinv(q)
        assert float(mp.erfc(mp.mpf(x))) == pytest.approx(q, rel=1e-12)

    @settings(max_examples=300)
    @given(st.floats(1e-300, 2 - 1e-12))
    def test_erfcinv_round_trip(self, q):
        x = erfcinv(q)
        assert float(mp.erfc(mp.mpf(x))) == pytest.approx(q, rel=1e-11, abs=1e-15)


class TestNormalCdf:
    def test_zero(self):
        assert normal_cdf(0.0) == 0.5

    def test_values(self):
        assert normal_cdf(-1.298) == pytest.approx(PHI_M1298, rel=1e-12)
        assert 1 - normal_cdf(6.0) == pytest.approx(PHI_6_TAIL, rel=1e-6)
        assert normal_cdf(-6.0) == pytest.approx(PHI_6_TAIL, rel=1e-10)

    @given(st.floats(-40, 40))
    def test_reflection(self, z):
        assert normal_cdf(z) + normal_cdf(-z) == pytest.approx(1.0, abs=1e-12)

import math

import numpy as np
import pytest

from qkdrecon.analytic import Method, SystemParams, combination_loss, eers_loss, verification_loss
from qkdrecon.errors import DomainError
from qkdrecon.optimize import (
    SWEEP_COLUMNS,
    crossover_sigma,
    golden_section,
    optimize_buffer,
    optimize_combination,
    sweep,
)


def _objective(params, method, buffer):
    try:
        if method is Method.EERS:
            return eers_loss(params, buffer).excess
        return verification_loss(params, method, buffer).excess
    except DomainError:
        return math.inf


def _brute(params, method, step=1e-5):
    grid = np.arange(step, 0.5 - params.delta - 1e-6, step)
    vals = np.array([_objective(params, method, b) for b in grid])
    k = int(np.argmin(vals))
    # exhaustive second pass inside the winning cell; the 1e-5 grid alone can
    # sit 2e-5 above the minimum where the objective is steep
    fine = np.linspace(max(grid[k] - step, 1e-9), grid[k] + step, 2001)
    fvals = np.array([_objective(params, method, b) for b in fine])
    j = int(np.argmin(fvals))
    return float(fine[j]), float(fvals[j])


def test_golden_section_quadratic():
    x, fx, (a, b) = golden_section(lambda t: (t - 0.3) ** 2, 0.0, 1.0, 1e-9)
    assert x == pytest.approx(0.3, abs=1e-8)
    assert b - a <= 1e-9


class TestReproduction:
    def test_eers_five_percent(self):
        r = optimize_buffer(SystemParams(10**6, 0.05, 1e-6), "eers")
        assert r.converged
        assert r.best_config.buffer == pytest.approx(0.0126, abs=2e-4)
        assert r.best_report.excess == pytest.approx(0.075, abs=0.001)
        assert r.best_report.disclosed_fraction == pytest.approx(0.036, abs=0.001)

    def test_eers_one_percent(self):
        r = optimize_buffer(SystemParams(10**6, 0.01, 1e-6), "eers")
        assert r.best_report.excess == pytest.approx(0.105, abs=0.001)

    def test_combination_five_percent(self):
        r = optimize_buffer(SystemParams(10**6, 0.05, 1e-6), "combo")
        assert r.converged
        assert r.best_config.buffer == pytest.approx(0.0081, abs=2e-4)
        assert r.best_report.disclosed_fraction == pytest.approx(0.023, abs=0.001)
        assert r.best_report.excess == pytest.approx(0.053, abs=0.001)
        assert r.best_report.p_undetected <= 1e-6

    def test_combination_one_percent(self):
        r = optimize_buffer(SystemParams(10**6, 0.01, 1e-6), "combo")
        assert r.best_config.buffer == pytest.approx(0.0077, abs=2e-4)
        assert r.best_report.excess == pytest.approx(0.076, abs=0.001)

    def test_long_block_eers_buffer(self):
        r = optimize_buffer(SystemParams(2_600_000, 0.016, 1e-6), "eers")
        assert r.best_config.buffer == pytest.approx(0.0089, abs=2e-4)

    def test_combination_never_worse_than_eers(self):
        for delta in (0.005, 0.01, 0.03, 0.05, 0.1):
            p = SystemParams(10**6, delta, 1e-6)
            assert optimize_buffer(p, "combo").best_report.excess <= optimize_buffer(p, "eers").best_report.excess + 1e-9

    def test_verification_dominates_with_binomial_spread(self):
        p = SystemParams(10**6, 0.05, 1e-6)
        v = optimize_buffer(p, "verify-mindist").best_report.excess
        assert v < optimize_buffer(p, "combo").best_report.excess
        assert v < optimize_buffer(p, "eers").best_report.excess

    def test_verification_insensitive_to_epsilon(self):
        def rise(method):
            a = optimize_buffer(SystemParams(10**6, 0.05, 1e-5), method).best_report.excess
            b = optimize_buffer(SystemParams(10**6, 0.05, 1e-9), method).best_report.excess
            return b - a

        assert rise("verify-parity") < 0.1 * rise("eers")


class TestBruteForce:
    @pytest.mark.parametrize("method", [Method.EERS, Method.VERIFY_MINDIST, Method.VERIFY_PARITY])
    def test_random_draws(self, method):
        rng = np.random.default_rng({"eers": 11, "verify-mindist": 12, "verify-parity": 13}[method.value])
        for _ in range(20):
            n = int(10 ** rng.uniform(5, 7))
            delta = float(rng.uniform(0.001, 0.2))
            eps = float(10 ** rng.uniform(-10, -2))
            sigma = float(rng.uniform(1e-4, 5e-3))
            p = SystemParams(n, delta, eps, sigma)
            try:
                res = optimize_buffer(p, method)
            except DomainError:
                continue
            ref_x, ref_f = _brute(p, method)
            assert abs(res.best_config.buffer - ref_x) <= 2e-5
            assert abs(res.best_report.excess - ref_f) <= 1e-5
            # minima can sit on the kink where p_E reaches epsilon; the 1e-7
            # bracket then allows a few 1e-7 in value
            assert res.best_report.excess <= ref_f + 1e-6

    def test_local_minimum(self):
        for method in (Method.EERS, Method.VERIFY_MINDIST):
            p = SystemParams(10**6, 0.03, 1e-6, 1e-3)
            res = optimize_buffer(p, method)
            x, fx = res.best_config.buffer, res.best_report.excess
            # ten times the 1e-7 tolerance, and coarser
            for h in (1e-6, 1e-5, 1e-4):
                assert _objective(p, method, x - h) >= fx - 1e-10
                assert _objective(p, method, x + h) >= fx - 1e-10

    def test_combination_brute_force_sample(self):
        p = SystemParams(10**5, 0.05, 1e-4)
        res = optimize_combination(p)
        best = math.inf
        for s in range(200, 4000, 20):
            for b in np.arange(1e-4, 0.1, 1e-4):
                try:
                    best = min(best, combination_loss(p, float(b), s).excess)
                except DomainError:
                    pass
        assert res.best_report.excess <= best + 1e-7


class TestBehaviour:
    def test_deterministic(self):
        p = SystemParams(10**6, 0.05, 1e-6)
        for m in Method:
            assert optimize_buffer(p, m).to_dict() == optimize_buffer(p, m).to_dict()

    @pytest.mark.parametrize("method", ["eers", "combo"])
    def test_sigma_invariant(self, method):
        a = optimize_buffer(SystemParams(10**6, 0.05, 1e-6, 0.0), method)
        b = optimize_buffer(SystemParams(10**6, 0.05, 1e-6, 0.01), method)
        assert a.best_config == b.best_config

    def test_zero_sigma_boundary(self):
        r = optimize_buffer(SystemParams(10**6, 0.05, 1e-6, 0.0), "verify-mindist")
        assert not r.converged
        assert r.best_report.excess == pytest.approx(r.best_report.verify_bits / 1e6, abs=2e-5)

    def test_loose_security_combination(self):
        r = optimize_buffer(SystemParams(10**6, 0.05, 0.49), "combo")
        assert r.best_report.excess >= 0
        assert r.best_report.verify_bits == 0

    def test_result_shape(self):
        r = optimize_buffer(SystemParams(10**6, 0.05, 1e-6), "eers")
        d = r.to_dict()
        assert set(d) >= {"config", "report", "objective_evals", "converged", "bracket"}
        assert r.objective_evals > 64
        assert r.bracket[1] - r.bracket[0] <= 1e-7

    def test_no_room(self):
        with pytest.raises(DomainError):
            optimize_buffer(SystemParams(10**6, 0.5 - 1e-8, 1e-6), "eers")


class TestSweep:
    def test_order_and_columns(self):
        rows = sweep(SystemParams(10**6, 0.05, 1e-6), "delta", [0.01, 0.02, 0.03], ["eers", "combo"])
        assert [(r.value, r.method.value) for r in rows] == [
            (v, m) for v in (0.01, 0.02, 0.03) for m in ("eers", "combo")
        ]
        assert all(len(r.as_tuple()) == len(SWEEP_COLUMNS) for r in rows)

    def test_single_point_matches_direct(self):
        p = SystemParams(10**6, 0.05, 1e-6)
        (row,) = sweep(p.replace(delta=0.02), "delta", [0.02], ["verify-parity"])
        direct = optimize_buffer(p.replace(delta=0.02), "verify-parity")
        assert row.excess == direct.best_report.excess
        assert row.buffer == direct.best_config.buffer

    def test_error_rows(self):
        rows = sweep(SystemParams(10**6, 0.05, 1e-6), "delta", [0.05, 0.6], ["eers"])
        assert rows[0].error == ""
        assert rows[1].error and rows[1].excess is None

    def test_workers_same_rows(self):
        p = SystemParams(10**5, 0.05, 1e-6)
        a = sweep(p, "n", [1e4, 1e5, 1e6], ["eers", "verify-mindist"])
        b = sweep(p, "n", [1e4, 1e5, 1e6], ["eers", "verify-mindist"], workers=2)
        assert [r.as_tuple() for r in a] == [r.as_tuple() for r in b]

    def test_sigma_tracks_default_when_varying_delta(self):
        p = SystemParams(10**6, 0.05, 1e-6)
        (row,) = sweep(p, "delta", [0.01], ["verify-mindist"])
        direct = optimize_buffer(SystemParams(10**6, 0.01, 1e-6), "verify-mindist")
        assert row.excess == direct.best_report.excess

    def test_bad_parameter(self):
        with pytest.raises(DomainError):
            sweep(SystemParams(10**6, 0.05, 1e-6), "buffer", [0.1])
        with pytest.raises(DomainError):
            sweep(SystemParams(10**6, 0.05, 1e-6), "delta", [])


def test_crossover_sigma():
    s = crossover_sigma(SystemParams(10**6, 0.05, 1e-6))
    assert s == pytest.approx(0.0035, abs=2e-4)
    p = SystemParams(10**6, 0.05, 1e-6)
    ref = optimize_buffer(p, "combo").best_report.excess
    assert optimize_buffer(p.replace(sigma=0.5 * s), "verify-mindist").best_report.excess < ref
    assert optimize_buffer(p.replace(sigma=2 * s), "verify-mindist").best_report.excess > ref

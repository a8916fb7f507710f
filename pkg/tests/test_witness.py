import math

import numpy as np
import pytest
from _reference import VIOLATION_INTERVAL
from scipy.integrate import quad
from scipy.special import sici

from biphoton.exceptions import NoSignChangeError, NumericalError
from biphoton.schmidt import k_gaussian_1d, k_gaussian_2d
from biphoton.states import GaussianBiphoton, gaussian_from_p
from biphoton.witness import (
    GAUSSIAN_BOUND,
    Family,
    evaluate_witness,
    sweep,
    violation_interval,
    witness_value,
)

SPDC = Family.spdc()

# endpoints of W(P) = 1/4 found by the bisection, pinned as regression values
PINNED_INTERVAL = (0.555859375, 2.619921875)


def oracle_w(p):
    """W of the SPDC family from scipy quad and scipy's sici, in pump-waist units."""
    def sint(y):
        return 1 - 2 / math.pi * sici(y)[0]

    def var(f):
        m0 = quad(f, 0, 12, limit=4000, epsabs=0, epsrel=1e-12)[0]
        m2 = quad(lambda t: t * t * f(t), 0, 12, limit=4000, epsabs=0, epsrel=1e-12)[0]
        return m2 / m0

    vq = var(lambda t: math.exp(-t * t / 2) * np.sinc(p * p * t * t / (4 * math.pi)) ** 2)
    vx = var(lambda t: math.exp(-t * t / 2) * sint(t * t / (4 * p * p)) ** 2)
    return vq * vx


class TestEvaluate:
    def test_gaussian_examples(self):
        r = evaluate_witness(gaussian_from_p(1.0))
        assert r.w == pytest.approx(0.25, abs=1e-12)
        assert not r.gaussian_bound_violated
        assert evaluate_witness(gaussian_from_p(2.0)).w == pytest.approx(0.16, abs=1e-12)

    def test_spdc_row_four(self, experiment_states):
        r = evaluate_witness(experiment_states[3])
        assert r.w == pytest.approx(0.34, abs=0.01)
        assert r.gaussian_bound_violated

    def test_product_law(self, experiment_states):
        for s in experiment_states:
            r = evaluate_witness(s)
            assert r.w == r.var_q_given_0 * r.var_x_given_0
            assert r.w > 0

    @pytest.mark.parametrize("p", [0.3, 0.9112, 1.8])
    def test_spdc_against_independent_oracle(self, p):
        assert witness_value(SPDC, p) == pytest.approx(oracle_w(p), rel=1e-7)

    def test_as_dict(self):
        d = evaluate_witness(GaussianBiphoton(2.0, 1.0)).as_dict()
        assert d["gaussian_bound"] == GAUSSIAN_BOUND
        assert set(d) >= {"p", "w", "var_q_given_0_per_m2", "var_x_given_0_m2"}

    def test_rejects_other_types(self):
        with pytest.raises(TypeError):
            evaluate_witness("state")


class TestGaussianBound:
    def test_dense_grid_maximum(self):
        ps = np.linspace(0.01, 10, 200_001)
        w = np.array([witness_value("gaussian", p) for p in ps])
        assert np.all(w <= GAUSSIAN_BOUND + 1e-15)
        i = int(np.argmax(w))
        assert abs(w[i] - GAUSSIAN_BOUND) < 1e-9
        assert abs(ps[i] - 1.0) < 1e-3

    @pytest.mark.parametrize("p", np.geomspace(0.1, 10, 20))
    def test_numeric_equals_inverse_schmidt(self, p):
        assert evaluate_witness(gaussian_from_p(p)).w == pytest.approx(1 / (4 * k_gaussian_2d(p)), rel=1e-6)


class TestSweep:
    def test_gaussian_three_steps(self):
        rows = sweep("gaussian", 0.5, 2.0, 3)
        np.testing.assert_allclose([r.w for r in rows], [0.16, 0.25, 0.16], atol=1e-12)
        for r in rows:
            assert r.w == pytest.approx(1 / (4 * r.k_1d**2), rel=1e-12)
            assert r.k_1d == k_gaussian_1d(r.p)

    def test_single_point_spdc(self):
        assert witness_value(SPDC, 0.9112) == pytest.approx(0.43, abs=0.015)

    def test_order_and_values_independent_of_threads(self, monkeypatch):
        one = sweep(SPDC, 0.3, 1.5, 6, threads=1)
        many = sweep(SPDC, 0.3, 1.5, 6, threads=4)
        assert one == many
        monkeypatch.setenv("BIPHOTON_THREADS", "2")
        assert sweep(SPDC, 0.3, 1.5, 6) == one

    def test_failures_recorded_per_row(self):
        rows = sweep(SPDC, 1e-5, 0.5, 2, threads=1)
        assert rows[0].w is None and rows[0].error
        assert rows[1].w is not None and rows[1].error is None

    @pytest.mark.parametrize("args", [(0.0, 1.0, 3), (2.0, 1.0, 3), (0.5, 1.0, 1)])
    def test_validation(self, args):
        with pytest.raises(ValueError):
            sweep("gaussian", *args)

    def test_log_spacing(self):
        np.testing.assert_allclose([r.p for r in sweep("gaussian", 0.5, 2.0, 3)], [0.5, 1.0, 2.0])

    def test_spdc_violation_rows_match_published_window(self):
        rows = sweep(SPDC, 0.1, 3.0, 30)
        lo, hi = VIOLATION_INTERVAL
        for r in rows:
            assert r.violated == (lo < r.p < hi), f"P = {r.p:.2f}: W = {r.w:.5f}"


@pytest.fixture(scope="module")
def interval():
    return violation_interval(SPDC)


class TestInterval:
    def test_regression(self, interval):
        np.testing.assert_allclose(interval, PINNED_INTERVAL, atol=2e-3)

    def test_endpoints_are_roots(self, interval):
        for p in interval:
            assert abs(witness_value(SPDC, p) - GAUSSIAN_BOUND) < 1e-3
            assert abs(oracle_w(p) - GAUSSIAN_BOUND) < 1e-3

    def test_lower_endpoint_matches_published(self, interval):
        assert abs(interval[0] - VIOLATION_INTERVAL[0]) <= 0.03

    def test_upper_endpoint_matches_published(self, interval):
        assert abs(interval[1] - VIOLATION_INTERVAL[1]) <= 0.03

    def test_gaussian_family_has_no_interval(self):
        with pytest.raises(NoSignChangeError):
            violation_interval(Family.gaussian())
        assert issubclass(NoSignChangeError, NumericalError)

    @pytest.mark.parametrize("flank", [(0.05, VIOLATION_INTERVAL[0]), (5.0, VIOLATION_INTERVAL[1])])
    def test_flanks_do_not_change_sign(self, flank):
        # 0.01 steps in P; the published window is closed, so its endpoint
        # is left out of each flank
        n = int(round(abs(flank[1] - flank[0]) / 0.01))
        ps = np.linspace(*flank, n + 1)[:-1]
        signs = {witness_value(SPDC, p) > GAUSSIAN_BOUND for p in ps}
        assert len(signs) == 1, f"W - 1/4 changes sign on {flank}"

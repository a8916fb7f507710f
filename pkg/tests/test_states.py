import math

import numpy as np
import pytest
from _reference import CRYSTAL_LENGTH, PUMP_WAISTS, TABLE_I_P, WAVELENGTH
from hypothesis import given
from hypothesis import strategies as st

from biphoton.specfun import sint
from biphoton.states import (
    GaussianBiphoton,
    Representation,
    SpdcBiphoton,
    gaussian_from_p,
    momentum_amplitude,
    p_param,
    position_amplitude,
    spdc_from_experiment,
)

coord = st.floats(-50, 50, allow_nan=False)


def test_table_one_rows():
    for c, p in zip(PUMP_WAISTS, TABLE_I_P):
        assert round(spdc_from_experiment(c, CRYSTAL_LENGTH, WAVELENGTH).p, 4) == p


def test_vacuum_wavenumber():
    s = spdc_from_experiment(45e-6, CRYSTAL_LENGTH, WAVELENGTH)
    assert s.wavenumber == 2 * math.pi / WAVELENGTH
    assert s.b == pytest.approx(CRYSTAL_LENGTH / (8 * s.wavenumber), rel=1e-15)
    assert round(p_param(s), 4) == 0.7087


@pytest.mark.parametrize("args", [(0, 1, 1), (1, -1, 1), (1, 1, 0), (math.nan, 1, 1)])
def test_spdc_rejects_non_positive(args):
    with pytest.raises(ValueError):
        spdc_from_experiment(*args)


def test_gaussian_validation_and_p():
    with pytest.raises(ValueError):
        GaussianBiphoton(0.0, 1.0)
    assert p_param(GaussianBiphoton(3.0, 3.0)) == 1.0
    assert p_param(GaussianBiphoton(2.0, 1.0)) == 2.0
    assert gaussian_from_p(0.5, 4.0).sigma_plus == 2.0


def test_with_p_keeps_crystal():
    s = spdc_from_experiment(100e-6, CRYSTAL_LENGTH, WAVELENGTH).with_p(0.9)
    assert s.p == pytest.approx(0.9, rel=1e-14)
    assert s.crystal_length == CRYSTAL_LENGTH


@pytest.mark.parametrize("text,rep", [("q", Representation.MOMENTUM), ("far", Representation.MOMENTUM),
                                      ("x", Representation.POSITION), ("near", Representation.POSITION)])
def test_representation_parse(text, rep):
    assert Representation.parse(text) is rep


class TestAmplitudes:
    states = [GaussianBiphoton(2.0, 1.0), spdc_from_experiment(70e-6, CRYSTAL_LENGTH, WAVELENGTH)]

    @pytest.mark.parametrize("state", states)
    def test_unity_at_origin(self, state):
        assert momentum_amplitude(state, 0.0, 0.0) == 1.0
        assert position_amplitude(state, 0.0, 0.0) == 1.0

    def test_first_sinc_zero(self):
        s = self.states[1]
        d = math.sqrt(math.pi / s.b)
        assert abs(momentum_amplitude(s, d / 2, -d / 2)) < 1e-15

    def test_gaussian_substitution(self):
        g = GaussianBiphoton(1.7, 1.7)
        assert momentum_amplitude(g, 1.7 * math.sqrt(2), 0.0) == pytest.approx(math.exp(-1), rel=1e-14)

    def test_spdc_diagonal(self):
        s = self.states[1]
        x = np.linspace(-3, 3, 7) * s.pump_waist
        np.testing.assert_allclose(position_amplitude(s, x, x), np.exp(-x**2 / s.pump_waist**2),
                                   rtol=1e-14)

    def test_spdc_position_form(self):
        s = self.states[1]
        x1, x2 = 20e-6, -35e-6
        ref = math.exp(-((x1 + x2) / 2) ** 2 / s.pump_waist**2) * sint(((x1 - x2) / 2) ** 2 / (4 * s.b))
        assert position_amplitude(s, x1, x2) == pytest.approx(ref, rel=1e-14)

    @given(coord, coord)
    def test_exchange_symmetry(self, a, b):
        g = GaussianBiphoton(2.0, 0.7)
        s = spdc_from_experiment(1.0, 4.0, 1.0)  # b ~ 0.08, c ~ 1 in these units
        for st_ in (g, s):
            assert momentum_amplitude(st_, a, b) == momentum_amplitude(st_, b, a)
            assert position_amplitude(st_, a, b) == position_amplitude(st_, b, a)


def test_gaussian_fourier_consistency():
    """Dense 2D Fourier sum of the momentum amplitude against the position form."""
    g = GaussianBiphoton(2.0, 1.0)
    n = 601
    q = np.linspace(-12 * 2.0 * 2, 12 * 2.0 * 2, n)
    dq = q[1] - q[0]
    amp = momentum_amplitude(g, q[:, None], q[None, :])
    # +-5 natural widths of |amplitude|^2 along x1 + x2 and x1 - x2
    ws, wd = 1 / g.sigma_plus, 1 / g.sigma_minus
    S, D = np.meshgrid(np.linspace(-5 * ws, 5 * ws, 21), np.linspace(-5 * wd, 5 * wd, 21))
    x1, x2 = ((S + D) / 2).ravel(), ((S - D) / 2).ravel()
    e1, e2 = np.exp(1j * np.outer(x1, q)), np.exp(1j * np.outer(x2, q))
    ft = np.einsum("ij,jk,ik->i", e1, amp, e2).real * dq * dq
    origin = amp.sum() * dq * dq
    ref = position_amplitude(g, x1, x2)
    assert np.max(np.abs(ft / origin / ref - 1)) < 1e-6


def test_spdc_radial_transform_is_sint():
    """2048^2 FFT of sinc(b|q|^2) against sint(|x|^2 / 4b), b = 1."""
    n, qmax = 2048, 36.0
    dq = 2 * qmax / n
    q = (np.arange(n) - n // 2) * dq
    q1, q2 = np.meshgrid(q, q, indexing="ij", sparse=True)
    u = q1**2 + q2**2
    r = np.sqrt(u)
    r0 = 0.85 * qmax
    # cosine roll-off keeps the truncated sinc from ringing
    taper = np.where(r < r0, 1.0, np.where(r < qmax, 0.5 * (1 + np.cos(np.pi * (r - r0) / (qmax - r0))), 0.0))
    f = np.sinc(u / np.pi) * taper
    col = np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(f)))[:, n // 2].real
    x = (np.arange(n) - n // 2) * 2 * np.pi / (n * dq)
    sel = (x >= 0) & (x * x / 4 <= 20)
    numeric = col[sel] / col[n // 2]
    exact = sint(x[sel] ** 2 / 4)
    assert np.max(np.abs(numeric - exact)) < 1e-3

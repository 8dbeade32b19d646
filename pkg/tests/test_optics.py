import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from qeraser.exceptions import DomainError
from qeraser.optics import (
    ComplexAmp,
    SlitGeometry,
    SlitLabel,
    beamsplitter_matrix,
    beamsplitter_transfer,
    born_probability,
    envelope_moments,
    signal_amplitude,
    signal_amplitudes,
    superpose,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_amplitudes_equal_on_axis(geom):
    a = signal_amplitude(SlitLabel.A, 0.0, geom)
    b = signal_amplitude(SlitLabel.B, 0.0, geom)
    assert a.isclose(b, atol=0)
    assert a.im == 0.0


def test_relative_phase_advances_2pi_per_fringe(geom):
    # lambda L / d at 702.2 nm, 1 m, 0.3 mm
    period = 702.2e-9 * 1.0 / 0.3e-3
    assert period == pytest.approx(2.34e-3, abs=1e-5)
    assert geom.fringe_period == pytest.approx(period, rel=1e-15)
    x = np.linspace(-3e-3, 3e-3 - period, 7)
    for x0 in x:
        pts = np.linspace(x0, x0 + period, 201)
        rel = np.unwrap(np.angle(signal_amplitudes("A", pts, geom) / signal_amplitudes("B", pts, geom)))
        assert rel[-1] - rel[0] == pytest.approx(2 * math.pi, abs=1e-9)


@pytest.mark.parametrize("slit", list(SlitLabel))
def test_normalized_over_scan_by_quadrature(geom, slit):
    w = geom.scan_halfwidth
    val, err = integrate.quad(
        lambda x: abs(complex(signal_amplitude(slit, x, geom))) ** 2, -w, w,
        epsabs=1e-13, epsrel=1e-13, limit=200,
    )
    assert val == pytest.approx(1.0, abs=1e-9)


@given(
    wavelength=st.floats(400e-9, 1100e-9),
    sep=st.floats(0.2e-3, 1e-3),
    width_frac=st.floats(0.05, 0.9),
    halfwidth=st.floats(6e-3, 20e-3),
)
def test_normalization_any_geometry(wavelength, sep, width_frac, halfwidth):
    g = SlitGeometry(wavelength, sep, width_frac * sep, 1.0, halfwidth)
    w = g.scan_halfwidth
    xs = np.linspace(-w, w, 20001)
    dens = np.abs(signal_amplitudes("A", xs, g)) ** 2
    assert integrate.simpson(dens, x=xs) == pytest.approx(1.0, abs=1e-7)


@given(st.floats(-7e-3, 7e-3))
def test_relative_phase_linear(x):
    g = SlitGeometry()
    a, b = complex(signal_amplitude("A", x, g)), complex(signal_amplitude("B", x, g))
    if abs(a) < 1e-9:
        return
    expected = 2 * math.pi * g.slit_separation * x / (g.wavelength * g.screen_distance)
    diff = np.angle(a / b) - expected
    assert abs(math.remainder(diff, 2 * math.pi)) < 1e-9


def test_out_of_range_position_rejected(geom):
    with pytest.raises(DomainError):
        signal_amplitude("A", 7.01e-3, geom)
    with pytest.raises(DomainError):
        signal_amplitude("A", float("nan"), geom)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"wavelength": -1.0},
        {"slit_width": 0.3e-3},
        {"scan_halfwidth": 2e-3},
        {"screen_distance": float("inf")},
    ],
)
def test_geometry_validation(kwargs):
    with pytest.raises(DomainError):
        SlitGeometry(**kwargs)


def test_complex_amp_rejects_non_finite():
    with pytest.raises(DomainError):
        ComplexAmp(float("nan"), 0.0)
    with pytest.raises(DomainError):
        ComplexAmp(0.0, float("inf"))


@pytest.mark.parametrize(
    "amps, expected",
    [
        ([(1, 0), (-1, 0)], (0, 0)),
        ([(1, 0)], (1, 0)),
        ([(0.5, 0.5), (0.5, -0.5)], (1, 0)),
    ],
)
def test_superpose(amps, expected):
    out = superpose(ComplexAmp(*a) for a in amps)
    assert (out.re, out.im) == expected


def test_superpose_empty():
    with pytest.raises(DomainError):
        superpose([])


@pytest.mark.parametrize(
    "amp, p",
    [((0, 0), 0.0), ((1 / math.sqrt(2), 1 / math.sqrt(2)), 1.0), ((0.6, -0.8), 1.0)],
)
def test_born_probability(amp, p):
    assert born_probability(ComplexAmp(*amp)) == pytest.approx(p, abs=1e-15)


@given(finite, finite)
def test_born_nonnegative(re, im):
    amp = ComplexAmp(re, im)
    p = born_probability(amp)
    assert p >= 0
    assert p == pytest.approx(abs(complex(amp)) ** 2, rel=1e-12, abs=1e-300)


def test_beamsplitter_examples():
    h = math.sqrt(0.5)
    t = beamsplitter_transfer(1, 1, 0.5)
    r = beamsplitter_transfer(1, 2, 0.5)
    assert (t.re, t.im) == pytest.approx((0.70710678, 0), abs=1e-8)
    assert (r.re, r.im) == pytest.approx((0, 0.70710678), abs=1e-8)
    assert t.re == h
    assert beamsplitter_transfer(2, 2, 1.0) == ComplexAmp(0, 0)
    assert beamsplitter_transfer(2, 1, 1.0) == ComplexAmp(0, 1)


@pytest.mark.parametrize("r", [-0.1, 1.1, float("nan")])
def test_beamsplitter_reflectivity_domain(r):
    with pytest.raises(DomainError):
        beamsplitter_transfer(1, 1, r)


@given(st.floats(0, 1))
def test_beamsplitter_unitary(r):
    t, rr = beamsplitter_transfer(1, 1, r), beamsplitter_transfer(1, 2, r)
    assert born_probability(t) + born_probability(rr) == pytest.approx(1.0, abs=1e-12)
    u = beamsplitter_matrix(r)
    assert np.allclose(u @ u.conj().T, np.eye(2), atol=1e-12)
    # the two outputs of one input are orthogonal
    assert abs(np.vdot(u[:, 0], u[:, 1])) < 1e-12


def test_envelope_moments_match_quadrature(geom):
    edges = np.linspace(-geom.scan_halfwidth, geom.scan_halfwidth, 17)
    i0, ic, is_ = envelope_moments(edges, geom)
    assert i0.sum() == pytest.approx(1.0, abs=1e-12)
    k = geom.fringe_wavenumber
    for j in (0, 5, 8, 16 - 1):
        lo, hi = edges[j], edges[j + 1]
        f = lambda x: abs(complex(signal_amplitude("A", x, geom))) ** 2
        assert i0[j] == pytest.approx(integrate.quad(f, lo, hi, epsabs=1e-14)[0], abs=1e-12)
        assert ic[j] == pytest.approx(
            integrate.quad(lambda x: f(x) * math.cos(k * x), lo, hi, epsabs=1e-14)[0], abs=1e-12)
        assert is_[j] == pytest.approx(
            integrate.quad(lambda x: f(x) * math.sin(k * x), lo, hi, epsabs=1e-14)[0], abs=1e-12)

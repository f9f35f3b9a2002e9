import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from waschl.array import ArrayGeometry, steering_vector
from waschl.bessel import bessel_j
from waschl.chdomain import (
    ChCoefficients,
    build_ch_dictionary,
    build_tf_dictionary,
    ch_transform_block,
    equalize,
    equalizer_profile,
    excluded_bins,
    ideal_coeffs,
    mode_orders,
    spatial_dft,
    steering_mode_sign,
)
from waschl.errors import ConfigError, DataError
from waschl.spectral import StftParams, StftTensor, select_band

from conftest import random_complex
from oracles import direct_spatial_dft


def test_spatial_dft_constant_field():
    c = spatial_dft(np.ones(8), ArrayGeometry.equispaced(8, 0.1), 3)
    np.testing.assert_allclose(c.values, [0, 0, 0, 1, 0, 0, 0], atol=1e-15)
    assert not c.equalized


def test_spatial_dft_single_mode(geom8):
    y = np.exp(2j * geom8.azimuths)
    c = spatial_dft(y, geom8, 3)
    expected = np.zeros(7, complex)
    expected[2 + 3] = 1.0
    np.testing.assert_allclose(c.values, expected, atol=1e-14)
    assert c.mode(2) == pytest.approx(1.0)


def test_spatial_dft_matches_direct_sum_1000_random(rng):
    worst = 0.0
    for i in range(1000):
        M = int(rng.integers(3, 25))
        geom = ArrayGeometry.equispaced(M, 0.1) if i % 2 else ArrayGeometry(M, 0.1, tuple(rng.uniform(0, 2 * np.pi, M)))
        y = random_complex(rng, M)
        L = geom.max_order()
        c = spatial_dft(y, geom, L).values
        worst = max(worst, np.max(np.abs(c - direct_spatial_dft(y, geom.azimuths, L))))
    assert worst <= 1e-12


def test_spatial_dft_order_limit(geom8):
    with pytest.raises(ConfigError):
        spatial_dft(np.ones(8), geom8, 4)
    with pytest.raises(DataError):
        spatial_dft(np.ones(7), geom8, 3)


def test_equalize_examples():
    theta = 0.7
    jv1 = bessel_j(1, 1.0)
    raw = ChCoefficients(ideal_coeffs(1.0, 1.0, theta, 1), 1.0)
    z0 = equalize(raw, equalizer_profile(1.0, 1, 0.0))
    assert z0.equalized
    assert z0.mode(1) == pytest.approx(np.exp(-1j * theta), abs=1e-12)
    z1 = equalize(raw, equalizer_profile(1.0, 1, 0.01))
    gain = jv1**2 / (jv1**2 + 0.01)
    assert gain == pytest.approx(0.9509, abs=1e-4)
    assert z1.mode(1) == pytest.approx(gain * np.exp(-1j * theta), abs=1e-12)
    zero = equalize(ChCoefficients(np.zeros(3, complex), 1.0), equalizer_profile(1.0, 1, 0.01))
    assert np.all(zero.values == 0)


def test_equalize_guards():
    raw = ChCoefficients(np.ones(3, complex), 2.404825557695773)
    with pytest.raises(ValueError):
        equalize(raw, equalizer_profile(1.0, 1, 0.1))  # kR mismatch
    with pytest.raises(ValueError):
        equalize(ChCoefficients(np.ones(3, complex), 1.0, equalized=True), equalizer_profile(1.0, 1, 0.1))
    with pytest.raises(ValueError):
        equalizer_profile(0.0, 1, 0.0)  # J_1(0) = 0
    with pytest.raises(ConfigError):
        equalizer_profile(1.0, 1, -0.1)


@given(st.floats(0.1, 30.0), st.floats(0, 2 * math.pi), st.complex_numbers(min_magnitude=0.1, max_magnitude=10))
def test_equalization_identity_away_from_zeros(kr, theta, amp):
    order = 5
    raw = ChCoefficients(ideal_coeffs(amp, kr, theta, order), kr)
    z = equalize(raw, equalizer_profile(kr, order, 0.0)).values
    target = amp * np.exp(-1j * mode_orders(order) * theta)
    jv = np.array([bessel_j(int(p), kr) for p in mode_orders(order)])
    ok = np.abs(jv) > 0.05
    np.testing.assert_allclose(z[ok], target[ok], rtol=0, atol=1e-9 * abs(amp))


@given(st.floats(0.0, 50.0), st.floats(1e-4, 1.0))
def test_regularized_gain_below_one_and_monotone(kr, beta):
    prof = equalizer_profile(kr, 4, beta)
    j2 = prof.signed_bessel()[0] ** 2
    g = j2 / (j2 + beta)
    assert np.all((g >= 0) & (g < 1))
    order = np.argsort(j2)
    assert np.all(np.diff(g[order]) >= -1e-15)
    # gain times the ideal j^p J_p response equals g
    np.testing.assert_allclose(prof.gains[0] * np.exp(1j * np.pi / 2 * mode_orders(4)) * prof.signed_bessel()[0], g, atol=1e-12)


def test_steering_mode_sign_aligns_array_data():
    """Sampled steering data, sign-aligned, equals the ideal coefficients."""
    geom = ArrayGeometry.equispaced(16, 0.1)
    omega, theta, L = 2 * np.pi * 1000.0, 1.1, 3
    kr = omega / 343.0 * 0.1
    raw = spatial_dft(steering_vector(geom, omega, theta), geom, L).values
    np.testing.assert_allclose(raw * steering_mode_sign(L), ideal_coeffs(1.0, kr, theta, L), atol=1e-6)


def test_ch_dictionary_examples():
    D = build_ch_dictionary(4, 1)
    assert D.matrix[2, 1] == pytest.approx(-1j)
    assert D.kind == "ch_modal" and D.n_atoms == 4
    D = build_ch_dictionary(360, 3)
    assert D.matrix.shape == (7, 360)
    np.testing.assert_allclose(np.abs(D.matrix), 1.0, atol=1e-15)
    np.testing.assert_array_equal(D.matrix[3], np.ones(360))
    np.testing.assert_allclose(D.grid, 2 * np.pi * np.arange(360) / 360)
    with pytest.raises(ConfigError):
        build_ch_dictionary(6, 3)


@given(st.integers(1, 6), st.data())
def test_ch_dictionary_columns_independent(order, data):
    Q = 360
    D = build_ch_dictionary(Q, order).matrix
    k = data.draw(st.integers(1, 2 * order + 1))
    cols = data.draw(st.lists(st.integers(0, Q - 1), min_size=k, max_size=k, unique=True))
    assert np.linalg.matrix_rank(D[:, cols]) == k


def test_tf_dictionary(geom8):
    np.testing.assert_array_equal(build_tf_dictionary(geom8, 0.0, 12).matrix, np.ones((8, 12)))
    omega = 2 * np.pi * 1000.0
    D = build_tf_dictionary(geom8, omega, 360)
    for q in (0, 17, 359):
        np.testing.assert_array_equal(D.matrix[:, q], steering_vector(geom8, omega, D.grid[q]))
    np.testing.assert_allclose(np.diag(D.matrix.conj().T @ D.matrix).real, 8.0)


def test_steering_examples():
    g4 = ArrayGeometry.equispaced(4, 0.1)
    omega = np.pi * 343.0 / 0.1
    np.testing.assert_allclose(steering_vector(g4, omega, 0.0), [-1, 1, -1, 1], atol=1e-12)
    g8 = ArrayGeometry.equispaced(8, 0.12)
    omega = 2 * np.pi * 1000.0
    assert omega * 0.12 / 343.0 == pytest.approx(2.1982, abs=1e-4)
    expected = [np.exp(-1j * omega * 0.12 / 343.0 * math.cos(math.radians(30) - th)) for th in g8.azimuths]
    np.testing.assert_allclose(steering_vector(g8, omega, math.radians(30)), expected, atol=1e-12)


@given(st.floats(0, 2 * math.pi), st.floats(10.0, 3e4))
def test_steering_periodic_and_rotation_shift(theta, omega):
    g = ArrayGeometry.equispaced(8, 0.12)
    a = steering_vector(g, omega, theta)
    np.testing.assert_allclose(steering_vector(g, omega, theta + 2 * np.pi), a, atol=1e-12)
    rotated = steering_vector(g, omega, theta + 2 * np.pi / 8)
    np.testing.assert_allclose(rotated, np.roll(a, 1), atol=1e-12)


def _tensor_from(data):
    return StftTensor(data, StftParams())


def test_ch_transform_block_plane_wave():
    # 24 mics keep the order p +- 24 alias terms negligible
    geom = ArrayGeometry.equispaced(24, 0.12)
    params = StftParams()
    band = select_band(params, 300.0, 1500.0)
    theta = math.radians(40.0)
    spectrum = random_complex(np.random.default_rng(0), 4, params.n_bins)
    data = np.zeros((24, 4, params.n_bins), complex)
    for b in range(params.n_bins):
        data[:, :, b] = steering_vector(geom, params.bin_frequencies()[b], theta)[:, None] * spectrum[None, :, b]
    Z = ch_transform_block(_tensor_from(data), band, geom, 3, 0.0)
    assert Z.shape == (4, 7, band.n_bins)
    # bins without a Bessel zero of orders 0..3 (here kR < 2.4)
    expected_modes = np.exp(-1j * mode_orders(3) * theta)
    for n in range(4):
        np.testing.assert_allclose(Z[n], expected_modes[:, None] * spectrum[n, band.selected_bins][None, :], rtol=1e-9)


def test_ch_transform_block_zero_and_composition(geom8, rng):
    params = StftParams()
    band = select_band(params, 300.0, 4000.0)
    zero = ch_transform_block(_tensor_from(np.zeros((8, 3, params.n_bins), complex)), band, geom8, 3, 0.01)
    assert np.all(zero == 0)
    data = random_complex(rng, 8, 3, params.n_bins)
    Z = ch_transform_block(_tensor_from(data), band, geom8, 3, 0.01)
    sign = steering_mode_sign(3)
    for n in (0, 2):
        for j, b in enumerate(band.selected_bins[::17]):
            col = list(band.selected_bins).index(b)
            kr = band.wavenumbers[col] * geom8.radius
            raw = direct_spatial_dft(data[:, n, b], geom8.azimuths, 3)
            jv = np.array([bessel_j(int(p), kr) for p in mode_orders(3)])
            gain = (-1j) ** mode_orders(3) * jv / (jv**2 + 0.01)
            np.testing.assert_allclose(Z[n, :, col], gain * sign * raw, rtol=0, atol=1e-12 * np.max(np.abs(gain * raw)))


def test_ch_transform_block_errors(geom8):
    params = StftParams()
    band = select_band(params, 300.0, 4000.0)
    with pytest.raises(DataError):
        ch_transform_block(_tensor_from(np.zeros((6, 2, params.n_bins))), band, geom8, 3, 0.01)
    with pytest.raises(DataError):
        ch_transform_block(_tensor_from(np.zeros((8, 2, params.n_bins))), band, geom8, 3, 0.01, exclude_threshold=2.0)


def test_excluded_bins_near_bessel_zero():
    kr = np.array([1.0, 2.404825557695773, 3.0])
    mask = excluded_bins(equalizer_profile(kr, 3, 0.01), 0.05)
    np.testing.assert_array_equal(mask, [False, True, False])


def test_dictionary_csv_export(tmp_path):
    build_ch_dictionary(8, 1).to_csv(tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert len(lines) == 1 + 3
    assert complex(lines[1].split(",")[2]) == pytest.approx(np.exp(1j * np.pi / 2))
    equalizer_profile([1.0, 2.0], 1, 0.01).to_csv(tmp_path / "e.csv")
    assert len((tmp_path / "e.csv").read_text().splitlines()) == 1 + 3

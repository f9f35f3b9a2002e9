"""Circular-harmonic (modal) domain processing.

Mode vectors are ordered ``p = -L, ..., 0, ..., L`` everywhere (coefficient
vectors, dictionary rows, CSV exports).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .array import ArrayGeometry, steering_matrix
from .bessel import bessel_j, bessel_j_orders
from .errors import ConfigError, DataError
from .spectral import BandSelection, StftTensor

__all__ = [
    "ChCoefficients",
    "Dictionary",
    "EqualizerProfile",
    "angle_grid",
    "mode_orders",
    "bessel_j",
    "ideal_coeffs",
    "spatial_dft",
    "spatial_dft_block",
    "equalizer_profile",
    "equalize",
    "build_ch_dictionary",
    "build_tf_dictionary",
    "ch_transform_block",
]

# below this |J_p| an unregularized equalizer is considered singular
_ZERO_GUARD = 1e-14


def mode_orders(order: int) -> np.ndarray:
    return np.arange(-order, order + 1)


def angle_grid(n_angles: int) -> np.ndarray:
    """Candidate azimuths ``2*pi*q/Q`` for ``q = 0..Q-1``."""
    return 2.0 * np.pi * np.arange(n_angles) / n_angles


def _check_order(geom: ArrayGeometry, order: int) -> None:
    if order < 0 or order > geom.max_order():
        raise ConfigError(
            f"mode order L={order} not observable with M={geom.mic_count} microphones "
            f"(L <= {geom.max_order()})"
        )


@dataclass(frozen=True)
class ChCoefficients:
    values: np.ndarray  # length 2L+1, p = -L..L
    kr: float
    equalized: bool = False

    @property
    def order(self) -> int:
        return (len(self.values) - 1) // 2

    def mode(self, p: int) -> complex:
        return self.values[p + self.order]


@dataclass(frozen=True)
class Dictionary:
    """Dictionary matrix over an azimuth grid.

    ``kind`` is ``"ch_modal"`` (rows are modes, frequency independent) or
    ``"time_frequency"`` (rows are microphones, valid at ``omega`` only).
    """

    matrix: np.ndarray
    grid: np.ndarray
    kind: str
    omega: Optional[float] = None

    @property
    def n_atoms(self) -> int:
        return self.matrix.shape[1]

    def to_csv(self, path) -> None:
        from .io import write_complex_csv

        write_complex_csv(path, self.matrix, header=[f"{np.degrees(t):.6g}" for t in self.grid])


@dataclass(frozen=True)
class EqualizerProfile:
    """Per-bin Bessel responses and the complex equalizer gains derived from them.

    Attributes
    ----------
    beta : float
        Regularization added to ``J_p(kR)^2`` in the denominator.
    kr : ndarray, shape (B,)
    bessel_values : ndarray, shape (B, L+1)
        ``J_p(kR)`` for ``p = 0..L``.
    gains : ndarray, shape (B, 2L+1)
        ``(-j)^p J_p / (J_p^2 + beta)`` for ``p = -L..L``.
    """

    beta: float
    kr: np.ndarray
    bessel_values: np.ndarray
    gains: np.ndarray

    @property
    def order(self) -> int:
        return self.bessel_values.shape[1] - 1

    def signed_bessel(self) -> np.ndarray:
        """``J_p(kR)`` for ``p = -L..L``, shape (B, 2L+1)."""
        orders = mode_orders(self.order)
        sign = np.where((orders < 0) & (orders % 2 == 1), -1.0, 1.0)
        return sign * self.bessel_values[:, np.abs(orders)]

    def to_csv(self, path) -> None:
        from .io import write_complex_csv

        write_complex_csv(path, self.gains.T, header=[f"{k:.6g}" for k in self.kr])


def ideal_coeffs(amplitude: complex, kr: float, theta: float, order: int) -> np.ndarray:
    """Continuous-aperture modal coefficients ``p0 j^p J_p(kR) exp(-j p theta)``."""
    orders = mode_orders(order)
    jp = np.array([bessel_j(int(p), kr) for p in orders])
    return amplitude * np.exp(1j * np.pi / 2 * orders) * jp * np.exp(-1j * orders * theta)


def steering_mode_sign(order: int) -> np.ndarray:
    """Per-mode factor ``(-1)^p`` mapping array data onto the modal model.

    Microphone spectra following ``exp(-j kR cos(theta_i - theta_m))`` have
    modal coefficients ``(-j)^p J_p(kR) exp(-j p theta_i)``, whereas the
    equalizer expects the ``j^p J_p(kR)`` form of :func:`ideal_coeffs`.
    """
    return np.where(mode_orders(order) % 2 == 0, 1.0, -1.0)


def _dft_matrix(geom: ArrayGeometry, order: int) -> np.ndarray:
    orders = mode_orders(order)
    return np.exp(-1j * orders[:, None] * geom.azimuths[None, :]) / geom.mic_count


def spatial_dft_block(spectra: np.ndarray, geom: ArrayGeometry, order: int) -> np.ndarray:
    """Sampled modal coefficients along axis 0.

    ``spectra`` has shape ``(M, ...)``; the result has shape ``(2L+1, ...)``.
    Equispaced arrays go through an FFT, others through the explicit sum.
    """
    _check_order(geom, order)
    spectra = np.asarray(spectra)
    if spectra.shape[0] != geom.mic_count:
        raise DataError(f"expected {geom.mic_count} channels, got {spectra.shape[0]}")
    if geom.is_equispaced():
        full = np.fft.fft(spectra, axis=0) / geom.mic_count
        return full[mode_orders(order) % geom.mic_count]
    return np.tensordot(_dft_matrix(geom, order), spectra, axes=(1, 0))


def spatial_dft(mic_spectra, geom: ArrayGeometry, order: int, kr: float = float("nan")) -> ChCoefficients:
    """Sampled circular-harmonic coefficients of one microphone snapshot.

    ``c_p = (1/M) sum_m y_m exp(-j p theta_m)`` for ``p = -L..L``.

    Raises
    ------
    ConfigError
        If ``order`` exceeds ``floor((M-1)/2)``.
    """
    values = spatial_dft_block(np.asarray(mic_spectra, dtype=complex), geom, order)
    return ChCoefficients(values, kr, equalized=False)


def equalizer_profile(kr, order: int, beta: float) -> EqualizerProfile:
    """Equalizer gains for each ``kR`` in ``kr``.

    Raises
    ------
    ValueError
        If ``beta == 0`` and some ``|J_p(kR)|`` is numerically zero.
    """
    if beta < 0:
        raise ConfigError("beta must be nonnegative")
    kr = np.atleast_1d(np.asarray(kr, dtype=float))
    jv = np.array([bessel_j_orders(order, float(x)) for x in kr]).reshape(len(kr), order + 1)
    if beta == 0 and np.any(np.abs(jv) < _ZERO_GUARD):
        raise ValueError("unregularized equalization at a Bessel zero (set beta > 0)")
    orders = mode_orders(order)
    sign = np.where((orders < 0) & (orders % 2 == 1), -1.0, 1.0)
    j_signed = sign * jv[:, np.abs(orders)]
    phase = np.exp(-1j * np.pi / 2 * orders)  # (-j)^p
    gains = phase * j_signed / (j_signed**2 + beta)
    return EqualizerProfile(float(beta), kr, jv, gains)


def equalize(raw: ChCoefficients, profile: EqualizerProfile) -> ChCoefficients:
    """Remove the Bessel frequency response from raw modal coefficients.

    ``z_p = (-j)^p J_p(kR) / (J_p(kR)^2 + beta) * c_p``.
    ``profile`` must hold exactly one ``kR`` equal to ``raw.kr``.
    """
    if raw.equalized:
        raise ValueError("coefficients are already equalized")
    if len(profile.kr) != 1 or not np.isclose(profile.kr[0], raw.kr):
        raise ValueError("equalizer profile does not match the coefficients' kR")
    if profile.order != raw.order:
        raise ValueError("equalizer order does not match the coefficients")
    return ChCoefficients(profile.gains[0] * raw.values, raw.kr, equalized=True)


def build_ch_dictionary(n_angles: int, order: int) -> Dictionary:
    """Frequency-independent modal dictionary ``D[p, q] = exp(-j p theta_q)``."""
    if n_angles < 2 * order + 1:
        raise ConfigError(f"grid of {n_angles} angles is too coarse for {2 * order + 1} modes")
    grid = angle_grid(n_angles)
    return Dictionary(np.exp(-1j * mode_orders(order)[:, None] * grid[None, :]), grid, "ch_modal")


def build_tf_dictionary(geom: ArrayGeometry, omega: float, n_angles: int) -> Dictionary:
    """Per-frequency dictionary whose columns are steering vectors on the grid."""
    if n_angles < 1:
        raise ConfigError("grid must have at least one angle")
    grid = angle_grid(n_angles)
    return Dictionary(steering_matrix(geom, omega, grid), grid, "time_frequency", float(omega))


def excluded_bins(profile: EqualizerProfile, threshold: float, max_order: int = 1) -> np.ndarray:
    """Mask of bins where some ``|J_p(kR)|``, ``p <= max_order``, falls below ``threshold``."""
    upto = min(max_order, profile.order) + 1
    return np.any(np.abs(profile.bessel_values[:, :upto]) < threshold, axis=1)


def ch_transform_block(
    tensor: StftTensor,
    band: BandSelection,
    geom: ArrayGeometry,
    order: int,
    beta: float,
    profile: Optional[EqualizerProfile] = None,
    exclude_threshold: float = 0.0,
) -> np.ndarray:
    """Equalized modal coefficients for every frame and selected bin.

    Each column is ``equalize(spatial_dft(y))`` after the
    :func:`steering_mode_sign` alignment, so a plane wave from ``theta_i``
    maps onto ``g_p exp(-j p theta_i)`` times its spectrum.

    Returns
    -------
    ndarray, shape ``(N, 2L+1, Omega)``
        Entry ``[n]`` is the per-frame matrix whose columns follow
        ``band.selected_bins``. With ``exclude_threshold > 0`` the bins at
        which ``J_0`` or ``J_1`` is smaller than the threshold are dropped.
    """
    if tensor.n_mics != geom.mic_count:
        raise DataError(f"tensor has {tensor.n_mics} channels, geometry has {geom.mic_count}")
    if band.n_bins == 0:
        raise DataError("empty band")
    if profile is None:
        profile = equalizer_profile(band.wavenumbers * geom.radius, order, beta)
    sub = tensor.data[:, :, band.selected_bins]  # (M, N, Omega)
    raw = spatial_dft_block(sub, geom, order)  # (2L+1, N, Omega)
    gains = profile.gains.T * steering_mode_sign(order)[:, None]
    z = raw * gains[:, None, :]
    if exclude_threshold > 0:
        z = z[:, :, ~excluded_bins(profile, exclude_threshold)]
        if z.shape[2] == 0:
            raise DataError("all bins excluded by the Bessel-zero threshold")
    return np.transpose(z, (1, 0, 2))

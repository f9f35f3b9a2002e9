"""STFT analysis of multichannel signals and bin/wavenumber bookkeeping."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import get_window

from .errors import ConfigError, DataError

__all__ = [
    "StftParams",
    "StftTensor",
    "BandSelection",
    "analysis_window",
    "stft",
    "stft_single",
    "select_band",
]


@dataclass(frozen=True)
class StftParams:
    """Framing of the short-time Fourier transform.

    Parameters
    ----------
    window_length : int
        Frame length in samples, a power of two.
    hop : int
        Frame advance in samples, ``0 < hop <= window_length``.
    window_kind : str
        Any window name understood by :func:`scipy.signal.get_window`
        (``"hann"``, ``"hamming"``, ``"boxcar"``, ...). Periodic form is used.
    sample_rate : float
        Sampling rate in Hz.
    """

    window_length: int = 512
    hop: int = 256
    window_kind: str = "hann"
    sample_rate: float = 16000.0

    def __post_init__(self):
        n = int(self.window_length)
        if n <= 0 or n & (n - 1):
            raise ConfigError(f"window_length must be a power of two, got {self.window_length}")
        if not 0 < self.hop <= n:
            raise ConfigError(f"hop must satisfy 0 < hop <= window_length, got {self.hop}")
        if not self.sample_rate > 0:
            raise ConfigError("sample_rate must be positive")
        try:
            get_window(self.window_kind, 8)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"unknown window kind {self.window_kind!r}") from exc

    @property
    def n_bins(self) -> int:
        return self.window_length // 2 + 1

    @property
    def bin_spacing(self) -> float:
        """Bin spacing in Hz."""
        return self.sample_rate / self.window_length

    def bin_frequencies(self) -> np.ndarray:
        """Bin center frequencies in rad/s."""
        return 2.0 * np.pi * np.arange(self.n_bins) * self.sample_rate / self.window_length

    def n_frames(self, n_samples: int) -> int:
        if n_samples < self.window_length:
            return 0
        return 1 + (n_samples - self.window_length) // self.hop

    def samples_for_frames(self, n_frames: int) -> int:
        """Shortest signal length that yields ``n_frames`` frames."""
        return (n_frames - 1) * self.hop + self.window_length


@dataclass(frozen=True)
class StftTensor:
    """Complex STFT coefficients, shape ``(M, N, B)`` (mics, frames, bins)."""

    data: np.ndarray
    params: StftParams
    bin_frequencies: np.ndarray = field(init=False)

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise DataError(f"STFT data must be 3-D (mics, frames, bins), got shape {data.shape}")
        if data.shape[2] != self.params.n_bins:
            raise DataError(f"expected {self.params.n_bins} bins, got {data.shape[2]}")
        if not np.all(np.isfinite(data)):
            raise DataError("STFT data contains non-finite values")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "bin_frequencies", self.params.bin_frequencies())

    @property
    def n_mics(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    def frames(self, start: int, stop: int) -> "StftTensor":
        """Sub-tensor holding frames ``start:stop``."""
        return StftTensor(self.data[:, start:stop, :], self.params)


@dataclass(frozen=True)
class BandSelection:
    """Bins jointly processed by the localizers and their wavenumbers (rad/m)."""

    f_min: float
    f_max: float
    selected_bins: np.ndarray
    wavenumbers: np.ndarray

    @property
    def n_bins(self) -> int:
        return len(self.selected_bins)


def analysis_window(params: StftParams) -> np.ndarray:
    return get_window(params.window_kind, params.window_length, fftbins=True)


def stft_single(x: np.ndarray, params: StftParams) -> np.ndarray:
    """One-sided STFT of a 1-D (or ``(..., T)``) real signal, shape ``(..., N, B)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < params.window_length:
        raise DataError(
            f"signal has {x.shape[-1]} samples, shorter than one window ({params.window_length})"
        )
    frames = np.lib.stride_tricks.sliding_window_view(x, params.window_length, axis=-1)
    frames = frames[..., :: params.hop, :]
    return np.fft.rfft(frames * analysis_window(params), axis=-1)


def stft(signal, params: StftParams) -> StftTensor:
    """STFT of a multichannel signal.

    Frame ``n`` covers samples ``[n*hop, n*hop + window_length)``; trailing
    samples that do not fill a whole frame are dropped. No padding and no
    normalization are applied.

    Parameters
    ----------
    signal : MultichannelSignal or ndarray
        ``M x T`` real samples.
    params : StftParams

    Returns
    -------
    StftTensor
    """
    samples = getattr(signal, "samples", signal)
    sample_rate = getattr(signal, "sample_rate", params.sample_rate)
    if sample_rate != params.sample_rate:
        raise DataError(f"signal sample rate {sample_rate} != STFT sample rate {params.sample_rate}")
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    return StftTensor(stft_single(samples, params), params)


def select_band(tensor_or_params, f_min: float, f_max: float, c: float = 343.0) -> BandSelection:
    """Select bins whose center frequency lies in ``[f_min, f_max]``.

    Parameters
    ----------
    tensor_or_params : StftTensor or StftParams
    f_min, f_max : float
        Band edges in Hz. ``f_min`` must be at least one bin spacing (DC is
        never processed) and ``f_max`` at most Nyquist.
    c : float
        Speed of sound in m/s, used for the wavenumbers ``k = 2*pi*f/c``.
    """
    params = getattr(tensor_or_params, "params", tensor_or_params)
    spacing = params.bin_spacing
    nyquist = params.sample_rate / 2.0
    if not f_min < f_max:
        raise ConfigError(f"f_min ({f_min}) must be below f_max ({f_max})")
    if f_min < spacing:
        raise ConfigError(f"f_min ({f_min} Hz) is below one bin spacing ({spacing} Hz)")
    if f_max > nyquist:
        raise ConfigError(f"f_max ({f_max} Hz) exceeds Nyquist ({nyquist} Hz)")
    if not c > 0:
        raise ConfigError("speed of sound must be positive")
    # integer arithmetic on bin indices avoids float edge effects at exact bin centers
    lo = int(np.ceil(f_min / spacing - 1e-9))
    hi = int(np.floor(f_max / spacing + 1e-9))
    bins = np.arange(lo, hi + 1)
    if bins.size == 0:
        raise DataError(f"no bins between {f_min} Hz and {f_max} Hz")
    freqs = bins * spacing
    return BandSelection(float(f_min), float(f_max), bins, 2.0 * np.pi * freqs / c)

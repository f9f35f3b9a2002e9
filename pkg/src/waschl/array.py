"""Circular array geometry and synthetic plane-wave scenes.

Scenes are built directly in the STFT domain: every source waveform is
transformed once and multiplied per bin by its far-field steering vector,
then spatially white circular Gaussian noise is added. A time-domain
synthesizer based on windowed-sinc fractional delays is also provided; it is
what ends up in WAV files written by the CLI.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigError, DataError, DegenerateSceneError
from .spectral import StftParams, StftTensor, stft_single

__all__ = [
    "SOUND_SPEED",
    "ArrayGeometry",
    "SourceSpec",
    "SceneSpec",
    "MultichannelSignal",
    "steering_vector",
    "steering_matrix",
    "generate_source",
    "synthesize_scene",
    "synthesize_waveforms",
    "scene_duration_for_frames",
]

SOUND_SPEED = 343.0  # m/s, ~20 degC

SOURCE_KINDS = ("pink_noise", "white_noise", "tone", "file")

# Three-pole/three-zero 1/f shaping filter (a cascade of first-order sections
# with interleaved real poles and zeros).
_PINK_B = np.array([0.049922035, -0.095993537, 0.050612699, -0.004408786])
_PINK_A = np.array([1.0, -2.494956002, 2.017265875, -0.522189400])


@dataclass(frozen=True)
class ArrayGeometry:
    """Planar circular array of omnidirectional microphones.

    Parameters
    ----------
    mic_count : int
        Number of microphones ``M >= 3``.
    radius : float
        Array radius in meters.
    sensor_azimuths : tuple of float, optional
        Microphone angles in radians. Equispaced ``2*pi*m/M`` if omitted.
    sound_speed : float
        Speed of sound in m/s.
    """

    mic_count: int
    radius: float
    sensor_azimuths: tuple = None
    sound_speed: float = SOUND_SPEED

    def __post_init__(self):
        if int(self.mic_count) != self.mic_count or self.mic_count < 3:
            raise ConfigError(f"need at least 3 microphones, got {self.mic_count}")
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise ConfigError(f"radius must be positive, got {self.radius}")
        if not (math.isfinite(self.sound_speed) and self.sound_speed > 0):
            raise ConfigError(f"sound_speed must be positive, got {self.sound_speed}")
        if self.sensor_azimuths is None:
            az = tuple(2.0 * math.pi * m / self.mic_count for m in range(self.mic_count))
        else:
            az = tuple(float(a) % (2.0 * math.pi) for a in self.sensor_azimuths)
            if len(az) != self.mic_count:
                raise ConfigError("sensor_azimuths length must equal mic_count")
        object.__setattr__(self, "mic_count", int(self.mic_count))
        object.__setattr__(self, "sensor_azimuths", az)

    @classmethod
    def equispaced(cls, mic_count: int, radius: float, sound_speed: float = SOUND_SPEED):
        return cls(mic_count, radius, None, sound_speed)

    @property
    def azimuths(self) -> np.ndarray:
        return np.array(self.sensor_azimuths)

    def max_order(self) -> int:
        """Highest circular-harmonic order resolvable with ``M`` sensors."""
        return (self.mic_count - 1) // 2

    def is_equispaced(self) -> bool:
        ref = 2.0 * np.pi * np.arange(self.mic_count) / self.mic_count
        return bool(np.allclose(self.azimuths, ref, atol=1e-12))


@dataclass(frozen=True)
class SourceSpec:
    """One plane-wave source: direction, waveform kind and linear level."""

    azimuth: float
    kind: str = "pink_noise"
    level: float = 1.0
    frequency: Optional[float] = None  # tone only
    path: Optional[str] = None  # file only

    def __post_init__(self):
        if not math.isfinite(self.azimuth):
            raise ConfigError("source azimuth must be finite")
        object.__setattr__(self, "azimuth", float(self.azimuth) % (2.0 * math.pi))
        if self.kind not in SOURCE_KINDS:
            raise ConfigError(f"unsupported source kind {self.kind!r}")
        if self.kind == "tone" and not (self.frequency and self.frequency > 0):
            raise ConfigError("tone source needs a positive frequency")
        if self.kind == "file" and not self.path:
            raise ConfigError("file source needs a path")
        if not (math.isfinite(self.level) and self.level >= 0):
            raise ConfigError("source level must be finite and nonnegative")


@dataclass(frozen=True)
class SceneSpec:
    """Sources, noise level and duration of a synthetic recording.

    ``snr_db = inf`` gives a noiseless scene.
    """

    sources: tuple
    snr_db: float = 20.0
    duration: float = 3.0
    sample_rate: float = 16000.0
    seed: int = 0

    def __post_init__(self):
        sources = tuple(self.sources)
        if not sources:
            raise ConfigError("a scene needs at least one source")
        object.__setattr__(self, "sources", sources)
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ConfigError("snr_db must be a number or +inf")
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        if not self.sample_rate > 0:
            raise ConfigError("sample_rate must be positive")

    @property
    def azimuths(self) -> np.ndarray:
        return np.array([s.azimuth for s in self.sources])

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))


@dataclass(frozen=True)
class MultichannelSignal:
    """Real time-domain samples, shape ``(M, T)``."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.samples, dtype=float))
        if s.shape[1] == 0:
            raise DataError("signal has no samples")
        if not np.all(np.isfinite(s)):
            raise DataError("signal contains non-finite samples")
        object.__setattr__(self, "samples", s)

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]


def scene_duration_for_frames(n_frames: int, params: StftParams) -> float:
    """Duration in seconds giving exactly ``n_frames`` STFT frames."""
    return params.samples_for_frames(n_frames) / params.sample_rate


def steering_matrix(geom: ArrayGeometry, omega: float, thetas) -> np.ndarray:
    """Steering vectors for several directions as columns, shape ``(M, K)``."""
    thetas = np.atleast_1d(np.asarray(thetas, dtype=float))
    if not (np.isfinite(omega) and np.all(np.isfinite(thetas))):
        raise ValueError("omega and theta must be finite")
    if omega < 0:
        raise ValueError("omega must be nonnegative")
    kr = omega / geom.sound_speed * geom.radius
    return np.exp(-1j * kr * np.cos(thetas[None, :] - geom.azimuths[:, None]))


def steering_vector(geom: ArrayGeometry, omega: float, theta: float) -> np.ndarray:
    """Far-field steering vector ``exp(-j (omega/c) R cos(theta - theta_m))``.

    Parameters
    ----------
    geom : ArrayGeometry
    omega : float
        Angular frequency in rad/s.
    theta : float
        Source azimuth in radians.

    Returns
    -------
    ndarray of complex, shape ``(M,)``
    """
    return steering_matrix(geom, omega, [theta])[:, 0]


def _read_mono(path: str, sample_rate: float) -> np.ndarray:
    from scipy.io import wavfile

    rate, data = wavfile.read(path)
    if rate != sample_rate:
        raise DataError(f"{path}: sample rate {rate} != {sample_rate}")
    data = np.asarray(data)
    if np.issubdtype(data.dtype, np.integer):
        data = data / float(np.iinfo(data.dtype).max + 1)
    data = data.astype(float)
    return data[:, 0] if data.ndim == 2 else data


def generate_source(
    kind: str,
    duration: float,
    sample_rate: float,
    seed: int = 0,
    *,
    level: float = 1.0,
    frequency: Optional[float] = None,
    path: Optional[str] = None,
) -> np.ndarray:
    """Source waveform normalized to unit RMS, then scaled by ``level``.

    Parameters
    ----------
    kind : {"pink_noise", "white_noise", "tone", "file"}
    duration : float
        Seconds.
    sample_rate : float
        Hz.
    seed : int or numpy SeedSequence
        Seed for the noise generators.
    level : float
        Linear amplitude applied after normalization.
    frequency : float, optional
        Tone frequency in Hz.
    path : str, optional
        Mono (or first-channel) WAV file; looped or truncated to ``duration``.
    """
    n = int(round(duration * sample_rate))
    if n < 1:
        raise ConfigError("duration * sample_rate must be at least one sample")
    rng = np.random.default_rng(seed)
    if kind == "white_noise":
        x = rng.standard_normal(n)
    elif kind == "pink_noise":
        # discard the filter transient; the slowest pole decays with ~1/(1-0.9986)
        skip = 4096
        x = lfilter(_PINK_B, _PINK_A, rng.standard_normal(n + skip))[skip:]
    elif kind == "tone":
        if not frequency or frequency <= 0:
            raise ConfigError("tone source needs a positive frequency")
        phase = rng.uniform(0.0, 2.0 * np.pi)
        x = np.cos(2.0 * np.pi * frequency * np.arange(n) / sample_rate + phase)
    elif kind == "file":
        raw = _read_mono(path, sample_rate)
        if raw.size == 0:
            raise DataError(f"{path}: empty file")
        x = np.resize(raw, n)
    else:
        raise ConfigError(f"unsupported source kind {kind!r}")
    rms = np.sqrt(np.mean(x**2))
    if rms == 0:
        return np.zeros(n)
    return level * x / rms


def _source_waveforms(spec: SceneSpec, n_samples: int) -> list:
    seeds = np.random.SeedSequence(spec.seed).spawn(len(spec.sources) + 1)
    out = []
    for src, ss in zip(spec.sources, seeds[:-1]):
        out.append(
            generate_source(
                src.kind, n_samples / spec.sample_rate, spec.sample_rate, ss,
                level=src.level, frequency=src.frequency, path=src.path,
            )
        )
    return out


def _noise_rng(spec: SceneSpec) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(spec.seed).spawn(len(spec.sources) + 1)[-1])


def synthesize_scene(
    geom: ArrayGeometry,
    spec: SceneSpec,
    params: StftParams,
    band: Sequence[float] = (300.0, 4000.0),
) -> StftTensor:
    """Multichannel STFT of a plane-wave scene plus spatially white noise.

    ``Y[:, n, b] = sum_i a_i(omega_b) X_i[n, b] + W[n, b]`` where ``X_i`` is
    the STFT of source ``i``'s waveform. The noise variance is chosen so that
    the mean per-microphone source power over frames and over the bins in
    ``band`` (Hz) divided by the mean noise power equals ``spec.snr_db``.
    """
    if spec.sample_rate != params.sample_rate:
        raise ConfigError("scene and STFT sample rates differ")
    n = spec.n_samples
    if n < params.window_length:
        raise ConfigError("scene is shorter than one STFT window")
    omegas = params.bin_frequencies()
    kr = omegas / geom.sound_speed * geom.radius
    y = None
    for src, x in zip(spec.sources, _source_waveforms(spec, n)):
        xs = stft_single(x, params)  # (N, B)
        a = np.exp(-1j * kr[None, :] * np.cos(src.azimuth - geom.azimuths)[:, None])  # (M, B)
        term = a[:, None, :] * xs[None, :, :]
        y = term if y is None else y + term
    if math.isinf(spec.snr_db):
        return StftTensor(y, params)

    f = omegas / (2.0 * np.pi)
    in_band = (f >= band[0]) & (f <= band[1])
    signal_power = np.mean(np.abs(y[:, :, in_band]) ** 2)
    if signal_power == 0:
        raise DegenerateSceneError("sources carry no power but a finite SNR was requested")
    sigma2 = signal_power / 10.0 ** (spec.snr_db / 10.0)
    rng = _noise_rng(spec)
    w = rng.standard_normal(y.shape) + 1j * rng.standard_normal(y.shape)
    return StftTensor(y + np.sqrt(sigma2 / 2.0) * w, params)


def _fractional_delay(x: np.ndarray, delay: float, half_taps: int = 32) -> np.ndarray:
    """Delay ``x`` by ``delay`` samples (may be fractional) with a Hann-windowed sinc."""
    whole = int(np.floor(delay))
    frac = delay - whole
    k = np.arange(-half_taps + 1, half_taps + 1)
    h = np.sinc(k - frac) * (0.5 + 0.5 * np.cos(np.pi * (k - frac) / half_taps))
    y = np.convolve(x, h)[half_taps - 1 : half_taps - 1 + x.size]
    if whole > 0:
        y = np.concatenate([np.zeros(whole), y[:-whole]])
    elif whole < 0:
        y = np.concatenate([y[-whole:], np.zeros(-whole)])
    return y


def synthesize_waveforms(geom: ArrayGeometry, spec: SceneSpec) -> MultichannelSignal:
    """Time-domain scene using fractional-delay plane waves.

    Microphone ``m`` receives each source delayed by
    ``(R/c) * (1 + cos(theta_i - theta_m))`` seconds, which matches the phase
    convention of :func:`steering_vector` up to a common delay. White Gaussian
    noise is added with a broadband variance chosen from ``spec.snr_db``
    (ratio of mean per-microphone source power to noise power).
    """
    n = spec.n_samples
    waves = _source_waveforms(spec, n)
    out = np.zeros((geom.mic_count, n))
    base = geom.radius / geom.sound_speed * spec.sample_rate
    for src, x in zip(spec.sources, waves):
        for m, th in enumerate(geom.azimuths):
            out[m] += _fractional_delay(x, base * (1.0 + math.cos(src.azimuth - th)))
    if not math.isinf(spec.snr_db):
        power = np.mean(out**2)
        if power == 0:
            raise DegenerateSceneError("sources carry no power but a finite SNR was requested")
        sigma = math.sqrt(power / 10.0 ** (spec.snr_db / 10.0))
        out += sigma * _noise_rng(spec).standard_normal(out.shape)
    return MultichannelSignal(out, spec.sample_rate)

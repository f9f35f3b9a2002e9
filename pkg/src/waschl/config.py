"""Run configuration: TOML file, flag overrides, validation and hashing.

Precedence is flags > file > defaults. Every section and key is checked
against the schema below and unknown keys are rejected.

Example file::

    [geometry]
    mic_count = 8
    radius = 0.12

    [band]
    f_min = 300.0
    f_max = 1868.0

    [scene]
    snr_db = 20.0
    sources = [{azimuth_deg = -25.0}, {azimuth_deg = 0.0}, {azimuth_deg = 25.0}]
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass
from typing import Any, Dict, Mapping, Optional

import numpy as np
import tomli

from .array import ArrayGeometry, SceneSpec, SourceSpec
from .errors import ConfigError
from .localizers import METHODS, LocalizerConfig
from .spectral import StftParams

__all__ = ["RunConfig", "DEFAULTS", "PRESETS", "load_config", "default_f_max", "config_hash"]

# f_max = "auto" picks min(AUTO_F_MAX_CAP, spatial-aliasing frequency of the array)
AUTO_F_MAX_CAP = 4000.0

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "geometry": {"mic_count": 8, "radius": 0.12, "sound_speed": 343.0},
    "stft": {"window_length": 512, "hop": 256, "window_kind": "hann", "sample_rate": 16000.0},
    "band": {"f_min": 300.0, "f_max": "auto"},
    "methods": {"names": list(METHODS)},
    "params": {
        "beta": 0.01,
        "lambda": 1.1,
        "lambda_mode": "absolute",
        "n_angles": 360,
        "order": "auto",
        "rank": "full",
        "n_peaks": 3,
        "min_separation": 25.0,
        "tolerance": 1e-8,
        "max_iterations": 5000,
        "step_rule": "fixed_lipschitz",
        "exclude_threshold": 0.0,
    },
    "block": {"frames": 180, "advance": 90},
    "scene": {
        "sources": [
            {"azimuth_deg": 335.0, "kind": "pink_noise", "level": 1.0},
            {"azimuth_deg": 0.0, "kind": "pink_noise", "level": 1.0},
            {"azimuth_deg": 25.0, "kind": "pink_noise", "level": 1.0},
        ],
        "snr_db": 20.0,
        "duration": "auto",
    },
    "run": {"seed": 0, "out": "out", "threads": 1, "wav_format": "float32"},
}

_SOURCE_KEYS = {"azimuth_deg", "kind", "level", "frequency", "path"}

# named overrides applied on top of the defaults
# The m24 penalty keeps lambda per unit dictionary column norm at the m8 value:
# 1.1 * sqrt(23 / 7) ~ 2.0.
PRESETS: Dict[str, Dict[str, Dict[str, Any]]] = {
    "m8": {"geometry": {"mic_count": 8}},
    "m24": {"geometry": {"mic_count": 24}, "params": {"lambda": 2.0}},
    "streaming": {"block": {"frames": 30, "advance": 25}},
    # below ~800 Hz the regularized equalizer all but removes the top mode of an
    # 8-mic array, and the resulting mismatch splits each source over two atoms
    "benchmark": {
        "band": {"f_min": 800.0},
        "params": {"rank": 7, "n_peaks": 3, "min_separation": 25.0},
        "scene": {
            "sources": [{"azimuth_deg": 45.0}, {"azimuth_deg": 135.0}, {"azimuth_deg": 225.0}],
            "snr_db": 10.0,
        },
    },
}


def default_f_max(mic_count: int, radius: float, sound_speed: float) -> float:
    """Upper band edge for ``f_max = "auto"``.

    The lower of 4 kHz and the spatial-aliasing frequency ``c / (2 d)``,
    ``d = 2 R sin(pi / M)`` being the spacing of neighbouring microphones.
    """
    spacing = 2.0 * radius * math.sin(math.pi / mic_count)
    return min(AUTO_F_MAX_CAP, sound_speed / (2.0 * spacing))


def _merge(base: dict, update: Mapping, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if key not in base:
            loc = f"{where}.{key}" if where else key
            raise ConfigError(f"unknown config key {loc!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"config section {key!r} must be a table")
            out[key] = _merge(base[key], value, key)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _canonical(obj):
    if isinstance(obj, dict):
        return {k: _canonical(obj[k]) for k in sorted(obj)}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, bool) or obj is None or isinstance(obj, str):
        return obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    raise ConfigError(f"unsupported config value {obj!r}")


def config_hash(data: Mapping) -> str:
    text = json.dumps(_canonical(dict(data)), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _num(section: dict, key: str, kind=float):
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    if kind is int:
        if int(value) != value:
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(value)
    return float(value)


@dataclass(frozen=True)
class RunConfig:
    """Validated, fully resolved run configuration.

    ``data`` holds the canonical nested mapping (echoed into every result
    file); the typed accessors build the component objects from it.
    """

    data: Dict[str, Any]

    @classmethod
    def from_mapping(cls, mapping: Optional[Mapping] = None, overrides: Optional[Mapping] = None) -> "RunConfig":
        data = _merge(DEFAULTS, mapping or {})
        if overrides:
            data = _merge(data, overrides)
        cfg = cls(_canonical(data))
        cfg.validate()
        return cfg

    # component views

    def geometry(self) -> ArrayGeometry:
        g = self.data["geometry"]
        try:
            return ArrayGeometry.equispaced(_num(g, "mic_count", int), _num(g, "radius"), _num(g, "sound_speed"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def stft_params(self) -> StftParams:
        s = self.data["stft"]
        try:
            return StftParams(_num(s, "window_length", int), _num(s, "hop", int), str(s["window_kind"]), _num(s, "sample_rate"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def band_edges(self):
        b = self.data["band"]
        g = self.geometry()
        f_max = b["f_max"]
        if f_max == "auto":
            f_max = default_f_max(g.mic_count, g.radius, g.sound_speed)
        elif isinstance(f_max, bool) or not isinstance(f_max, (int, float)):
            raise ConfigError(f"f_max must be a number or 'auto', got {f_max!r}")
        return _num(b, "f_min"), float(f_max)

    def methods(self):
        names = self.data["methods"]["names"]
        if isinstance(names, str):
            names = [names]
        if not names:
            raise ConfigError("no methods selected")
        for n in names:
            if n not in METHODS:
                raise ConfigError(f"unknown method {n!r}; choose from {METHODS}")
        return list(names)

    def localizer(self) -> LocalizerConfig:
        p = self.data["params"]
        order = None if p["order"] == "auto" else _num(p, "order", int)
        rank = None if p["rank"] == "full" else _num(p, "rank", int)
        try:
            return LocalizerConfig(
                beta=_num(p, "beta"),
                lam=_num(p, "lambda"),
                lam_mode=str(p["lambda_mode"]),
                n_angles=_num(p, "n_angles", int),
                order=order,
                rank=rank,
                tolerance=_num(p, "tolerance"),
                max_iterations=_num(p, "max_iterations", int),
                step_rule=str(p["step_rule"]),
                exclude_threshold=_num(p, "exclude_threshold"),
                threads=_num(self.data["run"], "threads", int),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def peak_settings(self):
        p = self.data["params"]
        n, sep = _num(p, "n_peaks", int), _num(p, "min_separation")
        if n < 1:
            raise ConfigError("n_peaks must be at least 1")
        if sep < 360.0 / _num(p, "n_angles", int):
            raise ConfigError("min_separation must be at least one grid step")
        return n, sep

    def blocks(self):
        b = self.data["block"]
        frames, advance = _num(b, "frames", int), _num(b, "advance", int)
        if frames < 1 or advance < 1:
            raise ConfigError("block frames and advance must be positive")
        return frames, advance

    def seed(self) -> int:
        return _num(self.data["run"], "seed", int)

    def scene(self, seed: Optional[int] = None) -> SceneSpec:
        sc = self.data["scene"]
        sources = []
        for src in sc["sources"]:
            if not isinstance(src, Mapping):
                raise ConfigError("each scene source must be a table")
            extra = set(src) - _SOURCE_KEYS
            if extra:
                raise ConfigError(f"unknown source keys {sorted(extra)}")
            if "azimuth_deg" not in src:
                raise ConfigError("scene source without azimuth_deg")
            try:
                sources.append(
                    SourceSpec(
                        math.radians(float(src["azimuth_deg"]) % 360.0),
                        src.get("kind", "pink_noise"),
                        float(src.get("level", 1.0)),
                        None if src.get("frequency") is None else float(src["frequency"]),
                        src.get("path"),
                    )
                )
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid scene source {dict(src)}: {exc}") from None
        params = self.stft_params()
        duration = sc["duration"]
        if duration == "auto":
            # exactly one observation block
            duration = params.samples_for_frames(self.blocks()[0]) / params.sample_rate
        elif isinstance(duration, bool) or not isinstance(duration, (int, float)):
            raise ConfigError(f"duration must be a number or 'auto', got {duration!r}")
        try:
            return SceneSpec(
                tuple(sources),
                float(sc["snr_db"]),
                float(duration),
                params.sample_rate,
                self.seed() if seed is None else seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def validate(self) -> None:
        geom = self.geometry()
        self.stft_params()
        f_min, f_max = self.band_edges()
        if not f_min < f_max:
            raise ConfigError(f"band f_min={f_min} must be below f_max={f_max}")
        self.methods()
        loc = self.localizer()
        loc.mode_order(geom)  # L <= floor((M-1)/2)
        self.peak_settings()
        self.blocks()
        self.scene()
        run = self.data["run"]
        if run["wav_format"] not in ("float32", "pcm16"):
            raise ConfigError("wav_format must be 'float32' or 'pcm16'")
        if not isinstance(run["out"], str):
            raise ConfigError("out must be a path string")

    def hash(self) -> str:
        return config_hash(self.data)

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self.data)


def load_config(path=None, overrides: Optional[Mapping] = None, preset: Optional[str] = None) -> RunConfig:
    """Read a TOML file (optional), apply a named preset and flag overrides."""
    mapping: Dict[str, Any] = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        mapping = _merge(DEFAULTS, PRESETS[preset])
    if path is not None:
        try:
            with open(path, "rb") as fh:
                file_data = tomli.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from None
        mapping = _merge(_merge(DEFAULTS, mapping), file_data)
    return RunConfig.from_mapping(mapping, overrides)

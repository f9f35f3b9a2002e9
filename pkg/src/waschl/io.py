"""File formats: multichannel WAV in and out, CSV and JSON result files."""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.io import wavfile

from .array import MultichannelSignal
from .errors import ConfigError, DataError

__all__ = [
    "ensure_parent",
    "write_wav",
    "read_wav",
    "write_complex_csv",
    "write_pseudospectra_csv",
    "write_json",
    "canonical_json",
]

WAV_FORMATS = ("float32", "pcm16")


def ensure_parent(path) -> Path:
    """Create the parent directory of ``path`` and check it is writable."""
    path = Path(path)
    parent = path.parent
    try:
        parent.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {parent}: {exc}") from None
    if not os.access(parent, os.W_OK):
        raise ConfigError(f"output directory {parent} is not writable")
    return path


def write_wav(path, signal: MultichannelSignal, fmt: str = "float32") -> None:
    """Write an ``M x T`` signal as an M-channel WAV file.

    ``pcm16`` clips to [-1, 1) after scaling by 32767; ``float32`` stores the
    samples unchanged (up to single precision).
    """
    if fmt not in WAV_FORMATS:
        raise ConfigError(f"unknown WAV format {fmt!r}; choose from {WAV_FORMATS}")
    path = ensure_parent(path)
    x = np.asarray(signal.samples).T  # (T, M)
    if fmt == "pcm16":
        data = np.round(np.clip(x, -1.0, 32766.0 / 32767.0) * 32767.0).astype(np.int16)
    else:
        data = x.astype(np.float32)
    rate = int(round(signal.sample_rate))
    if rate != signal.sample_rate:
        raise ConfigError("WAV sample rate must be an integer number of Hz")
    try:
        wavfile.write(path, rate, data)
    except OSError as exc:
        raise ConfigError(f"cannot write {path}: {exc}") from None


def read_wav(path) -> MultichannelSignal:
    """Read a WAV file as an ``M x T`` float signal.

    Integer PCM is scaled to [-1, 1) by its full-scale value; float data is
    returned as stored.

    Raises
    ------
    DataError
        If the file is missing, corrupt or empty.
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise DataError(f"no such WAV file: {path}") from None
    except (ValueError, OSError, EOFError) as exc:
        raise DataError(f"cannot read WAV file {path}: {exc}") from None
    if data.ndim == 1:
        data = data[:, None]
    if np.issubdtype(data.dtype, np.integer):
        info = np.iinfo(data.dtype)
        if info.min == 0:  # 8-bit WAV is unsigned
            x = (data.astype(np.float64) - (info.max + 1) / 2) / ((info.max + 1) / 2)
        else:
            x = data.astype(np.float64) / (info.max + 1)
    else:
        x = data.astype(np.float64)
    if x.shape[0] == 0:
        raise DataError(f"WAV file {path} holds no samples")
    return MultichannelSignal(np.ascontiguousarray(x.T), float(rate))


def write_complex_csv(path, matrix: np.ndarray, header: Optional[Sequence[str]] = None) -> None:
    """Write a complex matrix as CSV with numbers like ``1.5+2j`` (row-major)."""
    path = ensure_parent(path)
    matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header is not None:
            w.writerow(header)
        for row in matrix:
            w.writerow([repr(complex(v)).strip("()") for v in row])


def write_pseudospectra_csv(path, spectra: Iterable) -> None:
    """CSV with columns ``angle_deg, value, method, block``.

    ``spectra`` yields ``(block_index, Pseudospectrum)`` pairs.
    """
    path = ensure_parent(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle_deg", "value", "method", "block"])
        for block, spec in spectra:
            for a, v in zip(spec.grid_deg, spec.values):
                w.writerow([repr(float(a)), repr(float(v)), spec.method, int(block)])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, fixed separators, non-finite as null."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, obj) -> None:
    path = ensure_parent(path)
    with open(path, "w") as fh:
        fh.write(canonical_json(obj))

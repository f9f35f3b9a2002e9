"""End-to-end wideband DOA estimators for circular arrays.

* ``waschl`` -- equalized circular-harmonic coefficients of every frame and
  every selected bin are stacked into one matrix and a single row-sparse
  coding problem is solved against the frequency-independent modal
  dictionary.
* ``chb`` -- circular-harmonics beamformer: power of the modal delay-and-sum
  response averaged over frames and bins.
* ``l1svd`` -- one row-sparse coding problem per bin against the
  frequency-dependent steering dictionary, spectra averaged over bins.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .array import ArrayGeometry
from .chdomain import build_ch_dictionary, build_tf_dictionary, ch_transform_block
from .errors import ConfigError, DataError
from .peaks import DoaEstimate, Pseudospectrum, find_peaks
from .solver import SolverConfig, lambda_crit, pseudospectrum_values, solve_group_lasso, svd_reduce
from .spectral import BandSelection, StftTensor

__all__ = [
    "LocalizerConfig",
    "BLOCK_PRESETS",
    "waschl_localize",
    "chb_localize",
    "l1svd_localize",
    "localize",
    "iter_blocks",
    "localize_blocks",
    "METHODS",
]

log = logging.getLogger(__name__)

METHODS = ("waschl", "chb", "l1svd")

# (frames per block, advance in frames)
BLOCK_PRESETS = {"default": (180, 90), "streaming": (30, 25)}

NORMALIZATION = "unit_frobenius"
LAMBDA_MODES = ("absolute", "fraction_of_crit")


@dataclass(frozen=True)
class LocalizerConfig:
    """Parameters shared by the three localizers.

    ``order=None`` uses the highest observable mode order of the array.
    ``rank=None`` keeps every singular direction of the data.
    ``lam_mode="fraction_of_crit"`` reads ``lam`` relative to the smallest
    penalty that zeroes the solution of each solve.
    """

    beta: float = 0.01
    lam: float = 1.1
    lam_mode: str = "absolute"
    n_angles: int = 360
    order: Optional[int] = None
    rank: Optional[int] = None
    tolerance: float = 1e-8
    max_iterations: int = 5000
    step_rule: str = "fixed_lipschitz"
    exclude_threshold: float = 0.0
    threads: int = 1

    def __post_init__(self):
        if self.beta < 0:
            raise ConfigError("beta must be nonnegative")
        if self.n_angles < 1:
            raise ConfigError("n_angles must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        if self.lam_mode not in LAMBDA_MODES:
            raise ConfigError(f"lambda_mode must be one of {LAMBDA_MODES}")
        if self.rank is not None and self.rank < 1:
            raise ConfigError("rank must be positive")
        self.solver()  # validates lam, tolerance, step rule

    def solver(self, D=None, z_tilde=None) -> SolverConfig:
        """Solver settings; with ``lam_mode="fraction_of_crit"`` pass the problem data."""
        lam = self.lam
        if self.lam_mode == "fraction_of_crit" and D is not None:
            lam = self.lam * lambda_crit(D, z_tilde)
            if lam == 0:
                lam = self.lam  # all-zero data; any penalty gives S = 0
        try:
            return SolverConfig(lam, self.max_iterations, self.tolerance, self.step_rule)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def mode_order(self, geom: ArrayGeometry) -> int:
        order = geom.max_order() if self.order is None else self.order
        if not 0 <= order <= geom.max_order():
            raise ConfigError(
                f"mode order L={order} not observable with M={geom.mic_count} (L <= {geom.max_order()})"
            )
        return order


def _check_inputs(tensor: StftTensor, geom: ArrayGeometry, band: BandSelection) -> None:
    if tensor.n_mics != geom.mic_count:
        raise DataError(f"tensor has {tensor.n_mics} channels, geometry has {geom.mic_count}")
    if band.n_bins == 0:
        raise DataError("empty band")
    if tensor.n_frames == 0:
        raise DataError("no frames to process")


def _unit_frobenius(Z: np.ndarray) -> Tuple[np.ndarray, float]:
    scale = float(np.linalg.norm(Z))
    return (Z / scale if scale > 0 else Z), scale


def waschl_localize(tensor: StftTensor, geom: ArrayGeometry, band: BandSelection, cfg: LocalizerConfig = LocalizerConfig()) -> Pseudospectrum:
    """Frequency-coherent sparse localization in the circular-harmonic domain.

    All frames and bins of ``tensor`` form one ``(2L+1) x (N * Omega)`` data
    matrix, scaled to unit Frobenius norm, reduced by SVD and passed to one
    group-lasso solve.
    """
    _check_inputs(tensor, geom, band)
    order = cfg.mode_order(geom)
    zb = ch_transform_block(tensor, band, geom, order, cfg.beta, exclude_threshold=cfg.exclude_threshold)
    # frames side by side: [Z_1 Z_2 ... Z_N]
    Z = np.transpose(zb, (1, 0, 2)).reshape(2 * order + 1, -1)
    Z, scale = _unit_frobenius(Z)
    reduced = svd_reduce(Z, cfg.rank)
    D = build_ch_dictionary(cfg.n_angles, order)
    solver_cfg = cfg.solver(D, reduced)
    sol = solve_group_lasso(D, reduced, solver_cfg)
    meta = {
        "normalization": NORMALIZATION,
        "data_scale": scale,
        "lambda": solver_cfg.lam,
        "lambda_mode": cfg.lam_mode,
        "certificate": sol.certificate,
        "iterations": sol.iterations,
        "converged": sol.converged,
    }
    return Pseudospectrum(pseudospectrum_values(sol.S), D.grid, "waschl", solves=1, meta=meta)


def chb_localize(tensor: StftTensor, geom: ArrayGeometry, band: BandSelection, cfg: LocalizerConfig = LocalizerConfig()) -> Pseudospectrum:
    """Circular-harmonics beamformer.

    ``P(theta_q) = mean over frames and bins of |d_q^H z_n(k)|^2`` with
    ``d_q`` the modal steering vector and ``z_n(k)`` the equalized
    coefficients.
    """
    _check_inputs(tensor, geom, band)
    order = cfg.mode_order(geom)
    zb = ch_transform_block(tensor, band, geom, order, cfg.beta, exclude_threshold=cfg.exclude_threshold)
    Z = np.transpose(zb, (1, 0, 2)).reshape(2 * order + 1, -1)
    R = Z @ Z.conj().T / Z.shape[1]
    D = build_ch_dictionary(cfg.n_angles, order)
    power = np.einsum("pq,pr,rq->q", D.matrix.conj(), R, D.matrix).real
    return Pseudospectrum(np.clip(power, 0.0, None), D.grid, "chb")


def _l1svd_bin(args):
    Y, D, cfg = args
    Y, _ = _unit_frobenius(Y)
    reduced = svd_reduce(Y, cfg.rank)
    sol = solve_group_lasso(D, reduced, cfg.solver(D, reduced))
    ps = pseudospectrum_values(sol.S)
    peak = ps.max()
    return (ps / peak if peak > 0 else ps), sol.converged


def l1svd_localize(tensor: StftTensor, geom: ArrayGeometry, band: BandSelection, cfg: LocalizerConfig = LocalizerConfig()) -> Pseudospectrum:
    """Per-bin sparse localization with the steering-vector dictionary.

    Each bin's ``M x N`` snapshot matrix is scaled to unit Frobenius norm,
    reduced by SVD and solved separately; the per-bin spectra are scaled to
    unit maximum and averaged.
    """
    _check_inputs(tensor, geom, band)
    jobs = []
    for b in band.selected_bins:
        D = build_tf_dictionary(geom, float(tensor.bin_frequencies[b]), cfg.n_angles).matrix
        jobs.append((tensor.data[:, :, b], D, cfg))
    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            results = list(pool.map(_l1svd_bin, jobs))
    else:
        results = [_l1svd_bin(j) for j in jobs]
    spectra = np.array([r[0] for r in results])
    meta = {
        "normalization": NORMALIZATION,
        "bin_normalization": "unit_max",
        "lambda_mode": cfg.lam_mode,
        "unconverged_bins": int(sum(not r[1] for r in results)),
    }
    grid = 2.0 * np.pi * np.arange(cfg.n_angles) / cfg.n_angles
    return Pseudospectrum(spectra.mean(axis=0), grid, "l1svd", solves=len(jobs), meta=meta)


_DISPATCH = {"waschl": waschl_localize, "chb": chb_localize, "l1svd": l1svd_localize}


def localize(method: str, tensor: StftTensor, geom: ArrayGeometry, band: BandSelection, cfg: LocalizerConfig = LocalizerConfig()) -> Pseudospectrum:
    try:
        fn = _DISPATCH[method]
    except KeyError:
        raise ConfigError(f"unknown method {method!r}; choose from {METHODS}") from None
    return fn(tensor, geom, band, cfg)


def iter_blocks(n_frames: int, block_frames: int = 180, advance: int = 90) -> List[Tuple[int, int]]:
    """Frame ranges ``(start, stop)`` of the observation blocks.

    A recording shorter than one block yields a single block with all frames.
    """
    if block_frames < 1 or advance < 1:
        raise ConfigError("block length and advance must be positive")
    if n_frames <= 0:
        return []
    if n_frames <= block_frames:
        return [(0, n_frames)]
    starts = range(0, n_frames - block_frames + 1, advance)
    return [(s, s + block_frames) for s in starts]


@dataclass
class BlockResult:
    block_index: int
    frames: Tuple[int, int]
    spectrum: Pseudospectrum
    estimate: DoaEstimate
    wall_time: float
    cpu_time: float


def localize_blocks(
    method: str,
    tensor: StftTensor,
    geom: ArrayGeometry,
    band: BandSelection,
    cfg: LocalizerConfig = LocalizerConfig(),
    block_frames: int = 180,
    advance: int = 90,
    n_peaks: int = 3,
    min_separation: float = 25.0,
) -> List[BlockResult]:
    """Run one localizer on every observation block and pick peaks."""
    out = []
    for i, (start, stop) in enumerate(iter_blocks(tensor.n_frames, block_frames, advance)):
        sub = tensor.frames(start, stop)
        t0, c0 = time.perf_counter(), time.process_time()
        spec = localize(method, sub, geom, band, cfg)
        wall, cpu = time.perf_counter() - t0, time.process_time() - c0
        est = find_peaks(spec, n_peaks, min_separation, block_index=i)
        out.append(BlockResult(i, (start, stop), spec, est, wall, cpu))
    return out

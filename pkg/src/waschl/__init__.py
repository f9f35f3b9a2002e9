"""Wideband direction-of-arrival estimation with circular microphone arrays.

Three localizers share one pipeline: the sparse circular-harmonic localizer
(``waschl``), the circular-harmonics beamformer (``chb``) and per-frequency
sparse recovery (``l1svd``).
"""

from .array import ArrayGeometry, MultichannelSignal, SceneSpec, SourceSpec, synthesize_scene, synthesize_waveforms
from .errors import ConfigError, DataError, DegenerateSceneError, SolverError
from .localizers import LocalizerConfig, chb_localize, l1svd_localize, localize, localize_blocks, waschl_localize
from .peaks import DoaEstimate, Pseudospectrum, find_peaks
from .solver import SolverConfig, SparseSolution, solve_group_lasso
from .spectral import StftParams, StftTensor, select_band, stft

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry",
    "MultichannelSignal",
    "SceneSpec",
    "SourceSpec",
    "synthesize_scene",
    "synthesize_waveforms",
    "ConfigError",
    "DataError",
    "DegenerateSceneError",
    "SolverError",
    "LocalizerConfig",
    "waschl_localize",
    "chb_localize",
    "l1svd_localize",
    "localize",
    "localize_blocks",
    "DoaEstimate",
    "Pseudospectrum",
    "find_peaks",
    "SolverConfig",
    "SparseSolution",
    "solve_group_lasso",
    "StftParams",
    "StftTensor",
    "select_band",
    "stft",
]

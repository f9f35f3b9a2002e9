"""Command-line entry point.

Subcommands::

    waschl simulate           synthesize a scene and write it as a WAV file
    waschl localize           pseudospectra and DOA estimates per block
    waschl sweep-distinction  resolved fraction of (-phi, 0, phi) scenes
    waschl benchmark          accuracy and timing of all methods

Exit codes: 0 success, 2 configuration error, 3 data error, 4 solver error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .array import MultichannelSignal, synthesize_scene, synthesize_waveforms
from .config import PRESETS, RunConfig, load_config
from .errors import ConfigError, DataError, SolverError
from .experiments import run_benchmark, sweep_distinction
from .io import ensure_parent, read_wav, write_json, write_pseudospectra_csv, write_wav
from .localizers import METHODS, localize_blocks
from .spectral import StftTensor, select_band, stft

log = logging.getLogger("waschl")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4

# pseudospectrum metadata echoed into estimates.json
_META_KEYS = ("normalization", "bin_normalization", "lambda", "lambda_mode")

# PCM peak after normalization, leaves headroom below full scale
PCM_PEAK = 0.9


def _float_or_auto(text: str):
    return text if text == "auto" else float(text)


def _int_or_full(text: str):
    return text if text == "full" else int(text)


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


# flag name -> (config section, key, type)
_OVERRIDES = {
    "mics": ("geometry", "mic_count", int),
    "radius": ("geometry", "radius", float),
    "sound_speed": ("geometry", "sound_speed", float),
    "fmin": ("band", "f_min", float),
    "fmax": ("band", "f_max", _float_or_auto),
    "lam": ("params", "lambda", float),
    "lambda_mode": ("params", "lambda_mode", str),
    "beta": ("params", "beta", float),
    "n_angles": ("params", "n_angles", int),
    "rank": ("params", "rank", _int_or_full),
    "n_peaks": ("params", "n_peaks", int),
    "min_separation": ("params", "min_separation", float),
    "tolerance": ("params", "tolerance", float),
    "max_iterations": ("params", "max_iterations", int),
    "step_rule": ("params", "step_rule", str),
    "block_frames": ("block", "frames", int),
    "block_advance": ("block", "advance", int),
    "snr": ("scene", "snr_db", float),
    "seed": ("run", "seed", int),
    "out": ("run", "out", str),
    "threads": ("run", "threads", int),
    "wav_format": ("run", "wav_format", str),
}


def _add_common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration")
    g.add_argument("--config", help="TOML configuration file")
    g.add_argument("--preset", choices=sorted(PRESETS), help="named parameter set applied before the file")
    g.add_argument("--method", choices=list(METHODS) + ["all"], help="localizer (default: config methods)")
    g.add_argument("--out", help="output directory")
    g.add_argument("--seed", help="base random seed")
    g.add_argument("--threads", help="worker threads for per-bin solves")
    g.add_argument("--mics", help="number of microphones")
    g.add_argument("--radius", help="array radius in metres")
    g.add_argument("--sound-speed", help="speed of sound in m/s")
    g.add_argument("--fmin", help="lower band edge in Hz")
    g.add_argument("--fmax", help="upper band edge in Hz or 'auto'")
    g.add_argument("--lambda", dest="lam", metavar="LAMBDA", help="group-lasso penalty")
    g.add_argument("--lambda-mode", help="'absolute' or 'fraction_of_crit'")
    g.add_argument("--beta", help="equalizer regularization")
    g.add_argument("--n-angles", help="azimuth grid size")
    g.add_argument("--rank", help="SVD rank kept before the solve, or 'full'")
    g.add_argument("--n-peaks", help="peaks picked per block")
    g.add_argument("--min-separation", help="minimum peak separation in degrees")
    g.add_argument("--tolerance", help="solver certificate tolerance")
    g.add_argument("--max-iterations", help="solver iteration cap")
    g.add_argument("--step-rule", help="'fixed_lipschitz' or 'backtracking'")
    g.add_argument("--block-frames", help="frames per observation block")
    g.add_argument("--block-advance", help="frames between block starts")
    g.add_argument("--snr", help="scene SNR in dB")
    g.add_argument("--wav-format", help="'float32' or 'pcm16'")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="waschl", description="Wideband DOA estimation with circular harmonics.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="synthesize the configured scene as a multichannel WAV")
    _add_common(p)

    p = sub.add_parser("localize", help="localize sources per observation block")
    _add_common(p)
    p.add_argument("--input", help="multichannel WAV; without it the configured scene is synthesized")

    p = sub.add_parser("sweep-distinction", help="resolved fraction of (-phi, 0, phi) scenes")
    _add_common(p)
    p.add_argument("--phis", type=_float_list, default=[10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 48.0], help="comma-separated spacings in degrees")
    p.add_argument("--trials", type=int, default=10, help="seeded trials per spacing")

    p = sub.add_parser("benchmark", help="accuracy and timing of the localizers on identical blocks")
    _add_common(p)
    p.add_argument("--input", help="multichannel WAV (requires --truth)")
    p.add_argument("--truth", help="ground-truth azimuths: comma-separated degrees or a JSON file")
    p.add_argument("--trials", type=int, default=20, help="synthetic scenes when no --input is given")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Dict[str, object]]:
    out: Dict[str, Dict[str, object]] = {}
    for name, (section, key, kind) in _OVERRIDES.items():
        value = getattr(args, name, None)
        if value is None:
            continue
        try:
            value = kind(value)
        except ValueError:
            flag = "lambda" if name == "lam" else name.replace("_", "-")
            raise ConfigError(f"invalid value for --{flag}: {value!r}") from None
        out.setdefault(section, {})[key] = value
    if getattr(args, "method", None):
        out["methods"] = {"names": list(METHODS) if args.method == "all" else [args.method]}
    return out


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.data["run"]["out"])
    ensure_parent(out / "x")
    return out


def _write_manifest(cfg: RunConfig, out: Path, files: Sequence[str]) -> None:
    """``manifest.json`` ties every written file to the config hash."""
    write_json(out / "manifest.json", {"config_hash": cfg.hash(), "files": sorted(files)})


def _scene_record(cfg: RunConfig, seed: int) -> dict:
    spec = cfg.scene(seed)
    return {
        "azimuths_deg": [float(np.degrees(s.azimuth)) for s in spec.sources],
        "kinds": [s.kind for s in spec.sources],
        "levels": [s.level for s in spec.sources],
        "snr_db": spec.snr_db,
        "duration_s": spec.duration,
        "seed": seed,
    }


def _band_record(band) -> dict:
    return {
        "f_min": band.f_min,
        "f_max": band.f_max,
        "bins": [int(b) for b in band.selected_bins],
        "count": len(band.selected_bins),
    }


def cmd_simulate(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    geom, spec = cfg.geometry(), cfg.scene()
    signal = synthesize_waveforms(geom, spec)
    fmt = cfg.data["run"]["wav_format"]
    gain = 1.0
    samples = signal.samples
    peak = float(np.max(np.abs(samples))) if samples.size else 0.0
    if fmt == "pcm16" and peak > PCM_PEAK:
        gain = PCM_PEAK / peak
    # single-precision values so that the float WAV holds the signal exactly
    samples = (samples * gain).astype(np.float32).astype(np.float64)
    write_wav(out / "scene.wav", MultichannelSignal(samples, signal.sample_rate), fmt)
    record = {
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "scene": _scene_record(cfg, spec.seed),
        "mic_count": geom.mic_count,
        "order": cfg.localizer().mode_order(geom),
        "n_samples": int(samples.shape[1]),
        "sample_rate": signal.sample_rate,
        "wav_format": fmt,
        "gain": gain,
    }
    write_json(out / "scene.json", record)
    _write_manifest(cfg, out, ["scene.wav", "scene.json"])
    log.info("wrote %s", out / "scene.wav")
    return EXIT_OK


def _input_tensor(cfg: RunConfig, path: Optional[str]) -> StftTensor:
    params, geom = cfg.stft_params(), cfg.geometry()
    if path is None:
        return synthesize_scene(geom, cfg.scene(), params, cfg.band_edges())
    signal = read_wav(path)
    if signal.n_channels != geom.mic_count:
        raise DataError(f"{path} has {signal.n_channels} channels, the array has {geom.mic_count} microphones")
    if signal.sample_rate != params.sample_rate:
        raise DataError(f"{path} is sampled at {signal.sample_rate:g} Hz, expected {params.sample_rate:g} Hz")
    if signal.samples.shape[1] < params.window_length:
        raise DataError(f"{path} is shorter than one STFT window")
    return stft(signal, params)


def cmd_localize(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    geom = cfg.geometry()
    tensor = _input_tensor(cfg, args.input)
    f_min, f_max = cfg.band_edges()
    band = select_band(tensor, f_min, f_max, geom.sound_speed)
    loc = cfg.localizer()
    n_peaks, min_sep = cfg.peak_settings()
    frames, advance = cfg.blocks()
    estimates, timing, files = {}, {}, ["estimates.json", "timing.json"]
    for m in cfg.methods():
        results = localize_blocks(m, tensor, geom, band, loc, frames, advance, n_peaks, min_sep)
        meta = {k: v for k, v in results[0].spectrum.meta.items() if k in _META_KEYS} if results else {}
        estimates[m] = {
            "meta": meta,
            "solves_per_block": results[0].spectrum.solves if results else 0,
            "blocks": [{**r.estimate.to_dict(), "frames": list(r.frames)} for r in results],
        }
        timing[m] = {
            "wall_time_s": [r.wall_time for r in results],
            "cpu_time_s": [r.cpu_time for r in results],
        }
        for r in results:
            name = f"pseudospectrum_{m}_block{r.block_index:03d}.csv"
            write_pseudospectra_csv(out / name, [(r.block_index, r.spectrum)])
            files.append(name)
        log.info("%s: %d blocks", m, len(results))
    doc = {
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "input": args.input if args.input else {"synthetic": _scene_record(cfg, cfg.seed())},
        "band": _band_record(band),
        "n_frames": tensor.n_frames,
        "methods": estimates,
    }
    write_json(out / "estimates.json", doc)
    write_json(out / "timing.json", {"config_hash": cfg.hash(), "threads": loc.threads, "methods": timing})
    _write_manifest(cfg, out, files)
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, args) -> int:
    if args.trials < 1:
        raise ConfigError("--trials must be at least 1")
    out = _out_dir(cfg)
    geom, params = cfg.geometry(), cfg.stft_params()
    _, min_sep = cfg.peak_settings()
    frames, _ = cfg.blocks()
    rows = sweep_distinction(
        geom,
        params,
        cfg.band_edges(),
        cfg.localizer(),
        args.phis,
        args.trials,
        cfg.methods(),
        seed=cfg.seed(),
        snr_db=float(cfg.data["scene"]["snr_db"]),
        n_frames=frames,
        min_separation=min_sep,
    )
    path = ensure_parent(out / "distinction.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "M", "phi", "resolved_fraction"])
        for r in rows:
            w.writerow([r.method, r.mic_count, repr(r.phi), repr(r.resolved_fraction)])
    write_json(out / "distinction.json", {"config": cfg.to_dict(), "config_hash": cfg.hash(), "rows": [r.to_dict() for r in rows]})
    _write_manifest(cfg, out, ["distinction.csv", "distinction.json"])
    for r in rows:
        log.info("%s M=%d phi=%g resolved=%.2f", r.method, r.mic_count, r.phi, r.resolved_fraction)
    return EXIT_OK


def _parse_truth(text: Optional[str]) -> List[float]:
    if text is None:
        raise DataError("benchmark on a recording needs --truth")
    path = Path(text)
    if path.suffix == ".json" or path.exists():
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise DataError(f"no such truth file: {text}") from None
        except json.JSONDecodeError as exc:
            raise DataError(f"cannot parse truth file {text}: {exc}") from None
        if isinstance(doc, dict):
            doc = doc.get("azimuths_deg", doc.get("scene", {}).get("azimuths_deg"))
        if not isinstance(doc, list) or not doc:
            raise DataError(f"truth file {text} holds no azimuths_deg list")
        return [float(v) % 360.0 for v in doc]
    try:
        values = [float(v) % 360.0 for v in text.split(",") if v.strip()]
    except ValueError:
        raise DataError(f"cannot parse ground truth {text!r}") from None
    if not values:
        raise DataError("empty ground truth")
    return values


def cmd_benchmark(cfg: RunConfig, args) -> int:
    out = _out_dir(cfg)
    geom = cfg.geometry()
    if args.input is not None:
        truth = _parse_truth(args.truth)
        tensors = [_input_tensor(cfg, args.input)]
    else:
        if args.trials < 1:
            raise ConfigError("--trials must be at least 1")
        truth = _parse_truth(args.truth) if args.truth else _scene_record(cfg, 0)["azimuths_deg"]
        params, edges = cfg.stft_params(), cfg.band_edges()
        tensors = [synthesize_scene(geom, cfg.scene(cfg.seed() + t), params, edges) for t in range(args.trials)]
    f_min, f_max = cfg.band_edges()
    band = select_band(tensors[0], f_min, f_max, geom.sound_speed)
    n_peaks, min_sep = cfg.peak_settings()
    frames, advance = cfg.blocks()
    res = run_benchmark(tensors, truth, geom, band, cfg.localizer(), cfg.methods(), frames, advance, n_peaks, min_sep)
    report = {
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "truth_deg": truth,
        "band": _band_record(band),
        "scenes": len(tensors),
        "methods": {m: r.to_dict() for m, r in res.reports.items()},
    }
    if "waschl" in res.runs and "l1svd" in res.runs and res.runs["waschl"].wall_time > 0:
        report["wall_time_ratio_l1svd_over_waschl"] = res.runs["l1svd"].wall_time / res.runs["waschl"].wall_time
    write_json(out / "report.json", report)
    write_json(
        out / "estimates.json",
        {
            "config": cfg.to_dict(),
            "config_hash": cfg.hash(),
            "methods": {m: [e.to_dict() for e in run.estimates] for m, run in res.runs.items()},
        },
    )
    path = ensure_parent(out / "timing.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "threads", "wall_time_s", "cpu_time_s", "solves", "blocks"])
        for m, run in res.runs.items():
            w.writerow([m, 1, f"{run.wall_time:.6f}", f"{run.cpu_time:.6f}", run.solves, len(run.estimates)])
        for m, wall in res.parallel_wall_time.items():
            w.writerow([m, cfg.localizer().threads, f"{wall:.6f}", "", res.runs[m].solves, len(res.runs[m].estimates)])
    _write_manifest(cfg, out, ["report.json", "estimates.json", "timing.csv"])
    for m, r in res.reports.items():
        acc = ", ".join(f"<={t:g}: {a:.2f}" for t, a in sorted(r.accuracy_at.items()))
        print(f"{m:7s} {acc}  wall {r.wall_time['single_thread']:.2f} s")
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "localize": cmd_localize,
    "sweep-distinction": cmd_sweep,
    "benchmark": cmd_benchmark,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, _overrides(args), args.preset)
        return _COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())

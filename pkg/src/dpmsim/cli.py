"""Batch front-end: simulate, tomography, sweep and oracle subcommands.

Every pipeline is a plain function taking a RunConfig or an input directory,
so the same entry points serve scripting and the command line. Flags override
individual configuration values; the configuration file is always required
for simulate and oracle. Exit codes: 0 success, 1 configuration/validation
error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    NegativityCurve,
    TimeWindow,
    effective_window_ps,
    negativity_vs_window,
    oracle_negativity,
    window_counts,
    write_curve_csv,
)
from .cascade import read_coincidence_csv, simulate_all_settings, write_coincidence_csv
from .config import ConfigError, RunConfig, load_config, manifest_dict, resolve_waveform
from .qstate import ProjectionSetting
from .tomography import (
    CountRecord,
    MLEConfig,
    bootstrap_uncertainties,
    mle_reconstruct,
    result_to_text,
    standard_settings,
)


def run_simulate(cfg: RunConfig, threads: int = 1) -> dict:
    """Simulate all 36 settings and write one CSV per setting plus a manifest.

    Re-running with the same configuration produces bit-identical files for
    any thread count.
    """
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    waveform = resolve_waveform(cfg)
    maps = simulate_all_settings(
        cfg.emitter,
        cfg.setup,
        waveform,
        cfg.imperfections,
        cfg.n_pulses,
        cfg.master_seed,
        bin_width_ps=cfg.bin_width_ps,
        time_range_ps=cfg.time_range_ps,
        threads=threads,
    )
    totals = {}
    files = {}
    for setting in standard_settings():
        cmap = maps[setting]
        name = f"map_{setting.xx}{setting.x}.csv"
        write_coincidence_csv(cmap, out / name)
        totals[str(setting)] = cmap.total()
        files[str(setting)] = name
    manifest = manifest_dict(cfg, totals, files)
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest


def _load_run_dir(input_dir):
    """(manifest, {setting: CoincidenceMap}) from a simulate output directory."""
    input_dir = Path(input_dir)
    manifest_path = input_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest.json in {input_dir}")
    with open(manifest_path) as f:
        manifest = json.load(f)
    files = manifest.get("files", {})
    missing = [str(s) for s in standard_settings() if str(s) not in files]
    if missing:
        raise ValueError(f"manifest lists no files for settings: {', '.join(missing)}")
    maps = {}
    for setting in standard_settings():
        path = input_dir / files[str(setting)]
        if not path.exists():
            raise FileNotFoundError(f"missing coincidence file {path}")
        maps[setting] = read_coincidence_csv(path)
    return manifest, maps


def _window_records(maps, window: TimeWindow):
    records = []
    for setting, cmap in maps.items():
        total, _ = window_counts(cmap, window)
        records.append(CountRecord(setting, total, float(cmap.total_pulses)))
    return records


def run_tomography(
    input_dir,
    t_w_ns: float,
    mle_config: MLEConfig = MLEConfig(),
    n_bootstrap: int = 0,
    seed: int = 0,
    output_path=None,
):
    """Windowed counts -> MLE density matrix record with negativity."""
    _, maps = _load_run_dir(input_dir)
    window = TimeWindow(t_w_ns * 1000.0)
    records = _window_records(maps, window)
    total = sum(r.count for r in records)
    if total < 100:
        print(f"warning: only {total} coincidences in the {t_w_ns} ns window", file=sys.stderr)
    result = mle_reconstruct(records, mle_config)
    if n_bootstrap > 0:
        boot = bootstrap_uncertainties(records, n_bootstrap, mle_config, seed=seed)
        result.element_sigmas = boot.element_sigmas
        result.negativity_sigma = boot.negativity_sigma
    text = result_to_text(result)
    if output_path is None:
        output_path = Path(input_dir) / f"tomography_tw_{t_w_ns:g}ns.txt"
    with open(output_path, "w") as f:
        f.write(text)
    return result


def run_sweep(
    input_dir,
    windows_ns=None,
    mle_config: MLEConfig = MLEConfig(),
    n_bootstrap: int = 0,
    seed: int = 0,
    output_path=None,
) -> NegativityCurve:
    """Negativity-versus-window curve over a run directory."""
    manifest, maps = _load_run_dir(input_dir)
    if windows_ns is None:
        windows_ns = manifest["config"]["run"]["windows_ns"]
    if not windows_ns:
        raise ValueError("empty window list")
    windows = [TimeWindow(w * 1000.0) for w in windows_ns]
    curve = negativity_vs_window(
        maps,
        windows,
        mle_config,
        dpm=bool(manifest.get("dpm", False)),
        n_bootstrap=n_bootstrap,
        seed=seed,
    )
    if output_path is None:
        output_path = Path(input_dir) / "negativity_curve.csv"
    write_curve_csv(curve, output_path, seed=manifest["config"]["run"]["master_seed"])
    return curve


def run_oracle(cfg: RunConfig, windows_ns=None, input_dir=None, output_path=None) -> dict:
    """Quadrature-oracle negativities per window, plus MC deviations if data exist.

    The oracle models polarization-perfect optics only, so configurations
    with nonzero extinction, drift, jitter or dark counts are rejected.
    """
    m = cfg.imperfections
    if (
        m.extinction_epsilon != 0.0
        or m.drift_sigma_rad != 0.0
        or m.detector_jitter_sigma_ps != 0.0
        or m.dark_count_fraction != 0.0
    ):
        raise ConfigError(
            "imperfections: the analytic oracle covers ideal optics only "
            "(slope_error excepted); zero out extinction, drift, jitter and dark counts"
        )
    if cfg.dpm and cfg.waveform != "ideal":
        raise ConfigError(
            "waveform: the analytic oracle models dpm only in its ideal form"
        )
    if windows_ns is None:
        windows_ns = cfg.windows_ns
    report = {"dpm": cfg.dpm, "windows_ns": list(windows_ns), "oracle_negativity": []}

    maps = None
    if input_dir is not None:
        _, maps = _load_run_dir(input_dir)
        report["mc_negativity"] = []
        report["deviation"] = []

    for w_ns in windows_ns:
        window = TimeWindow(w_ns * 1000.0)
        if maps is not None:
            # align the oracle window with the bin-quantized window actually
            # applied to the histogrammed counts
            lo, hi = effective_window_ps(next(iter(maps.values())), window)
            eff = TimeWindow(hi - lo, lo)
        else:
            eff = window
        n_oracle = oracle_negativity(cfg.emitter, eff, cfg.dpm, cfg.imperfections.slope_error)
        report["oracle_negativity"].append(n_oracle)
        if maps is not None:
            records = _window_records(maps, window)
            n_mc = mle_reconstruct(records).negativity
            report["mc_negativity"].append(n_mc)
            report["deviation"].append(n_mc - n_oracle)

    if output_path is None:
        output_path = Path(cfg.output_dir) / "oracle_report.json"
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    with open(output_path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
    return report


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        cfg.master_seed = args.seed
    if getattr(args, "n_pulses", None) is not None:
        if args.n_pulses <= 0:
            raise ConfigError("run.n_pulses: must be positive")
        cfg.n_pulses = args.n_pulses
    if getattr(args, "output_dir", None) is not None:
        cfg.output_dir = args.output_dir
    return cfg


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpmsim",
        description="Entangled photon-pair cascade simulator with dynamic phase compensation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate 36 coincidence maps plus a manifest")
    sim.add_argument("--config", required=True)
    sim.add_argument("--seed", type=int, help="override run.master_seed")
    sim.add_argument("--n-pulses", type=int, dest="n_pulses")
    sim.add_argument("--output-dir", dest="output_dir")
    sim.add_argument("--threads", type=int, default=1)

    tomo = sub.add_parser("tomography", help="windowed MLE reconstruction of one run")
    tomo.add_argument("--input-dir", required=True)
    tomo.add_argument("--window-ns", type=float, required=True)
    tomo.add_argument("--bootstrap", type=int, default=0)
    tomo.add_argument("--seed", type=int, default=0)
    tomo.add_argument("--output")

    sweep = sub.add_parser("sweep", help="negativity versus window over one run")
    sweep.add_argument("--input-dir", required=True)
    sweep.add_argument("--windows-ns", type=float, nargs="+")
    sweep.add_argument("--bootstrap", type=int, default=0)
    sweep.add_argument("--seed", type=int, default=0)
    sweep.add_argument("--output")

    orc = sub.add_parser("oracle", help="analytic window-averaging oracle and MC comparison")
    orc.add_argument("--config", required=True)
    orc.add_argument("--windows-ns", type=float, nargs="+")
    orc.add_argument("--input-dir")
    orc.add_argument("--seed", type=int, help="override run.master_seed")
    orc.add_argument("--output")

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            cfg = _apply_overrides(load_config(args.config), args)
            manifest = run_simulate(cfg, threads=args.threads)
            print(f"wrote {len(manifest['files'])} maps to {cfg.output_dir}")
        elif args.command == "tomography":
            result = run_tomography(
                args.input_dir,
                args.window_ns,
                n_bootstrap=args.bootstrap,
                seed=args.seed,
                output_path=args.output,
            )
            print(f"negativity = {result.negativity:.6f} (converged={result.converged})")
        elif args.command == "sweep":
            curve = run_sweep(
                args.input_dir,
                windows_ns=args.windows_ns,
                n_bootstrap=args.bootstrap,
                seed=args.seed,
                output_path=args.output,
            )
            for tw, n in zip(curve.t_w_ps, curve.negativity):
                print(f"t_w = {tw / 1000.0:6.3f} ns  negativity = {n:.6f}")
        elif args.command == "oracle":
            cfg = _apply_overrides(load_config(args.config), args)
            report = run_oracle(
                cfg, windows_ns=args.windows_ns, input_dir=args.input_dir, output_path=args.output
            )
            for i, w in enumerate(report["windows_ns"]):
                line = f"t_w = {w:6.3f} ns  oracle = {report['oracle_negativity'][i]:.6f}"
                if "deviation" in report:
                    line += f"  mc = {report['mc_negativity'][i]:.6f}  dev = {report['deviation'][i]:+.6f}"
                print(line)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())

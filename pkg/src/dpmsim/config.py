"""Run configuration: JSON files with nested sections mirroring the model types.

All physical quantities carry explicit unit suffixes in their key names
(tau_xx_ps, fss_microev, windows_ns) to keep units out of the code paths.
Validation failures raise ConfigError with the offending field path in the
message. A run manifest embeds its fully resolved configuration, so a
manifest file is itself a valid configuration input.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .cascade import (
    PAPER_LIKE_PRESET_VERSION,
    EmitterParams,
    ImperfectionModel,
    SetupParams,
)
from .waveform import PhaseWaveform, build_compensation_waveform, ideal_compensation_waveform

MANIFEST_FORMAT = "dpmsim-run-v1"

WAVEFORM_CHOICES = ("none", "ideal", "paper_like")


class ConfigError(ValueError):
    """Configuration value rejected; message starts with the field path."""


@dataclass
class RunConfig:
    emitter: EmitterParams
    setup: SetupParams
    imperfections: ImperfectionModel
    waveform: str | dict  # one of WAVEFORM_CHOICES or {'segments': ...}
    n_pulses: int
    master_seed: int
    windows_ns: list[float]
    output_dir: str
    bin_width_ps: float = 16.0
    time_range_ps: float | None = None
    waveform_window_ps: float | None = None

    @property
    def dpm(self) -> bool:
        return self.waveform != "none"


_SECTION_FIELDS = {
    "emitter": ("tau_xx_ps", "tau_x_ps", "fss_microev"),
    "setup": ("delay_line_ps", "clock_period_ps", "pulses_per_cycle", "dpm_arm_offset_ps"),
    "imperfections": (
        "slope_error",
        "extinction_epsilon",
        "drift_sigma_rad",
        "detector_jitter_sigma_ps",
        "dark_count_fraction",
    ),
    "run": (
        "n_pulses",
        "master_seed",
        "windows_ns",
        "output_dir",
        "bin_width_ps",
        "time_range_ps",
        "waveform_window_ps",
    ),
}


def _build_section(cls, section: str, data: dict):
    for key in data:
        if key not in _SECTION_FIELDS[section]:
            raise ConfigError(f"{section}.{key}: unknown field")
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{section}: {exc}")


def config_from_dict(raw: dict) -> RunConfig:
    """Build and validate a RunConfig from a parsed JSON object.

    Accepts either a plain configuration or a run manifest (which embeds the
    configuration under its 'config' key).
    """
    if "config" in raw and raw.get("format") == MANIFEST_FORMAT:
        raw = raw["config"]
    known_sections = ("emitter", "setup", "imperfections", "waveform", "run")
    for key in raw:
        if key not in known_sections:
            raise ConfigError(f"{key}: unknown section")

    emitter = _build_section(EmitterParams, "emitter", raw.get("emitter", {}))
    setup = _build_section(SetupParams, "setup", raw.get("setup", {}))

    imp = raw.get("imperfections", {})
    if imp == "ideal":
        imperfections = ImperfectionModel.ideal()
    elif imp == "paper_like":
        imperfections = ImperfectionModel.paper_like()
    elif isinstance(imp, dict):
        imperfections = _build_section(ImperfectionModel, "imperfections", imp)
    else:
        raise ConfigError("imperfections: expected 'ideal', 'paper_like' or a mapping")

    waveform = raw.get("waveform", "none")
    if isinstance(waveform, dict):
        if "segments" not in waveform:
            raise ConfigError("waveform.segments: required for an explicit waveform")
        extra = set(waveform) - {"segments", "range_limit_rad", "clamp"}
        if extra:
            raise ConfigError(f"waveform.{sorted(extra)[0]}: unknown field")
    elif waveform not in WAVEFORM_CHOICES:
        raise ConfigError(
            f"waveform: expected one of {WAVEFORM_CHOICES} or an explicit segment mapping"
        )

    run = dict(raw.get("run", {}))
    for key in run:
        if key not in _SECTION_FIELDS["run"]:
            raise ConfigError(f"run.{key}: unknown field")
    if "master_seed" not in run:
        raise ConfigError("run.master_seed: required (runs must be reproducible)")
    try:
        master_seed = int(run["master_seed"])
        n_pulses = int(run.get("n_pulses", 100_000))
        windows_ns = [float(x) for x in run.get("windows_ns", [0.096, 0.25, 0.5, 1.0, 2.0, 3.0])]
        output_dir = str(run.get("output_dir", "dpmsim-out"))
        bin_width_ps = float(run.get("bin_width_ps", 16.0))
        time_range_raw = run.get("time_range_ps")
        time_range_ps = None if time_range_raw is None else float(time_range_raw)
        ww_raw = run.get("waveform_window_ps")
        waveform_window_ps = None if ww_raw is None else float(ww_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"run: {exc}")
    if n_pulses <= 0:
        raise ConfigError("run.n_pulses: must be positive")
    if master_seed < 0:
        raise ConfigError("run.master_seed: must be >= 0")
    if any(w <= 0 for w in windows_ns):
        raise ConfigError("run.windows_ns: all windows must be positive")
    if bin_width_ps <= 0:
        raise ConfigError("run.bin_width_ps: must be positive")
    if time_range_ps is not None and time_range_ps <= 0:
        raise ConfigError("run.time_range_ps: must be positive")

    cfg = RunConfig(
        emitter=emitter,
        setup=setup,
        imperfections=imperfections,
        waveform=waveform,
        n_pulses=n_pulses,
        master_seed=master_seed,
        windows_ns=windows_ns,
        output_dir=output_dir,
        bin_width_ps=bin_width_ps,
        time_range_ps=time_range_ps,
        waveform_window_ps=waveform_window_ps,
    )
    # resolve the waveform now so geometry errors surface as config errors
    try:
        resolve_waveform(cfg)
    except ValueError as exc:
        raise ConfigError(f"waveform: {exc}")
    return cfg


def load_config(path) -> RunConfig:
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top-level JSON value must be an object")
    return config_from_dict(raw)


def resolve_waveform(cfg: RunConfig) -> PhaseWaveform | None:
    """Instantiate the waveform selected by the configuration."""
    if cfg.waveform == "none":
        return None
    if cfg.waveform == "ideal":
        return ideal_compensation_waveform(cfg.emitter, cfg.setup, cfg.imperfections.slope_error)
    if cfg.waveform == "paper_like":
        return build_compensation_waveform(
            cfg.emitter,
            cfg.setup,
            window_ps=cfg.waveform_window_ps,
            slope_error=cfg.imperfections.slope_error,
            range_limit_rad=4.0 * math.pi,
            clamp=True,
        )
    seg = cfg.waveform
    return PhaseWaveform(
        segments=tuple(tuple(float(v) for v in s) for s in seg["segments"]),
        range_limit_rad=float(seg.get("range_limit_rad", 4.0 * math.pi)),
        clamp=bool(seg.get("clamp", True)),
    )


def config_to_dict(cfg: RunConfig) -> dict:
    """Fully resolved configuration as a JSON-serializable dict."""
    return {
        "emitter": {
            "tau_xx_ps": cfg.emitter.tau_xx_ps,
            "tau_x_ps": cfg.emitter.tau_x_ps,
            "fss_microev": cfg.emitter.fss_microev,
        },
        "setup": {
            "delay_line_ps": cfg.setup.delay_line_ps,
            "clock_period_ps": cfg.setup.clock_period_ps,
            "pulses_per_cycle": cfg.setup.pulses_per_cycle,
            "dpm_arm_offset_ps": cfg.setup.dpm_arm_offset_ps,
        },
        "imperfections": {
            "slope_error": cfg.imperfections.slope_error,
            "extinction_epsilon": cfg.imperfections.extinction_epsilon,
            "drift_sigma_rad": cfg.imperfections.drift_sigma_rad,
            "detector_jitter_sigma_ps": cfg.imperfections.detector_jitter_sigma_ps,
            "dark_count_fraction": cfg.imperfections.dark_count_fraction,
        },
        "waveform": cfg.waveform,
        "run": {
            "n_pulses": cfg.n_pulses,
            "master_seed": cfg.master_seed,
            "windows_ns": cfg.windows_ns,
            "output_dir": cfg.output_dir,
            "bin_width_ps": cfg.bin_width_ps,
            "time_range_ps": cfg.time_range_ps,
            "waveform_window_ps": cfg.waveform_window_ps,
        },
    }


def manifest_dict(cfg: RunConfig, per_setting_totals: dict, files: dict) -> dict:
    return {
        "format": MANIFEST_FORMAT,
        "preset_version": PAPER_LIKE_PRESET_VERSION,
        "dpm": cfg.dpm,
        "config": config_to_dict(cfg),
        "per_setting_totals": per_setting_totals,
        "files": files,
    }

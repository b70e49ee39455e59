"""Monte Carlo model of the biexciton-exciton photon cascade.

The emitter is excited once per clock pulse and decays radiatively through
the biexciton (lifetime tau_xx) and exciton (lifetime tau_x) levels, emitting
one photon at each step. The exciton fine-structure splitting makes the
two-photon polarization state precess: an event with emission times
(t_xx, t_x) carries the ket

    (|HH> + exp(-i omega_x (t_x - t_xx)) |VV>) / sqrt2

with omega_x = fss / hbar. A phase waveform applied between the H and V
components of each photon can cancel this event-dependent phase; hardware
imperfections (slope error, interferometer drift, finite extinction, detector
jitter, dark counts) are modeled as optional perturbations of the chain

    sample -> cascade ket -> phase modulation -> imperfections -> detection.

All randomness flows through numpy Generators. The batch simulator derives a
counter-based Philox stream per (setting, block) from the master seed, so
results are bit-identical regardless of how work is scheduled across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .qstate import LABELS, ProjectionSetting, projector_ket
from .waveform import PhaseWaveform, waveform_phase

# Planck constant in microeV * ps (exact SI definition of h and e)
H_UEV_PS = 4135.667696923859
HBAR_UEV_PS = H_UEV_PS / (2.0 * math.pi)

_SQ2 = 1.0 / math.sqrt(2.0)

#: version tag for the named imperfection preset, recorded in run manifests
PAPER_LIKE_PRESET_VERSION = "paper-like-v1"


@dataclass(frozen=True)
class EmitterParams:
    """Quantum-dot emitter constants: lifetimes in ps, splitting in microeV."""

    tau_xx_ps: float = 211.0
    tau_x_ps: float = 405.0
    fss_microev: float = 8.80

    def __post_init__(self) -> None:
        if self.tau_xx_ps <= 0.0 or self.tau_x_ps <= 0.0 or self.fss_microev <= 0.0:
            raise ValueError("tau_xx_ps, tau_x_ps and fss_microev must all be positive")

    @property
    def omega_x(self) -> float:
        """Exciton precession angular frequency, rad/ps."""
        return self.fss_microev / HBAR_UEV_PS

    @property
    def precession_period_ps(self) -> float:
        """Period of one full exciton precession, h / fss."""
        return H_UEV_PS / self.fss_microev


@dataclass(frozen=True)
class EmissionEvent:
    """Emission times of one cascade, ps since its excitation pulse."""

    t_xx_ps: float
    t_x_ps: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.t_xx_ps <= self.t_x_ps:
            raise ValueError(
                f"emission times must satisfy 0 <= t_xx <= t_x, got "
                f"({self.t_xx_ps}, {self.t_x_ps})"
            )

    @property
    def delta_t_ps(self) -> float:
        return self.t_x_ps - self.t_xx_ps


@dataclass(frozen=True)
class SetupParams:
    """Optical-path and clock geometry of the modulation setup."""

    delay_line_ps: float = 1900.0
    clock_period_ps: float = 1.0e6 / 76.0  # 76 MHz excitation clock
    pulses_per_cycle: int = 8
    dpm_arm_offset_ps: float = 300.0

    def __post_init__(self) -> None:
        if self.delay_line_ps <= 0.0:
            raise ValueError("delay_line_ps must be positive")
        if self.clock_period_ps <= 0.0:
            raise ValueError("clock_period_ps must be positive")
        if self.pulses_per_cycle < 2 or self.pulses_per_cycle % 2 != 0:
            raise ValueError("pulses_per_cycle must be an even count >= 2")
        if self.dpm_arm_offset_ps < 0.0:
            raise ValueError("dpm_arm_offset_ps must be >= 0")


@dataclass(frozen=True)
class ImperfectionModel:
    """Hardware imperfection knobs; the all-zero default is the ideal setup."""

    slope_error: float = 0.0
    extinction_epsilon: float = 0.0
    drift_sigma_rad: float = 0.0
    detector_jitter_sigma_ps: float = 0.0
    dark_count_fraction: float = 0.0

    def __post_init__(self) -> None:
        for name in (
            "slope_error",
            "extinction_epsilon",
            "drift_sigma_rad",
            "detector_jitter_sigma_ps",
            "dark_count_fraction",
        ):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be >= 0")
        if self.extinction_epsilon >= 1.0:
            raise ValueError("extinction_epsilon must be < 1")

    @classmethod
    def ideal(cls) -> "ImperfectionModel":
        return cls()

    @classmethod
    def paper_like(cls) -> "ImperfectionModel":
        """Named preset with hardware-motivated magnitudes (see preset version tag)."""
        return cls(
            slope_error=0.02,
            extinction_epsilon=0.05,
            drift_sigma_rad=0.05,
            detector_jitter_sigma_ps=0.0,
            dark_count_fraction=0.0,
        )

    @property
    def is_ideal(self) -> bool:
        return (
            self.slope_error == 0.0
            and self.extinction_epsilon == 0.0
            and self.drift_sigma_rad == 0.0
            and self.detector_jitter_sigma_ps == 0.0
            and self.dark_count_fraction == 0.0
        )


@dataclass(frozen=True)
class DetectedEvent:
    """Outcome of one projection measurement on one cascade."""

    recorded_t_xx_ps: float
    recorded_t_x_ps: float
    setting: ProjectionSetting
    accepted: bool


@dataclass
class CoincidenceMap:
    """2D histogram of accepted (t_xx, t_x) pairs for one projection setting."""

    setting: ProjectionSetting
    bin_width_ps: float
    counts: np.ndarray  # shape (n_bins, n_bins), counts[i_t_xx, j_t_x]
    total_pulses: int
    time_range_ps: float
    seed: int | None = None
    overflow: int = 0

    @property
    def n_bins(self) -> int:
        return self.counts.shape[0]

    def total(self) -> int:
        return int(self.counts.sum())


def setting_index(setting: ProjectionSetting) -> int:
    """Stable index of a setting in the canonical 6x6 grid (XX outer, X inner)."""
    return LABELS.index(setting[0]) * len(LABELS) + LABELS.index(setting[1])


def sample_emission(params: EmitterParams, rng: np.random.Generator) -> EmissionEvent:
    """Draw one cascade: t_xx ~ Exp(tau_xx), then t_x = t_xx + Exp(tau_x)."""
    t_xx = rng.exponential(params.tau_xx_ps)
    s = rng.exponential(params.tau_x_ps)
    return EmissionEvent(t_xx, t_xx + s)


def cascade_ket(event: EmissionEvent, params: EmitterParams) -> np.ndarray:
    """Two-photon polarization ket of one cascade before any modulation."""
    phase = np.exp(-1j * params.omega_x * event.delta_t_ps)
    return np.array([_SQ2, 0.0, 0.0, phase * _SQ2], dtype=complex)


def _dpm_phase_pair(
    w: PhaseWaveform | None,
    t_xx,
    t_x,
    setup: SetupParams,
    slot_start_ps=0.0,
):
    """Phases picked up by the exciton and biexciton V components (that order).

    The exciton photon traverses the modulator at slot_start + t_x; the
    biexciton photon is held back by the delay line and traverses at
    slot_start + t_xx + delay_line + dpm_arm_offset. The ideal waveform is
    the infinitely-long-ramp limit with per-slot anchoring, where these
    evaluate to +slope*t_x and -slope*t_xx exactly.
    """
    if w is None:
        return np.zeros_like(np.asarray(t_x, dtype=float)), np.zeros_like(
            np.asarray(t_xx, dtype=float)
        )
    if w.is_ideal:
        return w.ideal_slope * np.asarray(t_x, dtype=float), -w.ideal_slope * np.asarray(
            t_xx, dtype=float
        )
    u_x = np.asarray(slot_start_ps, dtype=float) + np.asarray(t_x, dtype=float)
    u_xx = (
        np.asarray(slot_start_ps, dtype=float)
        + np.asarray(t_xx, dtype=float)
        + setup.delay_line_ps
        + setup.dpm_arm_offset_ps
    )
    return waveform_phase(w, u_x), waveform_phase(w, u_xx)


def apply_dpm(
    ket: np.ndarray,
    w: PhaseWaveform | None,
    event: EmissionEvent,
    setup: SetupParams,
    slot_start_ps: float = 0.0,
) -> np.ndarray:
    """Apply the modulator phase to both photons of one cascade ket.

    The V amplitude of the exciton photon gains exp(i phi(traversal time of
    the exciton photon)) and the V amplitude of the delayed biexciton photon
    gains the corresponding factor at its own traversal time; the VV
    amplitude gains both. Norm is preserved.
    """
    phi_x, phi_xx = _dpm_phase_pair(w, event.t_xx_ps, event.t_x_ps, setup, slot_start_ps)
    phi_x = float(phi_x)
    phi_xx = float(phi_xx)
    factors = np.array(
        [1.0, np.exp(1j * phi_x), np.exp(1j * phi_xx), np.exp(1j * (phi_x + phi_xx))],
        dtype=complex,
    )
    return np.asarray(ket, dtype=complex) * factors


def _extinction_matrix(epsilon: float) -> np.ndarray:
    """Single-photon mixing matrix sqrt(1-eps^2) I + eps X of the non-ideal splitter."""
    c = math.sqrt(1.0 - epsilon**2)
    return np.array([[c, epsilon], [epsilon, c]], dtype=complex)


def apply_imperfections(
    ket: np.ndarray, model: ImperfectionModel, rng: np.random.Generator
) -> np.ndarray:
    """Apply per-event drift phase and extinction mixing to a two-photon ket.

    Drift draws one quasi-static phase delta ~ Normal(0, drift_sigma) per
    event; each photon's V component gains exp(i delta / 2) so the pair
    coherence HH-VV sees exactly delta. Extinction applies the fixed mixing
    matrix to each photon and renormalizes. Slope error is not handled here;
    it acts on the waveform slope inside the modulation step.
    """
    out = np.asarray(ket, dtype=complex).copy()
    if model.drift_sigma_rad > 0.0:
        delta = rng.normal(0.0, model.drift_sigma_rad)
        out = out * np.array(
            [1.0, np.exp(0.5j * delta), np.exp(0.5j * delta), np.exp(1j * delta)],
            dtype=complex,
        )
    if model.extinction_epsilon > 0.0:
        m = _extinction_matrix(model.extinction_epsilon)
        out = np.kron(m, m) @ out
        out = out / np.linalg.norm(out)
    return out


def detect(
    event: EmissionEvent,
    ket: np.ndarray,
    setting: ProjectionSetting,
    model: ImperfectionModel,
    rng: np.random.Generator,
    time_range_ps: float = SetupParams().clock_period_ps,
) -> DetectedEvent:
    """Project one cascade onto a polarization setting and time-tag it.

    Accepts with the Born probability of the setting; recorded times are the
    emission times plus independent Gaussian jitter, clamped at zero. With
    probability dark_count_fraction the event is replaced by a spurious
    coincidence uniformly distributed over the time range.
    """
    if model.dark_count_fraction > 0.0 and rng.random() < model.dark_count_fraction:
        t_xx = rng.uniform(0.0, time_range_ps)
        t_x = rng.uniform(0.0, time_range_ps)
        return DetectedEvent(t_xx, t_x, setting, True)
    amp = projector_ket(setting).conj() @ np.asarray(ket, dtype=complex)
    p = min(1.0, float(np.abs(amp) ** 2))
    accepted = rng.random() < p
    t_xx, t_x = event.t_xx_ps, event.t_x_ps
    if model.detector_jitter_sigma_ps > 0.0:
        t_xx = max(0.0, t_xx + rng.normal(0.0, model.detector_jitter_sigma_ps))
        t_x = max(0.0, t_x + rng.normal(0.0, model.detector_jitter_sigma_ps))
    return DetectedEvent(t_xx, t_x, setting, accepted)


def _block_rng(master_seed: int, setting: ProjectionSetting, block: int) -> np.random.Generator:
    """Counter-based stream for one (setting, block) pair of a run."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(setting_index(setting), block))
    return np.random.Generator(np.random.Philox(ss))


def _simulate_block(
    params: EmitterParams,
    setup: SetupParams,
    w: PhaseWaveform | None,
    model: ImperfectionModel,
    setting: ProjectionSetting,
    n: int,
    first_pulse: int,
    rng: np.random.Generator,
    n_bins: int,
    bin_width_ps: float,
    time_range_ps: float,
):
    """Vectorized pipeline for one block of pulses; returns (flat counts, overflow).

    Draw order within the block is fixed: emission times, drift phases,
    acceptance uniforms, jitter, dark-count draws. Conditional draws are
    taken only when the corresponding knob is nonzero, so a given
    configuration always consumes the stream identically.
    """
    t_xx = rng.exponential(params.tau_xx_ps, n)
    s = rng.exponential(params.tau_x_ps, n)
    t_x = t_xx + s

    amps = np.empty((n, 4), dtype=complex)
    amps[:, 0] = _SQ2
    amps[:, 1] = 0.0
    amps[:, 2] = 0.0
    amps[:, 3] = _SQ2 * np.exp(-1j * params.omega_x * s)

    if w is not None:
        if w.is_ideal:
            phi_x = w.ideal_slope * t_x
            phi_xx = -w.ideal_slope * t_xx
        else:
            # cascades cycle through the modulated half of the pulse slots
            n_mod = setup.pulses_per_cycle // 2
            slot = n_mod + (first_pulse + np.arange(n)) % n_mod
            slot_start = slot * setup.clock_period_ps
            phi_x = waveform_phase(w, slot_start + t_x)
            phi_xx = waveform_phase(
                w, slot_start + t_xx + setup.delay_line_ps + setup.dpm_arm_offset_ps
            )
        amps[:, 1] *= np.exp(1j * phi_x)
        amps[:, 2] *= np.exp(1j * phi_xx)
        amps[:, 3] *= np.exp(1j * (phi_x + phi_xx))

    if model.drift_sigma_rad > 0.0:
        delta = rng.normal(0.0, model.drift_sigma_rad, n)
        half = np.exp(0.5j * delta)
        amps[:, 1] *= half
        amps[:, 2] *= half
        amps[:, 3] *= half * half

    if model.extinction_epsilon > 0.0:
        k = np.kron(
            _extinction_matrix(model.extinction_epsilon),
            _extinction_matrix(model.extinction_epsilon),
        )
        amps = amps @ k.T
        amps /= np.linalg.norm(amps, axis=1, keepdims=True)

    proj = projector_ket(setting).conj()
    p = np.abs(amps @ proj) ** 2
    np.clip(p, 0.0, 1.0, out=p)
    accepted = rng.random(n) < p

    rec_t_xx = t_xx
    rec_t_x = t_x
    if model.detector_jitter_sigma_ps > 0.0:
        rec_t_xx = np.maximum(0.0, t_xx + rng.normal(0.0, model.detector_jitter_sigma_ps, n))
        rec_t_x = np.maximum(0.0, t_x + rng.normal(0.0, model.detector_jitter_sigma_ps, n))

    if model.dark_count_fraction > 0.0:
        dark = rng.random(n) < model.dark_count_fraction
        dark_t_xx = rng.uniform(0.0, time_range_ps, n)
        dark_t_x = rng.uniform(0.0, time_range_ps, n)
        accepted = np.where(dark, True, accepted)
        rec_t_xx = np.where(dark, dark_t_xx, rec_t_xx)
        rec_t_x = np.where(dark, dark_t_x, rec_t_x)

    i = np.floor_divide(rec_t_xx[accepted], bin_width_ps).astype(np.int64)
    j = np.floor_divide(rec_t_x[accepted], bin_width_ps).astype(np.int64)
    in_grid = (i < n_bins) & (j < n_bins)
    overflow = int(np.count_nonzero(~in_grid))
    flat = np.bincount(i[in_grid] * n_bins + j[in_grid], minlength=n_bins * n_bins)
    return flat, overflow


def simulate_setting(
    params: EmitterParams,
    setup: SetupParams,
    w: PhaseWaveform | None,
    model: ImperfectionModel,
    setting: ProjectionSetting,
    n_pulses: int,
    master_seed: int,
    bin_width_ps: float = 16.0,
    time_range_ps: float | None = None,
    block_size: int = 1 << 20,
) -> CoincidenceMap:
    """Simulate n_pulses cascades against one projection setting.

    Deterministic given (master_seed, setting): every block of pulses uses a
    counter-based stream keyed by the master seed, the setting's canonical
    index and the block index, so per-setting results do not depend on
    execution order or thread count.
    """
    if n_pulses <= 0:
        raise ValueError("n_pulses must be positive")
    if time_range_ps is None:
        time_range_ps = setup.clock_period_ps
    n_bins = int(math.ceil(time_range_ps / bin_width_ps))
    flat = np.zeros(n_bins * n_bins, dtype=np.int64)
    overflow = 0
    for block, start in enumerate(range(0, n_pulses, block_size)):
        n = min(block_size, n_pulses - start)
        rng = _block_rng(master_seed, setting, block)
        f, o = _simulate_block(
            params, setup, w, model, setting, n, start, rng, n_bins, bin_width_ps, time_range_ps
        )
        flat += f
        overflow += o
    return CoincidenceMap(
        setting=setting,
        bin_width_ps=bin_width_ps,
        counts=flat.reshape(n_bins, n_bins),
        total_pulses=n_pulses,
        time_range_ps=time_range_ps,
        seed=master_seed,
        overflow=overflow,
    )


def simulate_all_settings(
    params: EmitterParams,
    setup: SetupParams,
    w: PhaseWaveform | None,
    model: ImperfectionModel,
    n_pulses: int,
    master_seed: int,
    bin_width_ps: float = 16.0,
    time_range_ps: float | None = None,
    threads: int = 1,
) -> dict[ProjectionSetting, CoincidenceMap]:
    """Simulate the full 6x6 projection grid, optionally in parallel.

    Results are keyed and returned in the canonical setting order and are
    identical for any thread count.
    """
    from concurrent.futures import ThreadPoolExecutor

    settings = [ProjectionSetting(a, b) for a in LABELS for b in LABELS]

    def run(st: ProjectionSetting) -> CoincidenceMap:
        return simulate_setting(
            params, setup, w, model, st, n_pulses, master_seed, bin_width_ps, time_range_ps
        )

    if threads <= 1:
        maps = [run(st) for st in settings]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            maps = list(pool.map(run, settings))
    return {m.setting: m for m in maps}


def write_coincidence_csv(cmap: CoincidenceMap, path) -> None:
    """Write a coincidence map as CSV with a self-describing header.

    Rows give the lower bin edges of both axes in ps and the count; zero
    bins are omitted.
    """
    bw = float(cmap.bin_width_ps)
    with open(path, "w") as f:
        f.write("# coincidence-map\n")
        f.write(f"# setting={cmap.setting.xx}{cmap.setting.x}\n")
        f.write(f"# bin_width_ps={bw!r}\n")
        f.write(f"# time_range_ps={float(cmap.time_range_ps)!r}\n")
        f.write(f"# total_pulses={cmap.total_pulses}\n")
        f.write(f"# seed={cmap.seed}\n")
        f.write(f"# overflow={cmap.overflow}\n")
        f.write("bin_t_xx_ps,bin_t_x_ps,count\n")
        ii, jj = np.nonzero(cmap.counts)
        for i, j, c in zip(ii, jj, cmap.counts[ii, jj]):
            f.write(f"{float(i) * bw!r},{float(j) * bw!r},{int(c)}\n")


def read_coincidence_csv(path) -> CoincidenceMap:
    """Read a coincidence map CSV; raises ValueError naming file and line on damage."""
    meta: dict[str, str] = {}
    counts = None
    header_seen = False
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    meta[key.strip()] = value.strip()
                continue
            if not header_seen:
                if line != "bin_t_xx_ps,bin_t_x_ps,count":
                    raise ValueError(f"{path}:{lineno}: unexpected column header {line!r}")
                header_seen = True
                try:
                    setting = ProjectionSetting(meta["setting"][0], meta["setting"][1])
                    bin_width = float(meta["bin_width_ps"])
                    time_range = float(meta["time_range_ps"])
                    total_pulses = int(meta["total_pulses"])
                    seed = None if meta.get("seed") in (None, "None") else int(meta["seed"])
                    overflow = int(meta.get("overflow", "0"))
                except (KeyError, ValueError, IndexError) as exc:
                    raise ValueError(f"{path}:{lineno}: bad or missing map metadata: {exc}")
                n_bins = int(math.ceil(time_range / bin_width))
                counts = np.zeros((n_bins, n_bins), dtype=np.int64)
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 comma-separated fields")
            try:
                t_xx = float(parts[0])
                t_x = float(parts[1])
                c = int(parts[2])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed row {line!r}")
            i = int(round(t_xx / bin_width))
            j = int(round(t_x / bin_width))
            if not (0 <= i < counts.shape[0] and 0 <= j < counts.shape[1]) or c < 0:
                raise ValueError(f"{path}:{lineno}: bin out of range or negative count")
            counts[i, j] = c
    if counts is None:
        raise ValueError(f"{path}:1: not a coincidence-map CSV (no column header found)")
    return CoincidenceMap(
        setting=setting,
        bin_width_ps=bin_width,
        counts=counts,
        total_pulses=total_pulses,
        time_range_ps=time_range,
        seed=seed,
        overflow=overflow,
    )

"""Derived quantities from coincidence maps: windows, profiles, fits, curves.

This module owns the temporal-window bookkeeping (equal acceptance windows on
both photons, bin-center inclusion rule), the diagonal arrival-time-difference
profiles with their damped-oscillation fits, the negativity-versus-window
sweep, and a quadrature oracle for the window-averaged two-photon state that
is independent of the Monte Carlo pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit

from .cascade import CoincidenceMap, EmitterParams
from .qstate import ProjectionSetting, negativity
from .tomography import CountRecord, MLEConfig, bootstrap_uncertainties, mle_reconstruct


@dataclass(frozen=True)
class TimeWindow:
    """Equal-width acceptance window applied to both photons' recorded times."""

    t_w_ps: float
    origin_ps: float = 0.0  # window start relative to the excitation pulse

    def __post_init__(self) -> None:
        if self.t_w_ps <= 0.0:
            raise ValueError("t_w_ps must be positive")
        if self.origin_ps < 0.0:
            raise ValueError("origin_ps must be >= 0")


@dataclass
class DeltaTProfile:
    """Counts versus arrival-time difference t_x - t_xx, in map-width bins."""

    setting: ProjectionSetting
    bin_width_ps: float
    delta_t_ps: np.ndarray  # lower bin edges, delta_t >= 0
    counts: np.ndarray
    negative_delta_t_counts: int = 0

    def total(self) -> int:
        return int(self.counts.sum() + self.negative_delta_t_counts)


@dataclass
class OscillationFit:
    """Damped-oscillation fit A e^{-dt/tau} (1 + V cos(w dt + phi0)) + B."""

    period_ps: float
    visibility: float
    phase_rad: float
    decay_ps: float
    amplitude: float
    baseline: float
    residual: float
    converged: bool
    visibility_constrained: bool


@dataclass
class NegativityCurve:
    t_w_ps: np.ndarray
    negativity: np.ndarray
    sigma: np.ndarray
    dpm: bool
    low_statistics: np.ndarray = field(default=None)  # bool per window


def _window_bins(cmap: CoincidenceMap, w: TimeWindow) -> tuple[int, int]:
    """(first, last+1) bin indices whose centers fall inside the window."""
    bw = cmap.bin_width_ps
    lo, hi = w.origin_ps, w.origin_ps + w.t_w_ps
    centers = (np.arange(cmap.n_bins) + 0.5) * bw
    inside = np.nonzero((centers >= lo) & (centers < hi))[0]
    if inside.size == 0:
        raise ValueError(
            f"window of {w.t_w_ps} ps starting at {w.origin_ps} ps covers no bin center"
        )
    return int(inside[0]), int(inside[-1]) + 1


def window_counts(cmap: CoincidenceMap, w: TimeWindow) -> tuple[int, CoincidenceMap]:
    """Total and sub-map of coincidences with both photons inside the window.

    A bin is included iff its center lies in [origin, origin + t_w); both
    axes use the same window.
    """
    i0, i1 = _window_bins(cmap, w)
    sub = np.zeros_like(cmap.counts)
    sub[i0:i1, i0:i1] = cmap.counts[i0:i1, i0:i1]
    windowed = CoincidenceMap(
        setting=cmap.setting,
        bin_width_ps=cmap.bin_width_ps,
        counts=sub,
        total_pulses=cmap.total_pulses,
        time_range_ps=cmap.time_range_ps,
        seed=cmap.seed,
        overflow=cmap.overflow,
    )
    return int(sub.sum()), windowed


def effective_window_ps(cmap: CoincidenceMap, w: TimeWindow) -> tuple[float, float]:
    """Continuous-time (start, end) actually covered by the included bins.

    Under the bin-center rule the effective edges are bin-edge-quantized
    versions of the requested window; oracle comparisons must use these to be
    binning-consistent with the windowed counts.
    """
    i0, i1 = _window_bins(cmap, w)
    return i0 * cmap.bin_width_ps, i1 * cmap.bin_width_ps


def diagonal_profile(cmap: CoincidenceMap) -> DeltaTProfile:
    """Sum map counts along anti-diagonals of constant t_x - t_xx.

    The Delta-t bin of map bin (i, j) is j - i; bins at negative Delta t
    (possible under detector jitter) are totalled separately. Counts are
    conserved exactly.
    """
    n = cmap.n_bins
    i, j = np.nonzero(cmap.counts)
    d = j - i
    pos = d >= 0
    counts = np.bincount(d[pos], weights=cmap.counts[i[pos], j[pos]], minlength=n)
    neg_total = int(cmap.counts[i[~pos], j[~pos]].sum())
    return DeltaTProfile(
        setting=cmap.setting,
        bin_width_ps=cmap.bin_width_ps,
        delta_t_ps=np.arange(n) * cmap.bin_width_ps,
        counts=counts.astype(np.int64),
        negative_delta_t_counts=neg_total,
    )


def _model(dt, amplitude, decay, visibility, omega, phase, baseline):
    return amplitude * np.exp(-dt / decay) * (1.0 + visibility * np.cos(omega * dt + phase)) + baseline


def _initial_period_guess(dt: np.ndarray, counts: np.ndarray, decay0: float) -> tuple[float, float]:
    """(omega, phase) seed from the discrete Fourier peak of the detrended profile.

    Equal-magnitude ties break toward the longer period (lower frequency).
    """
    envelope = np.exp(-dt / decay0)
    envelope /= envelope.max()
    detrended = counts / np.maximum(envelope * counts.max(), 1e-12) - 1.0
    window = np.hanning(len(detrended))
    spectrum = np.fft.rfft(detrended * window)
    freqs = np.fft.rfftfreq(len(detrended), d=dt[1] - dt[0])
    mag = np.abs(spectrum)
    mag[0] = 0.0  # ignore DC
    k = int(np.argmax(mag))  # argmax returns the first (lowest-frequency) maximum
    if k == 0 or freqs[k] == 0.0:
        return 2.0 * np.pi / (dt[-1] - dt[0] + dt[1]), 0.0
    return 2.0 * np.pi * freqs[k], float(np.angle(spectrum[k]))


def fit_oscillation(profile: DeltaTProfile) -> OscillationFit:
    """Least-squares damped-oscillation fit of a Delta-t profile.

    Requires at least 8 nonempty bins. Counts are weighted by sqrt(n); the
    period seed comes from the Fourier peak of the detrended profile. The
    visibility is clamped to [0, 1]; when the oscillation amplitude is not
    constrained by the data (flat profile) the clamp flag is set.
    """
    nonempty = profile.counts > 0
    if int(nonempty.sum()) < 8:
        raise ValueError("need at least 8 nonempty Delta-t bins to fit an oscillation")
    last = int(np.nonzero(nonempty)[0][-1]) + 1
    dt = profile.delta_t_ps[:last] + 0.5 * profile.bin_width_ps
    y = profile.counts[:last].astype(float)
    sigma = np.sqrt(np.maximum(y, 1.0))

    # crude decay estimate from the log-slope of the smoothed positive part
    smooth = np.convolve(y, np.ones(5) / 5.0, mode="same")
    ok = smooth > 0
    slope = np.polyfit(dt[ok], np.log(smooth[ok]), 1)[0]
    decay0 = -1.0 / slope if slope < 0 else dt[-1]
    decay0 = float(np.clip(decay0, profile.bin_width_ps, 100.0 * dt[-1]))
    omega0, phase0 = _initial_period_guess(dt, y, decay0)
    amp0 = float(np.max(y))

    # at least one full cycle across the data, else V degenerates with the envelope
    omega_min = 2.0 * np.pi / (dt[-1] - dt[0] + profile.bin_width_ps)
    omega0 = max(omega0, omega_min * 1.001)
    p0 = (amp0, decay0, 0.5, omega0, phase0, 0.0)
    bounds = (
        (0.0, profile.bin_width_ps * 0.1, 0.0, omega_min, -2.0 * np.pi, -np.inf),
        (np.inf, np.inf, 2.0, np.pi / profile.bin_width_ps, 2.0 * np.pi, np.inf),
    )
    converged = True
    try:
        popt, pcov = curve_fit(
            _model, dt, y, p0=p0, sigma=sigma, bounds=bounds, maxfev=20000
        )
    except RuntimeError:
        popt, pcov = np.array(p0), np.full((6, 6), np.inf)
        converged = False
    amplitude, decay, visibility, omega, phase, baseline = popt
    resid = _model(dt, *popt) - y
    residual = float(np.sum((resid / sigma) ** 2) / max(len(dt) - 6, 1))

    v_err = float(np.sqrt(np.abs(pcov[2, 2]))) if np.all(np.isfinite(pcov)) else np.inf
    constrained_flag = bool(v_err > max(visibility, 0.05)) or not np.isfinite(v_err)
    visibility_clamped = float(np.clip(visibility, 0.0, 1.0))
    phase = float(np.mod(phase + np.pi, 2.0 * np.pi) - np.pi)
    return OscillationFit(
        period_ps=float(2.0 * np.pi / omega),
        visibility=visibility_clamped,
        phase_rad=phase,
        decay_ps=float(decay),
        amplitude=float(amplitude),
        baseline=float(baseline),
        residual=residual,
        converged=converged,
        visibility_constrained=constrained_flag,
    )


def negativity_vs_window(
    maps: dict[ProjectionSetting, CoincidenceMap],
    windows,
    config: MLEConfig = MLEConfig(),
    dpm: bool = False,
    n_bootstrap: int = 0,
    seed: int = 0,
) -> NegativityCurve:
    """Negativity of the windowed MLE reconstruction for each time window.

    Windows yielding fewer than 100 total counts across the 36 settings are
    flagged low-statistics but still reconstructed. Bootstrap uncertainties
    are attached when n_bootstrap > 0 (must then be >= 100).
    """
    windows = list(windows)
    if not windows:
        raise ValueError("empty window list")
    t_w = np.array([w.t_w_ps for w in windows])
    negs = np.empty(len(windows))
    sigmas = np.zeros(len(windows))
    low = np.zeros(len(windows), dtype=bool)
    for idx, w in enumerate(windows):
        records = []
        for setting, cmap in maps.items():
            total, _ = window_counts(cmap, w)
            records.append(CountRecord(setting, total, float(cmap.total_pulses)))
        if sum(r.count for r in records) < 100:
            low[idx] = True
        result = mle_reconstruct(records, config)
        negs[idx] = result.negativity
        if n_bootstrap > 0:
            boot = bootstrap_uncertainties(records, n_bootstrap, config, seed=seed + idx)
            sigmas[idx] = boot.negativity_sigma
    return NegativityCurve(t_w_ps=t_w, negativity=negs, sigma=sigmas, dpm=dpm, low_statistics=low)


def _simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights for n equally spaced points (n odd)."""
    w = np.ones(n)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def oracle_rho(
    params: EmitterParams,
    w: TimeWindow,
    dpm: bool,
    slope_error: float = 0.0,
    mode: str = "pair",
    n_grid: int = 2001,
) -> np.ndarray:
    """Window-averaged two-photon density matrix by deterministic quadrature.

    Averages the pure cascade state over the sequential-exponential emission
    density restricted to the window and renormalizes. With dpm on, the
    residual precession frequency is omega_x * slope_error; with dpm off it
    is omega_x. The result has diagonal (1/2, 0, 0, 1/2) and one complex
    corner coherence.

    mode 'pair' restricts both emission times to [origin, origin + t_w);
    mode 'delta_t' is the degenerate window on the arrival-time difference
    directly (kept for closed-form cross-checks). Composite Simpson rule with
    n_grid points per axis; n_grid is forced odd.
    """
    omega = params.omega_x * (slope_error if dpm else 1.0)
    tau_a, tau_b = params.tau_xx_ps, params.tau_x_ps
    n = n_grid + 1 if n_grid % 2 == 0 else n_grid

    if mode == "delta_t":
        # 1D average of e^{i omega s} over s ~ Exp(tau_b) restricted to the window
        s = np.linspace(w.origin_ps, w.origin_ps + w.t_w_ps, n)
        wt = _simpson_weights(n, s[1] - s[0])
        density = np.exp(-s / tau_b) / tau_b
        norm = float(np.sum(wt * density))
        coherence = complex(np.sum(wt * density * np.exp(1j * omega * s))) / norm
    elif mode == "pair":
        # both times in the window: integrate u = t_xx over the window and
        # v = t_x - t_xx over [0, window end - u); inner integrand is smooth
        lo, hi = w.origin_ps, w.origin_ps + w.t_w_ps
        u = np.linspace(lo, hi, n)
        wu = _simpson_weights(n, u[1] - u[0])
        frac = np.linspace(0.0, 1.0, n)
        wv_unit = _simpson_weights(n, frac[1] - frac[0])
        vmax = hi - u  # upper limit of the delay integral per u
        v = np.outer(vmax, frac)
        g = np.exp(-v / tau_b) / tau_b
        inner_norm = (g * wv_unit) @ np.ones(n) * vmax
        inner_coh = np.einsum("uv,v->u", g * np.exp(1j * omega * v), wv_unit) * vmax
        f_u = np.exp(-u / tau_a) / tau_a
        norm = float(np.sum(wu * f_u * inner_norm))
        coherence = complex(np.sum(wu * f_u * inner_coh)) / norm
    else:
        raise ValueError("mode must be 'pair' or 'delta_t'")

    rho = np.zeros((4, 4), dtype=complex)
    rho[0, 0] = rho[3, 3] = 0.5
    rho[0, 3] = 0.5 * coherence
    rho[3, 0] = 0.5 * np.conj(coherence)
    return rho


def oracle_negativity(
    params: EmitterParams,
    w: TimeWindow,
    dpm: bool,
    slope_error: float = 0.0,
    mode: str = "pair",
) -> float:
    return negativity(oracle_rho(params, w, dpm, slope_error, mode))


def detrended_oscillation_period(t: np.ndarray, values: np.ndarray) -> float:
    """Dominant oscillation period of a sampled curve after moving-average detrend.

    Used for the shape checks on negativity-versus-window curves, whose
    oscillation rides on a non-exponential decreasing trend. The trend is a
    centered moving average over roughly one oscillation of the dominant
    Fourier component; ties break toward the longer period.
    """
    t = np.asarray(t, dtype=float)
    values = np.asarray(values, dtype=float)
    if len(t) < 8:
        raise ValueError("need at least 8 samples to estimate a period")
    step = t[1] - t[0]
    if not np.allclose(np.diff(t), step, rtol=1e-6):
        raise ValueError("samples must be equally spaced")
    detrended = values - np.convolve(values, np.ones(5) / 5.0, mode="same")
    window = np.hanning(len(detrended))
    spectrum = np.abs(np.fft.rfft(detrended[2:-2] * window[2:-2]))
    freqs = np.fft.rfftfreq(len(detrended) - 4, d=step)
    spectrum[0] = 0.0
    k = int(np.argmax(spectrum))
    if freqs[k] == 0.0:
        raise ValueError("no oscillation found")
    return float(1.0 / freqs[k])


def write_profile_csv(profile: DeltaTProfile, path) -> None:
    with open(path, "w") as f:
        f.write("# delta-t-profile\n")
        f.write(f"# setting={profile.setting.xx}{profile.setting.x}\n")
        f.write(f"# bin_width_ps={float(profile.bin_width_ps)!r}\n")
        f.write(f"# negative_delta_t_counts={profile.negative_delta_t_counts}\n")
        f.write("delta_t_ps,count\n")
        for dt, c in zip(profile.delta_t_ps, profile.counts):
            if c:
                f.write(f"{float(dt)!r},{int(c)}\n")


def write_curve_csv(curve: NegativityCurve, path, origin_ps: float = 0.0, seed=None) -> None:
    with open(path, "w") as f:
        f.write("# negativity-curve\n")
        f.write(f"# dpm={curve.dpm}\n")
        f.write(f"# window_origin_ps={origin_ps!r}\n")
        f.write(f"# seed={seed}\n")
        f.write("t_w_ps,negativity,sigma,low_statistics\n")
        for tw, n, s, lo in zip(curve.t_w_ps, curve.negativity, curve.sigma, curve.low_statistics):
            f.write(f"{float(tw)!r},{float(n)!r},{float(s)!r},{int(lo)}\n")


def read_curve_csv(path) -> NegativityCurve:
    """Read a negativity curve CSV; raises ValueError naming file and line on damage."""
    dpm = False
    rows = []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line[1:].strip().startswith("dpm="):
                    dpm = line.split("=", 1)[1].strip() == "True"
                continue
            if line == "t_w_ps,negativity,sigma,low_statistics":
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 comma-separated fields")
            try:
                rows.append((float(parts[0]), float(parts[1]), float(parts[2]), bool(int(parts[3]))))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed row {line!r}")
    if not rows:
        raise ValueError(f"{path}:1: no curve rows found")
    arr = np.array([r[:3] for r in rows])
    return NegativityCurve(
        t_w_ps=arr[:, 0],
        negativity=arr[:, 1],
        sigma=arr[:, 2],
        dpm=dpm,
        low_statistics=np.array([r[3] for r in rows], dtype=bool),
    )

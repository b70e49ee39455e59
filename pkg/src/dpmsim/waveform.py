"""Clock-synchronized phase waveforms driving the H-V phase modulator.

A waveform assigns a relative phase phi(t) between the H and V polarization
components as a function of the traversal time t of a photon through the
modulator, measured from the start of the modulation cycle. Two flavors are
supported by the same type:

* Segmented waveforms hold an explicit, continuous, piecewise-linear profile
  over one modulation cycle. Both photons of a cascade sample the same
  profile, the biexciton photon at a time shifted by the delay line. A range
  limit models the modulator's finite usable phase span; with clamping on,
  the evaluated phase is hard-clamped to a window of width range_limit_rad
  anchored at the profile's minimum, so ramps programmed past the limit go
  flat and late events pick up a constant, wrong phase.

* The ideal waveform is the infinitely-long-ramp limit in which each photon
  rides its own perfectly anchored linear ramp: the exciton photon sees
  +slope * t_x and the delayed biexciton photon -slope * t_xx regardless of
  where the ramps would start or end. It cancels the cascade phase exactly
  for every event and is the reference against which realistic waveforms are
  judged.

The compensation builder lays out, per modulated pulse slot, an up-ramp over
the exciton wavepacket window, a plateau, and a down-ramp over the delayed
biexciton wavepacket window, returning to the reference level so the profile
is continuous across slots and cycles. A ramp of duration equal to a whole
number of precession periods sweeps a multiple of 2*pi, which makes the
plateau levels phase-neutral.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .cascade import EmitterParams, SetupParams

TWO_PI = 2.0 * math.pi

Segment = tuple[float, float, float, float]  # (t_start_ps, t_end_ps, phase_start_rad, slope_rad_per_ps)


@dataclass(frozen=True)
class PhaseWaveform:
    """Piecewise-linear H-V phase profile, or its ideal analytic limit.

    segments: ordered contiguous (t_start, t_end, phase_start, slope) pieces.
    range_limit_rad: total usable phase span of the modulator.
    clamp: when True, evaluated phases are clamped into the usable window.
    ideal_slope: when set, the waveform is the analytic ideal compensator
        with that ramp slope and the segment machinery is unused.
    xx_anchor_ps: arrival time at which the ideal down-ramp crosses zero
        (the delayed biexciton photon's zero-emission-time arrival).
    """

    segments: tuple[Segment, ...] = ()
    range_limit_rad: float = 4.0 * math.pi
    clamp: bool = False
    ideal_slope: float | None = None
    xx_anchor_ps: float = 0.0
    # breakpoints for vectorized evaluation, derived in __post_init__
    _knot_t: tuple[float, ...] = field(default=(), repr=False)
    _knot_phi: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self) -> None:
        if self.range_limit_rad <= 0.0:
            raise ValueError("range_limit_rad must be positive")
        if self.ideal_slope is not None:
            return
        knot_t: list[float] = []
        knot_phi: list[float] = []
        prev_end: float | None = None
        prev_phi: float | None = None
        for t0, t1, phi0, slope in self.segments:
            if t1 <= t0:
                raise ValueError(f"segment ({t0}, {t1}) has nonpositive duration")
            if prev_end is not None:
                if t0 < prev_end - 1e-9:
                    raise ValueError("segments overlap or are out of order")
                if abs(phi0 - prev_phi) > 1e-9:
                    raise ValueError(
                        f"phase discontinuity {abs(phi0 - prev_phi):.3e} rad at t={t0} ps"
                    )
                if t0 > prev_end + 1e-9:
                    # gap between segments holds the previous end phase
                    knot_t.append(t0)
                    knot_phi.append(prev_phi)
            if not knot_t or t0 > knot_t[-1] + 1e-12:
                knot_t.append(t0)
                knot_phi.append(phi0)
            knot_t.append(t1)
            knot_phi.append(phi0 + slope * (t1 - t0))
            prev_end, prev_phi = t1, knot_phi[-1]
        object.__setattr__(self, "_knot_t", tuple(knot_t))
        object.__setattr__(self, "_knot_phi", tuple(knot_phi))

    @property
    def is_ideal(self) -> bool:
        return self.ideal_slope is not None

    def phase_span(self) -> tuple[float, float]:
        """(min, max) of the unclamped profile over all segment endpoints."""
        if not self._knot_phi:
            return (0.0, 0.0)
        return (min(self._knot_phi), max(self._knot_phi))


def zero_waveform() -> PhaseWaveform:
    """Waveform that applies no phase anywhere (modulation off)."""
    return PhaseWaveform(segments=())


def waveform_phase(w: PhaseWaveform, t):
    """Evaluate the phase of a segmented waveform at time(s) t (ps).

    Linear inside segments, constant extension outside (the nearest segment
    boundary value), clamped into [min, min + range_limit] of the profile
    when the clamp flag is active. Scalar in, scalar out; array in, array out.
    """
    if w.is_ideal:
        raise ValueError("the ideal waveform has no single-valued time profile")
    scalar = np.isscalar(t)
    tt = np.atleast_1d(np.asarray(t, dtype=float))
    if not w._knot_t:
        phi = np.zeros_like(tt)
    else:
        # contiguous continuous segments: exact piecewise-linear interpolation
        # with constant extension at both ends
        phi = np.interp(tt, np.asarray(w._knot_t), np.asarray(w._knot_phi))
    if w.clamp and w._knot_phi:
        lo, hi = w.phase_span()
        top = min(hi, lo + w.range_limit_rad)
        phi = np.clip(phi, lo, top)
    return float(phi[0]) if scalar else phi


def ideal_compensation_waveform(
    params: EmitterParams, setup: SetupParams, slope_error: float = 0.0
) -> PhaseWaveform:
    """The analytic, exactly-cancelling compensation waveform.

    Every exciton photon gains +slope * t_x and every biexciton photon
    -slope * t_xx, with slope = (1 + slope_error) * omega_x. At zero slope
    error this turns each cascade ket into the stationary Bell state.
    """
    slope = (1.0 + slope_error) * params.omega_x
    return PhaseWaveform(
        ideal_slope=slope,
        xx_anchor_ps=setup.delay_line_ps + setup.dpm_arm_offset_ps,
    )


def default_window_ps(
    params: EmitterParams,
    range_limit_rad: float = 4.0 * math.pi,
    slope_error: float = 0.0,
) -> float:
    """Largest whole number of precession periods a ramp can sweep in range.

    A 4*pi range fits two precession periods (940 ps at the default emitter).
    """
    omega = (1.0 + slope_error) * params.omega_x
    period = TWO_PI / omega
    n = math.floor(range_limit_rad / TWO_PI + 1e-12)
    if n < 1:
        raise ValueError("range limit below one full phase turn; no usable ramp")
    return n * period


def build_compensation_waveform(
    params: EmitterParams,
    setup: SetupParams,
    window_ps: float | None = None,
    slope_error: float = 0.0,
    range_limit_rad: float = 4.0 * math.pi,
    clamp: bool = True,
) -> PhaseWaveform:
    """Segmented per-slot compensation waveform over one full modulation cycle.

    For each modulated pulse slot (the second half of the cycle): an up-ramp
    of slope +omega over [0, window) after the pulse, covering the exciton
    wavepacket, then a plateau, then a down-ramp of slope -omega over
    [arrival, arrival + window) with arrival = delay_line + dpm_arm_offset,
    covering the delayed biexciton wavepacket, then back to the reference
    level. Reference slots (first half of the cycle) stay at phase zero.

    window_ps defaults to the largest whole number of precession periods
    whose sweep fits inside range_limit_rad; an explicit window that sweeps
    past the range is permitted and will be flattened by clamping.

    Raises ValueError when the two wavepacket windows would overlap, i.e.
    when window_ps exceeds the biexciton arrival delay, or when the slot is
    too short to hold both windows.
    """
    omega = (1.0 + slope_error) * params.omega_x
    if window_ps is None:
        window_ps = default_window_ps(params, range_limit_rad, slope_error)
    if window_ps <= 0.0:
        raise ValueError("window_ps must be positive")
    arrival = setup.delay_line_ps + setup.dpm_arm_offset_ps
    if window_ps > arrival:
        raise ValueError(
            f"wavepacket windows overlap: window {window_ps:.1f} ps exceeds the "
            f"biexciton arrival delay {arrival:.1f} ps"
        )
    slot = setup.clock_period_ps
    if arrival + window_ps > slot:
        raise ValueError(
            f"biexciton window ends at {arrival + window_ps:.1f} ps, beyond the "
            f"{slot:.1f} ps pulse slot"
        )
    top = omega * window_ps
    n_ref = setup.pulses_per_cycle // 2
    segments: list[Segment] = []
    if n_ref > 0:
        segments.append((0.0, n_ref * slot, 0.0, 0.0))
    for k in range(n_ref, setup.pulses_per_cycle):
        t0 = k * slot
        segments.append((t0, t0 + window_ps, 0.0, omega))
        segments.append((t0 + window_ps, t0 + arrival, top, 0.0))
        segments.append((t0 + arrival, t0 + arrival + window_ps, top, -omega))
        segments.append((t0 + arrival + window_ps, t0 + slot, 0.0, 0.0))
    return PhaseWaveform(
        segments=tuple(segments),
        range_limit_rad=range_limit_rad,
        clamp=clamp,
    )

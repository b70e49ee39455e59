"""Unit tests for phase-waveform construction and evaluation."""

import numpy as np
import pytest

from dpmsim.cascade import EmitterParams, SetupParams
from dpmsim.waveform import (
    PhaseWaveform,
    build_compensation_waveform,
    default_window_ps,
    ideal_compensation_waveform,
    waveform_phase,
    zero_waveform,
)

PARAMS = EmitterParams()
SETUP = SetupParams()


class TestEvaluation:
    def test_linear_segment(self):
        w = PhaseWaveform(segments=((0.0, 100.0, 0.0, 0.01),))
        assert waveform_phase(w, 50.0) == pytest.approx(0.5)

    def test_constant_extension_beyond_last_segment(self):
        w = PhaseWaveform(segments=((0.0, 100.0, 0.0, 0.01),))
        assert waveform_phase(w, 250.0) == pytest.approx(1.0)
        assert waveform_phase(w, -50.0) == pytest.approx(0.0)

    def test_clamp_at_range_limit(self):
        """A ramp programmed to 14 rad returns 4 pi under a 4 pi range."""
        w = PhaseWaveform(segments=((0.0, 1400.0, 0.0, 0.01),), clamp=True)
        assert waveform_phase(w, 1400.0) == pytest.approx(4 * np.pi)
        assert waveform_phase(w, 100.0) == pytest.approx(1.0)  # below the limit untouched

    def test_clamp_off_leaves_ramp(self):
        w = PhaseWaveform(segments=((0.0, 1400.0, 0.0, 0.01),), clamp=False)
        assert waveform_phase(w, 1400.0) == pytest.approx(14.0)

    def test_empty_waveform_is_zero(self):
        assert waveform_phase(zero_waveform(), 123.0) == 0.0

    def test_vectorized_matches_scalar(self):
        w = build_compensation_waveform(PARAMS, SETUP)
        ts = np.linspace(0.0, 8 * SETUP.clock_period_ps, 500)
        vec = waveform_phase(w, ts)
        scalars = np.array([waveform_phase(w, float(t)) for t in ts])
        np.testing.assert_allclose(vec, scalars, atol=1e-12)

    def test_gap_holds_previous_phase(self):
        w = PhaseWaveform(segments=((0.0, 10.0, 0.0, 0.1), (20.0, 30.0, 1.0, 0.0)))
        assert waveform_phase(w, 15.0) == pytest.approx(1.0)

    def test_ideal_has_no_time_profile(self):
        w = ideal_compensation_waveform(PARAMS, SETUP)
        with pytest.raises(ValueError, match="ideal"):
            waveform_phase(w, 0.0)


class TestValidation:
    def test_overlapping_segments_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            PhaseWaveform(segments=((0.0, 100.0, 0.0, 0.0), (50.0, 150.0, 0.0, 0.0)))

    def test_discontinuity_rejected(self):
        with pytest.raises(ValueError, match="discontinuity"):
            PhaseWaveform(segments=((0.0, 100.0, 0.0, 0.01), (100.0, 200.0, 0.0, 0.0)))

    def test_zero_duration_rejected(self):
        with pytest.raises(ValueError, match="duration"):
            PhaseWaveform(segments=((100.0, 100.0, 0.0, 0.0),))


class TestCompensationBuilder:
    def test_default_window_two_periods_at_4pi(self):
        """A 4 pi range limit admits a ramp of two precession periods."""
        window = default_window_ps(PARAMS)
        assert window == pytest.approx(2 * PARAMS.precession_period_ps, rel=1e-12)
        assert window == pytest.approx(940.0, rel=2e-3)

    def test_built_profile_geometry(self):
        w = build_compensation_waveform(PARAMS, SETUP)
        window = default_window_ps(PARAMS)
        arrival = SETUP.delay_line_ps + SETUP.dpm_arm_offset_ps
        n_mod = SETUP.pulses_per_cycle // 2
        # reference half flat at zero
        assert waveform_phase(w, 0.5 * n_mod * SETUP.clock_period_ps) == 0.0
        # up-ramp reaches a whole number of turns, here 4 pi
        slot = n_mod * SETUP.clock_period_ps
        top = waveform_phase(w, slot + window)
        assert top == pytest.approx(4 * np.pi, abs=1e-9)
        # plateau holds until the biexciton arrival, then ramps back to zero
        assert waveform_phase(w, slot + 0.5 * (window + arrival)) == pytest.approx(top)
        assert waveform_phase(w, slot + arrival + window) == pytest.approx(0.0, abs=1e-9)

    def test_profile_continuous_across_cycle(self):
        w = build_compensation_waveform(PARAMS, SETUP)
        ts = np.linspace(0.0, SETUP.pulses_per_cycle * SETUP.clock_period_ps, 20001)
        phi = waveform_phase(w, ts)
        # no jump can exceed slope * dt
        max_slope = PARAMS.omega_x * 1.01
        assert np.max(np.abs(np.diff(phi))) <= max_slope * (ts[1] - ts[0]) + 1e-9

    def test_window_overlap_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            build_compensation_waveform(PARAMS, SETUP, window_ps=2500.0)

    def test_slot_too_short_rejected(self):
        setup = SetupParams(clock_period_ps=2500.0)
        with pytest.raises(ValueError, match="slot"):
            build_compensation_waveform(PARAMS, setup, window_ps=1000.0)

    def test_slope_error_scales_slope(self):
        w = build_compensation_waveform(PARAMS, SETUP, slope_error=0.1)
        slot = (SETUP.pulses_per_cycle // 2) * SETUP.clock_period_ps
        dphi = waveform_phase(w, slot + 100.0) - waveform_phase(w, slot)
        assert dphi == pytest.approx(1.1 * PARAMS.omega_x * 100.0, rel=1e-9)

    def test_ideal_slope_error(self):
        w = ideal_compensation_waveform(PARAMS, SETUP, slope_error=0.05)
        assert w.ideal_slope == pytest.approx(1.05 * PARAMS.omega_x)
        assert w.is_ideal

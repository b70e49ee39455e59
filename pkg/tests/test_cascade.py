"""Unit tests for cascade sampling, modulation, imperfections and detection."""

import numpy as np
import pytest

from dpmsim.cascade import (
    CoincidenceMap,
    EmissionEvent,
    EmitterParams,
    ImperfectionModel,
    SetupParams,
    apply_dpm,
    apply_imperfections,
    cascade_ket,
    detect,
    read_coincidence_csv,
    sample_emission,
    simulate_all_settings,
    simulate_setting,
    write_coincidence_csv,
)
from dpmsim.qstate import (
    ProjectionSetting,
    bell_phi_plus,
    fidelity_to,
    ket_to_density,
    projection_probability,
)
from dpmsim.waveform import (
    PhaseWaveform,
    build_compensation_waveform,
    ideal_compensation_waveform,
    zero_waveform,
)

from conftest import LABELS6

PARAMS = EmitterParams()
SETUP = SetupParams()
IDEAL = ImperfectionModel()


class TestEmitterParams:
    def test_defaults_match_emitter_constants(self):
        assert PARAMS.tau_xx_ps == 211.0
        assert PARAMS.tau_x_ps == 405.0
        assert PARAMS.fss_microev == 8.80

    def test_precession_consistency(self):
        """omega_x times the precession period is one full turn."""
        assert PARAMS.omega_x * PARAMS.precession_period_ps == pytest.approx(
            2 * np.pi, abs=1e-9
        )

    def test_period_matches_splitting(self):
        # h/fss with h in microeV ps, independent arithmetic
        h_ueV_ps = 6.62607015e-34 / 1.602176634e-19 * 1e6 * 1e12
        assert PARAMS.precession_period_ps == pytest.approx(h_ueV_ps / 8.80, rel=1e-12)
        assert PARAMS.precession_period_ps == pytest.approx(470.0, abs=2.0)

    def test_invalid_rejected(self):
        with pytest.raises(ValueError):
            EmitterParams(tau_xx_ps=-1.0)
        with pytest.raises(ValueError):
            EmitterParams(fss_microev=0.0)


class TestSampling:
    def test_lifetime_means(self):
        """Sampled means reproduce the configured lifetimes within 3 sigma."""
        rng = np.random.default_rng(1)
        n = 1_000_000
        t_xx = np.empty(n)
        dt = np.empty(n)
        for i in range(n // 10000):
            block = [sample_emission(PARAMS, rng) for _ in range(10000)]
            t_xx[i * 10000 : (i + 1) * 10000] = [e.t_xx_ps for e in block]
            dt[i * 10000 : (i + 1) * 10000] = [e.delta_t_ps for e in block]
        se_xx = PARAMS.tau_xx_ps / np.sqrt(n)
        se_x = PARAMS.tau_x_ps / np.sqrt(n)
        assert abs(t_xx.mean() - 211.0) < 3 * se_xx
        assert abs(dt.mean() - 405.0) < 3 * se_x

    def test_ordering_invariant(self):
        rng = np.random.default_rng(2)
        for _ in range(1000):
            e = sample_emission(PARAMS, rng)
            assert 0.0 <= e.t_xx_ps <= e.t_x_ps

    def test_degenerate_exciton_lifetime_limit(self):
        rng = np.random.default_rng(3)
        params = EmitterParams(tau_x_ps=1e-9)
        for _ in range(100):
            e = sample_emission(params, rng)
            assert e.delta_t_ps < 1e-6

    def test_event_validation(self):
        with pytest.raises(ValueError):
            EmissionEvent(10.0, 5.0)
        with pytest.raises(ValueError):
            EmissionEvent(-1.0, 5.0)


class TestCascadeKet:
    def test_zero_delay_is_bell(self):
        ket = cascade_ket(EmissionEvent(100.0, 100.0), PARAMS)
        assert fidelity_to(ket_to_density(ket), bell_phi_plus()) == pytest.approx(1.0)

    def test_half_period_is_bell_minus(self):
        """Delay of half a precession period flips the VV sign."""
        half = PARAMS.precession_period_ps / 2
        ket = cascade_ket(EmissionEvent(50.0, 50.0 + half), PARAMS)
        minus = np.array([1, 0, 0, -1]) / np.sqrt(2)
        assert abs(np.vdot(minus, ket)) == pytest.approx(1.0, abs=1e-9)
        assert half == pytest.approx(235.0, abs=1.0)

    def test_full_period_recurrence(self):
        ket = cascade_ket(EmissionEvent(0.0, PARAMS.precession_period_ps), PARAMS)
        assert fidelity_to(ket_to_density(ket), bell_phi_plus()) == pytest.approx(1.0, abs=1e-12)

    def test_norm_preserved(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            e = sample_emission(PARAMS, rng)
            assert np.linalg.norm(cascade_ket(e, PARAMS)) == pytest.approx(1.0, abs=1e-12)


class TestApplyDpm:
    def test_ideal_waveform_cancels_any_event(self):
        """Ideal compensation restores the Bell state for arbitrary events."""
        w = ideal_compensation_waveform(PARAMS, SETUP)
        rng = np.random.default_rng(5)
        for _ in range(200):
            e = sample_emission(PARAMS, rng)
            out = apply_dpm(cascade_ket(e, PARAMS), w, e, SETUP)
            assert fidelity_to(ket_to_density(out), bell_phi_plus()) == pytest.approx(
                1.0, abs=1e-9
            )

    def test_specific_event(self):
        w = ideal_compensation_waveform(PARAMS, SETUP)
        e = EmissionEvent(180.0, 600.0)
        out = apply_dpm(cascade_ket(e, PARAMS), w, e, SETUP)
        assert fidelity_to(ket_to_density(out), bell_phi_plus()) == pytest.approx(1.0, abs=1e-9)

    def test_zero_waveform_identity(self):
        e = EmissionEvent(100.0, 300.0)
        ket = cascade_ket(e, PARAMS)
        np.testing.assert_allclose(apply_dpm(ket, zero_waveform(), e, SETUP), ket)
        np.testing.assert_allclose(apply_dpm(ket, None, e, SETUP), ket)

    def test_constant_pi_on_both_traversals_is_identity_on_cascade(self):
        """Two pi phases multiply to 2 pi on the VV amplitude."""
        span = 8 * SETUP.clock_period_ps
        w = PhaseWaveform(segments=((0.0, span, np.pi, 0.0),))
        e = EmissionEvent(100.0, 300.0)
        ket = cascade_ket(e, PARAMS)
        out = apply_dpm(ket, w, e, SETUP)
        np.testing.assert_allclose(out[0], ket[0], atol=1e-12)
        np.testing.assert_allclose(out[3], ket[3], atol=1e-12)

    def test_segmented_waveform_cancels_in_window_events(self):
        w = build_compensation_waveform(PARAMS, SETUP)
        window = 2 * PARAMS.precession_period_ps
        slot_start = (SETUP.pulses_per_cycle // 2) * SETUP.clock_period_ps
        rng = np.random.default_rng(6)
        checked = 0
        for _ in range(500):
            e = sample_emission(PARAMS, rng)
            if e.t_x_ps >= window:  # outside the compensation windows
                continue
            out = apply_dpm(cascade_ket(e, PARAMS), w, e, SETUP, slot_start_ps=slot_start)
            assert fidelity_to(ket_to_density(out), bell_phi_plus()) == pytest.approx(
                1.0, abs=1e-9
            )
            checked += 1
        assert checked > 300

    def test_norm_preserved(self):
        w = ideal_compensation_waveform(PARAMS, SETUP)
        rng = np.random.default_rng(7)
        for _ in range(100):
            e = sample_emission(PARAMS, rng)
            out = apply_dpm(cascade_ket(e, PARAMS), w, e, SETUP)
            assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-12)


class TestImperfections:
    def test_all_zero_model_is_identity(self):
        rng = np.random.default_rng(8)
        ket = cascade_ket(EmissionEvent(50.0, 400.0), PARAMS)
        np.testing.assert_allclose(apply_imperfections(ket, IDEAL, rng), ket)

    def test_drift_coherence_suppression(self):
        """Averaged coherence magnitude follows E[e^{i delta}] = e^{-sigma^2/2}."""
        sigma = 0.5  # exaggerated for a measurable effect at modest sample size
        model = ImperfectionModel(drift_sigma_rad=sigma)
        rng = np.random.default_rng(9)
        bell = bell_phi_plus()
        n = 200_000
        acc = np.zeros((4, 4), dtype=complex)
        for _ in range(n):
            out = apply_imperfections(bell, model, rng)
            acc += np.outer(out, out.conj())
        coherence = abs(acc[0, 3] / n)
        expected = np.exp(-(sigma**2) / 2) / 2
        assert coherence == pytest.approx(expected, abs=3e-3)

    def test_balanced_extinction_mixes_equally(self):
        """epsilon = 1/sqrt2 sends |HH> to equal H/V superpositions."""
        model = ImperfectionModel(extinction_epsilon=1 / np.sqrt(2))
        rng = np.random.default_rng(10)
        out = apply_imperfections(np.array([1, 0, 0, 0], dtype=complex), model, rng)
        np.testing.assert_allclose(np.abs(out), [0.5, 0.5, 0.5, 0.5], atol=1e-12)

    def test_norm_preserved(self):
        model = ImperfectionModel(drift_sigma_rad=0.05, extinction_epsilon=0.1)
        rng = np.random.default_rng(11)
        for _ in range(100):
            e = sample_emission(PARAMS, rng)
            out = apply_imperfections(cascade_ket(e, PARAMS), model, rng)
            assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            ImperfectionModel(extinction_epsilon=1.0)
        with pytest.raises(ValueError):
            ImperfectionModel(drift_sigma_rad=-0.1)


class TestDetect:
    def test_acceptance_rate_matches_born(self):
        """Empirical acceptance converges to the Born probability (HH on Bell)."""
        rng = np.random.default_rng(12)
        ket = bell_phi_plus()
        e = EmissionEvent(100.0, 300.0)
        n = 100_000
        hits = sum(
            detect(e, ket, ProjectionSetting("H", "H"), IDEAL, rng).accepted for _ in range(n)
        )
        se = np.sqrt(0.5 * 0.5 / n)
        assert abs(hits / n - 0.5) < 4 * se

    def test_zero_jitter_records_exact_times(self):
        rng = np.random.default_rng(13)
        e = EmissionEvent(123.0, 456.0)
        d = detect(e, bell_phi_plus(), ProjectionSetting("D", "D"), IDEAL, rng)
        assert d.recorded_t_xx_ps == 123.0
        assert d.recorded_t_x_ps == 456.0

    def test_co_circular_zero_delay_never_accepts(self):
        """(R,R) on a zero-delay cascade has probability (1 - cos 0)/4 = 0."""
        rng = np.random.default_rng(14)
        e = EmissionEvent(100.0, 100.0)
        ket = cascade_ket(e, PARAMS)
        for _ in range(2000):
            assert not detect(e, ket, ProjectionSetting("R", "R"), IDEAL, rng).accepted

    def test_jitter_moves_recorded_times_only(self):
        model = ImperfectionModel(detector_jitter_sigma_ps=20.0)
        rng = np.random.default_rng(15)
        e = EmissionEvent(100.0, 300.0)
        recs = [
            detect(e, bell_phi_plus(), ProjectionSetting("H", "H"), model, rng)
            for _ in range(4000)
        ]
        xs = np.array([d.recorded_t_xx_ps for d in recs])
        assert xs.std() == pytest.approx(20.0, rel=0.1)
        assert xs.min() >= 0.0

    def test_dark_counts_replace_events(self):
        model = ImperfectionModel(dark_count_fraction=1.0)
        rng = np.random.default_rng(16)
        e = EmissionEvent(100.0, 100.0)
        ket = cascade_ket(e, PARAMS)
        # RR at zero delay never accepts for real events; darks always do
        d = detect(e, ket, ProjectionSetting("R", "R"), model, rng, time_range_ps=1000.0)
        assert d.accepted
        assert 0.0 <= d.recorded_t_xx_ps < 1000.0


class TestDetectAllSettings:
    def test_vectorized_acceptance_matches_born_everywhere(self):
        """Per-setting acceptance of the full pipeline tracks the Born mean."""
        n = 100_000
        maps = simulate_all_settings(PARAMS, SETUP, None, IDEAL, n, master_seed=777)
        # oracle: average Born probability over the emission-delay distribution,
        # estimated on an independent large sample of delays
        rng = np.random.default_rng(888)
        s = rng.exponential(PARAMS.tau_x_ps, 400_000)
        kets = np.zeros((s.size, 4), dtype=complex)
        kets[:, 0] = 1 / np.sqrt(2)
        kets[:, 3] = np.exp(-1j * PARAMS.omega_x * s) / np.sqrt(2)
        for a in LABELS6:
            for b in LABELS6:
                st = ProjectionSetting(a, b)
                proj = np.kron(
                    np.asarray(__import__("dpmsim").qstate.basis_vector(a)),
                    np.asarray(__import__("dpmsim").qstate.basis_vector(b)),
                ).conj()
                p = np.mean(np.abs(kets @ proj) ** 2)
                rate = maps[st].total() / n
                se = np.sqrt(max(p * (1 - p), 1e-8) / n) + p / np.sqrt(s.size)
                assert abs(rate - p) < 5 * se, f"setting {st}: {rate} vs {p}"


class TestSimulateSetting:
    def test_deterministic_across_block_sizes_and_runs(self):
        """Identical inputs give bit-identical maps; block partitioning included."""
        st = ProjectionSetting("R", "R")
        m1 = simulate_setting(PARAMS, SETUP, None, IDEAL, st, 50_000, 99)
        m2 = simulate_setting(PARAMS, SETUP, None, IDEAL, st, 50_000, 99)
        assert np.array_equal(m1.counts, m2.counts)

    def test_seed_changes_output(self):
        st = ProjectionSetting("R", "R")
        m1 = simulate_setting(PARAMS, SETUP, None, IDEAL, st, 50_000, 99)
        m2 = simulate_setting(PARAMS, SETUP, None, IDEAL, st, 50_000, 100)
        assert not np.array_equal(m1.counts, m2.counts)

    def test_thread_count_invariance(self):
        maps1 = simulate_all_settings(PARAMS, SETUP, None, IDEAL, 20_000, 5, threads=1)
        maps4 = simulate_all_settings(PARAMS, SETUP, None, IDEAL, 20_000, 5, threads=4)
        for st in maps1:
            assert np.array_equal(maps1[st].counts, maps4[st].counts)

    def test_scalar_pipeline_consistency(self):
        """The vectorized block agrees with the scalar ops on the same physics."""
        w = ideal_compensation_waveform(PARAMS, SETUP)
        st = ProjectionSetting("D", "R")
        cmap = simulate_setting(PARAMS, SETUP, w, IDEAL, st, 50_000, 321)
        # under ideal compensation every event is the Bell state
        p_scalar = projection_probability(bell_phi_plus(), st)
        rate = cmap.total() / 50_000
        se = np.sqrt(p_scalar * (1 - p_scalar) / 50_000)
        assert abs(rate - p_scalar) < 4 * se

    def test_delta_t_marginal_is_exponential(self):
        """Summed over a complete basis pair, delta-t follows Exp(tau_x) (KS test).

        The map's delta-t bin is floor((u + s)/b) with s ~ Exp(tau_x) the true
        delay and u = t_xx mod b the sub-bin offset of the biexciton time, so
        the exact model CDF at bin k is 1 - E[e^{u/tau_x}] e^{-b(k+1)/tau_x},
        with E[e^{u/tau_x}] in closed form for exponential t_xx.
        """
        n = 300_000
        b = 16.0
        profile_total = None
        for la, lb in (("H", "H"), ("H", "V"), ("V", "H"), ("V", "V")):
            cmap = simulate_setting(PARAMS, SETUP, None, IDEAL, ProjectionSetting(la, lb), n, 31)
            i, j = np.nonzero(cmap.counts)
            d = np.bincount(j - i, weights=cmap.counts[i, j], minlength=cmap.n_bins)
            profile_total = d if profile_total is None else profile_total + d
        tau_x, tau_xx = PARAMS.tau_x_ps, PARAMS.tau_xx_ps
        # E[e^{u/tau_x}] for u = (Exp(tau_xx) mod b): truncated-exponential density
        r = 1.0 / tau_x - 1.0 / tau_xx
        e_grow = (np.expm1(b * r) / r) / (tau_xx * -np.expm1(-b / tau_xx))
        k = np.arange(len(profile_total))
        model_cdf = 1.0 - e_grow * np.exp(-b * (k + 1) / tau_x)
        emp_cdf = np.cumsum(profile_total) / profile_total.sum()
        ks = np.max(np.abs(emp_cdf - model_cdf))
        n_events = profile_total.sum()
        assert ks < 1.63 / np.sqrt(n_events)  # 1% critical value

    def test_rejects_bad_pulse_count(self):
        with pytest.raises(ValueError):
            simulate_setting(PARAMS, SETUP, None, IDEAL, ProjectionSetting("H", "H"), 0, 1)


class TestCoincidenceCsv:
    def test_round_trip(self, tmp_path):
        st = ProjectionSetting("D", "L")
        cmap = simulate_setting(PARAMS, SETUP, None, IDEAL, st, 30_000, 17)
        path = tmp_path / "map.csv"
        write_coincidence_csv(cmap, path)
        back = read_coincidence_csv(path)
        assert back.setting == st
        assert back.total_pulses == 30_000
        assert back.bin_width_ps == 16.0
        assert np.array_equal(back.counts, cmap.counts)

    def test_zero_bins_omitted(self, tmp_path):
        cmap = CoincidenceMap(
            setting=ProjectionSetting("H", "H"),
            bin_width_ps=16.0,
            counts=np.zeros((10, 10), dtype=np.int64),
            total_pulses=10,
            time_range_ps=160.0,
        )
        cmap.counts[2, 5] = 3
        path = tmp_path / "sparse.csv"
        write_coincidence_csv(cmap, path)
        rows = [l for l in path.read_text().splitlines() if not l.startswith("#")]
        assert rows == ["bin_t_xx_ps,bin_t_x_ps,count", "32.0,80.0,3"]

    def test_corrupt_file_names_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        good = simulate_setting(PARAMS, SETUP, None, IDEAL, ProjectionSetting("H", "H"), 1000, 3)
        write_coincidence_csv(good, path)
        text = path.read_text().splitlines()
        text[9] = "not,a,row,at,all"
        path.write_text("\n".join(text))
        with pytest.raises(ValueError, match=r"bad\.csv:10"):
            read_coincidence_csv(path)

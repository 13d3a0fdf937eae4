import numpy as np
import pytest

from conftest import separability
from csiid.ingest import extract_amplitude_phase, parse_csi_log
from csiid.preprocess import HampelConfig, calibrate_phase, hampel_filter, phase_slopes, unwrap_rows
from csiid.synth import EMPTY_ROOM, SynthConfig, generate_class_signature, synthesize_session, write_synthetic_corpus


def test_same_seed_same_session(small_synth_cfg):
    a, b = synthesize_session(1, small_synth_cfg), synthesize_session(1, small_synth_cfg)
    np.testing.assert_array_equal(a.csi, b.csi)
    np.testing.assert_array_equal(a.timestamps, b.timestamps)


def test_different_seed_different_session():
    a = synthesize_session(0, SynthConfig(duration_s=5, seed=0))
    b = synthesize_session(0, SynthConfig(duration_s=5, seed=1))
    assert not np.array_equal(a.csi, b.csi)


def test_class_signatures_distinct_and_positive():
    cfg = SynthConfig()
    profiles = [generate_class_signature(c, cfg)[0] for c in range(cfg.classes)]
    for p in profiles:
        assert np.all(p > 0)
    for i in range(cfg.classes):
        for j in range(i + 1, cfg.classes):
            assert not np.allclose(profiles[i], profiles[j])


def test_session_shape_rate_and_range(small_synth_cfg):
    s = synthesize_session(0, small_synth_cfg)
    assert s.csi.shape == (3000, 52)
    assert np.all(np.abs(s.csi.real) <= 128) and np.all(np.abs(s.csi.imag) <= 128)
    np.testing.assert_array_equal(s.csi.real, np.rint(s.csi.real))
    np.testing.assert_allclose(np.diff(s.timestamps), 0.01, atol=1e-9)


def test_identity_channel_recovers_profiles():
    cfg = SynthConfig(
        duration_s=2, noise_sigma=0, body_mod=0, body_jitter=0, phase_drift=0, impairments=False
    )
    s, truth = synthesize_session(2, cfg, return_truth=True)
    m = extract_amplitude_phase(s)
    # rounding each of I and Q moves the point by at most sqrt(2)/2
    assert np.max(np.abs(m.amplitude - truth["profile_amplitude"])) <= np.sqrt(2) / 2
    err = np.angle(np.exp(1j * (m.phase - truth["profile_phase"])))
    assert np.max(np.abs(err * truth["profile_amplitude"])) <= np.sqrt(2) / 2 + 1e-9


def test_injected_slope_visible_before_calibration(small_synth_cfg):
    s, truth = synthesize_session(1, small_synth_cfg, return_truth=True)
    m = extract_amplitude_phase(s)
    k = s.subcarrier_indices
    observed = phase_slopes(unwrap_rows(m.phase), k) - phase_slopes(truth["phase"], k)
    assert np.mean(np.abs(observed - truth["slopes"])) < 1e-3
    assert np.all(np.abs(truth["slopes"]) >= small_synth_cfg.sfo_slope_min)


def test_calibration_removes_injected_slope(small_synth_cfg):
    s, truth = synthesize_session(1, small_synth_cfg, return_truth=True)
    k = s.subcarrier_indices
    observed = calibrate_phase(unwrap_rows(extract_amplitude_phase(s).phase), k)
    residual = phase_slopes(observed - calibrate_phase(truth["phase"], k), k)
    assert np.mean(np.abs(residual)) < 0.01 * np.mean(np.abs(truth["slopes"]))


def test_hampel_reduces_spike_variance(small_synth_cfg):
    cfg = SynthConfig(classes=3, duration_s=30, seed=3, spike_rate=0.01, hum_amp=0)
    amp = extract_amplitude_phase(synthesize_session(0, cfg)).amplitude
    filtered = hampel_filter(amp, HampelConfig())
    assert np.mean(filtered.var(axis=0)) < np.mean(amp.var(axis=0))


def test_empty_room_has_less_temporal_variation():
    cfg = SynthConfig(duration_s=10, impairments=False)
    person = extract_amplitude_phase(synthesize_session(0, cfg)).amplitude
    empty = extract_amplitude_phase(synthesize_session(EMPTY_ROOM, cfg)).amplitude
    assert empty.var(axis=0).mean() < person.var(axis=0).mean()


def test_planted_separability_at_defaults(default_sessions):
    dist, sigma = separability(default_sessions)
    assert dist > 5 * sigma


def test_corpus_files_and_round_trip(tmp_path):
    cfg = SynthConfig(classes=2, duration_s=3, seed=5, empty_room=True)
    paths, manifest = write_synthetic_corpus(cfg, tmp_path)
    assert [p.name for p in paths] == ["class_0.log", "class_1.log", "empty_room.log"]
    assert len(manifest.read_text().splitlines()) == 2
    back = parse_csi_log(paths[1])
    np.testing.assert_array_equal(back.csi, synthesize_session(1, cfg).csi)
    assert back.label == 1


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(classes=1)
    with pytest.raises(ValueError):
        SynthConfig(sfo_slope_min=0.5, sfo_slope_max=0.1)

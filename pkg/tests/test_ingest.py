import math

import numpy as np
import pytest

from csiid.ingest import (
    CsiSession,
    FormatConfig,
    IngestError,
    extract_amplitude_phase,
    parse_csi_log,
    validate_session,
    write_csi_log,
)


def _session(csi, fs=100.0, ts=None):
    csi = np.asarray(csi, dtype=complex)
    ts = np.arange(len(csi)) / fs if ts is None else np.asarray(ts, dtype=float)
    return CsiSession(ts, csi, np.arange(csi.shape[1]), sample_rate_hz=fs)


def test_parse_direct_field_mapping(tmp_path):
    path = tmp_path / "a.log"
    path.write_text("0.00, 3,4, 0,1\n0.01, 1,1, 2,2\n")
    s = parse_csi_log(path, FormatConfig(iq_order="real_first"))
    assert s.n_subcarriers == 2
    np.testing.assert_array_equal(s.csi[0], [3 + 4j, 0 + 1j])


def test_parse_imag_first(tmp_path):
    path = tmp_path / "a.log"
    path.write_text("0.00, 3,4, 0,1\n0.01, 1,1, 2,2\n")
    s = parse_csi_log(path, FormatConfig(iq_order="imag_first"))
    np.testing.assert_array_equal(s.csi[0], [4 + 3j, 1 + 0j])


def test_empty_file_has_zero_valid_records(tmp_path):
    path = tmp_path / "empty.log"
    path.write_text("")
    with pytest.raises(IngestError, match="zero valid records"):
        parse_csi_log(path)


def test_missing_file(tmp_path):
    with pytest.raises(IngestError, match="cannot read"):
        parse_csi_log(tmp_path / "nope.log")


def test_odd_integer_count_line_is_skipped(tmp_path):
    lines = [f"{t / 100:.2f}, 1,2, 3,4" for t in range(20)]
    lines.insert(7, "0.065, 1,2, 3,4, 5")
    path = tmp_path / "a.log"
    path.write_text("\n".join(lines) + "\n")
    s = parse_csi_log(path)
    assert s.malformed_lines == 1
    assert len(s) == 20


def test_inconsistent_k_is_fatal(tmp_path):
    path = tmp_path / "a.log"
    path.write_text("0.00, 1,2, 3,4\n0.01, 1,2, 3,4, 5,6\n")
    with pytest.raises(IngestError, match="inconsistent"):
        parse_csi_log(path)


def test_too_many_malformed_lines_is_fatal(tmp_path):
    lines = [f"{t / 100:.2f}, 1,2, 3,4" for t in range(8)] + ["0.5, x,y"] * 2
    path = tmp_path / "a.log"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(IngestError, match="malformed"):
        parse_csi_log(path)


def test_header_line_is_skipped(tmp_path):
    path = tmp_path / "a.log"
    path.write_text("timestamp,r0,i0\n0.00,1,2\n0.01,3,4\n")
    s = parse_csi_log(path, FormatConfig(header=True))
    assert s.malformed_lines == 0 and len(s) == 2


def test_records_are_resorted_by_timestamp(tmp_path):
    path = tmp_path / "a.log"
    path.write_text("0.02, 3,0\n0.00, 1,0\n0.01, 2,0\n")
    s = parse_csi_log(path)
    np.testing.assert_array_equal(s.timestamps, [0.0, 0.01, 0.02])
    np.testing.assert_array_equal(s.csi[:, 0].real, [1, 2, 3])


def test_log_round_trip_preserves_metadata(tmp_path, rng):
    iq = rng.integers(-100, 100, (50, 4)) + 1j * rng.integers(-100, 100, (50, 4))
    s = CsiSession(np.arange(50) / 100, iq, np.array([-2, -1, 1, 2]), 100.0, label=3, orientation_deg=45)
    write_csi_log(tmp_path / "rt.log", s)
    back = parse_csi_log(tmp_path / "rt.log")
    np.testing.assert_array_equal(back.csi, s.csi)
    np.testing.assert_array_equal(back.subcarrier_indices, s.subcarrier_indices)
    assert back.label == 3 and back.orientation_deg == 45


def test_amplitude_phase_345_triangle():
    m = extract_amplitude_phase(_session([[3 + 4j], [3 + 4j]]))
    assert m.amplitude[0, 0] == 5.0
    assert m.phase[0, 0] == pytest.approx(math.atan2(4, 3))
    assert m.phase[0, 0] == pytest.approx(0.9273, abs=1e-4)


def test_negative_real_axis_has_phase_pi():
    m = extract_amplitude_phase(_session([[-1 + 0j], [-1 + 0j]]))
    assert m.amplitude[0, 0] == 1.0
    assert m.phase[0, 0] == math.pi


def test_zero_estimate_maps_to_zero_phase():
    m = extract_amplitude_phase(_session([[0j], [0j]]))
    assert m.amplitude[0, 0] == 0.0 and m.phase[0, 0] == 0.0


def test_recomposition_matches_logged_iq(rng):
    iq = rng.integers(-128, 128, (40, 52)) + 1j * rng.integers(-128, 128, (40, 52))
    s = _session(iq)
    m = extract_amplitude_phase(s)
    np.testing.assert_allclose(m.amplitude**2, iq.real**2 + iq.imag**2, rtol=1e-12)
    recomposed = m.amplitude * np.exp(1j * m.phase)
    scale = np.maximum(np.abs(iq), 1.0)
    assert np.max(np.abs(recomposed - iq) / scale) < 1e-9
    assert np.all(m.phase > -math.pi) and np.all(m.phase <= math.pi)


def test_extraction_is_deterministic_and_shape_preserving(rng):
    s = _session(rng.standard_normal((30, 7)) + 1j * rng.standard_normal((30, 7)))
    a, b = extract_amplitude_phase(s), extract_amplitude_phase(s)
    assert a.shape == (30, 7)
    np.testing.assert_array_equal(a.amplitude, b.amplitude)
    np.testing.assert_array_equal(a.phase, b.phase)


def test_validate_full_session_at_100hz():
    s = CsiSession(np.arange(15000) / 100, np.ones((15000, 52), complex), np.arange(52), 100.0)
    r = validate_session(s)
    assert r["duration_s"] == pytest.approx(150.0)
    assert r["gaps"] == []
    assert r["K"] == 52


def test_validate_flags_one_second_gap():
    s = _session(np.ones((2, 3)), ts=[0.0, 1.0])
    r = validate_session(s)
    assert len(r["gaps"]) == 1


def test_session_invariants():
    with pytest.raises(IngestError):
        _session(np.ones((1, 3)))
    with pytest.raises(IngestError):
        CsiSession(np.arange(3.0), np.ones((3, 2)), np.array([1, 1]))

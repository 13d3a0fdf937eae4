"""Parse CSI packet logs and extract amplitude / phase matrices.

Log format, one packet per line::

    timestamp, i0,q0, i1,q1, ...

with optional ``#`` comment lines. Comments of the form ``# key=value``
carry session metadata (``label``, ``sample_rate_hz``, ``orientation_deg``,
``subcarrier_indices``) and are not counted as malformed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

UNLABELED = "unlabeled"


class IngestError(ValueError):
    pass


@dataclass
class FormatConfig:
    iq_order: str = "real_first"  # or "imag_first"
    header: bool = False
    max_malformed_frac: float = 0.1
    sample_rate_hz: float = 100.0
    subcarrier_indices: tuple | None = None

    def __post_init__(self):
        if self.iq_order not in ("real_first", "imag_first"):
            raise ValueError(f"iq_order must be 'real_first' or 'imag_first', got {self.iq_order!r}")


@dataclass
class CsiSession:
    timestamps: np.ndarray  # (T,)
    csi: np.ndarray  # (T, K) complex
    subcarrier_indices: np.ndarray  # (K,)
    sample_rate_hz: float = 100.0
    label: int | str = UNLABELED
    orientation_deg: int | None = None
    malformed_lines: int = 0
    source: str | None = None

    def __post_init__(self):
        if len(self.timestamps) < 2:
            raise IngestError(f"a session needs at least 2 records, got {len(self.timestamps)}")
        if self.csi.ndim != 2 or self.csi.shape[0] != len(self.timestamps):
            raise IngestError(f"csi shape {self.csi.shape} does not match {len(self.timestamps)} timestamps")
        if len(self.subcarrier_indices) != self.csi.shape[1]:
            raise IngestError(
                f"{len(self.subcarrier_indices)} subcarrier indices for K={self.csi.shape[1]}"
            )
        if np.any(np.diff(self.subcarrier_indices) <= 0):
            raise IngestError("subcarrier indices must be strictly increasing")
        if self.sample_rate_hz <= 0:
            raise IngestError(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")

    @property
    def n_subcarriers(self):
        return self.csi.shape[1]

    def __len__(self):
        return len(self.timestamps)


@dataclass
class AmplitudePhaseMatrix:
    amplitude: np.ndarray  # (T, K)
    phase: np.ndarray  # (T, K)
    subcarrier_indices: np.ndarray
    sample_rate_hz: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.amplitude.shape != self.phase.shape:
            raise ValueError(f"amplitude {self.amplitude.shape} and phase {self.phase.shape} differ")

    @property
    def shape(self):
        return self.amplitude.shape


def default_subcarrier_indices(k):
    """HT20-style indices: -K/2..-1, 1..K/2 for even K (DC skipped); 0..K-1 otherwise."""
    if k % 2 == 0:
        half = k // 2
        return np.concatenate([np.arange(-half, 0), np.arange(1, half + 1)])
    return np.arange(k)


def _parse_meta(line, meta):
    body = line.lstrip("#").strip()
    if "=" not in body:
        return
    key, _, value = body.partition("=")
    meta[key.strip()] = value.strip()


def parse_csi_log(path, fmt=None):
    fmt = fmt or FormatConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IngestError(f"cannot read CSI log {path}: {exc}") from exc

    meta = {}
    rows = []
    malformed = 0
    data_lines = 0
    lines = text.splitlines()
    if fmt.header and lines:
        lines = lines[1:]
    for line in lines:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            _parse_meta(line, meta)
            continue
        data_lines += 1
        fields = [f for f in line.replace(",", " ").split()]
        try:
            ts = float(fields[0])
            values = [int(f) for f in fields[1:]]
        except (ValueError, IndexError):
            malformed += 1
            continue
        if not values or len(values) % 2 or not np.isfinite(ts):
            malformed += 1
            continue
        rows.append((ts, values))

    if not rows:
        raise IngestError(f"{path}: zero valid records")
    widths = {len(v) for _, v in rows}
    if len(widths) > 1:
        raise IngestError(f"{path}: inconsistent subcarrier count across lines: {sorted(w // 2 for w in widths)}")
    if malformed > fmt.max_malformed_frac * data_lines:
        raise IngestError(
            f"{path}: {malformed} of {data_lines} lines malformed; check the format configuration"
        )
    if malformed:
        log.warning("%s: skipped %d malformed lines", path, malformed)

    ts = np.array([r[0] for r in rows])
    iq = np.array([r[1] for r in rows], dtype=np.float64)
    first, second = iq[:, 0::2], iq[:, 1::2]
    csi = first + 1j * second if fmt.iq_order == "real_first" else second + 1j * first
    order = np.argsort(ts, kind="stable")
    k = csi.shape[1]

    if fmt.subcarrier_indices is not None:
        indices = np.asarray(fmt.subcarrier_indices, dtype=np.int64)
    elif "subcarrier_indices" in meta:
        indices = np.array([int(v) for v in meta["subcarrier_indices"].split()], dtype=np.int64)
    else:
        indices = default_subcarrier_indices(k)
    label = meta.get("label", UNLABELED)
    if label != UNLABELED:
        label = int(label)
    orientation = meta.get("orientation_deg")
    return CsiSession(
        timestamps=ts[order],
        csi=csi[order],
        subcarrier_indices=indices,
        sample_rate_hz=float(meta.get("sample_rate_hz", fmt.sample_rate_hz)),
        label=label,
        orientation_deg=int(orientation) if orientation not in (None, "", "None") else None,
        malformed_lines=malformed,
        source=str(path),
    )


def write_csi_log(path, session):
    """Write ``session`` in the text log format; I/Q values are rounded to integers."""
    re = np.rint(session.csi.real).astype(np.int64)
    im = np.rint(session.csi.imag).astype(np.int64)
    iq = np.empty((len(session), 2 * session.n_subcarriers), dtype=np.int64)
    iq[:, 0::2], iq[:, 1::2] = re, im
    lines = [
        f"# label={session.label}",
        f"# sample_rate_hz={session.sample_rate_hz:g}",
        f"# orientation_deg={session.orientation_deg}",
        "# subcarrier_indices=" + " ".join(str(int(k)) for k in session.subcarrier_indices),
    ]
    for t, row in zip(session.timestamps, iq):
        lines.append(f"{t:.2f}," + ",".join(map(str, row)))
    Path(path).write_text("\n".join(lines) + "\n")


def extract_amplitude_phase(session):
    """Amplitude |H| and phase atan2(Im, Re); a zero estimate has phase 0."""
    re, im = session.csi.real, session.csi.imag
    amplitude = np.sqrt(re * re + im * im)
    phase = np.arctan2(im, re)
    phase = np.where(phase == -np.pi, np.pi, phase)
    phase = np.where(amplitude == 0, 0.0, phase)
    return AmplitudePhaseMatrix(
        amplitude=amplitude,
        phase=phase,
        subcarrier_indices=np.asarray(session.subcarrier_indices),
        sample_rate_hz=session.sample_rate_hz,
        meta={"label": session.label, "orientation_deg": session.orientation_deg, "source": session.source},
    )


def validate_session(session):
    ts = session.timestamps
    dt = np.diff(ts)
    span = float(ts[-1] - ts[0])
    period = 1.0 / session.sample_rate_hz
    measured_rate = (len(ts) - 1) / span if span > 0 else float("inf")
    gaps = np.flatnonzero(dt > 3 * period)
    return {
        "records": len(ts),
        "K": session.n_subcarriers,
        "duration_s": span + period,
        "sample_rate_hz": session.sample_rate_hz,
        "measured_rate_hz": measured_rate,
        "rate_deviation": measured_rate / session.sample_rate_hz - 1.0,
        "gaps": [{"index": int(i), "at_s": float(ts[i]), "length_s": float(dt[i])} for i in gaps],
        "malformed_lines": session.malformed_lines,
    }


def format_report(report):
    lines = [
        f"records          {report['records']}",
        f"subcarriers (K)  {report['K']}",
        f"duration         {report['duration_s']:.2f} s",
        f"nominal rate     {report['sample_rate_hz']:g} Hz",
        f"measured rate    {report['measured_rate_hz']:.3f} Hz ({100 * report['rate_deviation']:+.2f}%)",
        f"gaps             {len(report['gaps'])}",
        f"malformed lines  {report['malformed_lines']}",
    ]
    for gap in report["gaps"]:
        lines.append(f"  gap after record {gap['index']} at {gap['at_s']:.2f} s ({gap['length_s']:.3f} s)")
    return "\n".join(lines) + "\n"

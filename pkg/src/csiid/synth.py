"""Synthetic labeled CSI sessions with planted per-identity channel signatures.

Each identity gets a static amplitude and phase profile over subcarriers.
Packets add hardware-style impairments on top: a random per-packet phase
slope and constant offset, phase noise, amplitude noise, sparse amplitude
spikes and an additive high-frequency hum. I/Q values are quantized to
8-bit integers, as commodity CSI tools report them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import ManifestEntry, write_manifest
from .ingest import CsiSession, default_subcarrier_indices, write_csi_log

ORIENTATIONS = (0, 45, 135, 180, 225, 315)
EMPTY_ROOM = -1


@dataclass
class SynthConfig:
    classes: int = 6
    subcarriers: int = 52
    sample_rate_hz: float = 100.0
    duration_s: float = 150.0
    corr_len: float = 6.0
    base_level: float = 45.0
    base_tilt: float = 0.35
    signature_amp: float = 0.3
    signature_phase: float = 0.8
    body_mod: float = 0.03
    breath_hz: float = 0.25
    body_jitter: float = 0.02
    phase_drift: float = 0.03
    noise_sigma: float = 1.0
    phase_noise: float = 0.02
    spike_rate: float = 0.002
    spike_mag: float = 20.0
    hum_hz: float = 40.0
    hum_amp: float = 2.0
    sfo_slope_min: float = 0.05
    sfo_slope_max: float = 0.3
    cfo_max: float = np.pi
    impairments: bool = True
    empty_room: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.classes}")
        for key in ("noise_sigma", "phase_noise", "spike_rate", "spike_mag", "hum_amp", "body_mod", "body_jitter"):
            if getattr(self, key) < 0:
                raise ValueError(f"{key} must be non-negative, got {getattr(self, key)}")
        if not 0 <= self.sfo_slope_min <= self.sfo_slope_max:
            raise ValueError("sfo slope range must satisfy 0 <= min <= max")
        if self.subcarriers < 2 or self.sample_rate_hz <= 0 or self.duration_s <= 0:
            raise ValueError("subcarriers, sample rate and duration must be positive")

    @property
    def packets(self):
        return int(round(self.duration_s * self.sample_rate_hz))


def _smooth_curve(rng, k, corr_len):
    """Zero-mean, unit-variance random curve correlated over ``corr_len`` subcarriers."""
    pad = int(4 * corr_len) + 1
    white = rng.standard_normal(k + 2 * pad)
    x = np.arange(-pad, pad + 1)
    kernel = np.exp(-0.5 * (x / max(corr_len, 1e-9)) ** 2)
    curve = np.convolve(white, kernel, mode="valid")[:k]
    curve -= curve.mean()
    sd = curve.std()
    return curve / sd if sd > 0 else curve


def environment_profile(cfg):
    """Empty-room amplitude: smooth decrease from low to high subcarriers plus mild ripple."""
    rng = np.random.default_rng([cfg.seed, 7919])
    k = cfg.subcarriers
    tilt = np.linspace(1.0, 1.0 - cfg.base_tilt, k)
    ripple = 0.05 * _smooth_curve(rng, k, 2 * cfg.corr_len)
    phase = 0.3 * _smooth_curve(rng, k, 2 * cfg.corr_len)
    return cfg.base_level * tilt * (1.0 + ripple), phase


def generate_class_signature(class_id, cfg):
    """Amplitude (strictly positive) and phase profiles over subcarriers for one identity."""
    base_amp, base_phase = environment_profile(cfg)
    if class_id == EMPTY_ROOM:
        return base_amp, base_phase
    rng = np.random.default_rng([cfg.seed, int(class_id), 1])
    k = cfg.subcarriers
    amp = base_amp * (1.0 + cfg.signature_amp * _smooth_curve(rng, k, cfg.corr_len))
    amp = np.maximum(amp, 0.1 * cfg.base_level)
    phase = base_phase + cfg.signature_phase * _smooth_curve(rng, k, cfg.corr_len)
    return amp, phase


def synthesize_session(class_id, cfg, return_truth=False, orientation_deg=0):
    """One recording of ``class_id`` (or the empty room for ``EMPTY_ROOM``)."""
    prof_amp, prof_phase = generate_class_signature(class_id, cfg)
    rng = np.random.default_rng([cfg.seed, int(class_id) + 1000, 2])
    t_count, k = cfg.packets, cfg.subcarriers
    if t_count < 2:
        raise ValueError("synthetic session needs at least 2 packets")
    t = np.arange(t_count) / cfg.sample_rate_hz
    indices = default_subcarrier_indices(k)
    person = class_id != EMPTY_ROOM

    gain = np.ones((t_count, 1))
    drift = np.zeros((t_count, k))
    if person:
        breath = cfg.body_mod * np.sin(2 * np.pi * cfg.breath_hz * t + rng.uniform(0, 2 * np.pi))
        shape = _smooth_curve(rng, k, cfg.corr_len)
        sway = np.cumsum(rng.standard_normal(t_count)) / np.sqrt(t_count)
        gain = 1.0 + breath[:, None] * (1.0 + 0.5 * shape) + cfg.body_jitter * sway[:, None] * shape
        drift_shape = _smooth_curve(rng, k, cfg.corr_len)
        drift = cfg.phase_drift * np.sin(2 * np.pi * 0.05 * t + rng.uniform(0, 2 * np.pi))[:, None] * drift_shape
    amp_true = prof_amp * gain
    phase_true = prof_phase + drift

    amp = amp_true + cfg.noise_sigma * rng.standard_normal((t_count, k))
    phase = phase_true.copy()
    slopes = np.zeros(t_count)
    offsets = np.zeros(t_count)
    if cfg.impairments:
        hum_phase = rng.uniform(0, 2 * np.pi, k)
        amp = amp + cfg.hum_amp * np.sin(2 * np.pi * cfg.hum_hz * t[:, None] + hum_phase)
        spikes = rng.random((t_count, k)) < cfg.spike_rate
        amp = amp + spikes * cfg.spike_mag * (1.0 + rng.random((t_count, k)))
        magnitude = rng.uniform(cfg.sfo_slope_min, cfg.sfo_slope_max, t_count)
        slopes = magnitude * rng.choice([-1.0, 1.0], t_count)
        offsets = rng.uniform(-cfg.cfo_max, cfg.cfo_max, t_count)
        phase = phase + slopes[:, None] * indices + offsets[:, None]
        phase = phase + cfg.phase_noise * rng.standard_normal((t_count, k))
    amp = np.maximum(amp, 0.0)

    z = amp * np.exp(1j * phase)
    iq = np.clip(np.rint(z.real), -128, 127) + 1j * np.clip(np.rint(z.imag), -128, 127)
    session = CsiSession(
        timestamps=np.round(t, 2),
        csi=iq,
        subcarrier_indices=indices,
        sample_rate_hz=cfg.sample_rate_hz,
        label=int(class_id) if person else "unlabeled",
        orientation_deg=orientation_deg,
    )
    if not return_truth:
        return session
    truth = {
        "amplitude": amp_true,
        "phase": phase_true,
        "slopes": slopes,
        "offsets": offsets,
        "profile_amplitude": prof_amp,
        "profile_phase": prof_phase,
    }
    return session, truth


def write_synthetic_corpus(cfg, out_dir):
    """Write one log per class plus ``manifest.csv``; returns (log paths, manifest path)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths, entries = [], []
    for c in range(cfg.classes):
        orientation = ORIENTATIONS[0]
        path = out / f"class_{c}.log"
        write_csi_log(path, synthesize_session(c, cfg, orientation_deg=orientation))
        paths.append(path)
        entries.append(ManifestEntry(path, c, orientation))
    if cfg.empty_room:
        path = out / "empty_room.log"
        write_csi_log(path, synthesize_session(EMPTY_ROOM, cfg, orientation_deg=None))
        paths.append(path)
    manifest = out / "manifest.csv"
    write_manifest(manifest, entries)
    return paths, manifest

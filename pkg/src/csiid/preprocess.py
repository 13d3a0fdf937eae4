"""Sanitization: temporal reduction, Hampel outlier replacement, Butterworth
low-pass filtering of amplitude, and linear phase calibration."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .ingest import AmplitudePhaseMatrix


@dataclass
class HampelConfig:
    window: int = 15
    beta: float = 3.0
    alpha: float = 0.8

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ValueError(f"Hampel window must be odd and >= 3, got {self.window}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"Hampel alpha must lie in (0, 1), got {self.alpha}")
        if self.beta <= 0:
            raise ValueError(f"Hampel beta must be positive, got {self.beta}")


@dataclass
class ButterworthConfig:
    order: int = 5
    cutoff_hz: float = 10.0
    zero_phase: bool = False


@dataclass
class PreprocessConfig:
    hampel: HampelConfig = field(default_factory=HampelConfig)
    butterworth: ButterworthConfig = field(default_factory=ButterworthConfig)
    reduce_temporal: bool = True


@dataclass
class ButterworthFilter:
    order: int
    cutoff_hz: float
    sample_rate_hz: float
    sos: np.ndarray  # (sections, 6) rows of b0 b1 b2 a0 a1 a2

    def response(self, freq_hz):
        """Complex frequency response at ``freq_hz``."""
        z = np.exp(1j * 2 * np.pi * np.asarray(freq_hz, dtype=np.float64) / self.sample_rate_hz)
        h = np.ones_like(z)
        for b0, b1, b2, a0, a1, a2 in self.sos:
            h = h * (b0 + b1 / z + b2 / z**2) / (a0 + a1 / z + a2 / z**2)
        return h

    def poles(self):
        out = []
        for _, _, _, a0, a1, a2 in self.sos:
            out.extend(np.roots([a0, a1, a2]) if a2 != 0 else np.roots([a0, a1]))
        return np.array(out)


def temporal_mean_reduce(m):
    m = np.asarray(m)
    t = m.shape[0]
    if t < 2:
        raise ValueError(f"temporal reduction needs at least 2 rows, got {t}")
    half = t // 2
    return (m[0 : 2 * half : 2] + m[1 : 2 * half : 2]) / 2


def hampel_filter(series, cfg=None):
    """Hampel outlier replacement along axis 0 (each column independently).

    A centre sample is an outlier when its distance to the window median
    exceeds ``beta`` times the window MAD. Outliers are replaced by
    exponential smoothing of the samples preceding the centre, seeded with
    the first sample of the window. Edge samples without a full centred
    window are passed through.
    """
    cfg = cfg or HampelConfig()
    x = np.asarray(series, dtype=np.float64)
    w, c = cfg.window, cfg.window // 2
    if x.shape[0] < w:
        raise ValueError(f"series length {x.shape[0]} is shorter than the Hampel window {w}")
    win = sliding_window_view(x, w, axis=0)  # (L-w+1, ..., w)
    med = np.median(win, axis=-1)
    mad = np.median(np.abs(win - med[..., None]), axis=-1)
    centre = x[c : x.shape[0] - c]
    outlier = np.abs(centre - med) > cfg.beta * mad

    s = win[..., 0]
    for i in range(1, c):
        s = cfg.alpha * win[..., i] + (1 - cfg.alpha) * s

    out = x.copy()
    out[c : x.shape[0] - c] = np.where(outlier, s, centre)
    return out


def design_butterworth(order, cutoff_hz, sample_rate_hz):
    """Digital low-pass Butterworth as second-order sections.

    Analog poles on the prewarped Butterworth circle are mapped through the
    bilinear transform; every zero lands at z = -1. Each section is scaled
    to unit DC gain.
    """
    if order < 1:
        raise ValueError(f"filter order must be positive, got {order}")
    if sample_rate_hz <= 0 or not 0 < cutoff_hz < sample_rate_hz / 2:
        raise ValueError(
            f"cutoff {cutoff_hz} Hz must lie strictly between 0 and Nyquist ({sample_rate_hz / 2} Hz)"
        )
    fs2 = 2.0 * sample_rate_hz
    omega = fs2 * math.tan(math.pi * cutoff_hz / sample_rate_hz)
    sections = []
    for k in range(order // 2):
        theta = math.pi * (2 * k + 1 + order) / (2 * order)
        p = omega * complex(math.cos(theta), math.sin(theta))
        zp = (fs2 + p) / (fs2 - p)
        a1, a2 = -2.0 * zp.real, abs(zp) ** 2
        g = (1.0 + a1 + a2) / 4.0
        sections.append([g, 2 * g, g, 1.0, a1, a2])
    if order % 2:
        zp = (fs2 - omega) / (fs2 + omega)
        g = (1.0 - zp) / 2.0
        sections.append([g, g, 0.0, 1.0, -zp, 0.0])
    return ButterworthFilter(order, float(cutoff_hz), float(sample_rate_hz), np.array(sections))


def _sosfilt(sos, x):
    y = np.array(x, dtype=np.float64, copy=True)
    for b0, b1, b2, _, a1, a2 in sos:
        z1 = np.zeros(y.shape[1:])
        z2 = np.zeros(y.shape[1:])
        out = np.empty_like(y)
        for n in range(y.shape[0]):
            xn = y[n]
            yn = b0 * xn + z1
            z1 = b1 * xn - a1 * yn + z2
            z2 = b2 * xn - a2 * yn
            out[n] = yn
        y = out
    return y


def butterworth_apply(filt, series, zero_phase=False):
    """Causal cascade filtering along axis 0 from zero state.

    With ``zero_phase`` the cascade runs forward then backward.
    """
    x = np.asarray(series, dtype=np.float64)
    if x.shape[0] < 1:
        raise ValueError("cannot filter an empty series")
    y = _sosfilt(filt.sos, x)
    if zero_phase:
        y = _sosfilt(filt.sos, y[::-1])[::-1].copy()
    return y


def unwrap_rows(phase):
    """Unwrap each packet's phase along the subcarrier axis."""
    return np.unwrap(np.asarray(phase, dtype=np.float64), axis=-1)


def calibrate_phase(phase, subcarrier_indices):
    """Remove the endpoint-slope / mean-intercept linear trend from each row."""
    phi = np.asarray(phase, dtype=np.float64)
    k = np.asarray(subcarrier_indices, dtype=np.float64)
    if phi.shape[-1] != k.shape[0] or k.shape[0] < 2:
        raise ValueError(f"phase rows of length {phi.shape[-1]} vs {k.shape[0]} subcarrier indices")
    if k[-1] == k[0]:
        raise ValueError("first and last subcarrier indices coincide; slope undefined")
    a = (phi[..., -1] - phi[..., 0]) / (k[-1] - k[0])
    b = phi.mean(axis=-1)
    return phi - a[..., None] * k - b[..., None]


def phase_slopes(phase, subcarrier_indices):
    """Least-squares slope of each row against subcarrier index."""
    k = np.asarray(subcarrier_indices, dtype=np.float64)
    kc = k - k.mean()
    phi = np.asarray(phase, dtype=np.float64)
    return (phi - phi.mean(axis=-1, keepdims=True)) @ kc / (kc @ kc)


def preprocess_session(m, cfg=None):
    """Full sanitization of an amplitude/phase pair.

    Amplitude: temporal reduction, Hampel, Butterworth, clamp at zero.
    Phase: unwrap per packet, temporal reduction, calibration per row.
    The Butterworth filter is designed at the post-reduction sample rate.
    """
    cfg = cfg or PreprocessConfig()
    amp = np.asarray(m.amplitude, dtype=np.float64)
    phase = unwrap_rows(m.phase)
    fs = m.sample_rate_hz
    if cfg.reduce_temporal:
        amp = temporal_mean_reduce(amp)
        phase = temporal_mean_reduce(phase)
        fs = fs / 2
    amp = hampel_filter(amp, cfg.hampel)
    bw = cfg.butterworth
    filt = design_butterworth(bw.order, bw.cutoff_hz, fs)
    amp = np.maximum(butterworth_apply(filt, amp, bw.zero_phase), 0.0)
    phase = calibrate_phase(phase, m.subcarrier_indices)
    return AmplitudePhaseMatrix(
        amplitude=amp,
        phase=phase,
        subcarrier_indices=np.asarray(m.subcarrier_indices),
        sample_rate_hz=fs,
        meta=dict(m.meta),
    )

"""Independent reference computations used as test oracles.

Everything here is deliberately naive: plain Python loops, sorted lists,
direct formulas. None of it imports the code under test.
"""

import math

import numpy as np


def brute_median(values):
    s = sorted(values)
    return s[len(s) // 2]


def brute_hampel(series, window=15, beta=3.0, alpha=0.8):
    x = [float(v) for v in series]
    c = window // 2
    out = list(x)
    for t in range(c, len(x) - c):
        win = x[t - c : t + c + 1]
        med = brute_median(win)
        mad = brute_median([abs(v - med) for v in win])
        if abs(x[t] - med) > beta * mad:
            s = win[0]
            for i in range(1, c):
                s = alpha * win[i] + (1 - alpha) * s
            out[t] = s
    return out


def naive_cross_entropy(logits, labels):
    total = 0.0
    for row, y in zip(np.asarray(logits, dtype=np.float64), labels):
        e = [math.exp(v) for v in row]
        total += -math.log(e[y] / sum(e))
    return total / len(labels)


def numeric_grad(f, x, step=1e-5):
    """Central differences of scalar ``f()`` w.r.t. every entry of array ``x`` (mutated in place)."""
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        gf[i] = (up - down) / (2 * step)
    return g


def transfer_magnitude(b_sections, a_sections, freq, fs):
    """|H| of a cascade from explicit polynomial evaluation at exp(j 2 pi f / fs)."""
    z = complex(math.cos(2 * math.pi * freq / fs), math.sin(2 * math.pi * freq / fs))
    h = 1.0 + 0.0j
    for b, a in zip(b_sections, a_sections):
        num = sum(c * z ** (-i) for i, c in enumerate(b))
        den = sum(c * z ** (-i) for i, c in enumerate(a))
        h *= num / den
    return abs(h)


def single_bin_amplitude(x, freq, fs):
    """Amplitude of the ``freq`` component by projection onto cos/sin."""
    n = np.arange(len(x))
    c = np.cos(2 * np.pi * freq * n / fs)
    s = np.sin(2 * np.pi * freq * n / fs)
    return 2.0 * math.hypot(float(x @ c), float(x @ s)) / len(x)


def direct_conv2d(x, w, b, padding=1):
    """Loop-based 2-D cross-correlation for one sample: x (C, H, W), w (O, C, kh, kw)."""
    c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.zeros((c, h + 2 * padding, wd + 2 * padding))
    xp[:, padding : padding + h, padding : padding + wd] = x
    out = np.zeros((o, h + 2 * padding - kh + 1, wd + 2 * padding - kw + 1))
    for oc in range(o):
        for i in range(out.shape[1]):
            for j in range(out.shape[2]):
                out[oc, i, j] = (xp[:, i : i + kh, j : j + kw] * w[oc]).sum() + b[oc]
    return out


def attention_oracle(h, d):
    """softmax(H H^T / sqrt(d)) H, one row at a time."""
    out = np.zeros_like(h)
    for i in range(h.shape[0]):
        scores = [float(h[i] @ h[j]) / math.sqrt(d) for j in range(h.shape[0])]
        m = max(scores)
        e = [math.exp(s - m) for s in scores]
        z = sum(e)
        for j in range(h.shape[0]):
            out[i] += e[j] / z * h[j]
    return out


def ls_slope(y, x):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    return float((y - y.mean()) @ xc / (xc @ xc))

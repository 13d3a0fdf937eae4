import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from csiid.dataset import build_dataset  # noqa: E402
from csiid.ingest import extract_amplitude_phase  # noqa: E402
from csiid.preprocess import preprocess_session  # noqa: E402
from csiid.synth import SynthConfig, synthesize_session  # noqa: E402

ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, status, detail in ACCEPTANCE:
        if isinstance(status, bool):
            status = "PASS" if status else "FAIL"
        terminalreporter.write_line(f"{status}  {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_synth_cfg():
    return SynthConfig(classes=3, duration_s=30.0, seed=3)


@pytest.fixture(scope="session")
def small_dataset(small_synth_cfg):
    sessions = []
    for c in range(small_synth_cfg.classes):
        m = preprocess_session(extract_amplitude_phase(synthesize_session(c, small_synth_cfg)))
        sessions.append((m, c))
    return build_dataset(sessions)


@pytest.fixture(scope="session")
def default_sessions():
    """Default synthetic corpus after full preprocessing, as (matrix, label) pairs."""
    cfg = SynthConfig()
    return [(preprocess_session(extract_amplitude_phase(synthesize_session(c, cfg))), c) for c in range(cfg.classes)]


def separability(sessions):
    """Minimum pairwise distance of class mean amplitude profiles over the RMS within-class row deviation."""
    amps = [m.amplitude for m, _ in sessions]
    means = [a.mean(axis=0) for a in amps]
    sigma = np.sqrt(np.mean([np.mean(np.sum((a - mu) ** 2, axis=1)) for a, mu in zip(amps, means)]))
    dist = min(np.linalg.norm(means[i] - means[j]) for i in range(len(means)) for j in range(i + 1, len(means)))
    return dist, sigma

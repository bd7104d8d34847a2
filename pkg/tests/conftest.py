import numpy as np
import pandas as pd
import pytest

from cprlab.babbs_simulator import CprProtocol, PatientProfile, patient_sweep, synthesize_session
from cprlab.corruption import CorruptionConfig, corrupt_session
from cprlab.dataset import CHANNELS, SignalSession


def make_session(data, patient_id="test", sample_rate=100.0, is_clean=True):
    """Session from a (5, n) array or a channel → sequence mapping"""
    if isinstance(data, dict):
        frame = pd.DataFrame({name: np.asarray(data[name], dtype=np.float64) for name in CHANNELS})
    else:
        frame = pd.DataFrame(np.asarray(data, dtype=np.float64).T, columns=list(CHANNELS))
    return SignalSession(patient_id, sample_rate, frame, is_clean=is_clean)


@pytest.fixture(scope="session")
def default_session():
    return synthesize_session(PatientProfile())


@pytest.fixture
def short_protocol():
    # 40 cycles at 100 cpm and 100 Hz: 2400 samples
    return CprProtocol(n_cycles=40)


@pytest.fixture
def short_clean_sessions(short_protocol):
    profiles = patient_sweep()[:3]
    return [synthesize_session(p, short_protocol) for p in profiles]


@pytest.fixture
def short_noisy_sessions(short_clean_sessions):
    return [
        corrupt_session(s, CorruptionConfig(seed=11 + i))
        for i, s in enumerate(short_clean_sessions)
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)

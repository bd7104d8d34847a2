import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from .dataset import CHANNELS
from .errors import InvalidInputError, SchemaError

STD_FLOOR = 1e-8


def impute(x):
    """
    Fill NaN gaps by linear interpolation between the nearest finite
    neighbours; leading and trailing gaps take the nearest finite value.

    Returns the filled sequence and a mask that is False where x was NaN.
    """
    x = np.asarray(x, dtype=np.float64)
    mask = np.isfinite(x)
    if not mask.any():
        raise InvalidInputError("cannot impute a sequence without a single finite value")
    if mask.all():
        return x.copy(), mask

    idx = np.arange(x.size)
    filled = x.copy()
    filled[~mask] = np.interp(idx[~mask], idx[mask], x[mask])
    return filled, mask


@dataclass(frozen=True)
class NormStats:
    """Per-channel z-score statistics, canonical channel order"""

    mean: tuple
    std: tuple

    def to_dict(self):
        return {name: [m, s] for name, m, s in zip(CHANNELS, self.mean, self.std)}

    @classmethod
    def from_dict(cls, data):
        missing = [c for c in CHANNELS if c not in data]
        if missing:
            raise SchemaError(f"normalization stats are missing channels {missing}")
        mean = tuple(float(data[c][0]) for c in CHANNELS)
        std = tuple(float(data[c][1]) for c in CHANNELS)
        if min(std) <= 0:
            raise SchemaError(f"normalization std must be positive, got {std}")
        return cls(mean, std)

    def column(self):
        return np.asarray(self.mean)[:, None], np.asarray(self.std)[:, None]


def fit_stats(arrays):
    """Fit per-channel mean/std over (5, n) training arrays (imputed, finite)"""
    if not arrays:
        raise InvalidInputError("need at least one training array to fit normalization stats")
    stacked = np.concatenate([np.asarray(a, dtype=np.float64) for a in arrays], axis=1)
    if not np.isfinite(stacked).all():
        raise InvalidInputError("normalization stats must be fitted on imputed (finite) data")

    mean = stacked.mean(axis=1)
    std = stacked.std(axis=1)
    for name, s in zip(CHANNELS, std):
        if s < STD_FLOOR:
            warnings.warn(f"channel '{name}' is constant; using std floor {STD_FLOOR}")
    std = np.maximum(std, STD_FLOOR)
    return NormStats(tuple(float(m) for m in mean), tuple(float(s) for s in std))


def normalize(data, stats):
    mean, std = stats.column()
    return (np.asarray(data, dtype=np.float64) - mean) / std


def denormalize(data, stats):
    mean, std = stats.column()
    return np.asarray(data, dtype=np.float64) * std + mean


def training_starts(length, window, stride):
    """Window starts for training: only windows fully inside the session"""
    if length < window:
        return np.empty(0, dtype=np.int64)
    return np.arange(0, length - window + 1, stride, dtype=np.int64)


def window_starts(length, window, stride):
    """Window starts for inference, with a last window flush with the end"""
    if length < window:
        raise InvalidInputError(f"session of {length} samples is shorter than one window ({window})")
    starts = training_starts(length, window, stride)
    if starts[-1] + window < length:
        starts = np.append(starts, length - window)
    return starts


def extract_windows(data, starts, window):
    """Slice (C, n) data into (N, C, window) windows"""
    data = np.asarray(data)
    return np.stack([data[:, s:s + window] for s in starts])


def overlap_add(windows, starts, length):
    """Rebuild (C, length) from (N, C, window) windows, averaging overlaps uniformly"""
    windows = np.asarray(windows, dtype=np.float64)
    n_windows, n_channels, window = windows.shape
    total = np.zeros((n_channels, length))
    counts = np.zeros(length)
    for w, s in zip(windows, starts):
        total[:, s:s + window] += w
        counts[s:s + window] += 1
    if (counts == 0).any():
        raise InvalidInputError("windows do not cover the whole session")
    return total / counts


@dataclass
class PreprocessedSession:
    """Imputed and normalized channels as every denoiser consumes them"""

    patient_id: str
    values: np.ndarray
    mask: np.ndarray
    stats: NormStats

    @property
    def digest(self):
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.mask, dtype=np.uint8).tobytes())
        return h.hexdigest()


class SignalPreprocessor:
    """Shared impute → normalize path and its inverse"""

    def __init__(self, stats=None):
        self.stats = stats

    @staticmethod
    def impute_session(session):
        filled, masks = zip(*(impute(session.channel(name)) for name in CHANNELS))
        return np.stack(filled), np.stack(masks)

    def fit(self, sessions):
        self.stats = fit_stats([self.impute_session(s)[0] for s in sessions])
        return self.stats

    def prepare(self, session):
        if self.stats is None:
            raise InvalidInputError("normalization stats have not been fitted")
        filled, mask = self.impute_session(session)
        return PreprocessedSession(session.patient_id, normalize(filled, self.stats), mask, self.stats)

    def restore(self, normalized, session, **metadata):
        """Denormalize a (5, n) estimate into a session shaped like the input"""
        return session.with_data(denormalize(normalized, self.stats), is_clean=False, **metadata)

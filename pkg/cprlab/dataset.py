import hashlib
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import InvalidInputError, MissingChannelError, OutputError, SchemaError

CHANNELS = ("compression", "pressure", "velocity", "force", "pmouth")
CSV_COLUMNS = ("t",) + CHANNELS


@dataclass
class SignalSession:
    """Five aligned CPR channels sampled at a fixed rate"""

    patient_id: str
    sample_rate: float
    channels: pd.DataFrame
    is_clean: bool = True
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if list(self.channels.columns) != list(CHANNELS):
            missing = [c for c in CHANNELS if c not in self.channels.columns]
            if missing:
                raise MissingChannelError(f"session '{self.patient_id}' is missing channels {missing}")
            raise SchemaError(
                f"session '{self.patient_id}' has channels {list(self.channels.columns)}, "
                f"expected exactly {list(CHANNELS)}"
            )
        if not self.sample_rate > 0:
            raise InvalidInputError(f"sample_rate must be positive, got {self.sample_rate}")

        self.channels = self.channels.astype(np.float64).reset_index(drop=True)
        if self.is_clean and not np.isfinite(self.channels.to_numpy()).all():
            raise InvalidInputError(f"clean session '{self.patient_id}' contains non-finite values")

    @property
    def length(self):
        return len(self.channels)

    @property
    def time(self):
        return np.arange(self.length) / self.sample_rate

    def channel(self, name):
        if name not in CHANNELS:
            raise MissingChannelError(f"unknown channel '{name}'")
        return self.channels[name].to_numpy(copy=True)

    def to_array(self):
        """Channels stacked as a (5, length) array in canonical order"""
        return self.channels.to_numpy(copy=True).T

    def with_data(self, data, is_clean=None, patient_id=None, **metadata):
        """Copy of this session carrying new channel data"""
        data = np.asarray(data, dtype=np.float64)
        if data.shape != (len(CHANNELS), self.length):
            raise InvalidInputError(
                f"channel data shape {data.shape} does not match session shape {(len(CHANNELS), self.length)}"
            )
        return SignalSession(
            patient_id=patient_id or self.patient_id,
            sample_rate=self.sample_rate,
            channels=pd.DataFrame(data.T, columns=list(CHANNELS)),
            is_clean=self.is_clean if is_clean is None else is_clean,
            metadata={**self.metadata, **metadata},
        )

    @classmethod
    def from_arrays(cls, patient_id, sample_rate, arrays, is_clean=True, metadata=None):
        missing = [c for c in CHANNELS if c not in arrays]
        if missing:
            raise MissingChannelError(f"session '{patient_id}' is missing channels {missing}")
        lengths = {name: len(arrays[name]) for name in CHANNELS}
        if len(set(lengths.values())) != 1:
            raise InvalidInputError(f"channels of '{patient_id}' differ in length: {lengths}")
        frame = pd.DataFrame({name: np.asarray(arrays[name], dtype=np.float64) for name in CHANNELS})
        return cls(patient_id, float(sample_rate), frame, is_clean, dict(metadata or {}))


def json_safe(value):
    """Replace non-finite floats by "inf"/"-inf"/"nan" and numpy scalars by Python ones"""
    if isinstance(value, dict):
        return {str(k): json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return json_safe(value.tolist())
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
    return value


def json_float(value):
    """Inverse of json_safe for a single number"""
    if isinstance(value, str):
        tokens = {"inf": math.inf, "-inf": -math.inf, "nan": math.nan}
        if value not in tokens:
            raise SchemaError(f"expected a number or non-finite token, got '{value}'")
        return tokens[value]
    return float(value)


def dumps_json(obj):
    return json.dumps(json_safe(obj), indent=2, allow_nan=False) + "\n"


def write_atomic(path, data):
    """Write text or bytes to path through a temp file and a rename"""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        handle = tempfile.NamedTemporaryFile(
            mode, dir=path.parent, prefix=f".{path.name}.", suffix=".tmp", delete=False,
            **({} if mode == "wb" else {"newline": "", "encoding": "utf-8"}),
        )
        with handle:
            handle.write(data)
        os.replace(handle.name, path)
    except OSError as e:
        raise OutputError(f"could not write {path}: {e}")
    return path


def ensure_writable_dir(path):
    """Create the directory if needed and prove a file can be written there"""
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
        with tempfile.NamedTemporaryFile(dir=path, prefix=".writecheck.", delete=True):
            pass
    except OSError as e:
        raise OutputError(f"output directory {path} is not writable: {e}")
    return path


def file_digest(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def session_csv_text(session):
    frame = session.channels.copy()
    frame.insert(0, "t", [f"{t:.6f}" for t in session.time])
    buffer = io.StringIO()
    frame.to_csv(buffer, index=False, na_rep="NaN", lineterminator="\n")
    return buffer.getvalue()


def sidecar_path(csv_path):
    return Path(csv_path).with_suffix(".json")


class Dataset:
    """Reads and writes sessions as CSV plus a sidecar JSON manifest"""

    @staticmethod
    def write_session(session, csv_path, **extra):
        csv_path = Path(csv_path)
        sidecar = {
            "patient_id": session.patient_id,
            "sample_rate": session.sample_rate,
            "length": session.length,
            "is_clean": session.is_clean,
            **session.metadata,
            **extra,
        }
        write_atomic(csv_path, session_csv_text(session))
        write_atomic(sidecar_path(csv_path), dumps_json(sidecar))
        return [csv_path, sidecar_path(csv_path)]

    @staticmethod
    def read_session(csv_path):
        csv_path = Path(csv_path)
        if not csv_path.exists():
            raise InvalidInputError(f"session file not found: {csv_path}")
        try:
            frame = pd.read_csv(csv_path, float_precision="round_trip")
        except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
            raise SchemaError(f"{csv_path} is not a session CSV: {e}")

        columns = list(frame.columns)
        missing = [c for c in CHANNELS if c not in columns]
        if missing:
            raise MissingChannelError(f"{csv_path} is missing channels {missing}")
        if columns != list(CSV_COLUMNS):
            raise SchemaError(f"{csv_path} header {columns} does not match {list(CSV_COLUMNS)}")
        if len(frame) == 0:
            raise InvalidInputError(f"{csv_path} holds no samples")
        try:
            frame = frame.astype(np.float64)
        except ValueError as e:
            raise SchemaError(f"{csv_path} holds non-numeric values: {e}")

        meta = {}
        if sidecar_path(csv_path).exists():
            try:
                meta = json.loads(sidecar_path(csv_path).read_text())
            except json.JSONDecodeError as e:
                raise SchemaError(f"sidecar {sidecar_path(csv_path)} is not valid JSON: {e}")

        patient_id = meta.pop("patient_id", csv_path.stem)
        sample_rate = meta.pop("sample_rate", None)
        if sample_rate is None:
            if len(frame) < 2:
                raise InvalidInputError(f"{csv_path} needs a sidecar to define its sample rate")
            sample_rate = round(1.0 / float(np.median(np.diff(frame["t"].to_numpy()))), 6)
        values = frame[list(CHANNELS)]
        is_clean = meta.pop("is_clean", bool(np.isfinite(values.to_numpy()).all()))
        meta.pop("length", None)
        return SignalSession(patient_id, float(sample_rate), values, bool(is_clean), meta)

    @staticmethod
    def read_sessions(paths):
        return [Dataset.read_session(p) for p in paths]

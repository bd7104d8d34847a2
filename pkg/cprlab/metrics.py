import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .dataset import CHANNELS, json_float
from .errors import DegenerateChannelError, DegenerateMatrixError, InvalidInputError, ShapeError, UndefinedSignalError
from .preprocessor import SignalPreprocessor

STAND_INS = {"nlms", "vanilla"}


def _pair(clean, estimate):
    clean = np.asarray(clean, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if clean.shape != estimate.shape:
        raise ShapeError(f"clean shape {clean.shape} does not match estimate shape {estimate.shape}")
    if not np.isfinite(clean).all():
        raise InvalidInputError("clean signal must be finite")
    if not np.isfinite(estimate).all():
        raise InvalidInputError("estimate must be finite; impute it first")
    return clean, estimate


def snr_db(clean, estimate):
    """10·log10(Σclean² / Σ(estimate − clean)²); +inf for a perfect estimate"""
    clean, estimate = _pair(clean, estimate)
    signal = np.sum(clean**2)
    if signal == 0:
        raise UndefinedSignalError("SNR is undefined for an all-zero clean signal")
    noise = np.sum((estimate - clean) ** 2)
    if noise == 0:
        return math.inf
    return float(10.0 * np.log10(signal / noise))


def psnr_db(clean, estimate):
    """10·log10(max|clean|² / MSE); +inf for a perfect estimate"""
    clean, estimate = _pair(clean, estimate)
    peak = np.max(np.abs(clean))
    if peak == 0:
        raise UndefinedSignalError("PSNR is undefined for an all-zero clean signal")
    mse = np.mean((estimate - clean) ** 2)
    if mse == 0:
        return math.inf
    return float(10.0 * np.log10(peak**2 / mse))


def correlation_matrix(session):
    """Pairwise-complete Pearson correlations between the five channels"""
    frame = session.channels
    for name in CHANNELS:
        spread = frame[name].std(skipna=True)
        if not np.isfinite(spread) or spread == 0:
            raise DegenerateChannelError(f"channel '{name}' of '{session.patient_id}' is constant")

    corr = frame.corr(method="pearson").to_numpy()
    upper = np.triu(corr, k=1)
    corr = upper + upper.T
    np.fill_diagonal(corr, 1.0)
    return pd.DataFrame(corr, index=list(CHANNELS), columns=list(CHANNELS))


def _triangle(matrix, name):
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (len(CHANNELS), len(CHANNELS)):
        raise ShapeError(f"{name} has shape {m.shape}, expected {(len(CHANNELS), len(CHANNELS))}")
    if not np.allclose(m, m.T, rtol=0, atol=1e-12) or not np.allclose(np.diag(m), 1.0, rtol=0, atol=1e-12):
        raise InvalidInputError(f"{name} must be symmetric with a unit diagonal")
    return m[np.triu_indices(len(m), k=1)]


def matrix_similarity(a, b):
    """Pearson correlation between the off-diagonal upper triangles of a and b"""
    va = _triangle(a, "first matrix")
    vb = _triangle(b, "second matrix")
    da = va - va.mean()
    db = vb - vb.mean()
    sa, sb = np.sum(da * da), np.sum(db * db)
    if sa == 0 or sb == 0:
        raise DegenerateMatrixError("a correlation triangle has zero variance")
    r = np.sum(da * db) / math.sqrt(sa * sb)
    return float(min(1.0, max(-1.0, r)))


@dataclass
class EvalReport:
    method: str
    per_channel: dict
    aggregate_snr_db: float
    aggregate_psnr_db: float
    corr_before: pd.DataFrame
    corr_after: pd.DataFrame
    corr_similarity: float
    corr_clean: pd.DataFrame = None
    similarity_clean_noisy: float = math.nan
    similarity_clean_denoised: float = math.nan
    preprocessing_digest: str = ""
    stand_in: bool = False
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        def matrix(m):
            return None if m is None else np.asarray(m).tolist()

        return {
            "method": self.method,
            "stand_in": self.stand_in,
            "per_channel": self.per_channel,
            "aggregate_snr_db": self.aggregate_snr_db,
            "aggregate_psnr_db": self.aggregate_psnr_db,
            "channels": list(CHANNELS),
            "corr_before": matrix(self.corr_before),
            "corr_after": matrix(self.corr_after),
            "corr_clean": matrix(self.corr_clean),
            "corr_similarity": self.corr_similarity,
            "similarity_clean_noisy": self.similarity_clean_noisy,
            "similarity_clean_denoised": self.similarity_clean_denoised,
            "preprocessing_digest": self.preprocessing_digest,
            **self.extra,
        }

    @classmethod
    def from_dict(cls, data):
        def matrix(m):
            if m is None:
                return None
            return pd.DataFrame(np.asarray(m, dtype=np.float64), index=list(CHANNELS), columns=list(CHANNELS))

        known = {
            "method", "stand_in", "per_channel", "aggregate_snr_db", "aggregate_psnr_db", "channels",
            "corr_before", "corr_after", "corr_clean", "corr_similarity", "similarity_clean_noisy",
            "similarity_clean_denoised", "preprocessing_digest",
        }
        return cls(
            method=data["method"],
            per_channel={
                ch: {k: json_float(v) for k, v in scores.items()} for ch, scores in data["per_channel"].items()
            },
            aggregate_snr_db=json_float(data["aggregate_snr_db"]),
            aggregate_psnr_db=json_float(data["aggregate_psnr_db"]),
            corr_before=matrix(data["corr_before"]),
            corr_after=matrix(data["corr_after"]),
            corr_similarity=json_float(data["corr_similarity"]),
            corr_clean=matrix(data.get("corr_clean")),
            similarity_clean_noisy=json_float(data.get("similarity_clean_noisy", "nan")),
            similarity_clean_denoised=json_float(data.get("similarity_clean_denoised", "nan")),
            preprocessing_digest=data.get("preprocessing_digest", ""),
            stand_in=bool(data.get("stand_in", False)),
            extra={k: v for k, v in data.items() if k not in known},
        )


def evaluate(method, clean, noisy, estimate, preprocessing_digest=""):
    """Score an estimate against the clean session and compare correlation structure"""
    for session in (noisy, estimate):
        if session.length != clean.length:
            raise ShapeError(
                f"session '{session.patient_id}' has {session.length} samples, clean has {clean.length}"
            )

    per_channel = {}
    for name in CHANNELS:
        c, e = clean.channel(name), estimate.channel(name)
        per_channel[name] = {"snr_db": snr_db(c, e), "psnr_db": psnr_db(c, e)}

    filled, _ = SignalPreprocessor.impute_session(noisy)
    corr_before = correlation_matrix(noisy.with_data(filled))
    corr_after = correlation_matrix(estimate)
    corr_clean = correlation_matrix(clean)

    return EvalReport(
        method=method,
        per_channel=per_channel,
        aggregate_snr_db=float(np.mean([v["snr_db"] for v in per_channel.values()])),
        aggregate_psnr_db=float(np.mean([v["psnr_db"] for v in per_channel.values()])),
        corr_before=corr_before,
        corr_after=corr_after,
        corr_similarity=matrix_similarity(corr_before, corr_after),
        corr_clean=corr_clean,
        similarity_clean_noisy=matrix_similarity(corr_clean, corr_before),
        similarity_clean_denoised=matrix_similarity(corr_clean, corr_after),
        preprocessing_digest=preprocessing_digest,
        stand_in=method in STAND_INS,
    )

"""
Clean CPR session synthesis from the Babbs perfusion model.

The per-cycle scalars (elastance, resistance, diastolic and coronary
perfusion pressure) follow the Babbs equations; the within-cycle waveforms
are a raised-cosine compression stroke from which every other channel is
derived.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy.special import expit

from .dataset import SignalSession
from .errors import InvalidInputError
from .settings import ConfigMixin

GENERATOR_VERSION = "1.0.0"

# displaced thoracic volume per mm of compression (L/mm)
VOLUME_PER_MM = 0.02
KPA_TO_CMH2O = 10.197

SWEEP_FORCES = (500.0, 600.0, 700.0, 800.0, 900.0, 1000.0)
SWEEP_COMPLIANCES = (0.01, 0.02, 0.03, 0.04, 0.05)
SWEEP_RESISTANCES = (1.0, 2.0, 3.0, 4.0, 5.0)


@dataclass(frozen=True)
class BabbsParams(ConfigMixin):
    e_min: float = 0.6
    e_max: float = 2.2
    f_min: float = 0.005
    f_max: float = 0.02
    pe: float = 0.2
    pf: float = 0.2
    d_target: float = 50.0

    def __post_init__(self):
        # equal bounds are allowed: they pin E or F to a constant
        if self.e_min > self.e_max:
            raise InvalidInputError(f"e_min ({self.e_min}) must not exceed e_max ({self.e_max})")
        if self.f_min > self.f_max:
            raise InvalidInputError(f"f_min ({self.f_min}) must not exceed f_max ({self.f_max})")
        if not (self.pe > 0 and self.pf > 0):
            raise InvalidInputError(f"pe and pf must be positive, got pe={self.pe}, pf={self.pf}")
        if not self.d_target > 0:
            raise InvalidInputError(f"d_target must be positive, got {self.d_target}")


@dataclass(frozen=True)
class CprProtocol(ConfigMixin):
    compression_rate: float = 100.0
    compression_depth: float = 50.0
    decompression_depth: float = 10.0
    duty: float = 0.5
    target_dbp: float = 40.0
    n_cycles: int = 100
    sample_rate: float = 100.0

    def __post_init__(self):
        if not 0 < self.duty < 1:
            raise InvalidInputError(f"duty must lie in (0, 1), got {self.duty}")
        if not self.compression_rate > 0:
            raise InvalidInputError(f"compression_rate must be positive, got {self.compression_rate}")
        if not self.compression_depth > self.decompression_depth >= 0:
            raise InvalidInputError(
                "need compression_depth > decompression_depth >= 0, got "
                f"{self.compression_depth} and {self.decompression_depth}"
            )
        if self.n_cycles < 1:
            raise InvalidInputError(f"n_cycles must be at least 1, got {self.n_cycles}")
        if self.sample_rate < 20 * self.compression_rate / 60:
            raise InvalidInputError(
                f"sample_rate {self.sample_rate} Hz resolves fewer than 20 samples per compression cycle"
            )
        if not self.target_dbp > 0:
            raise InvalidInputError(f"target_dbp must be positive, got {self.target_dbp}")

    @property
    def cycle_seconds(self):
        return 60.0 / self.compression_rate

    @property
    def n_samples(self):
        return int(round(self.n_cycles * self.cycle_seconds * self.sample_rate))


@dataclass(frozen=True)
class PatientProfile(ConfigMixin):
    patient_id: str = "default"
    external_force: float = 500.0
    chest_compliance: float = 0.01
    airway_resistance: float = 1.0

    def __post_init__(self):
        for name in ("external_force", "chest_compliance", "airway_resistance"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class HemoState:
    cpp: float
    dbp: float
    e: float
    f: float


def _finite_depth(d):
    arr = np.asarray(d, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise InvalidInputError(f"compression depth must be finite, got {d}")
    return arr


def _scalar_or_array(value, like):
    return float(value) if np.ndim(like) == 0 else value


def elastance(d, p):
    """Depth-dependent arterial elastance E(D), mmHg/mm"""
    arr = _finite_depth(d)
    e = p.e_min + (p.e_max - p.e_min) * expit(p.pe * (arr - p.d_target))
    return _scalar_or_array(e, d)


def resistance(d, p):
    """Depth-dependent resistance term F(D), mmHg/mm²"""
    arr = _finite_depth(d)
    f = p.f_min + (p.f_max - p.f_min) * expit(p.pf * (arr - p.d_target))
    return _scalar_or_array(f, d)


def diastolic_bp(d, p):
    arr = _finite_depth(d)
    if (arr < 0).any():
        raise InvalidInputError(f"compression depth must be non-negative, got {d}")
    dbp = elastance(arr, p) * arr - resistance(arr, p) * arr**2
    return _scalar_or_array(dbp, d)


def coronary_pp(dbp, duty, rate):
    """
    Coronary perfusion pressure from diastolic pressure, duty cycle and rate.

    The rate enters in compressions per minute, as the model states it; no
    unit conversion is applied to the 1/R term.
    """
    if not 0 < duty < 1:
        raise InvalidInputError(f"duty must lie in (0, 1), got {duty}")
    if not rate > 0:
        raise InvalidInputError(f"rate must be positive, got {rate}")
    return dbp * duty / (duty + 1.0 / rate)


def hemodynamics(d, protocol, params):
    """Babbs scalars at compression depth d for the given protocol"""
    dbp = diastolic_bp(d, params)
    return HemoState(
        cpp=coronary_pp(dbp, protocol.duty, protocol.compression_rate),
        dbp=dbp,
        e=elastance(d, params),
        f=resistance(d, params),
    )


def compression_waveform(protocol):
    """
    Raised-cosine compression stroke, one per cycle, in mm.

    The stroke occupies the duty fraction of each cycle, centred in it, so
    every cycle starts and ends at rest on the decompression depth.
    """
    i = np.arange(protocol.n_samples)
    phase = np.mod(i * protocol.compression_rate / (60.0 * protocol.sample_rate), 1.0)
    stroke_phase = phase - (1.0 - protocol.duty) / 2.0
    in_stroke = (stroke_phase >= 0) & (stroke_phase < protocol.duty)

    span = protocol.compression_depth - protocol.decompression_depth
    pulse = 0.5 * (1.0 - np.cos(2.0 * np.pi * stroke_phase / protocol.duty))
    return protocol.decompression_depth + span * np.where(in_stroke, pulse, 0.0)


def synthesize_session(profile, protocol=None, params=None):
    """Build a clean five-channel session for one patient profile"""
    protocol = protocol or CprProtocol()
    params = params or BabbsParams()

    depth = compression_waveform(protocol)
    span = protocol.compression_depth - protocol.decompression_depth
    displacement = (depth - protocol.decompression_depth) / span

    # scale the model DBP at peak depth onto the protocol target
    model_state = hemodynamics(protocol.compression_depth, protocol, params)
    if not model_state.dbp > 0:
        raise InvalidInputError(
            f"Babbs DBP at {protocol.compression_depth} mm is {model_state.dbp:.4g} mmHg; cannot calibrate"
        )
    calibration = protocol.target_dbp / model_state.dbp
    dbp_cal = protocol.target_dbp
    cpp = coronary_pp(dbp_cal, protocol.duty, protocol.compression_rate)
    pressure = cpp + (dbp_cal - cpp) * displacement

    velocity = np.gradient(depth) * protocol.sample_rate
    force = profile.external_force * displacement

    volume = VOLUME_PER_MM * (depth - protocol.decompression_depth)
    flow = VOLUME_PER_MM * velocity
    pmouth = profile.airway_resistance * flow + volume / (profile.chest_compliance * KPA_TO_CMH2O)

    calibrated = HemoState(cpp=cpp, dbp=dbp_cal, e=model_state.e, f=model_state.f)
    return SignalSession.from_arrays(
        profile.patient_id,
        protocol.sample_rate,
        {
            "compression": depth,
            "pressure": pressure,
            "velocity": velocity,
            "force": force,
            "pmouth": pmouth,
        },
        is_clean=True,
        metadata={
            "generator_version": GENERATOR_VERSION,
            "protocol": protocol.to_dict(),
            "params": params.to_dict(),
            "profile": profile.to_dict(),
            "hemodynamics": vars(calibrated),
            "dbp_calibration": calibration,
        },
    )


def profile_id(index, force, compliance, airway):
    return f"p{index:03d}-f{force:g}-c{compliance:g}-r{airway:g}"


def patient_sweep():
    """Every (force, compliance, resistance) combination, force-major"""
    grid = product(SWEEP_FORCES, SWEEP_COMPLIANCES, SWEEP_RESISTANCES)
    return [
        PatientProfile(profile_id(i, f, c, r), f, c, r)
        for i, (f, c, r) in enumerate(grid)
    ]


def synthesize_sweep(profiles, protocol=None, params=None, workers=None):
    """Synthesize many profiles concurrently; output order follows the input"""
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda p: synthesize_session(p, protocol, params), profiles))

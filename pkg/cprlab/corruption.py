"""
Seeded artifact injectors for CPR sessions.

Every random draw comes from a Philox4x64 counter-based generator keyed by
``SeedSequence([seed, stream_id])``, so a (seed, stream) pair produces the
same samples on every platform. ``corrupt_session`` gives channel ``k`` the
stream id ``k`` and runs the injectors in the fixed ``PIPELINE`` order.
"""

from dataclasses import dataclass, field, fields

import numpy as np

from .dataset import CHANNELS
from .errors import InvalidInputError, SchemaError
from .settings import ConfigMixin

PIPELINE = (
    "gaussian",
    "salt_pepper",
    "baseline",
    "muscle",
    "amp_changes",
    "depth_variations",
    "dropouts",
)


def _check_probability(name, value):
    if not 0.0 <= value <= 1.0:
        raise InvalidInputError(f"{name} must lie in [0, 1], got {value}")


def _check_events(section, count, max_duration):
    if count < 0:
        raise InvalidInputError(f"{section}.count must be non-negative, got {count}")
    if max_duration < 1:
        raise InvalidInputError(f"{section}.max_duration must be at least 1, got {max_duration}")


@dataclass(frozen=True)
class GaussianConfig(ConfigMixin):
    mean: float = 0.0
    std: float = 1.0
    noise_factor: float = 1.2
    probability: float = 0.1

    def __post_init__(self):
        if self.std < 0:
            raise InvalidInputError(f"gaussian.std must be non-negative, got {self.std}")
        _check_probability("gaussian.probability", self.probability)


@dataclass(frozen=True)
class SaltPepperConfig(ConfigMixin):
    salt_prob: float = 1e-4
    pepper_prob: float = 1e-4
    salt_value: float = 1e-5
    pepper_value: float = 1e-5

    def __post_init__(self):
        _check_probability("salt_pepper.salt_prob", self.salt_prob)
        _check_probability("salt_pepper.pepper_prob", self.pepper_prob)
        if self.salt_prob + self.pepper_prob > 1.0:
            raise InvalidInputError("salt_pepper.salt_prob + pepper_prob must not exceed 1")


@dataclass(frozen=True)
class BaselineConfig(ConfigMixin):
    amplitude: float = 0.02
    period: float = 2.0

    def __post_init__(self):
        if not self.period > 0:
            raise InvalidInputError(f"baseline.period must be positive, got {self.period}")


@dataclass(frozen=True)
class MuscleConfig(ConfigMixin):
    amplitude: float = 0.05

    def __post_init__(self):
        if self.amplitude < 0:
            raise InvalidInputError(f"muscle.amplitude must be non-negative, got {self.amplitude}")


@dataclass(frozen=True)
class AmpChangesConfig(ConfigMixin):
    count: int = 500
    max_duration: int = 10
    change_factor: float = 0.005

    def __post_init__(self):
        _check_events("amp_changes", self.count, self.max_duration)


@dataclass(frozen=True)
class DepthVariationsConfig(ConfigMixin):
    count: int = 500
    max_duration: int = 20
    variation_factor: float = 0.8

    def __post_init__(self):
        _check_events("depth_variations", self.count, self.max_duration)
        if self.variation_factor < 0:
            raise InvalidInputError(
                f"depth_variations.variation_factor must be non-negative, got {self.variation_factor}"
            )


@dataclass(frozen=True)
class DropoutsConfig(ConfigMixin):
    count: int = 500
    max_duration: int = 10

    def __post_init__(self):
        _check_events("dropouts", self.count, self.max_duration)


SECTIONS = {
    "gaussian": GaussianConfig,
    "salt_pepper": SaltPepperConfig,
    "baseline": BaselineConfig,
    "muscle": MuscleConfig,
    "amp_changes": AmpChangesConfig,
    "depth_variations": DepthVariationsConfig,
    "dropouts": DropoutsConfig,
}


@dataclass(frozen=True)
class CorruptionConfig:
    seed: int = 0
    gaussian: GaussianConfig = field(default_factory=GaussianConfig)
    salt_pepper: SaltPepperConfig = field(default_factory=SaltPepperConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    muscle: MuscleConfig = field(default_factory=MuscleConfig)
    amp_changes: AmpChangesConfig = field(default_factory=AmpChangesConfig)
    depth_variations: DepthVariationsConfig = field(default_factory=DepthVariationsConfig)
    dropouts: DropoutsConfig = field(default_factory=DropoutsConfig)

    def __post_init__(self):
        if not 0 <= self.seed < 2**64:
            raise InvalidInputError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def to_dict(self):
        out = {"seed": self.seed}
        for name in SECTIONS:
            out[name] = getattr(self, name).to_dict()
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        pipeline = data.pop("pipeline", None)
        if pipeline is not None and tuple(pipeline) != PIPELINE:
            raise SchemaError(f"corruption pipeline order is fixed to {list(PIPELINE)}, got {list(pipeline)}")

        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise SchemaError(f"unknown corruption fields {unknown}; expected {sorted(known)}")

        kwargs = {}
        if "seed" in data:
            kwargs["seed"] = int(data["seed"])
        for name, section_cls in SECTIONS.items():
            if name in data:
                values = section_cls().to_dict()
                values.update(data[name])
                kwargs[name] = section_cls.from_dict(values)
        return cls(**kwargs)

    @classmethod
    def disabled(cls, seed=0):
        """Configuration under which every injector leaves its input untouched"""
        return cls(
            seed=seed,
            gaussian=GaussianConfig(probability=0.0),
            salt_pepper=SaltPepperConfig(salt_prob=0.0, pepper_prob=0.0),
            baseline=BaselineConfig(amplitude=0.0),
            muscle=MuscleConfig(amplitude=0.0),
            amp_changes=AmpChangesConfig(count=0),
            depth_variations=DepthVariationsConfig(count=0),
            dropouts=DropoutsConfig(count=0),
        )


@dataclass(frozen=True)
class SeededRng:
    """A reproducible random stream identified by (seed, stream_id)"""

    seed: int
    stream_id: int = 0

    def generator(self):
        entropy = np.random.SeedSequence([self.seed, self.stream_id])
        return np.random.Generator(np.random.Philox(entropy))


@dataclass(frozen=True)
class ArtifactEvent:
    kind: str
    start: int
    stop: int
    value: float


def _as_array(x):
    return np.array(x, dtype=np.float64, copy=True)


def _draw_events(n, count, max_duration, rng):
    if n < 1:
        raise InvalidInputError("cannot place artifact events on an empty sequence")
    starts = rng.integers(0, n, size=count)
    durations = rng.integers(1, max_duration + 1, size=count)
    stops = np.minimum(starts + durations, n)
    return starts, stops


def add_gaussian(x, cfg, rng):
    g = cfg.gaussian
    out = _as_array(x)
    selected = rng.random(out.size) < g.probability
    noise = rng.standard_normal(int(selected.sum()))
    out[selected] += g.mean + g.noise_factor * g.std * noise
    return out


def add_salt_pepper(x, cfg, rng):
    sp = cfg.salt_pepper
    out = _as_array(x)
    u = rng.random(out.size)
    salt = u < sp.salt_prob
    pepper = ~salt & (u < sp.salt_prob + sp.pepper_prob)
    out[salt] = sp.salt_value
    out[pepper] = -sp.pepper_value
    return out


def add_baseline_wander(x, cfg, sample_rate):
    b = cfg.baseline
    out = _as_array(x)
    t = np.arange(out.size) / sample_rate
    return out + b.amplitude * np.sin(2.0 * np.pi * t / b.period)


def add_muscle_interference(x, cfg, rng):
    out = _as_array(x)
    return out + cfg.muscle.amplitude * rng.standard_normal(out.size)


def add_amplitude_changes(x, cfg, rng, events=None):
    """Constant offsets of ±change_factor·(peak-to-peak) over short runs"""
    ac = cfg.amp_changes
    out = _as_array(x)
    starts, stops = _draw_events(out.size, ac.count, ac.max_duration, rng)
    signs = rng.integers(0, 2, size=ac.count) * 2.0 - 1.0
    step = ac.change_factor * (np.nanmax(out) - np.nanmin(out)) if out.size else 0.0

    for start, stop, sign in zip(starts, stops, signs):
        out[start:stop] += sign * step
        if events is not None:
            events.append(ArtifactEvent("amp_change", int(start), int(stop), float(sign * step)))
    return out


def add_depth_variations(x, cfg, rng, events=None):
    """Multiplicative scaling of short runs by U[1 - factor, 1 + factor]"""
    dv = cfg.depth_variations
    out = _as_array(x)
    starts, stops = _draw_events(out.size, dv.count, dv.max_duration, rng)
    scales = rng.uniform(1.0 - dv.variation_factor, 1.0 + dv.variation_factor, size=dv.count)

    for start, stop, scale in zip(starts, stops, scales):
        out[start:stop] *= scale
        if events is not None:
            events.append(ArtifactEvent("depth_variation", int(start), int(stop), float(scale)))
    return out


def add_dropouts(x, cfg, rng, events=None):
    do = cfg.dropouts
    out = _as_array(x)
    starts, stops = _draw_events(out.size, do.count, do.max_duration, rng)

    for start, stop in zip(starts, stops):
        out[start:stop] = np.nan
        if events is not None:
            events.append(ArtifactEvent("dropout", int(start), int(stop), float("nan")))
    return out


def corrupt_channel(x, cfg, sample_rate, rng, events=None):
    """Run the full artifact pipeline on one channel"""
    out = add_gaussian(x, cfg, rng)
    out = add_salt_pepper(out, cfg, rng)
    out = add_baseline_wander(out, cfg, sample_rate)
    out = add_muscle_interference(out, cfg, rng)
    out = add_amplitude_changes(out, cfg, rng, events)
    out = add_depth_variations(out, cfg, rng, events)
    return add_dropouts(out, cfg, rng, events)


def corrupt_session(session, cfg, event_log=None):
    """
    Apply every artifact to every channel of a clean session.

    ``event_log``, when given, is filled with one list of ArtifactEvent per
    channel name.
    """
    if not session.is_clean:
        raise InvalidInputError(f"session '{session.patient_id}' is already corrupted")

    data = session.to_array()
    corrupted = np.empty_like(data)
    for k, name in enumerate(CHANNELS):
        rng = SeededRng(cfg.seed, k).generator()
        events = [] if event_log is not None else None
        corrupted[k] = corrupt_channel(data[k], cfg, session.sample_rate, rng, events)
        if event_log is not None:
            event_log[name] = events

    return session.with_data(corrupted, is_clean=False, corruption=cfg.to_dict())


class SignalCorruptor:
    """Corrupts a batch of sessions, giving each its own seed"""

    def __init__(self, cfg=None, verbose=False):
        self.cfg = cfg or CorruptionConfig()
        self.verbose = verbose

    def seed_for(self, index):
        return (self.cfg.seed + index) % 2**64

    def corrupt(self, sessions):
        corrupted = []
        for i, session in enumerate(sessions):
            cfg = CorruptionConfig.from_dict({**self.cfg.to_dict(), "seed": self.seed_for(i)})
            noisy = corrupt_session(session, cfg)
            if self.verbose:
                dropped = int(np.isnan(noisy.to_array()).sum())
                print(f"   {session.patient_id}: seed {cfg.seed}, {dropped} samples dropped")
            corrupted.append(noisy)
        return corrupted

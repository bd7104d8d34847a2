"""
Comparison methods: an NLMS linear-prediction filter and a dense vanilla
autoencoder. Both are declared stand-ins for the filter and unsupervised ML
baselines and are labelled as such in every report.
"""

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader, TensorDataset

from .dataset import CHANNELS
from .denoiser import run_windows
from .errors import InvalidInputError
from .layers import DTYPE, AdamState, LayerParams, adam_step, dense, mae_loss, relu
from .preprocessor import SignalPreprocessor, extract_windows, overlap_add, training_starts, window_starts
from .settings import ConfigMixin


@dataclass(frozen=True)
class NlmsConfig(ConfigMixin):
    order: int = 64
    mu: float = 0.1
    eps: float = 1e-6
    delay: int = 60

    def __post_init__(self):
        if self.order < 1:
            raise InvalidInputError(f"nlms order must be at least 1, got {self.order}")
        if not 0 <= self.mu <= 2:
            raise InvalidInputError(f"nlms mu must lie in [0, 2], got {self.mu}")
        if not self.eps > 0:
            raise InvalidInputError(f"nlms eps must be positive, got {self.eps}")
        if self.delay < 1:
            raise InvalidInputError(f"nlms delay must be at least 1, got {self.delay}")


@dataclass(frozen=True)
class VanillaAeConfig(ConfigMixin):
    window: int = 512
    hidden: int = 64
    learning_rate: float = 1e-3
    epochs: int = 10
    seed: int = 0
    batch_size: int = 64
    stride: int = 64

    def __post_init__(self):
        if not 0 < self.hidden < self.window:
            raise InvalidInputError(f"hidden ({self.hidden}) must be positive and below window ({self.window})")
        if self.epochs < 1 or self.batch_size < 1 or self.stride < 1:
            raise InvalidInputError("epochs, batch_size and stride must be positive")


def nlms_denoise(x, cfg=None):
    """
    Adaptive linear prediction of x from its own past.

    The reference vector holds x[i-delay], ..., x[i-delay-order+1]; weights
    start as a pure delay and follow w += mu·e·u/(eps + |u|²). Samples before
    the first full reference vector pass through unchanged.
    """
    cfg = cfg or NlmsConfig()
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise InvalidInputError("nlms input must be finite; impute dropouts first")
    if x.size <= cfg.order + cfg.delay:
        raise InvalidInputError(f"nlms needs more than {cfg.order + cfg.delay} samples, got {x.size}")

    w = np.zeros(cfg.order)
    w[0] = 1.0
    out = x.copy()
    for i in range(cfg.order + cfg.delay - 1, x.size):
        newest = i - cfg.delay
        u = x[newest - cfg.order + 1:newest + 1][::-1]
        y = w @ u
        out[i] = y
        e = x[i] - y
        w += cfg.mu * e * u / (cfg.eps + u @ u)
    return out


class NlmsDenoiser:
    def __init__(self, cfg=None):
        self.cfg = cfg or NlmsConfig()

    def denoise_prepared(self, prepared):
        return np.stack([nlms_denoise(row, self.cfg) for row in prepared.values])


class VanillaAutoencoder(nn.Module):
    """window → hidden (ReLU) → window, no residual path"""

    def __init__(self, window, hidden, generator=None):
        super().__init__()
        self.encoder = LayerParams("dense", window, hidden, generator=generator)
        self.decoder = LayerParams("dense", hidden, window, generator=generator)

    def forward(self, x):
        return dense(relu(dense(x, self.encoder)), self.decoder)

    def identity_(self, shift=10.0):
        """Exact reconstruction for inputs above -shift (needs hidden == window)"""
        window, hidden = self.encoder.weight.shape
        if hidden != window:
            raise InvalidInputError("identity initialisation needs hidden == window")
        with torch.no_grad():
            eye = torch.eye(window, dtype=DTYPE)
            self.encoder.weight.copy_(eye)
            self.encoder.bias.fill_(shift)
            self.decoder.weight.copy_(eye)
            self.decoder.bias.fill_(-shift)
        return self


class VanillaDenoiser(nn.Module):
    """One VanillaAutoencoder per channel; operates on (N, 5, window) windows"""

    def __init__(self, cfg=None, stats=None):
        super().__init__()
        self.cfg = cfg or VanillaAeConfig()
        generator = torch.Generator().manual_seed(self.cfg.seed % 2**63)
        self.per_channel = nn.ModuleDict(
            {name: VanillaAutoencoder(self.cfg.window, self.cfg.hidden, generator) for name in CHANNELS}
        )
        self.stats = stats
        self.history = {}

    def forward(self, x):
        return torch.stack([self.per_channel[name](x[:, k, :]) for k, name in enumerate(CHANNELS)], dim=1)

    def denoise_prepared(self, prepared):
        length = prepared.values.shape[1]
        starts = window_starts(length, self.cfg.window, self.cfg.window // 2)
        windows = extract_windows(prepared.values, starts, self.cfg.window)
        self.eval()
        return overlap_add(run_windows(self, windows), starts, length)


def _fit_channel(autoencoder, windows, masks, cfg, generator):
    params = list(autoencoder.parameters())
    state = AdamState.create(params, lr=cfg.learning_rate)
    dataset = TensorDataset(windows, masks)
    losses = []
    for _ in range(cfg.epochs):
        running, observed = 0.0, 0
        loader = DataLoader(dataset, batch_size=cfg.batch_size, shuffle=True, generator=generator)
        for x, m in loader:
            loss = mae_loss(autoencoder(x), x, m)
            adam_step(params, torch.autograd.grad(loss, params), state)
            n = int(m.sum())
            running += loss.item() * n
            observed += n
        losses.append(running / observed)
    return losses


def vanilla_ae_fit(sessions, cfg=None, stats=None, verbose=False):
    """Train the per-channel dense autoencoders on noisy windows (self-reconstruction)"""
    cfg = cfg or VanillaAeConfig()
    if not sessions:
        raise InvalidInputError("need at least one session to fit the vanilla autoencoder")
    preprocessor = SignalPreprocessor(stats)
    if stats is None:
        preprocessor.fit(sessions)

    values, masks = [], []
    for session in sessions:
        prepared = preprocessor.prepare(session)
        starts = training_starts(session.length, cfg.window, cfg.stride)
        if len(starts) == 0:
            raise InvalidInputError(f"session '{session.patient_id}' is shorter than one window ({cfg.window})")
        values.append(extract_windows(prepared.values, starts, cfg.window))
        masks.append(extract_windows(prepared.mask, starts, cfg.window))
    values = torch.as_tensor(np.concatenate(values), dtype=DTYPE)
    masks = torch.as_tensor(np.concatenate(masks), dtype=torch.bool)

    model = VanillaDenoiser(cfg, preprocessor.stats)
    for k, name in enumerate(CHANNELS):
        generator = torch.Generator().manual_seed((cfg.seed + k) % 2**63)
        model.history[name] = _fit_channel(model.per_channel[name], values[:, k], masks[:, k], cfg, generator)
        if verbose:
            print(f"   vanilla[{name}] final loss {model.history[name][-1]:.4f}")
    return model


def vanilla_ae_denoise(model, session):
    preprocessor = SignalPreprocessor(model.stats)
    prepared = preprocessor.prepare(session)
    estimate = model.denoise_prepared(prepared)
    return preprocessor.restore(estimate, session, method="vanilla", preprocessing_digest=prepared.digest)


def nlms_session(session, stats, cfg=None):
    """NLMS on the shared imputed/normalized path, returned in physical units"""
    preprocessor = SignalPreprocessor(stats)
    prepared = preprocessor.prepare(session)
    estimate = NlmsDenoiser(cfg).denoise_prepared(prepared)
    return preprocessor.restore(estimate, session, method="nlms", preprocessing_digest=prepared.digest)

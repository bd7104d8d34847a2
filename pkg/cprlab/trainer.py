import copy
import io
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import torch
from torch.utils.data import DataLoader, TensorDataset

from .dataset import CHANNELS
from .errors import InvalidInputError, TrainingDivergedError
from .layers import DTYPE, AdamState, adam_step, mae_loss
from .preprocessor import SignalPreprocessor, extract_windows, training_starts
from .settings import ConfigMixin


@dataclass(frozen=True)
class TrainConfig(ConfigMixin):
    batch_size: int = 64
    max_epochs: int = 50
    patience: int = 3
    learning_rate: float = 1e-3
    seed: int = 0
    val_fraction: float = 0.2
    window: int = 512
    stride: int = 16
    min_delta: float = 1e-3

    def __post_init__(self):
        if self.min_delta < 0:
            raise InvalidInputError(f"min_delta must be non-negative, got {self.min_delta}")
        if not 0 < self.val_fraction < 1:
            raise InvalidInputError(f"val_fraction must lie in (0, 1), got {self.val_fraction}")
        if self.patience < 1:
            raise InvalidInputError(f"patience must be at least 1, got {self.patience}")
        if self.batch_size < 1:
            raise InvalidInputError(f"batch_size must be at least 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise InvalidInputError(f"max_epochs must be at least 1, got {self.max_epochs}")
        if self.learning_rate < 0:
            raise InvalidInputError(f"learning_rate must be non-negative, got {self.learning_rate}")
        if self.stride < 1 or self.window < 1:
            raise InvalidInputError(f"window and stride must be positive, got {self.window}, {self.stride}")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0

    def to_dict(self):
        return {
            "train_loss": list(self.train_loss),
            "val_loss": list(self.val_loss),
            "stopped_epoch": self.stopped_epoch,
            "best_epoch": self.best_epoch,
        }

    def to_frame(self):
        return pd.DataFrame({
            "epoch": np.arange(1, len(self.train_loss) + 1),
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
        })

    def to_csv(self):
        buffer = io.StringIO()
        self.to_frame().to_csv(buffer, index=False, lineterminator="\n")
        return buffer.getvalue()


@dataclass
class WindowBatch:
    """Aligned five-channel windows with their observation masks"""

    windows: torch.Tensor
    mask: torch.Tensor
    origin: list
    stats: object = None

    def __post_init__(self):
        if self.windows.shape != self.mask.shape:
            raise InvalidInputError(
                f"window shape {tuple(self.windows.shape)} and mask shape {tuple(self.mask.shape)} differ"
            )

    def __len__(self):
        return len(self.windows)

    def loader(self, batch_size, generator=None, shuffle=False):
        return DataLoader(
            TensorDataset(self.windows, self.mask),
            batch_size=batch_size,
            shuffle=shuffle,
            generator=generator,
        )


def make_dataset(sessions, window=512, stride=64, seed=0, val_fraction=0.2, stats=None):
    """
    Cut every session into windows, shuffle them with the seed and split
    the first (1 - val_fraction) for training, the rest for validation.
    """
    if not sessions:
        raise InvalidInputError("need at least one session to build a dataset")
    preprocessor = SignalPreprocessor(stats)
    if stats is None:
        preprocessor.fit(sessions)

    windows, masks, origin = [], [], []
    for session in sessions:
        prepared = preprocessor.prepare(session)
        starts = training_starts(session.length, window, stride)
        if len(starts) == 0:
            raise InvalidInputError(
                f"session '{session.patient_id}' has {session.length} samples, fewer than one window ({window})"
            )
        windows.append(extract_windows(prepared.values, starts, window))
        masks.append(extract_windows(prepared.mask, starts, window))
        origin.extend((session.patient_id, int(s)) for s in starts)

    windows = np.concatenate(windows)
    masks = np.concatenate(masks)
    order = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed))).permutation(len(windows))

    n_val = int(math.floor(len(windows) * val_fraction))
    if n_val == 0 or n_val == len(windows):
        raise InvalidInputError(
            f"{len(windows)} windows cannot be split with val_fraction {val_fraction}"
        )
    train_idx, val_idx = order[:len(windows) - n_val], order[len(windows) - n_val:]

    def batch(idx):
        return WindowBatch(
            torch.as_tensor(windows[idx], dtype=DTYPE),
            torch.as_tensor(masks[idx], dtype=torch.bool),
            [origin[i] for i in idx],
            preprocessor.stats,
        )

    return batch(train_idx), batch(val_idx)


def validation_offsets(model, n):
    """Fixed span offsets for n validation windows, cycling through the inference passes"""
    passes = model.pass_offsets()
    return torch.tensor([passes[k % len(passes)] for k in range(n)])


def span_loss(model, x, m, offsets):
    """Masked MAE between the noisy windows and the model's output from their span-hidden copy"""
    out = model(model.hide(x, m, offsets))
    return out, mae_loss(out, x, m)


def masked_loss(model, batch, batch_size=256):
    """
    Span-hidden masked MAE over a whole WindowBatch, weights frozen. The
    hidden spans are fixed per window, so repeated calls agree exactly.
    """
    offsets = validation_offsets(model, len(batch))
    total, observed, seen = 0.0, 0, 0
    model.eval()
    with torch.no_grad():
        for x, m in batch.loader(batch_size):
            n = int(m.sum())
            _, loss = span_loss(model, x, m, offsets[seen:seen + len(x)])
            total += loss.item() * n
            observed += n
            seen += len(x)
    return total / observed


def _diverged_channel(out, x, m):
    for k, name in enumerate(CHANNELS):
        diff = (out[:, k] - x[:, k]).abs()[m[:, k]]
        if not torch.isfinite(diff).all():
            return name
    return "fusion"


def fit(model, dataset, cfg=None, verbose=True):
    """
    Unsupervised training: every noisy window is its own target under the
    masked MAE, optimised with Adam. The input has fresh random spans
    zeroed each epoch, so copying the input cannot drive the loss to its
    floor. Stops after `patience` epochs without a validation improvement
    larger than `min_delta` and restores the best-validation weights.
    """
    cfg = cfg or TrainConfig()
    train, val = dataset
    if len(train) == 0 or len(val) == 0:
        raise InvalidInputError("training and validation sets must both be non-empty")
    if train.windows.shape[-1] != model.window:
        raise InvalidInputError(
            f"dataset windows of {train.windows.shape[-1]} samples do not match model window {model.window}"
        )

    model.norm_stats = train.stats
    generator = torch.Generator().manual_seed(cfg.seed % 2**63)
    params = list(model.parameters())
    state = AdamState.create(params, lr=cfg.learning_rate)
    history = TrainHistory()

    best_val, best_state, waited = math.inf, copy.deepcopy(model.state_dict()), 0
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        running, observed = 0.0, 0
        for b, (x, m) in enumerate(train.loader(cfg.batch_size, generator, shuffle=True), start=1):
            offsets = torch.randint(0, model.hidden_period, (len(x),), generator=generator)
            out, loss = span_loss(model, x, m, offsets)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(epoch, b, _diverged_channel(out, x, m), loss.item())
            grads = torch.autograd.grad(loss, params)
            adam_step(params, grads, state)

            n = int(m.sum())
            running += loss.item() * n
            observed += n

        train_loss = running / observed
        val_loss = masked_loss(model, val)
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        history.stopped_epoch = epoch

        if verbose:
            print(f"   Epoch {epoch}/{cfg.max_epochs} - loss: {train_loss:.4f} - val_loss: {val_loss:.4f}")

        improved = val_loss < best_val - cfg.min_delta
        if val_loss < best_val:
            best_val, best_state = val_loss, copy.deepcopy(model.state_dict())
            history.best_epoch = epoch
        waited = 0 if improved else waited + 1
        if waited >= cfg.patience:
            if verbose:
                print(f"   ⏹️ Early stopping at epoch {epoch}, best epoch {history.best_epoch}")
            break

    model.load_state_dict(best_state)
    model.training_meta = {"config": cfg.to_dict(), "history": history.to_dict()}
    return model, history


class DenoiserTrainer:
    """Builds the dataset and trains a DenoiserModel in one call"""

    def __init__(self, cfg=None, verbose=True):
        self.cfg = cfg or TrainConfig()
        self.verbose = verbose

    def train(self, model, sessions):
        dataset = make_dataset(sessions, self.cfg.window, self.cfg.stride, self.cfg.seed, self.cfg.val_fraction)
        if self.verbose:
            print(f"   {len(dataset[0])} training and {len(dataset[1])} validation windows")
        return fit(model, dataset, self.cfg, verbose=self.verbose)

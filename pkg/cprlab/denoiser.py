"""
Multi-modal residual CNN denoising autoencoder.

Each channel gets its own residual 1-D convolutional autoencoder; a
pointwise feed-forward fusion network then mixes the five denoised
channels at every time step.

The model never sees the sample it is asked to reconstruct: training
zeroes periodic spans of every window (and every unobserved sample) in
the input, and inference assembles each output sample from a pass in
which that sample sat in the middle of a zeroed span.
"""

import json
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .dataset import CHANNELS, json_safe, write_atomic
from .errors import FormatError, InvalidInputError, SchemaError, VersionMismatchError
from .layers import (
    DTYPE,
    LayerParams,
    concat_channels,
    conv1d,
    dense,
    maxpool1d,
    relu,
    upsample1d,
)
from .preprocessor import NormStats, SignalPreprocessor, extract_windows, overlap_add, window_starts

CHECKPOINT_FORMAT = "cprlab-denoiser"
CHECKPOINT_VERSION = 2
DEFAULT_WINDOW = 512
POOL = 2
KERNEL = 5
ENC_FILTERS = (32, 16)
FUSION_HIDDEN = 16
HIDDEN_SPAN = 24
HIDDEN_PERIOD = 96


def hidden_mask(length, offsets, span, period):
    """(N, L) bool: True where sample i of window k falls in [offsets[k] + j·period, +span)"""
    positions = torch.arange(length)
    return (positions[None, :] - offsets[:, None]) % period < span


class ChannelAutoencoder(nn.Module):
    """
    conv(32,k5,ReLU) → pool2 → conv(16,k5,ReLU) → pool2 gives the code; a
    linear k1 residual branch is added to it, and the decoder sees the
    upsampled sum concatenated with the upsampled code.
    """

    def __init__(self, generator=None):
        super().__init__()
        wide, narrow = ENC_FILTERS
        self.enc_conv1 = LayerParams("conv1d", 1, wide, KERNEL, generator=generator)
        self.enc_conv2 = LayerParams("conv1d", wide, narrow, KERNEL, generator=generator)
        self.residual_conv = LayerParams("conv1d", narrow, narrow, 1, generator=generator)
        self.dec_conv1 = LayerParams("conv1d", 2 * narrow, narrow, KERNEL, generator=generator)
        self.dec_conv2 = LayerParams("conv1d", narrow, wide, KERNEL, generator=generator)
        self.out_conv = LayerParams("conv1d", wide, 1, KERNEL, generator=generator)

    def encode(self, x):
        h, _ = maxpool1d(relu(conv1d(x, self.enc_conv1)), POOL)
        code, _ = maxpool1d(relu(conv1d(h, self.enc_conv2)), POOL)
        return code

    def forward(self, x):
        code = self.encode(x)
        combined = code + conv1d(code, self.residual_conv)

        h = concat_channels(upsample1d(combined, POOL), upsample1d(code, POOL))
        h = upsample1d(relu(conv1d(h, self.dec_conv1)), POOL)
        h = relu(conv1d(h, self.dec_conv2))
        return conv1d(h, self.out_conv)


class FusionNetwork(nn.Module):
    """Per-time-step 5 → 16 (ReLU) → 5 feed-forward combiner"""

    def __init__(self, generator=None):
        super().__init__()
        n = len(CHANNELS)
        self.hidden = LayerParams("dense", n, FUSION_HIDDEN, generator=generator)
        self.output = LayerParams("dense", FUSION_HIDDEN, n, generator=generator)

    def forward(self, x):
        h = x.transpose(1, 2)
        h = dense(relu(dense(h, self.hidden)), self.output)
        return h.transpose(1, 2)

    def identity_(self):
        """Set weights so that relu(x) - relu(-x) passes the input through"""
        n = len(CHANNELS)
        with torch.no_grad():
            self.hidden.weight.zero_()
            self.hidden.bias.zero_()
            self.output.weight.zero_()
            self.output.bias.zero_()
            for i in range(n):
                self.hidden.weight[i, i] = 1.0
                self.hidden.weight[i, n + i] = -1.0
                self.output.weight[i, i] = 1.0
                self.output.weight[n + i, i] = -1.0
        return self


class DenoiserModel(nn.Module):
    """
    Five ChannelAutoencoders plus the fusion network. The fusion starts as
    the identity, so channels only mix once training finds it worthwhile.
    """

    def __init__(self, seed=0, window=DEFAULT_WINDOW, stride=None, norm_stats=None,
                 hidden_span=HIDDEN_SPAN, hidden_period=HIDDEN_PERIOD):
        super().__init__()
        if window % (POOL * POOL):
            raise InvalidInputError(f"window must be divisible by {POOL * POOL}, got {window}")
        if hidden_span < 4 or hidden_span % 4 or hidden_period <= hidden_span or hidden_period % (hidden_span // 2):
            raise InvalidInputError(
                f"hidden_span must be a positive multiple of 4 and hidden_period a larger multiple of "
                f"hidden_span/2, got {hidden_span}, {hidden_period}"
            )
        generator = torch.Generator().manual_seed(seed % 2**63)
        self.per_channel = nn.ModuleDict({name: ChannelAutoencoder(generator) for name in CHANNELS})
        self.fusion = FusionNetwork(generator).identity_()
        self.seed = seed
        self.window = window
        self.stride = stride or window // 2
        self.hidden_span = hidden_span
        self.hidden_period = hidden_period
        self.norm_stats = norm_stats
        self.version = CHECKPOINT_VERSION
        self.training_meta = {}

    def forward(self, x):
        """(N, 5, L) normalized windows → (N, 5, L) fused reconstruction"""
        outputs = [self.per_channel[name](x[:, k:k + 1, :]) for k, name in enumerate(CHANNELS)]
        return self.fusion(torch.cat(outputs, dim=1))

    def hide(self, x, observed, offsets):
        """Zero the unobserved samples and the hidden spans starting at `offsets` (one per window)"""
        spans = hidden_mask(x.shape[-1], offsets, self.hidden_span, self.hidden_period)
        return x.masked_fill(~observed | spans[:, None, :], 0.0)

    def pass_offsets(self):
        """Span offsets of the inference passes; each sample is mid-span in exactly one"""
        half, quarter = self.hidden_span // 2, self.hidden_span // 4
        return [g * half - quarter for g in range(self.hidden_period // half)]

    def reconstruct(self, x, observed=None):
        """Denoise (N, 5, L) windows without ever showing a sample to its own prediction"""
        if observed is None:
            observed = torch.ones_like(x, dtype=torch.bool)
        quarter = self.hidden_span // 4
        positions = torch.arange(x.shape[-1])
        out = torch.empty_like(x)
        for offset in self.pass_offsets():
            pred = self(self.hide(x, observed, torch.full((len(x),), offset)))
            phase = (positions - offset) % self.hidden_period
            central = (phase >= quarter) & (phase < self.hidden_span - quarter)
            out[..., central] = pred[..., central]
        return out

    def parameter_count(self):
        return sum(p.numel() for p in self.parameters())


def build_model(seed=0, window=DEFAULT_WINDOW, stride=None, hidden_span=HIDDEN_SPAN, hidden_period=HIDDEN_PERIOD):
    return DenoiserModel(seed=seed, window=window, stride=stride, hidden_span=hidden_span,
                         hidden_period=hidden_period)


def forward_channel(model, channel, window):
    if channel not in model.per_channel:
        raise InvalidInputError(f"unknown channel '{channel}'")
    return model.per_channel[channel](window)


def fuse(model, windows):
    """Fuse five (N, 1, L) channel outputs, given in canonical order"""
    if len(windows) != len(CHANNELS):
        raise InvalidInputError(f"fusion needs {len(CHANNELS)} channel windows, got {len(windows)}")
    lengths = {w.shape[-1] for w in windows}
    if len(lengths) != 1:
        raise InvalidInputError(f"channel windows differ in length: {sorted(lengths)}")
    return model.fusion(torch.cat(list(windows), dim=1))


def run_windows(network, windows, masks=None, batch_size=64):
    """
    Apply a window network over (N, C, W) numpy windows, batch by batch.
    With ``masks`` the network is called as network(batch, observed).
    """
    outputs = []
    with torch.no_grad():
        for i in range(0, len(windows), batch_size):
            batch = torch.as_tensor(windows[i:i + batch_size], dtype=DTYPE)
            if masks is None:
                outputs.append(network(batch).numpy())
            else:
                observed = torch.as_tensor(masks[i:i + batch_size], dtype=torch.bool)
                outputs.append(network(batch, observed).numpy())
    return np.concatenate(outputs)


def denoise_prepared(model, prepared, network=None):
    """
    Denoise an imputed, normalized session; returns the normalized estimate.

    ``network`` replaces the model's span-hiding reconstruction when given.
    """
    length = prepared.values.shape[1]
    starts = window_starts(length, model.window, model.stride)
    windows = extract_windows(prepared.values, starts, model.window)
    model.eval()
    if network is None:
        masks = extract_windows(prepared.mask, starts, model.window)
        estimate = run_windows(model.reconstruct, windows, masks)
    else:
        estimate = run_windows(network, windows)
    return overlap_add(estimate, starts, length)


def denoise_session(model, session):
    if model.norm_stats is None:
        raise InvalidInputError("model has no normalization stats; train it before denoising")
    if session.length < model.window:
        raise InvalidInputError(
            f"session '{session.patient_id}' has {session.length} samples, fewer than one window ({model.window})"
        )
    preprocessor = SignalPreprocessor(model.norm_stats)
    prepared = preprocessor.prepare(session)
    estimate = denoise_prepared(model, prepared)
    return preprocessor.restore(estimate, session, method="proposed", preprocessing_digest=prepared.digest)


def _header(model, entries):
    return {
        "format": CHECKPOINT_FORMAT,
        "version": model.version,
        "seed": model.seed,
        "window": model.window,
        "stride": model.stride,
        "hidden_span": model.hidden_span,
        "hidden_period": model.hidden_period,
        "channels": list(CHANNELS),
        "norm_stats": model.norm_stats.to_dict() if model.norm_stats else None,
        "training": model.training_meta,
        "tensors": entries,
    }


def save_model(model, path):
    """JSON header line, newline, then the little-endian float64 payload"""
    entries, chunks, offset = [], [], 0
    for name, tensor in model.state_dict().items():
        raw = tensor.detach().cpu().numpy().astype("<f8").tobytes()
        entries.append({"name": name, "shape": list(tensor.shape), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)

    header = json.dumps(json_safe(_header(model, entries)), sort_keys=True, separators=(",", ":"), allow_nan=False)
    return write_atomic(path, header.encode("utf-8") + b"\n" + b"".join(chunks))


def load_model(path):
    try:
        blob = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read checkpoint {path}: {e}")

    head, sep, payload = blob.partition(b"\n")
    if not sep:
        raise FormatError(f"checkpoint {path} has no header line")
    try:
        header = json.loads(head.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"checkpoint {path} has a corrupted header: {e}")
    if not isinstance(header, dict) or header.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path} is not a {CHECKPOINT_FORMAT} checkpoint")
    if header.get("version") != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"checkpoint {path} has version {header.get('version')}, this build reads version {CHECKPOINT_VERSION}"
        )
    if header.get("channels") != list(CHANNELS):
        raise FormatError(f"checkpoint {path} channels {header.get('channels')} are not {list(CHANNELS)}")

    try:
        model = DenoiserModel(seed=header["seed"], window=header["window"], stride=header["stride"],
                              hidden_span=header["hidden_span"], hidden_period=header["hidden_period"])
        expected = model.state_dict()
        state = {}
        for entry in header["tensors"]:
            name, shape = entry["name"], tuple(entry["shape"])
            if name not in expected or tuple(expected[name].shape) != shape:
                raise FormatError(f"checkpoint tensor '{name}' {shape} does not fit the architecture")
            start, stop = entry["offset"], entry["offset"] + entry["nbytes"]
            if stop > len(payload) or entry["nbytes"] != 8 * int(np.prod(shape)):
                raise FormatError(f"checkpoint payload is truncated at tensor '{name}'")
            values = np.frombuffer(payload[start:stop], dtype="<f8").reshape(shape)
            state[name] = torch.from_numpy(values.astype(np.float64))
        missing = sorted(set(expected) - set(state))
        if missing:
            raise FormatError(f"checkpoint {path} lacks tensors {missing}")
        model.load_state_dict(state)
        if header["norm_stats"] is not None:
            model.norm_stats = NormStats.from_dict(header["norm_stats"])
    except (KeyError, TypeError, ValueError, SchemaError) as e:
        raise FormatError(f"checkpoint {path} has a malformed header: {e}")

    model.training_meta = header.get("training", {})
    return model

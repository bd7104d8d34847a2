"""
Functional layer core used by the denoisers.

Tensors are float64 and laid out (batch, channels, length). Each layer reads
its parameters from a ``LayerParams`` module; gradients come from torch
autograd and ``grad_check`` compares them against central finite
differences.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .errors import InvalidInputError, ShapeError

DTYPE = torch.float64


class LayerParams(nn.Module):
    """Weights and hyperparameters of one conv1d or dense layer"""

    def __init__(self, kind, in_dim, out_dim, kernel_size=1, padding="same", generator=None):
        super().__init__()
        if kind not in ("conv1d", "dense"):
            raise InvalidInputError(f"unknown layer kind '{kind}'")
        if kind == "conv1d" and padding == "same" and kernel_size % 2 == 0:
            raise InvalidInputError(f"'same' padding needs an odd kernel, got {kernel_size}")
        self.kind = kind
        self.in_dim = in_dim
        self.filters = out_dim
        self.kernel_size = kernel_size if kind == "conv1d" else 1
        self.padding = padding if kind == "conv1d" else "none"

        shape = (out_dim, in_dim, kernel_size) if kind == "conv1d" else (in_dim, out_dim)
        self.weight = nn.Parameter(torch.empty(shape, dtype=DTYPE))
        self.bias = nn.Parameter(torch.zeros(out_dim, dtype=DTYPE))
        self.reset_parameters(generator)

    @property
    def fan_in(self):
        return self.in_dim * self.kernel_size

    @property
    def fan_out(self):
        return self.filters * self.kernel_size

    def reset_parameters(self, generator=None):
        """Uniform in ±sqrt(6/(fan_in+fan_out)), zero bias"""
        bound = math.sqrt(6.0 / (self.fan_in + self.fan_out))
        with torch.no_grad():
            self.weight.uniform_(-bound, bound, generator=generator)
            self.bias.zero_()

    def extra_repr(self):
        return f"kind={self.kind}, in={self.in_dim}, out={self.filters}, kernel={self.kernel_size}"


def _check_channels(x, p):
    if x.dim() != 3 or x.shape[1] != p.in_dim:
        raise ShapeError(
            f"{p.kind} input shape {tuple(x.shape)} does not match weight shape {tuple(p.weight.shape)}"
        )


def conv1d(x, p):
    """Cross-correlation (no kernel flip), stride 1, zero 'same' padding or none"""
    _check_channels(x, p)
    pad = p.kernel_size // 2 if p.padding == "same" else 0
    return F.conv1d(x, p.weight, p.bias, stride=1, padding=pad)


def maxpool1d(x, pool):
    """Non-overlapping max pooling; returns the pooled tensor and argmax indices"""
    if pool < 1:
        raise InvalidInputError(f"pool size must be at least 1, got {pool}")
    if x.shape[-1] % pool:
        raise ShapeError(f"length {x.shape[-1]} of input shape {tuple(x.shape)} is not divisible by pool {pool}")
    return F.max_pool1d(x, pool, stride=pool, return_indices=True)


def upsample1d(x, factor):
    """Nearest-neighbour repetition along the length axis"""
    if factor < 1:
        raise InvalidInputError(f"upsample factor must be at least 1, got {factor}")
    return torch.repeat_interleave(x, factor, dim=-1)


def relu(x):
    return torch.relu(x)


def dense(x, p):
    """Affine map over the last axis: x @ W + b"""
    if x.shape[-1] != p.in_dim:
        raise ShapeError(f"dense input shape {tuple(x.shape)} does not match weight shape {tuple(p.weight.shape)}")
    return x @ p.weight + p.bias


def concat_channels(a, b):
    if a.shape[0] != b.shape[0] or a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"cannot concatenate channels of shapes {tuple(a.shape)} and {tuple(b.shape)}")
    return torch.cat([a, b], dim=1)


def mae_loss(pred, target, mask=None):
    """
    Mean absolute error over unmasked positions (mask True = observed).

    The gradient is sign(pred - target)/n_unmasked, zero at ties and at
    masked positions.
    """
    if pred.shape != target.shape:
        raise ShapeError(f"prediction shape {tuple(pred.shape)} does not match target shape {tuple(target.shape)}")
    diff = (pred - target).abs()
    if mask is None:
        return diff.mean()
    if mask.shape != pred.shape:
        raise ShapeError(f"mask shape {tuple(mask.shape)} does not match prediction shape {tuple(pred.shape)}")
    n_observed = mask.sum()
    if n_observed == 0:
        raise InvalidInputError("every position is masked; the loss is undefined")
    return torch.where(mask, diff, torch.zeros_like(diff)).sum() / n_observed


def layer_backward(layer, x, p, grad_output):
    """(dL/dx, dL/dw, dL/db) of a conv1d or dense layer given dL/dy"""
    x = x.detach().requires_grad_(True)
    out = layer(x, p)
    if out.shape != grad_output.shape:
        raise ShapeError(f"gradient shape {tuple(grad_output.shape)} does not match output shape {tuple(out.shape)}")
    return torch.autograd.grad(out, (x, p.weight, p.bias), grad_outputs=grad_output)


@dataclass
class AdamState:
    """Adam optimizer state for one group of parameters"""

    optimizer: torch.optim.Adam

    @classmethod
    def create(cls, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise InvalidInputError(f"Adam betas must lie in [0, 1), got {(beta1, beta2)}")
        if not eps > 0:
            raise InvalidInputError(f"Adam eps must be positive, got {eps}")
        optimizer = torch.optim.Adam(list(params), lr=lr, betas=(beta1, beta2), eps=eps, foreach=False)
        return cls(optimizer)

    @property
    def params(self):
        return self.optimizer.param_groups[0]["params"]

    @property
    def lr(self):
        return self.optimizer.param_groups[0]["lr"]

    @property
    def t(self):
        state = self.optimizer.state.get(self.params[0], {})
        return int(state.get("step", 0))

    def moments(self):
        """(m, v) per parameter; zeros before the first step"""
        out = []
        for p in self.params:
            state = self.optimizer.state.get(p, {})
            out.append((state.get("exp_avg", torch.zeros_like(p)), state.get("exp_avg_sq", torch.zeros_like(p))))
        return out


def adam_step(params, grads, state):
    """One bias-corrected Adam update of params in place"""
    params = list(params)
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        p.grad = torch.zeros_like(p) if g is None else g.detach().clone()
    state.optimizer.step()
    return params, state


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    checked: int
    skipped: int
    worst: tuple

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance


def _numeric_partial(fragment, tensors, k, index, h):
    target = tensors[k]
    with torch.no_grad():
        original = target[index].item()
        target[index] = original + h
        up = fragment(*tensors).item()
        target[index] = original - h
        down = fragment(*tensors).item()
        target[index] = original
    return (up - down) / (2.0 * h)


def grad_check(fragment, inputs, tolerance=1e-4, h=1e-5, max_checks=None, seed=0, analytic=None, floor=1e-5):
    """
    Compare reverse-mode gradients of a scalar fragment with central differences.

    ``fragment(*inputs)`` must return a scalar tensor. ``analytic`` overrides
    the autograd gradients (one tensor per input). Coordinates whose step-h
    and step-h/2 estimates disagree sit next to a ReLU kink or pooling tie;
    they are skipped and another coordinate is drawn.
    """
    tensors = [t.detach().clone().to(DTYPE) for t in inputs]
    if analytic is None:
        leaves = [t.clone().requires_grad_(True) for t in tensors]
        analytic = torch.autograd.grad(fragment(*leaves), leaves, allow_unused=True)
    analytic = [torch.zeros_like(t) if g is None else g.detach() for t, g in zip(tensors, analytic)]

    coords = [(k, idx) for k, t in enumerate(tensors) for idx in np.ndindex(*t.shape)]
    order = np.random.default_rng(seed).permutation(len(coords))
    budget = len(coords) if max_checks is None else min(max_checks, len(coords))

    worst_err, worst, checked, skipped = 0.0, (), 0, 0
    for pos in order:
        if checked >= budget:
            break
        k, idx = coords[pos]
        numeric = _numeric_partial(fragment, tensors, k, idx, h)
        numeric_half = _numeric_partial(fragment, tensors, k, idx, h / 2)
        scale = max(abs(numeric), abs(numeric_half), floor)
        if abs(numeric - numeric_half) > 1e-3 * scale:
            skipped += 1
            continue

        a = analytic[k][idx].item()
        err = abs(a - numeric) / max(abs(a), abs(numeric), floor)
        if err > worst_err:
            worst_err, worst = err, (k, idx)
        checked += 1

    return GradCheckReport(worst_err, tolerance, checked, skipped, worst)

"""Float64 tensor plumbing: gradients, finite-difference checks, layers, checkpoints.

Arrays are ``torch.Tensor`` objects in float64. Torch's define-by-run tape
records every forward pass, so recurrent unrolling needs nothing special;
this module adds the pieces the rest of the package relies on: parameter
initialisation, the small layer library (linear, MLP, batch norm, LSTM and
GRU steps) and the checkpoint file format.
"""
from __future__ import annotations

import json
import math
import struct
import zlib
from collections.abc import Callable, Mapping, Sequence
from pathlib import Path

import numpy as np
import torch
from torch import nn
import torch.nn.functional as F

DTYPE = torch.float64

BN_EPS = 1e-5
BN_MOMENTUM = 0.1

CHECKPOINT_MAGIC = b"LOCSCKPT"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    """Raised for malformed or corrupted checkpoint files."""


def as_tensor(x) -> torch.Tensor:
    return torch.as_tensor(x, dtype=DTYPE)


# --------------------------------------------------------------------------
# gradients

def evaluate_with_gradients(output: torch.Tensor,
                            params: Mapping[str, torch.Tensor]) -> dict[str, torch.Tensor]:
    """Return d(output)/d(param) for every named parameter.

    Parameters not reachable from ``output`` get a zero gradient.
    """
    if output.numel() != 1:
        raise ValueError(f"output must be a scalar, got shape {tuple(output.shape)}")
    names = list(params)
    tensors = [params[n] for n in names]
    grads = torch.autograd.grad(output.reshape(()), tensors, allow_unused=True,
                                retain_graph=True)
    return {n: torch.zeros_like(t) if g is None else g
            for n, t, g in zip(names, tensors, grads)}


def gradient_check(f: Callable[[torch.Tensor], torch.Tensor], point, h: float = 1e-5,
                   coords: Sequence[int] | None = None) -> float:
    """Max relative error between autodiff and central differences.

    The error for a coordinate is ``|ad - fd| / max(1, |fd|)``. ``coords``
    restricts the comparison to a subset of flat indices of ``point``; by
    default every coordinate is checked.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    x = as_tensor(point).detach().clone()
    xg = x.clone().requires_grad_(True)
    (ad,) = torch.autograd.grad(f(xg).reshape(()), xg, allow_unused=True)
    ad = torch.zeros_like(x) if ad is None else ad
    flat_ad = ad.reshape(-1)
    idx = range(x.numel()) if coords is None else coords
    worst = 0.0
    with torch.no_grad():
        for k in idx:
            xp = x.clone().reshape(-1)
            xm = x.clone().reshape(-1)
            xp[k] += h
            xm[k] -= h
            fp = float(f(xp.reshape(x.shape)))
            fm = float(f(xm.reshape(x.shape)))
            if not (math.isfinite(fp) and math.isfinite(fm)):
                raise FloatingPointError(f"non-finite function value at coordinate {k}")
            fd = (fp - fm) / (2 * h)
            err = abs(float(flat_ad[k]) - fd) / max(1.0, abs(fd))
            worst = max(worst, err)
    return worst


# --------------------------------------------------------------------------
# layers

ACTIVATIONS: dict[str, Callable[[torch.Tensor], torch.Tensor]] = {
    "elu": lambda x: F.elu(x, alpha=1.0),
    "relu": F.relu,
    "tanh": torch.tanh,
    "sigmoid": torch.sigmoid,
    "identity": lambda x: x,
}


def uniform_init_(t: torch.Tensor, fan_in: int) -> torch.Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    with torch.no_grad():
        return t.uniform_(-bound, bound)


class Linear(nn.Module):
    def __init__(self, in_features: int, out_features: int, bias: bool = True):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.weight = nn.Parameter(uniform_init_(torch.empty(out_features, in_features, dtype=DTYPE), in_features))
        if bias:
            self.bias = nn.Parameter(uniform_init_(torch.empty(out_features, dtype=DTYPE), in_features))
        else:
            self.register_parameter("bias", None)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.in_features:
            raise ValueError(f"expected last dim {self.in_features}, got {x.shape[-1]}")
        return F.linear(x, self.weight, self.bias)


class BatchNorm(nn.Module):
    """Batch normalisation over the last axis; all leading axes form the batch."""

    def __init__(self, features: int, eps: float = BN_EPS, momentum: float = BN_MOMENTUM):
        super().__init__()
        self.features = features
        self.eps = eps
        self.momentum = momentum
        self.weight = nn.Parameter(torch.ones(features, dtype=DTYPE))
        self.bias = nn.Parameter(torch.zeros(features, dtype=DTYPE))
        self.register_buffer("running_mean", torch.zeros(features, dtype=DTYPE))
        self.register_buffer("running_var", torch.ones(features, dtype=DTYPE))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        flat = x.reshape(-1, self.features)
        if self.training:
            n = flat.shape[0]
            if n < 2:
                raise ValueError("batch norm in training mode needs more than one sample")
            mean = flat.mean(0)
            var = flat.var(0, unbiased=False)
            with torch.no_grad():
                self.running_mean.mul_(1 - self.momentum).add_(self.momentum * mean)
                self.running_var.mul_(1 - self.momentum).add_(self.momentum * var * n / (n - 1))
        else:
            mean, var = self.running_mean, self.running_var
        out = (flat - mean) / torch.sqrt(var + self.eps) * self.weight + self.bias
        return out.reshape(x.shape)

    def affine(self) -> tuple[torch.Tensor, torch.Tensor]:
        """Scale and shift of the inference-mode map ``x -> a * x + b``."""
        a = self.weight / torch.sqrt(self.running_var + self.eps)
        return a, self.bias - a * self.running_mean


class MLP(nn.Module):
    """Stack of linear layers, one activation per layer, optional trailing batch norm.

    ``MLP([12, 256, 256], ["elu", "elu"], batch_norm=True)`` is a 2-layer
    network with ELU after both layers and batch norm on the output.
    """

    def __init__(self, sizes: Sequence[int], activations: Sequence[str], batch_norm: bool = False):
        super().__init__()
        if len(sizes) < 2 or len(activations) != len(sizes) - 1:
            raise ValueError("need len(activations) == len(sizes) - 1 >= 1")
        unknown = set(activations) - set(ACTIVATIONS)
        if unknown:
            raise ValueError(f"unknown activations: {sorted(unknown)}")
        self.sizes = list(sizes)
        self.activations = list(activations)
        self.layers = nn.ModuleList(Linear(a, b) for a, b in zip(sizes[:-1], sizes[1:]))
        self.bn = BatchNorm(sizes[-1]) if batch_norm else None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        for layer, act in zip(self.layers, self.activations):
            x = ACTIVATIONS[act](layer(x))
        if self.bn is not None:
            x = self.bn(x)
        return x


def mlp_apply(mlp: MLP, x: torch.Tensor) -> torch.Tensor:
    return mlp(x)


def lstm_step(params: Mapping[str, torch.Tensor], x: torch.Tensor,
              state: tuple[torch.Tensor, torch.Tensor]) -> tuple[torch.Tensor, torch.Tensor]:
    """One LSTM step. Gate rows of the weights are ordered input, forget, cell, output."""
    h, c = state
    gates = F.linear(x, params["w_ih"], params["b_ih"]) + F.linear(h, params["w_hh"], params["b_hh"])
    i, f, g, o = gates.chunk(4, dim=-1)
    c_new = torch.sigmoid(f) * c + torch.sigmoid(i) * torch.tanh(g)
    h_new = torch.sigmoid(o) * torch.tanh(c_new)
    return h_new, c_new


def gru_step(params: Mapping[str, torch.Tensor], x: torch.Tensor, h: torch.Tensor) -> torch.Tensor:
    """One GRU step. Gate rows are ordered reset, update, candidate."""
    gx = F.linear(x, params["w_ih"], params["b_ih"])
    gh = F.linear(h, params["w_hh"], params["b_hh"])
    xr, xz, xn = gx.chunk(3, dim=-1)
    hr, hz, hn = gh.chunk(3, dim=-1)
    r = torch.sigmoid(xr + hr)
    z = torch.sigmoid(xz + hz)
    n = torch.tanh(xn + r * hn)
    return (1 - z) * n + z * h


class _RecurrentCell(nn.Module):
    gates = 1

    def __init__(self, input_size: int, hidden_size: int):
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        g = self.gates * hidden_size
        self.w_ih = nn.Parameter(uniform_init_(torch.empty(g, input_size, dtype=DTYPE), input_size))
        self.w_hh = nn.Parameter(uniform_init_(torch.empty(g, hidden_size, dtype=DTYPE), hidden_size))
        self.b_ih = nn.Parameter(uniform_init_(torch.empty(g, dtype=DTYPE), hidden_size))
        self.b_hh = nn.Parameter(uniform_init_(torch.empty(g, dtype=DTYPE), hidden_size))

    def params(self) -> dict[str, torch.Tensor]:
        return {"w_ih": self.w_ih, "w_hh": self.w_hh, "b_ih": self.b_ih, "b_hh": self.b_hh}

    def zero_state(self, *lead: int) -> torch.Tensor:
        return torch.zeros(*lead, self.hidden_size, dtype=DTYPE)


class LSTMCell(_RecurrentCell):
    gates = 4

    def forward(self, x, state=None):
        if state is None:
            z = self.zero_state(*x.shape[:-1])
            state = (z, z)
        return lstm_step(self.params(), x, state)


class GRUCell(_RecurrentCell):
    gates = 3

    def forward(self, x, h=None):
        if h is None:
            h = self.zero_state(*x.shape[:-1])
        return gru_step(self.params(), x, h)


# --------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, tensors: Mapping[str, torch.Tensor], header: Mapping | None = None) -> None:
    """Write ``tensors`` as one file: magic, JSON header, little-endian f8 blocks."""
    names = list(tensors)
    blocks = [np.ascontiguousarray(tensors[n].detach().cpu().numpy(), dtype="<f8") for n in names]
    payload = b"".join(b.tobytes() for b in blocks)
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "config": dict(header or {}),
        "manifest": [{"name": n, "shape": list(b.shape)} for n, b in zip(names, blocks)],
        "payload_bytes": len(payload),
        "crc32": zlib.crc32(payload),
    }
    head = json.dumps(meta, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<Q", len(head)))
        fh.write(head)
        fh.write(payload)


def read_checkpoint_header(path) -> dict:
    with open(path, "rb") as fh:
        return _read_header(fh, Path(path))


def _read_header(fh, path: Path) -> dict:
    if fh.read(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    raw = fh.read(8)
    if len(raw) != 8:
        raise CheckpointError(f"{path}: truncated header length")
    (n,) = struct.unpack("<Q", raw)
    head = fh.read(n)
    if len(head) != n:
        raise CheckpointError(f"{path}: truncated header")
    try:
        meta = json.loads(head)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: malformed header: {exc}") from None
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {meta.get('format_version')}")
    return meta


def load_checkpoint(path) -> tuple[dict, dict[str, torch.Tensor]]:
    """Return ``(header, tensors)``; raises CheckpointError on any inconsistency."""
    path = Path(path)
    with open(path, "rb") as fh:
        meta = _read_header(fh, path)
        payload = fh.read()
    if len(payload) != meta["payload_bytes"]:
        raise CheckpointError(f"{path}: payload is {len(payload)} bytes, expected {meta['payload_bytes']}")
    if zlib.crc32(payload) != meta["crc32"]:
        raise CheckpointError(f"{path}: payload checksum mismatch")
    tensors = {}
    offset = 0
    for entry in meta["manifest"]:
        count = int(np.prod(entry["shape"], dtype=np.int64))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset).reshape(entry["shape"])
        tensors[entry["name"]] = torch.from_numpy(arr.astype(np.float64))
        offset += 8 * count
    if offset != len(payload):
        raise CheckpointError(f"{path}: manifest does not cover the payload")
    return meta["config"], tensors

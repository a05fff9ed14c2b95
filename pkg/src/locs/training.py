"""Seeded model construction and the teacher-forced training loop."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, fields

import numpy as np
import torch

from .model import LoCS, ModelConfig
from .tensor_core import DTYPE

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 20
    lr: float = 5e-4
    batch_size: int = 8
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def validate(self) -> "TrainConfig":
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        d = dict(d)
        if "betas" in d:
            d["betas"] = tuple(d["betas"])
        return cls(**d).validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(d["betas"])
        return d


def build_model(config: ModelConfig, seed: int) -> LoCS:
    """Instantiate :class:`LoCS` with weights drawn from ``seed`` only."""
    with torch.random.fork_rng():
        torch.manual_seed(seed)
        return LoCS(config)


class NonFiniteLossError(FloatingPointError):
    """Raised when a training step produces a NaN or infinite loss."""


def train_model(model: LoCS, trajectories: np.ndarray, config: TrainConfig,
                callback=None) -> list[dict]:
    """Minimise the negative ELBO on normalised ``[S, T, N, F]`` trajectories.

    Returns one record per epoch with the mean loss, NLL and KL. ``callback``
    (if given) receives each record as it is produced.
    """
    config.validate()
    x_all = torch.as_tensor(trajectories, dtype=DTYPE)
    rng = np.random.default_rng(config.seed)
    gen = torch.Generator().manual_seed(config.seed)
    opt = torch.optim.Adam(model.parameters(), lr=config.lr, betas=config.betas, eps=config.eps)
    history = []
    model.train()
    for epoch in range(config.epochs):
        totals = {"loss": 0.0, "nll": 0.0, "kl": 0.0}
        order = rng.permutation(len(x_all))
        batches = [order[i:i + config.batch_size] for i in range(0, len(order), config.batch_size)]
        for step, idx in enumerate(batches):
            out = model.loss(x_all[torch.as_tensor(idx)], gen)
            value = out["loss"].item()
            if not math.isfinite(value):
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch} step {step}: "
                    f"nll={out['nll'].item()} kl={out['kl'].item()} scenes={idx.tolist()}")
            opt.zero_grad()
            out["loss"].backward()
            opt.step()
            for k in totals:
                totals[k] += out[k].item() * len(idx)
        record = {"epoch": epoch, **{k: v / len(x_all) for k, v in totals.items()}}
        history.append(record)
        log.info("epoch %d loss %.4f nll %.4f kl %.4f", epoch, record["loss"], record["nll"], record["kl"])
        if callback is not None:
            callback(record)
    model.eval()
    return history

"""Input scaling for trajectory arrays of shape ``[..., 2D]`` or ``[..., 2D + A]``.

Speed mode divides positions and velocities by the largest speed seen in
the training data, which keeps directions intact. Minmax mode maps each
position and velocity axis to ``[-1, 1]`` separately; it is kept as an
ablation because it distorts geometry. Orientation channels pass through.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_trajectories

NORM_MODES = ("none", "speed", "minmax")


@dataclass(frozen=True)
class NormSpec:
    mode: str = "speed"
    dim: int = 2
    s_max: float = 1.0
    mins: tuple[float, ...] | None = None
    maxs: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.mode not in NORM_MODES:
            raise ValueError(f"mode must be one of {NORM_MODES}")
        if self.mode == "speed" and not self.s_max > 0:
            raise ValueError("s_max must be positive")
        if self.mode == "minmax":
            if self.mins is None or self.maxs is None or len(self.mins) != 2 * self.dim:
                raise ValueError("minmax mode needs 2D mins and maxs")
            if any(hi <= lo for lo, hi in zip(self.mins, self.maxs)):
                raise ValueError("minmax ranges must be non-degenerate")

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("mins", "maxs"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "NormSpec":
        d = dict(d)
        for k in ("mins", "maxs"):
            if d.get(k) is not None:
                d[k] = tuple(float(v) for v in d[k])
        return cls(**d)


def fit_norm(trajectories, dim: int, mode: str = "speed") -> NormSpec:
    """Fit a :class:`NormSpec` on training trajectories ``[..., 2D(+A)]``."""
    x = np.asarray(trajectories, dtype=np.float64)
    if mode == "none":
        return NormSpec("none", dim)
    if mode == "speed":
        return NormSpec("speed", dim, float(np.linalg.norm(x[..., dim:2 * dim], axis=-1).max()))
    if mode == "minmax":
        flat = x[..., :2 * dim].reshape(-1, 2 * dim)
        return NormSpec("minmax", dim, mins=tuple(flat.min(0).tolist()), maxs=tuple(flat.max(0).tolist()))
    raise ValueError(f"mode must be one of {NORM_MODES}")


def normalize(x, spec: NormSpec):
    """Scale the ``[p, u]`` channels of ``x`` (numpy or torch) into model space."""
    d = spec.dim
    if spec.mode == "none":
        return x
    if spec.mode == "speed":
        return _apply(x, d, lambda v: v / spec.s_max)
    lo, hi = _bounds(x, spec)
    return _apply(x, d, lambda v: (v - lo) / (hi - lo) * 2 - 1)


def denormalize(x, spec: NormSpec):
    """Exact inverse of :func:`normalize` on the ``[p, u]`` channels."""
    d = spec.dim
    if spec.mode == "none":
        return x
    if spec.mode == "speed":
        return _apply(x, d, lambda v: v * spec.s_max)
    lo, hi = _bounds(x, spec)
    return _apply(x, d, lambda v: (v + 1) / 2 * (hi - lo) + lo)


def _bounds(x, spec: NormSpec):
    lo, hi = np.asarray(spec.mins), np.asarray(spec.maxs)
    if not isinstance(x, np.ndarray):
        import torch
        lo, hi = torch.as_tensor(lo, dtype=x.dtype), torch.as_tensor(hi, dtype=x.dtype)
    return lo, hi


def _apply(x, d: int, fn):
    if x.shape[-1] < 2 * d:
        raise ValueError(f"expected at least {2 * d} features, got {x.shape[-1]}")
    head = fn(x[..., :2 * d])
    if x.shape[-1] == 2 * d:
        return head
    rest = x[..., 2 * d:]
    if isinstance(x, np.ndarray):
        return np.concatenate([head, rest], -1)
    import torch
    return torch.cat([head, rest], -1)


class _Normalizer(TransformerMixin, BaseEstimator):
    mode = "none"

    def __init__(self, dim: int = 2):
        self.dim = dim

    def fit(self, X, y=None):
        X = check_trajectories(X, self.dim, ndim=np.ndim(X))
        self.spec_ = fit_norm(X, self.dim, self.mode)
        return self

    def transform(self, X):
        check_is_fitted(self, "spec_")
        return normalize(check_trajectories(X, self.dim, ndim=np.ndim(X)), self.spec_)

    def inverse_transform(self, X):
        check_is_fitted(self, "spec_")
        return denormalize(check_trajectories(X, self.dim, ndim=np.ndim(X)), self.spec_)

    @classmethod
    def from_spec(cls, spec: NormSpec) -> "_Normalizer":
        est = NORMALIZERS[spec.mode](dim=spec.dim)
        est.spec_ = spec
        return est


class IdentityNormalizer(_Normalizer):
    mode = "none"


class SpeedNormalizer(_Normalizer):
    """Divide positions and velocities by the maximum training speed."""

    mode = "speed"


class MinMaxNormalizer(_Normalizer):
    """Per-axis affine map of positions and velocities onto ``[-1, 1]``."""

    mode = "minmax"


NORMALIZERS = {"none": IdentityNormalizer, "speed": SpeedNormalizer, "minmax": MinMaxNormalizer}


"""Per-node local coordinate frames.

Pair tensors use the layout ``[..., i, j, feature]``: axis ``-3`` is the
receiving (target) node ``i`` whose frame is used, axis ``-2`` the sending
node ``j``. ``v[..., i, j]`` is node ``j``'s state seen from node ``i``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import torch

from . import geometry as geo
from .tensor_core import as_tensor

FRAMES = ("roto_translated", "translated_only", "global")


@dataclass(frozen=True)
class SceneStates:
    """Positions/velocities ``[..., N, D]`` and angular positions ``[..., N, A]``.

    ``intrinsic`` is False when the orientations were derived from the
    velocities; such scenes re-derive them after any transformation.
    """

    positions: torch.Tensor
    velocities: torch.Tensor
    orientations: torch.Tensor
    intrinsic: bool = True

    def __post_init__(self):
        if self.positions.shape != self.velocities.shape:
            raise ValueError("positions and velocities must have the same shape")
        d = self.positions.shape[-1]
        if self.orientations.shape[:-1] != self.positions.shape[:-1] or \
                self.orientations.shape[-1] != geo.angle_dim(d):
            raise ValueError("orientations do not match positions")

    @property
    def dim(self) -> int:
        return self.positions.shape[-1]

    @classmethod
    def from_velocities(cls, positions, velocities) -> "SceneStates":
        p, u = as_tensor(positions), as_tensor(velocities)
        return cls(p, u, geo.orientation_from_velocity(u, p.shape[-1]), intrinsic=False)

    @classmethod
    def from_array(cls, x, dim: int) -> "SceneStates":
        """Split ``[..., 2D]`` or ``[..., 2D + A]`` state arrays."""
        x = as_tensor(x)
        p, u = x[..., :dim], x[..., dim:2 * dim]
        if x.shape[-1] == 2 * dim:
            return cls.from_velocities(p, u)
        if x.shape[-1] != 2 * dim + geo.angle_dim(dim):
            raise ValueError(f"state width {x.shape[-1]} does not fit dimension {dim}")
        return cls(p, u, geo.wrap_angle(x[..., 2 * dim:]), intrinsic=True)

    def at(self, t: int) -> "SceneStates":
        """Select timestep ``t`` when the arrays carry a time axis at ``-3``."""
        return replace(self, positions=self.positions[..., t, :, :],
                       velocities=self.velocities[..., t, :, :],
                       orientations=self.orientations[..., t, :, :])

    def states(self) -> torch.Tensor:
        return torch.cat([self.positions, self.velocities], -1)


@dataclass(frozen=True)
class CanonicalPairs:
    """Canonicalised pair quantities, all shaped ``[..., N, N, *]``.

    ``rel_ang`` and the angles in ``spherical`` are radians; the feature
    accessors divide angles by pi.
    """

    rel_pos: torch.Tensor
    rel_ang: torch.Tensor
    vel: torch.Tensor
    spherical: torch.Tensor

    def state_features(self) -> torch.Tensor:
        return torch.cat([self.rel_pos, self.rel_ang / math.pi, self.vel], -1)

    def spherical_features(self) -> torch.Tensor:
        s = self.spherical
        return torch.cat([s[..., :1], s[..., 1:] / math.pi], -1)

    def filter_inputs(self) -> torch.Tensor:
        """Relative linear position (spherical) and relative angular position."""
        return torch.cat([self.spherical_features(), self.rel_ang / math.pi], -1)

    def self_states(self) -> torch.Tensor:
        """``v_{i|i}`` features, shaped ``[..., N, F]``."""
        f = self.state_features()
        n = f.shape[-2]
        idx = torch.arange(n)
        return f[..., idx, idx, :]


def local_frame_pairs(positions, velocities, orientations,
                      frame: str = "roto_translated") -> CanonicalPairs:
    p, u, w = as_tensor(positions), as_tensor(velocities), as_tensor(orientations)
    d = p.shape[-1]
    if d not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {d}")
    if frame not in FRAMES:
        raise ValueError(f"unknown frame {frame!r}")
    n = p.shape[-2]
    r = p.unsqueeze(-3) - p.unsqueeze(-2)  # r[..., i, j] = p_j - p_i
    if frame == "roto_translated":
        q = geo.rotation(w, d)
        rel_pos = torch.einsum("...iab,...ija->...ijb", q, r) + 0.0
        vel = torch.einsum("...iab,...ja->...ijb", q, u) + 0.0
        if d == 2:
            rel_ang = geo.wrap_angle(w.unsqueeze(-3) - w.unsqueeze(-2))
        else:
            q_rel = torch.einsum("...iba,...jbc->...ijac", q, q)
            rel_ang = geo.euler_from_matrix(q_rel, validate=False)
            eye = torch.eye(n, dtype=torch.bool).unsqueeze(-1)
            rel_ang = torch.where(eye, torch.zeros_like(rel_ang), rel_ang)
    else:
        shape = r.shape
        rel_pos = r if frame == "translated_only" else p.unsqueeze(-3).expand(shape)
        vel = u.unsqueeze(-3).expand(shape)
        rel_ang = geo.wrap_angle(w).unsqueeze(-3).expand(*shape[:-1], w.shape[-1])
    return CanonicalPairs(rel_pos, rel_ang, vel, geo.cart_to_spherical(rel_pos))


def canonicalize(scene: SceneStates, t: int | None = None,
                 frame: str = "roto_translated") -> CanonicalPairs:
    if t is not None:
        scene = scene.at(t)
    return local_frame_pairs(scene.positions, scene.velocities, scene.orientations, frame)


def globalize_delta(x, omega, delta, frame: str = "roto_translated") -> torch.Tensor:
    """Next state ``x + (Q(omega) (+) Q(omega)) @ delta`` for ``[..., 2D]`` states."""
    x, delta = as_tensor(x), as_tensor(delta)
    d = x.shape[-1] // 2
    if frame != "roto_translated":
        return x + delta
    q = geo.rotation(omega, d)
    dp = torch.einsum("...ab,...b->...a", q, delta[..., :d])
    du = torch.einsum("...ab,...b->...a", q, delta[..., d:])
    return x + torch.cat([dp, du], -1)


def apply_global(scene: SceneStates, q_g, tau_g) -> SceneStates:
    """Rotate by ``q_g`` then translate by ``tau_g``."""
    q_g = geo.check_rotation(q_g)
    tau_g = as_tensor(tau_g)
    d = scene.dim
    if q_g.shape != (d, d) or tau_g.shape != (d,):
        raise ValueError("transform does not match scene dimension")
    p = scene.positions @ q_g.T + tau_g
    u = scene.velocities @ q_g.T
    if not scene.intrinsic:
        return SceneStates(p, u, geo.orientation_from_velocity(u, d), intrinsic=False)
    if d == 2:
        w = geo.wrap_angle(scene.orientations + torch.atan2(q_g[1, 0], q_g[0, 0]))
    else:
        w = geo.euler_from_matrix(q_g @ geo.rot3d(scene.orientations), validate=False)
    return SceneStates(p, u, w, intrinsic=True)


def random_rototranslation(seed, dim: int, scale: float = 10.0) -> tuple[torch.Tensor, torch.Tensor]:
    """Uniformly random rotation and a translation uniform in ``[-scale, scale]^D``."""
    rng = np.random.default_rng(seed)
    if dim == 2:
        q = geo.rot2d(rng.uniform(-math.pi, math.pi))
    elif dim == 3:
        a, r = np.linalg.qr(rng.standard_normal((3, 3)))
        a = a * np.sign(np.diag(r))
        if np.linalg.det(a) < 0:
            a[:, 0] = -a[:, 0]
        q = as_tensor(a)
    else:
        raise ValueError(f"dimension must be 2 or 3, got {dim}")
    return q, as_tensor(rng.uniform(-scale, scale, size=dim))


def offdiag_index(n: int) -> tuple[torch.Tensor, torch.Tensor]:
    """Receiver and sender indices of all ordered pairs ``j != i``, receiver-major."""
    recv, send = zip(*[(i, j) for i in range(n) for j in range(n) if j != i])
    return torch.tensor(recv), torch.tensor(send)


def pairs_to_matrix(values: torch.Tensor, n: int, fill: float = 0.0) -> torch.Tensor:
    """Scatter edge-layout ``[..., E, *]`` values into ``[..., N, N, *]`` (receiver, sender)."""
    recv, send = offdiag_index(n)
    shape = (*values.shape[:-2], n, n, values.shape[-1])
    out = torch.full(shape, fill, dtype=values.dtype)
    out[..., recv, send, :] = values
    return out


__all__ = [
    "FRAMES", "SceneStates", "CanonicalPairs", "local_frame_pairs", "canonicalize",
    "globalize_delta", "apply_global", "random_rototranslation", "offdiag_index",
    "pairs_to_matrix",
]

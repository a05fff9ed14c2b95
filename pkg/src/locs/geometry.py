"""Rotation-group and coordinate-conversion primitives.

All functions take array-likes (converted to float64 tensors) and broadcast
over leading axes. Angles are radians.
"""
from __future__ import annotations

import math

import torch

from .tensor_core import DTYPE, as_tensor

SPHERICAL_EPS = 1e-8
GIMBAL_TOL = 1e-9
ROTATION_TOL = 1e-6


def rot2d(theta) -> torch.Tensor:
    theta = as_tensor(theta)
    c, s = torch.cos(theta), torch.sin(theta)
    return torch.stack([torch.stack([c, -s], -1), torch.stack([s, c], -1)], -2)


def rot_z(theta) -> torch.Tensor:
    theta = as_tensor(theta)
    c, s = torch.cos(theta), torch.sin(theta)
    o, z = torch.ones_like(c), torch.zeros_like(c)
    return torch.stack([torch.stack([c, -s, z], -1),
                        torch.stack([s, c, z], -1),
                        torch.stack([z, z, o], -1)], -2)


def rot_y(phi) -> torch.Tensor:
    phi = as_tensor(phi)
    c, s = torch.cos(phi), torch.sin(phi)
    o, z = torch.ones_like(c), torch.zeros_like(c)
    return torch.stack([torch.stack([c, z, s], -1),
                        torch.stack([z, o, z], -1),
                        torch.stack([-s, z, c], -1)], -2)


def rot_x(psi) -> torch.Tensor:
    psi = as_tensor(psi)
    c, s = torch.cos(psi), torch.sin(psi)
    o, z = torch.ones_like(c), torch.zeros_like(c)
    return torch.stack([torch.stack([o, z, z], -1),
                        torch.stack([z, c, -s], -1),
                        torch.stack([z, s, c], -1)], -2)


def rot3d(omega) -> torch.Tensor:
    """ZYX rotation ``Qz(yaw) @ Qy(pitch) @ Qx(roll)`` for ``omega = (yaw, pitch, roll)``."""
    omega = as_tensor(omega)
    if omega.shape[-1] != 3:
        raise ValueError("3D angular positions need 3 components")
    return rot_z(omega[..., 0]) @ rot_y(omega[..., 1]) @ rot_x(omega[..., 2])


def rotation(omega, dim: int) -> torch.Tensor:
    """Rotation matrix for angular positions ``omega`` (shape ``[..., 1]`` in 2D, ``[..., 3]`` in 3D)."""
    omega = as_tensor(omega)
    if dim == 2:
        return rot2d(omega[..., 0])
    if dim == 3:
        return rot3d(omega)
    raise ValueError(f"dimension must be 2 or 3, got {dim}")


def check_rotation(q, tol: float = ROTATION_TOL) -> torch.Tensor:
    q = as_tensor(q)
    d = q.shape[-1]
    if q.shape[-2] != d:
        raise ValueError("rotation must be square")
    eye = torch.eye(d, dtype=DTYPE)
    ortho = (q.transpose(-1, -2) @ q - eye).abs().amax() if q.numel() else 0.0
    if ortho > tol or (torch.linalg.det(q) - 1).abs().amax() > tol:
        raise ValueError("matrix is not a proper rotation")
    return q


def euler_from_matrix(q, validate: bool = True) -> torch.Tensor:
    """ZYX Euler angles ``(yaw, pitch, roll)`` of a 3x3 rotation.

    Near gimbal lock (``|q[2,0]| >= 1 - 1e-9``) roll is set to 0 and yaw
    absorbs the coupled angle, so ``rot3d`` of the result still reproduces
    ``q``.
    """
    q = as_tensor(q)
    if q.shape[-2:] != (3, 3):
        raise ValueError("expected 3x3 matrices")
    if validate:
        check_rotation(q)
    q20 = q[..., 2, 0]
    pitch = torch.asin(torch.clamp(-q20, -1.0, 1.0))
    locked = q20.abs() >= 1 - GIMBAL_TOL
    yaw = torch.where(locked, torch.atan2(-q[..., 0, 1], q[..., 1, 1]),
                      torch.atan2(q[..., 1, 0], q[..., 0, 0]))
    roll = torch.where(locked, torch.zeros_like(q20), torch.atan2(q[..., 2, 1], q[..., 2, 2]))
    return torch.stack([yaw, pitch, roll], -1)


def angles_from_matrix(q, dim: int, validate: bool = False) -> torch.Tensor:
    """Inverse of :func:`rotation`: ``[..., 1]`` yaw in 2D, ZYX Euler triple in 3D."""
    q = as_tensor(q)
    if dim == 2:
        return torch.atan2(q[..., 1, 0], q[..., 0, 0]).unsqueeze(-1)
    return euler_from_matrix(q, validate=validate)


def wrap_angle(a) -> torch.Tensor:
    """Wrap into the half-open interval ``[-pi, pi)``."""
    a = as_tensor(a)
    w = torch.remainder(a + math.pi, 2 * math.pi) - math.pi
    # remainder can round up to exactly 2*pi for tiny negative arguments
    return torch.where(w >= math.pi, w - 2 * math.pi, w)


def normalize_angle(a) -> torch.Tensor:
    return wrap_angle(a) / math.pi


def cart_to_spherical(u, eps: float = SPHERICAL_EPS) -> torch.Tensor:
    """``(rho, azimuth, polar)`` of 3-vectors; ``(rho, azimuth)`` of 2-vectors.

    The polar angle uses ``acos(clamp(u_z / (rho + eps), -1, 1))`` so the zero
    vector maps to ``(0, 0, pi/2)``. The regulariser biases the polar angle
    near the poles by about ``sqrt(2 eps / rho)``. ``eps=0`` gives the exact
    conversion via ``atan2(hypot(u_x, u_y), u_z)``, which stays accurate near
    the poles (the zero vector still maps to ``pi/2``).
    """
    u = as_tensor(u)
    rho = torch.linalg.vector_norm(u, dim=-1)
    theta = torch.atan2(u[..., 1], u[..., 0])
    if u.shape[-1] == 2:
        return torch.stack([rho, theta], -1)
    if u.shape[-1] != 3:
        raise ValueError("expected 2- or 3-vectors")
    if eps > 0:
        phi = torch.acos(torch.clamp(u[..., 2] / (rho + eps), -1.0, 1.0))
    else:
        phi = torch.atan2(torch.hypot(u[..., 0], u[..., 1]), u[..., 2])
        phi = torch.where(rho > 0, phi, torch.full_like(phi, math.pi / 2))
    return torch.stack([rho, theta, phi], -1)


def spherical_to_cart(s) -> torch.Tensor:
    s = as_tensor(s)
    rho, theta = s[..., 0], s[..., 1]
    if s.shape[-1] == 2:
        return torch.stack([rho * torch.cos(theta), rho * torch.sin(theta)], -1)
    phi = s[..., 2]
    return torch.stack([rho * torch.sin(phi) * torch.cos(theta),
                        rho * torch.sin(phi) * torch.sin(theta),
                        rho * torch.cos(phi)], -1)


def orientation_from_velocity(u, dim: int | None = None) -> torch.Tensor:
    """Approximate angular positions from velocity directions.

    2D returns ``[..., 1]`` (heading); 3D returns ``(azimuth, polar, 0)``.
    Zero velocities map to zero angles.
    """
    u = as_tensor(u)
    dim = u.shape[-1] if dim is None else dim
    if dim == 2:
        # adding 0.0 turns -0.0 into +0.0 so atan2 of a zero vector is 0
        return torch.atan2(u[..., 1] + 0.0, u[..., 0] + 0.0).unsqueeze(-1)
    if dim != 3:
        raise ValueError(f"dimension must be 2 or 3, got {dim}")
    s = cart_to_spherical(u + 0.0)
    moving = s[..., 0] > 0
    phi = torch.where(moving, s[..., 2], torch.zeros_like(s[..., 2]))
    return torch.stack([s[..., 1], phi, torch.zeros_like(phi)], -1)


def block_rot(q, k: int) -> torch.Tensor:
    """Block-diagonal matrix holding ``k`` copies of ``q`` (broadcast over leading axes)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    q = as_tensor(q)
    d = q.shape[-1]
    out = torch.zeros(*q.shape[:-2], k * d, k * d, dtype=DTYPE)
    for b in range(k):
        out[..., b * d:(b + 1) * d, b * d:(b + 1) * d] = q
    return out


def angle_dim(dim: int) -> int:
    """Number of angular-position components in ``dim`` dimensions."""
    if dim not in (2, 3):
        raise ValueError(f"dimension must be 2 or 3, got {dim}")
    return 1 if dim == 2 else 3

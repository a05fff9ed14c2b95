"""Scene generators, the constant-velocity baseline and the interactive-subset filter."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .datasets import DatasetBundle


@dataclass(frozen=True)
class SyntheticConfig:
    """Three-particle 2D scenes: two free particles and one that gets pushed.

    The last particle receives a constant-magnitude radial push away from
    every other particle closer than ``radius``; velocities update with a
    symplectic Euler step so a push shows up in the very next position.

    Particles start on a ring of radius ``[ring_min, ring_max]`` heading for
    a random point of the central square ``[-aim, aim]^2``, which they reach
    after a random fraction ``[arrive_min, arrive_max]`` of the scene, so
    encounters are spread over the whole sequence.
    """

    num_nodes: int = 3
    num_steps: int = 50
    dt: float = 0.1
    radius: float = 1.0
    push: float = 2.0
    ring_min: float = 2.0
    ring_max: float = 4.0
    aim: float = 0.5
    arrive_min: float = 0.2
    arrive_max: float = 0.9

    def validate(self) -> None:
        if self.num_nodes < 2 or self.num_steps < 2:
            raise ValueError("need at least 2 nodes and 2 steps")
        for name in ("dt", "radius", "ring_min", "ring_max", "arrive_min", "arrive_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.push < 0 or self.aim < 0 or self.ring_min > self.ring_max or self.arrive_min > self.arrive_max:
            raise ValueError("invalid push, aim or range bounds")


@dataclass(frozen=True)
class ChargedConfig:
    """Charged particles in free 3D space, leapfrog integrated and sub-sampled."""

    num_nodes: int = 5
    num_steps: int = 49
    dim: int = 3
    dt: float = 0.001
    stride: int = 100
    coupling: float = 1.0
    softening: float = 0.1
    position_std: float = 0.5
    speed: float = 0.5
    zero_charges: bool = False

    def validate(self) -> None:
        if self.num_nodes < 2 or self.num_steps < 2:
            raise ValueError("need at least 2 nodes and 2 steps")
        if self.dim not in (2, 3):
            raise ValueError("dim must be 2 or 3")
        for name in ("dt", "stride", "coupling", "softening", "position_std", "speed"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def sample_dt(self) -> float:
        return self.dt * self.stride


def _scene_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def simulate_synthetic_scene(cfg: SyntheticConfig, rng: np.random.Generator):
    n, t_len, d = cfg.num_nodes, cfg.num_steps, 2
    angle = rng.uniform(-np.pi, np.pi, size=n)
    ring = rng.uniform(cfg.ring_min, cfg.ring_max, size=n)
    p0 = ring[:, None] * np.stack([np.cos(angle), np.sin(angle)], -1)
    target = rng.uniform(-cfg.aim, cfg.aim, size=(n, d))
    arrival = rng.uniform(cfg.arrive_min, cfg.arrive_max, size=n) * (t_len - 1) * cfg.dt
    u0 = (target - p0) / arrival[:, None]

    traj = np.zeros((t_len, n, 2 * d))
    labels = np.zeros((t_len, n, n), dtype=np.uint8)
    steps = np.arange(t_len, dtype=np.float64)[:, None, None]
    traj[:, :-1, :d] = p0[:-1] + (steps * cfg.dt) * u0[:-1]
    traj[:, :-1, d:] = u0[:-1]

    # the pushed particle moves on a piecewise-linear path anchored at its last push
    anchor_p, anchor_t, vel = p0[-1].copy(), 0, u0[-1].copy()
    for t in range(t_len):
        p = anchor_p + ((t - anchor_t) * cfg.dt) * vel
        traj[t, -1, :d] = p
        traj[t, -1, d:] = vel
        sep = p - traj[t, :-1, :d]
        dist = np.linalg.norm(sep, axis=-1)
        active = dist < cfg.radius
        labels[t, -1, :-1] = active
        if active.any() and t < t_len - 1:
            acc = cfg.push * (sep[active] / dist[active, None]).sum(0)
            vel = vel + cfg.dt * acc
            anchor_p, anchor_t = p, t
    return traj, labels


def gen_synthetic(cfg: SyntheticConfig = SyntheticConfig(), num_scenes: int = 100, seed: int = 0,
                  split: str = "train") -> DatasetBundle:
    cfg.validate()
    if num_scenes < 1:
        raise ValueError("num_scenes must be >= 1")
    scenes = [simulate_synthetic_scene(cfg, _scene_rng(seed, s)) for s in range(num_scenes)]
    meta = {"kind": "synthetic", "dim": 2, "dt": cfg.dt, "stride": 1, "seed": seed,
            "split": split, "config": asdict(cfg)}
    return DatasetBundle(np.stack([s[0] for s in scenes]), np.stack([s[1] for s in scenes]), None, meta)


def coulomb_accelerations(p: np.ndarray, q: np.ndarray, coupling: float, softening: float) -> np.ndarray:
    """Unit-mass accelerations ``c q_i q_j (p_i - p_j) / max(|p_i - p_j|^3, softening^3)``.

    Pair terms are built antisymmetrically, so they cancel in the total force.
    """
    diff = p[:, None, :] - p[None, :, :]
    r3 = np.sum(diff * diff, -1) ** 1.5
    denom = np.maximum(r3, softening ** 3)
    np.fill_diagonal(denom, 1.0)
    w = coupling * (q[:, None] * q[None, :]) / denom
    np.fill_diagonal(w, 0.0)
    return (w[:, :, None] * diff).sum(1)


def leapfrog(p: np.ndarray, u: np.ndarray, q: np.ndarray, cfg: ChargedConfig, steps: int):
    """Kick-drift-kick integration for ``steps`` fine steps; returns new ``(p, u)``."""
    p, u = p.copy(), u.copy()
    a = coulomb_accelerations(p, q, cfg.coupling, cfg.softening)
    for _ in range(steps):
        u = u + (0.5 * cfg.dt) * a
        p = p + cfg.dt * u
        a = coulomb_accelerations(p, q, cfg.coupling, cfg.softening)
        u = u + (0.5 * cfg.dt) * a
    return p, u


def simulate_charged_scene(cfg: ChargedConfig, rng: np.random.Generator):
    n, d = cfg.num_nodes, cfg.dim
    q = rng.choice(np.array([-1.0, 1.0]), size=n)
    if cfg.zero_charges:
        q = np.zeros(n)
    p = rng.normal(0.0, cfg.position_std, size=(n, d))
    u = rng.normal(0.0, cfg.position_std, size=(n, d))
    u = u * (cfg.speed / np.linalg.norm(u, axis=-1, keepdims=True))
    traj = np.zeros((cfg.num_steps, n, 2 * d))
    traj[0] = np.concatenate([p, u], -1)
    for t in range(1, cfg.num_steps):
        p, u = leapfrog(p, u, q, cfg, cfg.stride)
        traj[t] = np.concatenate([p, u], -1)
    labels = np.broadcast_to(1 - np.eye(n, dtype=np.uint8), (cfg.num_steps, n, n)).copy()
    return traj, labels, q


def gen_charged(cfg: ChargedConfig = ChargedConfig(), num_scenes: int = 100, seed: int = 0,
                split: str = "train") -> DatasetBundle:
    cfg.validate()
    if num_scenes < 1:
        raise ValueError("num_scenes must be >= 1")
    scenes = [simulate_charged_scene(cfg, _scene_rng(seed, s)) for s in range(num_scenes)]
    meta = {"kind": "charged", "dim": cfg.dim, "dt": cfg.sample_dt, "dt_fine": cfg.dt,
            "stride": cfg.stride, "seed": seed, "split": split, "config": asdict(cfg)}
    return DatasetBundle(np.stack([s[0] for s in scenes]), np.stack([s[1] for s in scenes]),
                         np.stack([s[2] for s in scenes]), meta)


def constant_velocity_forecast(prefix, horizon: int, dt: float) -> np.ndarray:
    """Extrapolate the last frame of ``prefix`` (``[..., T, N, 2D]``).

    Returns ``horizon + 1`` frames; frame ``k`` is ``p + k dt u`` with the
    last observed velocity, so frame 0 is the last observed frame.
    """
    prefix = np.asarray(prefix, dtype=np.float64)
    if prefix.ndim < 3 or prefix.shape[-3] == 0:
        raise ValueError("prefix needs at least one timestep")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    d = prefix.shape[-1] // 2
    last = prefix[..., -1, :, :]
    k = np.arange(horizon + 1, dtype=np.float64).reshape((-1, 1, 1))
    pos = last[..., None, :, :d] + (k * dt) * last[..., None, :, d:]
    vel = np.broadcast_to(last[..., None, :, d:], pos.shape)
    return np.concatenate([pos, vel], -1)


def constant_velocity_errors(traj, observed_len: int, horizon: int, dt: float) -> np.ndarray:
    """Per-scene node-mean L2 position error of the baseline at the final horizon step."""
    traj = np.asarray(traj, dtype=np.float64)
    if observed_len < 1 or observed_len + horizon > traj.shape[-3]:
        raise ValueError("observed_len + horizon exceeds the scene length")
    d = traj.shape[-1] // 2
    pred = constant_velocity_forecast(traj[..., :observed_len, :, :], horizon, dt)[..., -1, :, :d]
    truth = traj[..., observed_len - 1 + horizon, :, :d]
    return np.linalg.norm(pred - truth, axis=-1).mean(-1)


def interactive_subset(bundle: DatasetBundle, observed_len: int, horizon: int,
                       threshold: float = 1.5) -> np.ndarray:
    """Indices of scenes where the constant-velocity baseline error exceeds ``threshold``."""
    err = constant_velocity_errors(bundle.trajectories, observed_len, horizon, float(bundle.meta["dt"]))
    return np.flatnonzero(err > threshold)

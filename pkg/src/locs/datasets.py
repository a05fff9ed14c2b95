"""Dataset bundles and their on-disk directory format.

A dataset directory holds ``meta.json`` plus binary payload files
(``trajectories.bin``, ``edges.bin``, optionally ``charges.bin``). Every
payload file starts with an 8-byte little-endian byte count and a 4-byte
little-endian CRC32 of the payload, followed by the row-major payload.
"""
from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
_PAYLOADS = {
    "trajectories": "<f8",
    "edges": "u1",
    "charges": "<f8",
}


class DatasetFormatError(ValueError):
    """Raised when a dataset directory is malformed, truncated or corrupted."""


@dataclass
class DatasetBundle:
    """Scenes of ``[T, N, 2D]`` states with directed interaction labels.

    ``edge_labels[s, t, i, j] == 1`` when node ``j`` acts on node ``i`` at
    timestep ``t``.
    """

    trajectories: np.ndarray
    edge_labels: np.ndarray
    charges: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.trajectories = np.asarray(self.trajectories, dtype=np.float64)
        self.edge_labels = np.asarray(self.edge_labels, dtype=np.uint8)
        if self.charges is not None:
            self.charges = np.asarray(self.charges, dtype=np.float64)
        s, t, n, f = self.trajectories.shape
        if self.edge_labels.shape != (s, t, n, n):
            raise ValueError(f"edge labels {self.edge_labels.shape} do not match trajectories {self.trajectories.shape}")
        if self.charges is not None and self.charges.shape != (s, n):
            raise ValueError("charges must be [scenes, nodes]")
        self.meta.setdefault("dim", f // 2)

    @property
    def dim(self) -> int:
        return int(self.meta["dim"])

    @property
    def num_scenes(self) -> int:
        return self.trajectories.shape[0]

    @property
    def num_steps(self) -> int:
        return self.trajectories.shape[1]

    @property
    def num_nodes(self) -> int:
        return self.trajectories.shape[2]

    @property
    def positions(self) -> np.ndarray:
        return self.trajectories[..., :self.dim]

    @property
    def velocities(self) -> np.ndarray:
        return self.trajectories[..., self.dim:2 * self.dim]

    def interaction_sign(self) -> np.ndarray:
        """``sign(q_i q_j)`` per scene as ``[S, N, N]``: +1 repulsive, -1 attractive."""
        if self.charges is None:
            raise ValueError("dataset has no charges")
        out = np.sign(self.charges[:, :, None] * self.charges[:, None, :])
        idx = np.arange(self.num_nodes)
        out[:, idx, idx] = 0
        return out

    def subset(self, indices) -> "DatasetBundle":
        indices = np.asarray(indices, dtype=np.int64)
        meta = dict(self.meta, num_scenes=len(indices))
        return DatasetBundle(self.trajectories[indices], self.edge_labels[indices],
                             None if self.charges is None else self.charges[indices], meta)

    def with_trajectories(self, trajectories) -> "DatasetBundle":
        return DatasetBundle(trajectories, self.edge_labels, self.charges, dict(self.meta))


def _write_payload(path: Path, arr: np.ndarray, dtype: str) -> None:
    data = np.ascontiguousarray(arr, dtype=dtype).tobytes()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<QI", len(data), zlib.crc32(data)))
        fh.write(data)


def _read_payload(path: Path, shape, dtype: str) -> np.ndarray:
    if not path.exists():
        raise DatasetFormatError(f"{path}: missing payload file")
    raw = path.read_bytes()
    if len(raw) < 12:
        raise DatasetFormatError(f"{path}: truncated payload header")
    length, crc = struct.unpack("<QI", raw[:12])
    data = raw[12:]
    if len(data) != length:
        raise DatasetFormatError(f"{path}: payload is {len(data)} bytes, header says {length}")
    expected = int(np.prod(shape, dtype=np.int64)) * np.dtype(dtype).itemsize
    if length != expected:
        raise DatasetFormatError(f"{path}: payload is {length} bytes, shape {list(shape)} needs {expected}")
    if zlib.crc32(data) != crc:
        raise DatasetFormatError(f"{path}: checksum mismatch")
    return np.frombuffer(data, dtype=dtype).reshape(shape).astype(np.dtype(dtype).newbyteorder("="))


def write_dataset(bundle: DatasetBundle, path) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    d = bundle.dim
    files = {"trajectories": list(bundle.trajectories.shape), "edges": list(bundle.edge_labels.shape)}
    if bundle.charges is not None:
        files["charges"] = list(bundle.charges.shape)
    meta = dict(bundle.meta)
    meta.update(
        format_version=FORMAT_VERSION,
        dim=d,
        num_scenes=bundle.num_scenes,
        num_steps=bundle.num_steps,
        num_nodes=bundle.num_nodes,
        feature_layout=[f"p{a}" for a in "xyz"[:d]] + [f"u{a}" for a in "xyz"[:d]],
        files=files,
    )
    _write_payload(path / "trajectories.bin", bundle.trajectories, _PAYLOADS["trajectories"])
    _write_payload(path / "edges.bin", bundle.edge_labels, _PAYLOADS["edges"])
    if bundle.charges is not None:
        _write_payload(path / "charges.bin", bundle.charges, _PAYLOADS["charges"])
    elif (path / "charges.bin").exists():
        (path / "charges.bin").unlink()
    (path / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    return path


def read_metadata(path) -> dict:
    """Parse ``meta.json`` only; payload files are not touched."""
    path = Path(path)
    try:
        meta = json.loads((path / "meta.json").read_text())
    except FileNotFoundError:
        raise DatasetFormatError(f"{path}: no meta.json") from None
    except json.JSONDecodeError as exc:
        raise DatasetFormatError(f"{path}/meta.json: {exc}") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise DatasetFormatError(f"{path}: unsupported format version {meta.get('format_version')}")
    for key in ("dim", "files"):
        if key not in meta:
            raise DatasetFormatError(f"{path}/meta.json: missing {key!r}")
    if "trajectories" not in meta["files"] or "edges" not in meta["files"]:
        raise DatasetFormatError(f"{path}/meta.json: incomplete file list")
    return meta


def read_dataset(path) -> DatasetBundle:
    path = Path(path)
    meta = read_metadata(path)
    files = meta.pop("files")
    traj = _read_payload(path / "trajectories.bin", files["trajectories"], _PAYLOADS["trajectories"])
    edges = _read_payload(path / "edges.bin", files["edges"], _PAYLOADS["edges"])
    charges = None
    if "charges" in files:
        charges = _read_payload(path / "charges.bin", files["charges"], _PAYLOADS["charges"])
    meta.pop("format_version", None)
    meta.pop("feature_layout", None)
    return DatasetBundle(traj, edges, charges, meta)

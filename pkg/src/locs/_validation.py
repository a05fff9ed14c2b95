"""Input checks shared by the estimators and transformers."""
from __future__ import annotations

import numpy as np


def check_trajectories(X, dim: int, width: int | None = None, min_steps: int = 1,
                       ndim: int = 4) -> np.ndarray:
    """Validate a ``[S, T, N, F]`` float array and return it as float64.

    ``width`` pins the feature count; otherwise at least ``2 * dim`` is needed.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {X.shape}")
    f = X.shape[-1]
    if (width is not None and f != width) or f < 2 * dim:
        raise ValueError(f"expected {width or f'>= {2 * dim}'} features per node, got {f}")
    if ndim == 4:
        if X.shape[0] < 1:
            raise ValueError("need at least one scene")
        if X.shape[1] < min_steps:
            raise ValueError(f"need at least {min_steps} timesteps, got {X.shape[1]}")
        if X.shape[2] < 2:
            raise ValueError("need at least two nodes")
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains NaN or infinity")
    return X

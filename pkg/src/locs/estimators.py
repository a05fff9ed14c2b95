"""Scikit-learn style forecasters over ``[S, T, N, F]`` trajectory arrays."""
from __future__ import annotations

import numpy as np
import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_trajectories
from .frames import pairs_to_matrix
from .model import ModelConfig, gumbel_softmax_sample
from .normalization import NORMALIZERS, NormSpec, _Normalizer, denormalize
from .simulate import constant_velocity_forecast
from .tensor_core import DTYPE, load_checkpoint, save_checkpoint
from .training import TrainConfig, build_model, train_model

_MODEL_PARAMS = [
    "dim", "num_edge_types", "hidden", "lstm_hidden", "prior_hidden", "filter_hidden", "decoder",
    "frame", "filters", "decoder_filters", "no_edge_hardcoded", "sigma2", "gumbel_temp",
    "no_edge_prior", "intrinsic_orientation",
]


class LoCSForecaster(BaseEstimator):
    """Trajectory forecaster built on locally canonicalised pair features.

    ``fit`` learns a normaliser and the network from training scenes.
    ``predict`` rolls out ``horizon`` future states after a burn-in over
    the given prefix, in the original (unnormalised) units.
    """

    def __init__(self, dim=2, num_edge_types=2, hidden=256, lstm_hidden=64, prior_hidden=128,
                 filter_hidden=256, decoder="markovian", frame="roto_translated",
                 filters="anisotropic", decoder_filters=False, no_edge_hardcoded=True, sigma2=1e-5,
                 gumbel_temp=0.5, no_edge_prior=None, intrinsic_orientation=False,
                 normalization="speed", epochs=20, lr=5e-4, batch_size=8, random_state=0,
                 eval_batch_size=64):
        self.dim = dim
        self.num_edge_types = num_edge_types
        self.hidden = hidden
        self.lstm_hidden = lstm_hidden
        self.prior_hidden = prior_hidden
        self.filter_hidden = filter_hidden
        self.decoder = decoder
        self.frame = frame
        self.filters = filters
        self.decoder_filters = decoder_filters
        self.no_edge_hardcoded = no_edge_hardcoded
        self.sigma2 = sigma2
        self.gumbel_temp = gumbel_temp
        self.no_edge_prior = no_edge_prior
        self.intrinsic_orientation = intrinsic_orientation
        self.normalization = normalization
        self.epochs = epochs
        self.lr = lr
        self.batch_size = batch_size
        self.random_state = random_state
        self.eval_batch_size = eval_batch_size

    # ------------------------------------------------------------------ config

    def model_config(self) -> ModelConfig:
        return ModelConfig(**{k: getattr(self, k) for k in _MODEL_PARAMS}).validate()

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, lr=self.lr, batch_size=self.batch_size,
                           seed=self.random_state).validate()

    def _check(self, X, min_steps=1):
        return check_trajectories(X, self.dim, self.model_config().input_width, min_steps)

    def initialize(self, X) -> "LoCSForecaster":
        """Fit the normaliser and build untrained weights without any descent steps."""
        X = self._check(X, min_steps=2)
        if self.normalization not in NORMALIZERS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        self.normalizer_ = NORMALIZERS[self.normalization](dim=self.dim).fit(X)
        self.model_ = build_model(self.model_config(), self.random_state).eval()
        self.loss_history_ = []
        self.n_features_in_ = X.shape[-1]
        return self

    def fit(self, X, y=None, callback=None):
        self.initialize(X)
        Xn = self.normalizer_.transform(self._check(X, min_steps=2))
        self.loss_history_ = train_model(self.model_, Xn, self.train_config(), callback)
        return self

    # ------------------------------------------------------------------ inference

    def _batches(self, X):
        for i in range(0, len(X), self.eval_batch_size):
            yield torch.as_tensor(self.normalizer_.transform(X[i:i + self.eval_batch_size]), dtype=DTYPE)

    def _generator(self, random_state):
        seed = self.random_state if random_state is None else random_state
        return torch.Generator().manual_seed(int(seed))

    def predict(self, X, horizon: int, random_state=None) -> np.ndarray:
        """Roll out ``[S, horizon, N, 2D]`` states following the prefixes ``X``."""
        check_is_fitted(self, "model_")
        if horizon < 0:
            raise ValueError("horizon must be >= 0")
        X = self._check(X)
        gen = self._generator(random_state)
        out = []
        with torch.no_grad():
            for xb in self._batches(X):
                pred, _ = self.model_.rollout(xb, horizon, gen)
                out.append(pred.numpy())
        return denormalize(np.concatenate(out), self.normalizer_.spec_)

    def predict_next(self, X, random_state=None) -> np.ndarray:
        """Teacher-forced one-step means ``[S, T-1, N, 2D]`` with hard posterior edge samples."""
        check_is_fitted(self, "model_")
        X = self._check(X, min_steps=2)
        gen = self._generator(random_state)
        out = []
        with torch.no_grad():
            for xb in self._batches(X):
                mu = self.model_.teacher_forced(xb, gen, hard=True)[0]
                out.append(mu.numpy())
        return denormalize(np.concatenate(out), self.normalizer_.spec_)

    def predict_edges(self, X, source: str = "posterior") -> np.ndarray:
        """Edge-type probabilities ``[S, T-1, N, N, K]`` (diagonal zero) inferred from ``X``."""
        check_is_fitted(self, "model_")
        if source not in ("posterior", "prior"):
            raise ValueError("source must be 'posterior' or 'prior'")
        X = self._check(X, min_steps=2)
        n = X.shape[2]
        out = []
        with torch.no_grad():
            for xb in self._batches(X):
                prior, post = self.model_.encode(xb[:, :-1])
                probs = torch.softmax(post if source == "posterior" else prior, -1)
                out.append(pairs_to_matrix(probs, n).numpy())
        return np.concatenate(out)

    def sample_edges(self, logits, random_state=None, hard=True):
        gen = self._generator(random_state)
        return gumbel_softmax_sample(torch.as_tensor(logits, dtype=DTYPE), self.gumbel_temp, gen, hard=hard)

    def score(self, X, y=None) -> float:
        """Negative teacher-forced one-step MSE in original units."""
        X = self._check(X, min_steps=2)
        pred = self.predict_next(X)
        return -float(((pred - X[:, 1:, :, :2 * self.dim]) ** 2).mean())

    # ------------------------------------------------------------------ persistence

    def save(self, path) -> None:
        check_is_fitted(self, "model_")
        header = {
            "estimator": self.get_params(),
            "model": self.model_config().to_dict(),
            "norm": self.normalizer_.spec_.to_dict(),
            "loss_history": self.loss_history_,
        }
        save_checkpoint(path, self.model_.state_dict(), header)

    @classmethod
    def load(cls, path) -> "LoCSForecaster":
        header, tensors = load_checkpoint(path)
        est = cls(**header["estimator"])
        est.model_ = build_model(est.model_config(), est.random_state)
        est.model_.load_state_dict(tensors)
        est.model_.eval()
        est.normalizer_ = _Normalizer.from_spec(NormSpec.from_dict(header["norm"]))
        est.loss_history_ = header.get("loss_history", [])
        est.n_features_in_ = est.model_config().input_width
        return est


class ConstantVelocityForecaster(BaseEstimator):
    """Extrapolates every node with its last observed velocity."""

    def __init__(self, dim=2, dt=0.1):
        self.dim = dim
        self.dt = dt

    def fit(self, X=None, y=None):
        self.n_features_in_ = 2 * self.dim
        return self

    def predict(self, X, horizon: int) -> np.ndarray:
        X = check_trajectories(X, self.dim)[..., :2 * self.dim]
        return constant_velocity_forecast(X, horizon, self.dt)[:, 1:]

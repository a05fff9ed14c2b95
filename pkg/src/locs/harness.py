"""Training, evaluation and ablation runs over dataset directories."""
from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .datasets import DatasetBundle, read_dataset
from .estimators import ConstantVelocityForecaster, LoCSForecaster
from .metrics import AGGREGATION, error_curves, f1_relations
from .model import ModelConfig
from .training import TrainConfig


@dataclass
class MetricsReport:
    mse: list[float]
    l2_pos: list[float]
    l2_vel: list[float]
    f1: float | None = None
    runtime: float = 0.0
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.mse) == len(self.l2_pos) == len(self.l2_vel)):
            raise ValueError("curves must have equal length")

    @property
    def horizon(self) -> int:
        return len(self.mse)

    def summary(self) -> dict:
        d = asdict(self)
        d["horizon"] = self.horizon
        d["final"] = {k: (getattr(self, k)[-1] if self.horizon else None) for k in ("mse", "l2_pos", "l2_vel")}
        d["aggregation"] = AGGREGATION
        return d

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "mse", "l2_pos", "l2_vel"])
            for k in range(self.horizon):
                w.writerow([k + 1, repr(self.mse[k]), repr(self.l2_pos[k]), repr(self.l2_vel[k])])

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2))


def _bundle(dataset) -> DatasetBundle:
    return dataset if isinstance(dataset, DatasetBundle) else read_dataset(dataset)


def make_forecaster(model_config: ModelConfig, train_config: TrainConfig,
                    normalization: str = "speed") -> LoCSForecaster:
    return LoCSForecaster(**model_config.validate().to_dict(), normalization=normalization,
                          epochs=train_config.epochs, lr=train_config.lr,
                          batch_size=train_config.batch_size, random_state=train_config.seed)


def train(dataset, model_config: ModelConfig, train_config: TrainConfig, out_path,
          normalization: str = "speed") -> Path:
    """Fit on a dataset (path or bundle); write the checkpoint and a ``.loss.csv`` log beside it."""
    bundle = _bundle(dataset)
    if model_config.dim != bundle.dim:
        raise ValueError(f"model dim {model_config.dim} does not match dataset dim {bundle.dim}")
    out_path = Path(out_path)
    log_path = out_path.with_suffix(".loss.csv")
    with open(log_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "loss", "nll", "kl"])

        def record(r):
            w.writerow([r["epoch"], repr(r["loss"]), repr(r["nll"]), repr(r["kl"])])
            fh.flush()

        est = make_forecaster(model_config, train_config, normalization)
        est.fit(bundle.trajectories, callback=record)
    est.save(out_path)
    return out_path


def evaluate_forecaster(forecaster, dataset, observed_len: int, horizon: int,
                        indices=None, random_state: int = 0) -> MetricsReport:
    """Burn in on the first ``observed_len`` steps, roll out ``horizon`` more and score them."""
    bundle = _bundle(dataset)
    if indices is not None:
        bundle = bundle.subset(indices)
    if observed_len < 1 or horizon < 1:
        raise ValueError("observed_len and horizon must be >= 1")
    if observed_len + horizon > bundle.num_steps:
        raise ValueError(f"observed_len + horizon = {observed_len + horizon} exceeds "
                         f"{bundle.num_steps} timesteps")
    start = time.perf_counter()
    x = bundle.trajectories
    end = observed_len + horizon
    if isinstance(forecaster, LoCSForecaster):
        pred = forecaster.predict(x[:, :observed_len], horizon, random_state=random_state)
    else:
        pred = forecaster.predict(x[:, :observed_len], horizon)
    curves = error_curves(pred, x[:, observed_len:end, :, :2 * bundle.dim], bundle.dim)
    f1 = None
    if hasattr(forecaster, "predict_edges"):
        f1 = f1_relations(forecaster.predict_edges(x[:, :end]), bundle.edge_labels[:, :end - 1])
    config = {"observed_len": observed_len, "horizon": horizon, "num_scenes": bundle.num_scenes,
              "random_state": random_state}
    if hasattr(forecaster, "get_params"):
        config["forecaster"] = {"type": type(forecaster).__name__, **forecaster.get_params()}
    return MetricsReport([float(v) for v in curves["mse"]], [float(v) for v in curves["l2_pos"]],
                         [float(v) for v in curves["l2_vel"]], f1, time.perf_counter() - start, config)


def evaluate(checkpoint, dataset, observed_len: int, horizon: int, indices=None,
             random_state: int = 0) -> MetricsReport:
    report = evaluate_forecaster(LoCSForecaster.load(checkpoint), dataset, observed_len, horizon,
                                 indices, random_state)
    report.config["checkpoint"] = str(checkpoint)
    return report


def evaluate_baseline(dataset, observed_len: int, horizon: int, indices=None) -> MetricsReport:
    bundle = _bundle(dataset)
    cv = ConstantVelocityForecaster(dim=bundle.dim, dt=float(bundle.meta["dt"])).fit()
    return evaluate_forecaster(cv, bundle, observed_len, horizon, indices)


ABLATIONS = {
    "locs": {},
    "translated_only": {"frame": "translated_only"},
    "global": {"frame": "global"},
    "isotropic": {"filters": "isotropic"},
    "minmax": {"normalization": "minmax"},
}


def ablate(train_data, test_data, model_config: ModelConfig, train_config: TrainConfig,
           observed_len: int, horizon: int, variants=None, out_dir=None) -> dict[str, MetricsReport]:
    """Train and evaluate each named variant of :data:`ABLATIONS` under the same budget."""
    train_bundle, test_bundle = _bundle(train_data), _bundle(test_data)
    variants = list(ABLATIONS) if variants is None else list(variants)
    out = None if out_dir is None else Path(out_dir)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    reports = {"constant_velocity": evaluate_baseline(test_bundle, observed_len, horizon)}
    for name in variants:
        if name not in ABLATIONS:
            raise ValueError(f"unknown ablation {name!r}; choose from {sorted(ABLATIONS)}")
        overrides = dict(ABLATIONS[name])
        norm = overrides.pop("normalization", "speed")
        cfg = ModelConfig.from_dict({**model_config.to_dict(), **overrides})
        est = make_forecaster(cfg, train_config, norm).fit(train_bundle.trajectories)
        reports[name] = evaluate_forecaster(est, test_bundle, observed_len, horizon)
        if out is not None:
            est.save(out / f"{name}.ckpt")
    if out is not None:
        for name, rep in reports.items():
            rep.write_csv(out / f"{name}.csv")
        (out / "summary.json").write_text(json.dumps({k: r.summary() for k, r in reports.items()}, indent=2))
    return reports


def interactive_indices(dataset, observed_len: int, horizon: int, threshold: float = 1.5) -> np.ndarray:
    from .simulate import interactive_subset
    return interactive_subset(_bundle(dataset), observed_len, horizon, threshold)

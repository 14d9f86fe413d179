"""End-to-end MC-DNN training, prediction, benchmarking and report output.

Training follows the micro-clustering flow: fit the preprocessing on the
training split, cluster the training trips with K-means, teach an assigner
network to reproduce the cluster ids, append the assigner's one-hot cluster
to the forecaster inputs, balance with SMOTE and train the forecaster.
K-means only runs during training; prediction goes through the assigner.

Every randomised stage draws its seed as ``master_seed + SEED_OFFSETS[stage]``.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from statistics import median
from typing import Callable, Sequence

import numpy as np

from . import baselines, clustering, neural
from .dataset import (
    CLUSTER_FEATURES,
    DEFAULT_LOG_FEATURES,
    FORECAST_FEATURES,
    ChargeLevel,
    Dataset,
    SynthConfig,
    TransformParams,
    apply_transform,
    fit_transform,
    generate_synthetic,
    load_csv,
    split_dataset,
)
from .errors import FidelityError, ValidationError
from .metrics import EvalReport, evaluate
from .smote import SmoteConfig, smote_balance

__all__ = [
    "SEED_OFFSETS",
    "CRITERIA",
    "METHODS",
    "NetworkConfig",
    "ClusteringConfig",
    "BaselineConfig",
    "PipelineConfig",
    "FitRecorder",
    "McDnnModel",
    "SeedRun",
    "BenchmarkResult",
    "train_mc_dnn",
    "predict_mc_dnn",
    "save_model",
    "load_model",
    "load_data",
    "run_benchmark",
    "emit_report",
    "emit_evaluation",
    "resolve_output_dir",
    "read_predictions",
    "write_predictions",
]

SEED_OFFSETS = {
    "split": 0,
    "kmeans": 1,
    "assigner_init": 2,
    "assigner_train": 3,
    "smote": 4,
    "forecaster_init": 5,
    "forecaster_train": 6,
    "dnn_init": 7,
    "dnn_train": 8,
    "ann_init": 9,
    "ann_train": 10,
    "cslr": 11,
}

METHODS = ("MC-DNN", "DNN", "ANN", "KNN", "CS-LR")
N_CLASSES = len(ChargeLevel)
OUTPUT_ENV = "MCDNN_OUTPUT_DIR"


# --------------------------------------------------------------------------
# Configuration


def _train_config(d: dict | None) -> neural.TrainConfig:
    d = dict(d or {})
    known = {f.name for f in fields(neural.TrainConfig)}
    unknown = set(d) - known
    if unknown:
        raise ValidationError(f"unknown training keys {sorted(unknown)}")
    cfg = neural.TrainConfig(**d)
    cfg.validate()
    return cfg


@dataclass(frozen=True)
class NetworkConfig:
    """Hidden layers only; the softmax output layer is added to match the task."""

    hidden: tuple[neural.LayerSpec, ...]
    train: neural.TrainConfig = neural.TrainConfig()

    @classmethod
    def from_dict(cls, d: dict, default: "NetworkConfig") -> "NetworkConfig":
        if d is None:
            return default
        hidden = tuple(neural.LayerSpec.parse(l) for l in d["hidden"]) if "hidden" in d else default.hidden
        train = _train_config({**asdict(default.train), **d["train"]}) if "train" in d else default.train
        return cls(hidden, train)

    def to_dict(self) -> dict:
        return {"hidden": [[l.width, l.activation] for l in self.hidden], "train": asdict(self.train)}

    def layers(self, n_out: int) -> tuple[neural.LayerSpec, ...]:
        return self.hidden + (neural.LayerSpec(n_out, "softmax"),)


DNN_NET = NetworkConfig((neural.LayerSpec(64, "relu"),) * 3)
ANN_NET = NetworkConfig((neural.LayerSpec(32, "sigmoid"),))
ASSIGNER_NET = NetworkConfig((neural.LayerSpec(32, "relu"),) * 2)


@dataclass(frozen=True)
class ClusteringConfig:
    kmin: int = 2
    kmax: int = clustering.KMAX
    fixed_k: int | None = None
    n_init: int = 10
    max_iter: int = 300
    tol: float = 1e-6
    sample_size: int = clustering.SILHOUETTE_SAMPLE


@dataclass(frozen=True)
class BaselineConfig:
    knn_k: int = 5
    # apply SMOTE to the KNN and CS-LR training data as well
    smote: bool = False
    cslr_eta: float = 0.1
    cslr_epochs: int = 100
    cslr_l2: float = 1e-4
    cslr_batch_size: int = 128
    dnn: NetworkConfig = DNN_NET
    ann: NetworkConfig = ANN_NET


@dataclass(frozen=True)
class PipelineConfig:
    data_path: str | None = None
    synthetic: SynthConfig = field(default_factory=SynthConfig)
    data_seed: int = 0
    seed: int = 0
    split_ratios: tuple[float, float, float] = (0.6, 0.2, 0.2)
    stratify: bool = True
    forecast_features: tuple[str, ...] = FORECAST_FEATURES
    cluster_features: tuple[str, ...] = CLUSTER_FEATURES
    log_features: tuple[str, ...] = tuple(sorted(DEFAULT_LOG_FEATURES))
    clustering: ClusteringConfig = ClusteringConfig()
    assigner: NetworkConfig = ASSIGNER_NET
    forecaster: NetworkConfig = DNN_NET
    smote_k: int = 5
    mc_fidelity_floor: float = 0.90
    beta: float = 1.0
    baselines: BaselineConfig = BaselineConfig()
    methods: tuple[str, ...] = METHODS
    external: dict[str, str] = field(default_factory=dict)
    output_dir: str = "mcdnn_output"

    def validate(self) -> None:
        from .dataset import NUMERIC_FEATURES

        for name in self.forecast_features + self.cluster_features:
            if name not in NUMERIC_FEATURES:
                raise ValidationError(f"feature {name!r} is not in the trip schema")
        if not self.forecast_features or not self.cluster_features:
            raise ValidationError("feature lists must be non-empty")
        c = self.clustering
        if c.fixed_k is None and not 2 <= c.kmin <= c.kmax:
            raise ValidationError("clustering needs 2 <= kmin <= kmax")
        if c.fixed_k is not None and c.fixed_k < 2:
            raise ValidationError("fixed_k must be >= 2")
        for m in self.methods:
            if m not in METHODS:
                raise ValidationError(f"unknown method {m!r}; choose from {list(METHODS)}")
        if not 0.0 <= self.mc_fidelity_floor <= 1.0:
            raise ValidationError("mc_fidelity_floor must be a fraction")
        if self.smote_k < 1:
            raise ValidationError("smote_k must be >= 1")

    def to_dict(self) -> dict:
        b = self.baselines
        return {
            "data": {"path": self.data_path, "seed": self.data_seed, "synthetic": self.synthetic.to_dict()},
            "seed": self.seed,
            "split": {"ratios": list(self.split_ratios), "stratify": self.stratify},
            "features": {
                "forecast": list(self.forecast_features),
                "cluster": list(self.cluster_features),
                "log": list(self.log_features),
            },
            "clustering": asdict(self.clustering),
            "assigner": self.assigner.to_dict(),
            "forecaster": self.forecaster.to_dict(),
            "smote": {"k_neighbors": self.smote_k},
            "mc_fidelity_floor": self.mc_fidelity_floor,
            "metrics": {"beta": self.beta},
            "baselines": {
                "knn_k": b.knn_k,
                "smote": b.smote,
                "cslr": {"eta": b.cslr_eta, "epochs": b.cslr_epochs, "l2_lambda": b.cslr_l2, "batch_size": b.cslr_batch_size},
                "dnn": b.dnn.to_dict(),
                "ann": b.ann.to_dict(),
            },
            "methods": list(self.methods),
            "external": dict(self.external),
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        try:
            return cls._from_dict(d)
        except ValidationError:
            raise
        except (TypeError, KeyError, ValueError) as exc:
            raise ValidationError(f"invalid config: {exc}") from None

    @classmethod
    def _from_dict(cls, d: dict) -> "PipelineConfig":
        known = {
            "data", "seed", "split", "features", "clustering", "assigner", "forecaster",
            "smote", "mc_fidelity_floor", "metrics", "baselines", "methods", "external", "output_dir",
        }
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown config keys {sorted(unknown)}")
        kw: dict = {}
        data = d.get("data", {})
        if "path" in data:
            kw["data_path"] = data["path"]
        if "seed" in data:
            kw["data_seed"] = int(data["seed"])
        if "synthetic" in data:
            kw["synthetic"] = SynthConfig.from_dict(data["synthetic"])
        if "seed" in d:
            kw["seed"] = int(d["seed"])
        split = d.get("split", {})
        if "ratios" in split:
            kw["split_ratios"] = tuple(float(r) for r in split["ratios"])
        if "stratify" in split:
            kw["stratify"] = bool(split["stratify"])
        feats = d.get("features", {})
        for key, attr in (("forecast", "forecast_features"), ("cluster", "cluster_features"), ("log", "log_features")):
            if key in feats:
                kw[attr] = tuple(feats[key])
        if "clustering" in d:
            kw["clustering"] = ClusteringConfig(**d["clustering"])
        if "assigner" in d:
            kw["assigner"] = NetworkConfig.from_dict(d["assigner"], ASSIGNER_NET)
        if "forecaster" in d:
            kw["forecaster"] = NetworkConfig.from_dict(d["forecaster"], DNN_NET)
        if "smote" in d:
            kw["smote_k"] = int(d["smote"].get("k_neighbors", 5))
        if "mc_fidelity_floor" in d:
            kw["mc_fidelity_floor"] = float(d["mc_fidelity_floor"])
        if "metrics" in d:
            kw["beta"] = float(d["metrics"].get("beta", 1.0))
        if "baselines" in d:
            b = d["baselines"]
            cs = b.get("cslr", {})
            base = BaselineConfig()
            kw["baselines"] = BaselineConfig(
                knn_k=int(b.get("knn_k", base.knn_k)),
                smote=bool(b.get("smote", base.smote)),
                cslr_eta=float(cs.get("eta", base.cslr_eta)),
                cslr_epochs=int(cs.get("epochs", base.cslr_epochs)),
                cslr_l2=float(cs.get("l2_lambda", base.cslr_l2)),
                cslr_batch_size=int(cs.get("batch_size", base.cslr_batch_size)),
                dnn=NetworkConfig.from_dict(b.get("dnn"), DNN_NET),
                ann=NetworkConfig.from_dict(b.get("ann"), ANN_NET),
            )
        if "methods" in d:
            kw["methods"] = tuple(d["methods"])
        if "external" in d:
            kw["external"] = dict(d["external"])
        if "output_dir" in d:
            kw["output_dir"] = str(d["output_dir"])
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ValidationError(f"no such config file: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
        except TypeError as exc:
            raise ValidationError(f"{path}: {exc}") from None


def resolve_output_dir(config: PipelineConfig, explicit: str | None = None) -> Path:
    if explicit:
        return Path(explicit)
    return Path(os.environ.get(OUTPUT_ENV) or config.output_dir)


def load_data(config: PipelineConfig) -> Dataset:
    if config.data_path:
        return load_csv(config.data_path)
    return generate_synthetic(config.synthetic, config.data_seed)


# --------------------------------------------------------------------------
# Training


class FitRecorder:
    """Audit trail of the row ids each fitting stage consumed."""

    def __init__(self):
        self.consumed: dict[str, set[int]] = {}
        self.kmeans_fits = 0

    def record(self, stage: str, row_ids) -> None:
        self.consumed.setdefault(stage, set()).update(int(r) for r in np.asarray(row_ids))

    def all_ids(self) -> set[int]:
        out: set[int] = set()
        for ids in self.consumed.values():
            out |= ids
        return out

    def overlap(self, row_ids) -> dict[str, int]:
        probe = {int(r) for r in np.asarray(row_ids)}
        return {stage: len(ids & probe) for stage, ids in sorted(self.consumed.items())}


def _onehot(labels: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def _subset(params: TransformParams, names: Sequence[str]) -> TransformParams:
    return TransformParams(tuple(params[n] for n in names), params.clamp)


@dataclass(frozen=True)
class McDnnModel:
    transform: TransformParams
    forecast_features: tuple[str, ...]
    cluster_features: tuple[str, ...]
    clusters: clustering.ClusterModel
    assigner: neural.MlpModel
    forecaster: neural.MlpModel
    mc_fidelity: float
    silhouette: dict[int, float] | None = None

    def __post_init__(self):
        if self.assigner.M != self.clusters.k:
            raise ValidationError("assigner output width must equal the cluster count")
        if self.forecaster.n_0 != self.assigner.n_0 + self.clusters.k:
            raise ValidationError("forecaster input width must be base width + k")

    def base_features(self, ds: Dataset) -> np.ndarray:
        return apply_transform(_subset(self.transform, self.forecast_features), ds, "onehot").values


def _net_direct(train_X, train_y, val_X, val_y, net: NetworkConfig, n_out: int, init_seed: int, train_seed: int):
    model = neural.init_mlp(train_X.shape[1], net.layers(n_out), seed=init_seed)
    cfg = replace(net.train, seed=train_seed, batch_size=min(net.train.batch_size, len(train_X)))
    model, hist = neural.train_mlp(model, train_X, _onehot(train_y, n_out), (val_X, _onehot(val_y, n_out)), cfg)
    return model, hist


def train_mc_dnn(
    train: Dataset,
    val: Dataset,
    config: PipelineConfig = PipelineConfig(),
    seed: int | None = None,
    recorder: FitRecorder | None = None,
) -> McDnnModel:
    config.validate()
    seed = config.seed if seed is None else seed
    rec = recorder if recorder is not None else FitRecorder()
    names = tuple(dict.fromkeys(config.forecast_features + config.cluster_features))

    # (1) preprocessing fitted on training rows only
    params = fit_transform(train, names, config.log_features)
    rec.record("transform", train.row_id)
    base = _subset(params, config.forecast_features)
    cl_params = _subset(params, config.cluster_features)
    Xb, Xb_val = apply_transform(base, train, "onehot"), apply_transform(base, val, "onehot")
    Xc, Xc_val = apply_transform(cl_params, train, "code").values, apply_transform(cl_params, val, "code").values

    # (2) unsupervised clustering
    c = config.clustering
    k_seed = seed + SEED_OFFSETS["kmeans"]
    silhouette = None
    if c.fixed_k is None:
        report = clustering.select_k(Xc, c.kmin, c.kmax, seed=k_seed, n_init=c.n_init, sample_size=c.sample_size)
        k = report.best_k
        silhouette = dict(report.scores)
    else:
        k = c.fixed_k
    clusters = clustering.kmeans_fit(
        Xc, k, seed=k_seed, max_iter=c.max_iter, tol=c.tol, n_init=c.n_init, feature_ids=config.cluster_features
    )
    rec.kmeans_fits += 1
    rec.record("clustering", train.row_id)

    # (3)-(4) supervised clustering: assigner learns the centroid labels
    cl_train = clustering.assign_nearest(clusters, Xc)
    cl_val = clustering.assign_nearest(clusters, Xc_val)
    assigner, _ = _net_direct(
        Xb.values, cl_train, Xb_val.values, cl_val, config.assigner, k,
        seed + SEED_OFFSETS["assigner_init"], seed + SEED_OFFSETS["assigner_train"],
    )
    rec.record("assigner", train.row_id)
    rec.record("validation", val.row_id)

    # (5) fidelity of the assigner against nearest-centroid on held-out rows
    fidelity = float((neural.predict_class(assigner, Xb_val.values) == cl_val).mean())
    if fidelity < config.mc_fidelity_floor:
        raise FidelityError(
            f"assigner agrees with K-means on only {fidelity:.3f} of validation rows "
            f"(floor {config.mc_fidelity_floor}); the cluster feature would be unreliable"
        )

    # (6) augment with the assigner's one-hot cluster
    def augment(values: np.ndarray) -> np.ndarray:
        return np.hstack([values, _onehot(neural.predict_class(assigner, values), k)])

    A, A_val = augment(Xb.values), augment(Xb_val.values)

    # (7) SMOTE on the final design matrix
    width = Xb.values.shape[1]
    blocks = Xb.onehot_blocks + ((width, width + k),)
    A_bal, y_bal = smote_balance(
        A, train.label, SmoteConfig(config.smote_k, "match_majority", seed + SEED_OFFSETS["smote"], blocks)
    )
    rec.record("smote", train.row_id)

    # (8) forecaster with validation early stopping
    forecaster, _ = _net_direct(
        A_bal, y_bal, A_val, val.label, config.forecaster, N_CLASSES,
        seed + SEED_OFFSETS["forecaster_init"], seed + SEED_OFFSETS["forecaster_train"],
    )
    rec.record("forecaster", train.row_id)
    return McDnnModel(params, config.forecast_features, config.cluster_features, clusters, assigner, forecaster, fidelity, silhouette)


def predict_mc_dnn(model: McDnnModel, trips: Dataset) -> np.ndarray:
    """Forecast charge levels; clusters come from the assigner, never from K-means."""
    Xb = model.base_features(trips)
    if Xb.shape[1] != model.assigner.n_0:
        raise ValidationError(f"feature width {Xb.shape[1]} does not match the stored model ({model.assigner.n_0})")
    cl = neural.predict_class(model.assigner, Xb)
    return neural.predict_class(model.forecaster, np.hstack([Xb, _onehot(cl, model.clusters.k)]))


def save_model(model: McDnnModel, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "transform": model.transform.to_dict(),
        "forecast_features": list(model.forecast_features),
        "cluster_features": list(model.cluster_features),
        "clusters": model.clusters.to_dict(),
        "assigner": model.assigner.to_dict(),
        "forecaster": model.forecaster.to_dict(),
        "mc_fidelity": model.mc_fidelity,
        "silhouette": None if model.silhouette is None else {str(k): v for k, v in sorted(model.silhouette.items())},
    }
    path = out / "model.json"
    path.write_text(json.dumps(doc))
    return path


def load_model(model_dir: str | Path) -> McDnnModel:
    path = Path(model_dir) / "model.json"
    if not path.is_file():
        raise ValidationError(f"no model found at {path}")
    doc = json.loads(path.read_text())
    sil = doc.get("silhouette")
    return McDnnModel(
        transform=TransformParams.from_dict(doc["transform"]),
        forecast_features=tuple(doc["forecast_features"]),
        cluster_features=tuple(doc["cluster_features"]),
        clusters=clustering.ClusterModel.from_dict(doc["clusters"]),
        assigner=neural.MlpModel.from_dict(doc["assigner"]),
        forecaster=neural.MlpModel.from_dict(doc["forecaster"]),
        mc_fidelity=float(doc["mc_fidelity"]),
        silhouette=None if sil is None else {int(k): float(v) for k, v in sil.items()},
    )


# --------------------------------------------------------------------------
# Benchmark


@dataclass
class SeedRun:
    seed: int
    reports: dict[str, EvalReport] = field(default_factory=dict)
    errors: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    silhouette: dict[int, float] | None = None
    chosen_k: int | None = None
    mc_fidelity: float | None = None
    kmeans_fits: int = 0
    consumed_rows: dict[str, int] = field(default_factory=dict)
    test_overlap: dict[str, int] = field(default_factory=dict)
    test_rows: int = 0


@dataclass
class BenchmarkResult:
    methods: tuple[str, ...]
    runs: list[SeedRun]
    beta: float = 1.0

    @property
    def seeds(self) -> list[int]:
        return [r.seed for r in self.runs]

    def median(self, method: str, criterion: Callable[[EvalReport], float]) -> float | None:
        vals = [criterion(r.reports[method]) for r in self.runs if method in r.reports]
        return float(median(vals)) if vals else None

    def leakage_free(self) -> bool:
        return all(v == 0 for r in self.runs for v in r.test_overlap.values())


CRITERIA: dict[str, Callable[[EvalReport], float]] = {
    "accuracy": lambda r: r.accuracy,
    "precision": lambda r: r.macro_precision,
    "recall": lambda r: r.macro_recall,
    "f_measure": lambda r: r.macro_f,
    "g_mean": lambda r: r.macro_g,
    "f_from_macro": lambda r: r.f_from_macro,
    "g_from_macro": lambda r: r.g_from_macro,
    "macro_accuracy": lambda r: r.macro_accuracy,
}


def read_predictions(path: str | Path) -> dict[int, int]:
    """Read a ``row_id,label`` CSV; labels may be names (NONE, L1, ...) or codes."""
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"no such predictions file: {path}")
    out: dict[int, int] = {}
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if lineno == 1 and row[0].strip() == "row_id":
                continue
            try:
                out[int(row[0])] = int(ChargeLevel.parse(row[1]))
            except (ValueError, KeyError, IndexError):
                raise ValidationError(f"{path}:{lineno}: malformed prediction row {row}") from None
    return out


def write_predictions(path: str | Path, row_ids, labels) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_id", "label"])
        for r, lab in zip(np.asarray(row_ids), np.asarray(labels)):
            w.writerow([int(r), ChargeLevel(int(lab)).name])


def _baseline_design(config: PipelineConfig, train: Dataset, val: Dataset, test: Dataset, rec: FitRecorder):
    params = fit_transform(train, config.forecast_features, config.log_features)
    rec.record("baseline_transform", train.row_id)
    fm = apply_transform(params, train, "onehot")
    return fm, apply_transform(params, val, "onehot").values, apply_transform(params, test, "onehot").values


def _run_method(method, config, seed, train, val, test, rec, run: SeedRun, design_cache: dict):
    if method == "MC-DNN":
        model = train_mc_dnn(train, val, config, seed, rec)
        run.silhouette = model.silhouette
        run.chosen_k = model.clusters.k
        run.mc_fidelity = model.mc_fidelity
        return predict_mc_dnn(model, test)
    if "design" not in design_cache:
        design_cache["design"] = _baseline_design(config, train, val, test, rec)
    fm, Xv, Xt = design_cache["design"]
    X, y = fm.values, train.label
    b = config.baselines
    smote_cfg = SmoteConfig(config.smote_k, "match_majority", seed + SEED_OFFSETS["smote"], fm.onehot_blocks)
    if method in ("DNN", "ANN"):
        Xs, ys = smote_balance(X, y, smote_cfg)
        rec.record(f"{method.lower()}_smote", train.row_id)
        net = b.dnn if method == "DNN" else b.ann
        key = method.lower()
        model, _ = _net_direct(
            Xs, ys, Xv, val.label, net, N_CLASSES,
            seed + SEED_OFFSETS[f"{key}_init"], seed + SEED_OFFSETS[f"{key}_train"],
        )
        rec.record(key, train.row_id)
        rec.record("validation", val.row_id)
        return neural.predict_class(model, Xt)
    if b.smote:
        X, y = smote_balance(X, y, smote_cfg)
    if method == "KNN":
        rec.record("knn", train.row_id)
        return baselines.knn_classify(X, y, Xt, k=b.knn_k, n_classes=N_CLASSES)
    model = baselines.cslr_train(
        X, y, eta=b.cslr_eta, epochs=b.cslr_epochs, l2_lambda=b.cslr_l2,
        seed=seed + SEED_OFFSETS["cslr"], batch_size=b.cslr_batch_size, n_classes=N_CLASSES,
    )
    rec.record("cslr", train.row_id)
    return baselines.linear_predict(model, Xt)


def run_benchmark(
    config: PipelineConfig,
    seeds: Sequence[int],
    data: Dataset | None = None,
    log: Callable[[str], None] | None = None,
) -> BenchmarkResult:
    """Train and score every configured method on common splits, one per seed.

    A method that raises is recorded as failed for that seed; the other
    methods are unaffected.
    """
    config.validate()
    if not seeds:
        raise ValidationError("at least one seed is required")
    data = load_data(config) if data is None else data
    data.validate()
    external = {name: read_predictions(p) for name, p in sorted(config.external.items())}
    methods = tuple(config.methods) + tuple(external)
    runs = []
    for seed in seeds:
        train, val, test = split_dataset(data, config.split_ratios, seed + SEED_OFFSETS["split"], config.stratify)
        rec = FitRecorder()
        run = SeedRun(seed=int(seed), test_rows=len(test))
        cache: dict = {}
        for method in config.methods:
            t0 = time.perf_counter()
            try:
                pred = _run_method(method, config, seed, train, val, test, rec, run, cache)
                run.reports[method] = evaluate(test.label, pred, N_CLASSES, config.beta)
            except Exception as exc:  # one failed method must not sink the benchmark
                run.errors[method] = f"{type(exc).__name__}: {exc}"
            run.timings[method] = time.perf_counter() - t0
            if log:
                status = "failed" if method in run.errors else "ok"
                log(f"seed {seed} {method}: {status} ({run.timings[method]:.1f}s)")
        for name, preds in external.items():
            missing = [int(r) for r in test.row_id if int(r) not in preds]
            if missing:
                run.errors[name] = f"predictions missing for {len(missing)} test rows"
                continue
            pred = np.array([preds[int(r)] for r in test.row_id])
            run.reports[name] = evaluate(test.label, pred, N_CLASSES, config.beta)
        run.kmeans_fits = rec.kmeans_fits
        run.consumed_rows = {s: len(ids) for s, ids in sorted(rec.consumed.items())}
        run.test_overlap = rec.overlap(test.row_id)
        runs.append(run)
    return BenchmarkResult(methods, runs, config.beta)


# --------------------------------------------------------------------------
# Reports


def _f(x: float | None) -> str:
    return "" if x is None else f"{x:.6f}"


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


LEVEL_NAMES = [lvl.name for lvl in ChargeLevel]


def _report_rows(tag, method, rep: EvalReport):
    crit = [tag, method, "ok"] + [_f(fn(rep)) for fn in CRITERIA.values()]
    per = [
        [tag, method, LEVEL_NAMES[c], m.tp, m.fn, m.fp, m.tn, _f(m.recall), _f(m.precision),
         _f(m.accuracy), _f(m.f_measure), _f(m.g_mean), ";".join(m.degenerate)]
        for c, m in enumerate(rep.per_class)
    ]
    conf = [[tag, method, LEVEL_NAMES[a]] + rep.confusion.counts[a].tolist() for a in range(rep.confusion.C)]
    uo = [
        [tag, method, LEVEL_NAMES[u.level], u.under_count, _f(u.under_rate), u.over_count, _f(u.over_rate), int(u.empty_row)]
        for u in (rep.under_over or ())
    ]
    return crit, per, conf, uo


CRITERIA_HEADER = ["seed", "method", "status"] + list(CRITERIA)
PER_CLASS_HEADER = ["seed", "method", "class", "tp", "fn", "fp", "tn", "recall", "precision", "accuracy", "f_measure", "g_mean", "degenerate"]
CONFUSION_HEADER = ["seed", "method", "actual"] + [f"pred_{n}" for n in LEVEL_NAMES]
UNDER_OVER_HEADER = ["seed", "method", "level", "under_count", "under_rate", "over_count", "over_rate", "empty_row"]


def _write_all(out: Path, files: dict[str, str]) -> list[Path]:
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create output directory {out}: {exc}") from None
    if not os.access(out, os.W_OK):
        raise ValidationError(f"output directory {out} is not writable")
    paths = []
    for name, text in files.items():
        p = out / name
        p.write_text(text)
        paths.append(p)
    return paths


def emit_report(result: BenchmarkResult, out_dir: str | Path) -> list[Path]:
    """Write criteria, per-class, confusion, under/over, silhouette and leakage tables plus a summary.

    Output bytes depend only on ``result``; wall-clock timings are left out
    so that repeated runs compare equal.
    """
    if not result.runs or not any(r.reports or r.errors for r in result.runs):
        raise ValidationError("benchmark result is empty; nothing to report")
    crit_rows, per_rows, conf_rows, uo_rows, sil_rows, leak_rows = [], [], [], [], [], []
    for run in result.runs:
        for method in result.methods:
            if method in run.reports:
                c, p, cf, uo = _report_rows(run.seed, method, run.reports[method])
                crit_rows.append(c)
                per_rows += p
                conf_rows += cf
                uo_rows += uo
            elif method in run.errors:
                crit_rows.append([run.seed, method, "failed"] + [""] * len(CRITERIA))
        for k, s in sorted((run.silhouette or {}).items()):
            sil_rows.append([run.seed, k, _f(s), int(k == run.chosen_k)])
        for stage, n in run.consumed_rows.items():
            leak_rows.append([run.seed, stage, n, run.test_overlap.get(stage, 0)])
    for method in result.methods:
        meds = [result.median(method, fn) for fn in CRITERIA.values()]
        if meds[0] is None:
            continue
        crit_rows.append(["median", method, "ok"] + [_f(m) for m in meds])
        for lvl in (1, 2, 3):
            ucount = [r.reports[method].under_over[lvl - 1].under_count for r in result.runs if method in r.reports]
            ocount = [r.reports[method].under_over[lvl - 1].over_count for r in result.runs if method in r.reports]
            urate = [r.reports[method].under_over[lvl - 1].under_rate for r in result.runs if method in r.reports]
            orate = [r.reports[method].under_over[lvl - 1].over_rate for r in result.runs if method in r.reports]
            uo_rows.append(["median", method, LEVEL_NAMES[lvl], _f(median(ucount)), _f(median(urate)),
                            _f(median(ocount)), _f(median(orate)), ""])
    files = {
        "criteria.csv": _csv_text(CRITERIA_HEADER, crit_rows),
        "per_class.csv": _csv_text(PER_CLASS_HEADER, per_rows),
        "confusion.csv": _csv_text(CONFUSION_HEADER, conf_rows),
        "under_over.csv": _csv_text(UNDER_OVER_HEADER, uo_rows),
        "silhouette.csv": _csv_text(["seed", "k", "silhouette", "chosen"], sil_rows),
        "leakage.csv": _csv_text(["seed", "stage", "consumed_rows", "test_overlap"], leak_rows),
        "summary.txt": _summary(result),
    }
    return _write_all(Path(out_dir), files)


def _summary(result: BenchmarkResult) -> str:
    lines = [
        f"MC-DNN benchmark over seeds {', '.join(str(s) for s in result.seeds)} (beta={result.beta:g})",
        "",
        f"{'method':<10} {'accuracy':>9} {'precision':>9} {'recall':>9} {'F':>9} {'G':>9} {'overDC':>9}  failures",
    ]
    for method in result.methods:
        acc = result.median(method, CRITERIA["accuracy"])
        failures = sum(method in r.errors for r in result.runs)
        if acc is None:
            lines.append(f"{method:<10} {'failed':>9}{'':>50}  {failures}")
            continue
        vals = [result.median(method, CRITERIA[c]) for c in ("accuracy", "precision", "recall", "f_measure", "g_mean")]
        over_dc = result.median(method, lambda r: float(r.under_over[2].over_count))
        lines.append(f"{method:<10} " + " ".join(f"{v:9.3f}" for v in vals) + f" {over_dc:9.1f}  {failures}")
    lines.append("")
    lines.append("Medians across seeds; F and G average the per-class values.")
    for run in result.runs:
        if run.mc_fidelity is not None:
            lines.append(f"seed {run.seed}: k={run.chosen_k} mc_fidelity={run.mc_fidelity:.4f} kmeans_fits={run.kmeans_fits}")
        for method, err in sorted(run.errors.items()):
            lines.append(f"seed {run.seed}: {method} failed: {err}")
    lines.append(f"test rows overlapping fitted rows: {sum(sum(r.test_overlap.values()) for r in result.runs)}")
    return "\n".join(lines) + "\n"


def emit_evaluation(report: EvalReport, out_dir: str | Path, name: str = "predicted") -> list[Path]:
    c, p, cf, uo = _report_rows("-", name, report)
    files = {
        "criteria.csv": _csv_text(CRITERIA_HEADER, [c]),
        "per_class.csv": _csv_text(PER_CLASS_HEADER, p),
        "confusion.csv": _csv_text(CONFUSION_HEADER, cf),
        "under_over.csv": _csv_text(UNDER_OVER_HEADER, uo),
    }
    summary = [f"{k}: {_f(fn(report))}" for k, fn in CRITERIA.items()]
    files["summary.txt"] = "\n".join(summary) + "\n"
    return _write_all(Path(out_dir), files)

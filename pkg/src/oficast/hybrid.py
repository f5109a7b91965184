"""Forecast pipelines: VAR-only, FNN-only, and the VAR + FNN residual hybrid.

The hybrid fits the VAR first, computes its in-sample one-step residuals,
and trains the network to predict the next residual pair from the last q
residual pairs.  At prediction time the combined order forecast is the VAR
one-step forecast plus the predicted residual, floored at zero, and the
imbalance/signal are computed from that.  The floor is applied through one
shared code path for every count-based pipeline, so a hybrid whose
residual head is forced to zero reproduces VAR-only output bit for bit.

Evaluation is one-step rolling and causal: the prediction for row t sees
only true rows before t.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .data_io import OrderCounts, counts_to_array
from .neural_net import (
    AffineScaler,
    FnnModel,
    FnnTopology,
    TrainConfig,
    TrainingTrace,
    load_fnn,
    save_fnn,
    forward,
    train,
)
from .ofi_signal import OfiParams, Signal, clamp_ofi, ofi, signal
from . import var_model as vm

BUNDLE_FORMAT_TAG = "oficast-bundle v1"
KINDS = ("var_only", "fnn_only", "hybrid")

VAR_FILE = "var.txt"
FNN_FILE = "fnn.txt"
MANIFEST_FILE = "manifest.json"


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to fit and run one pipeline.

    ``fnn_input_lags`` is the number of trailing pairs fed to the network
    (residual pairs for the hybrid, raw count pairs for FNN-only); None
    means "same as var_lag".
    """

    var_lag: int = 2
    fnn_input_lags: int | None = None
    hidden_layers: tuple[int, ...] = (32, 16)
    activation: str = "relu"
    train: TrainConfig = field(default_factory=TrainConfig)
    ofi: OfiParams = field(default_factory=OfiParams)

    def __post_init__(self) -> None:
        if self.var_lag < 1:
            raise ValueError(f"var_lag must be >= 1, got {self.var_lag}")
        if self.fnn_input_lags is not None and self.fnn_input_lags < 1:
            raise ValueError(
                f"fnn_input_lags must be >= 1, got {self.fnn_input_lags}"
            )

    @property
    def residual_lags(self) -> int:
        return self.var_lag if self.fnn_input_lags is None else self.fnn_input_lags


@dataclass(frozen=True)
class PredictionRecord:
    """One evaluated row: position in the evaluated series, actual and
    predicted imbalance, and the signals derived from each."""

    index: int
    actual_ofi: float
    predicted_ofi: float
    actual_signal: Signal
    predicted_signal: Signal


@dataclass
class ModelBundle:
    kind: str
    config: PipelineConfig
    var_part: vm.VarModel | None = None
    fnn_part: FnnModel | None = None
    # conveniences captured at fit time; not persisted
    var_diagnostics: vm.FitDiagnostics | None = None
    training_trace: TrainingTrace | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.kind in ("var_only", "hybrid") and self.var_part is None:
            raise ValueError(f"{self.kind} bundle needs a VAR part")
        if self.kind in ("fnn_only", "hybrid") and self.fnn_part is None:
            raise ValueError(f"{self.kind} bundle needs an FNN part")


def required_warmup(bundle: ModelBundle) -> int:
    """Rows of true history a prediction needs before its target row."""
    cfg = bundle.config
    q = cfg.residual_lags
    if bundle.kind == "var_only":
        model_rows = cfg.var_lag
    elif bundle.kind == "fnn_only":
        model_rows = q
    else:
        model_rows = cfg.var_lag + q
    return max(model_rows, cfg.ofi.window_h - 1)


def _series_matrix(series) -> np.ndarray:
    if len(series) > 0 and isinstance(series[0], OrderCounts):
        return counts_to_array(series)
    arr = np.asarray(series, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (n, 2) series, got shape {arr.shape}")
    return arr


def _residual_training_set(resid: np.ndarray, q: int):
    """Stack (last q residual pairs -> next residual pair) samples."""
    m = resid.shape[0]
    if m <= q:
        raise ValueError(f"only {m} residual rows for {q} input lags")
    X = np.empty((m - q, 2 * q))
    for j in range(q):
        X[:, 2 * j : 2 * j + 2] = resid[j : m - q + j]
    Y = resid[q:]
    return X, Y


def _count_window_features(arr: np.ndarray, q: int, t_first: int):
    """Flattened (buy, sell) pairs for rows t-q .. t-1, chronological order."""
    n = arr.shape[0]
    X = np.empty((n - t_first, 2 * q))
    for j in range(q):
        rows = arr[t_first - q + j : n - q + j]
        X[:, 2 * j : 2 * j + 2] = rows
    return X


def fit_var_only(series, config: PipelineConfig) -> ModelBundle:
    arr = _series_matrix(series)
    model, diagnostics = vm.fit_var(arr, config.var_lag)
    return ModelBundle(
        kind="var_only", config=config, var_part=model, var_diagnostics=diagnostics
    )


def fit_fnn_only(series, config: PipelineConfig) -> ModelBundle:
    """Train the network to map the last q count pairs to the next window's OFI."""
    arr = _series_matrix(series)
    q = config.residual_lags
    h = config.ofi.window_h
    n = arr.shape[0]
    t_first = max(q, h - 1)
    if n - t_first < 2:
        raise ValueError(f"series of length {n} is too short to train with q={q}, h={h}")
    X = _count_window_features(arr, q, t_first)
    sums = _window_sums(arr, h)
    targets = np.array(
        [ofi(sums[t, 0], sums[t, 1]) for t in range(t_first, n)]
    )[:, None]
    topology = FnnTopology(
        input_dim=2 * q,
        hidden_layers=config.hidden_layers,
        output_dim=1,
        activation=config.activation,
    )
    model, trace = train(X, targets, topology, config.train)
    return ModelBundle(
        kind="fnn_only", config=config, fnn_part=model, training_trace=trace
    )


def fit_hybrid(series, config: PipelineConfig) -> ModelBundle:
    """VAR first, then the network on the VAR's own in-sample residuals."""
    arr = _series_matrix(series)
    p = config.var_lag
    q = config.residual_lags
    var, diagnostics = vm.fit_var(arr, p)
    resid = vm.residuals(var, arr)
    X, Y = _residual_training_set(resid, q)
    if X.shape[0] < 2:
        raise ValueError(
            f"series of length {arr.shape[0]} is too short to train with p={p}, q={q}"
        )
    topology = FnnTopology(
        input_dim=2 * q,
        hidden_layers=config.hidden_layers,
        output_dim=2,
        activation=config.activation,
    )
    model, trace = train(X, Y, topology, config.train)
    return ModelBundle(
        kind="hybrid",
        config=config,
        var_part=var,
        fnn_part=model,
        var_diagnostics=diagnostics,
        training_trace=trace,
    )


def _window_sums(arr: np.ndarray, h: int) -> np.ndarray:
    """Trailing sums over h rows; row t is valid for t >= h - 1."""
    cs = np.vstack([np.zeros((1, arr.shape[1])), np.cumsum(arr, axis=0)])
    out = np.full_like(arr, np.nan, dtype=float)
    out[h - 1 :] = cs[h:] - cs[:-h]
    return out


def hybrid_components(bundle: ModelBundle, series):
    """Per evaluated row: VAR forecast, residual prediction, floored combination.

    Returns (indices, var_pred, resid_pred, combined); the decomposition
    identity combined == max(var_pred + resid_pred, 0) holds exactly.
    VAR-only bundles contribute an all-zero residual prediction.
    """
    if bundle.kind == "fnn_only":
        raise ValueError("fnn_only pipelines have no count-space decomposition")
    arr = _series_matrix(series)
    cfg = bundle.config
    p = cfg.var_lag
    warmup = required_warmup(bundle)
    n = arr.shape[0]
    if n <= warmup:
        raise ValueError(
            f"series supplies {n} rows but the pipeline needs more than {warmup}"
        )
    preds = vm.one_step_predictions(bundle.var_part, arr)  # row i targets p + i
    t_idx = np.arange(warmup, n)
    var_pred = preds[t_idx - p]
    if bundle.kind == "hybrid":
        resid = arr[p:] - preds  # causal: residual at u uses rows <= u
        q = cfg.residual_lags
        m = t_idx.shape[0]
        feats = np.empty((m, 2 * q))
        for j in range(q):
            rows = resid[t_idx - q + j - p]
            feats[:, 2 * j : 2 * j + 2] = rows
        resid_pred = forward(bundle.fnn_part, feats)
    else:
        resid_pred = np.zeros_like(var_pred)
    combined = np.maximum(var_pred + resid_pred, 0.0)
    return t_idx, var_pred, resid_pred, combined


def predict(
    bundle: ModelBundle, series, horizon_mode: str = "one_step_rolling"
) -> list[PredictionRecord]:
    """One-step-ahead rolling predictions over every row with enough history.

    Output covers rows warmup .. n-1 of ``series`` in order; the record
    index is the row's position in ``series``.  Predicted OFI is clamped
    to [-1, 1].  With window_h > 1 the predicted window combines the
    trailing h-1 actual rows (known at prediction time) with the predicted
    row, keeping the evaluation causal.
    """
    if horizon_mode != "one_step_rolling":
        raise ValueError(f"unsupported horizon_mode {horizon_mode!r}")
    arr = _series_matrix(series)
    cfg = bundle.config
    h = cfg.ofi.window_h
    threshold = cfg.ofi.threshold
    warmup = required_warmup(bundle)
    n = arr.shape[0]
    if n <= warmup:
        raise ValueError(
            f"series supplies {n} rows but the pipeline needs more than {warmup}"
        )
    sums = _window_sums(arr, h)
    t_idx = np.arange(warmup, n)
    actual_vals = [ofi(sums[t, 0], sums[t, 1]) for t in t_idx]

    if bundle.kind == "fnn_only":
        q = cfg.residual_lags
        feats = _count_window_features(arr, q, warmup)
        out = forward(bundle.fnn_part, feats)
        predicted_vals = [clamp_ofi(v) for v in out[:, 0]]
    else:
        _, _, _, combined = hybrid_components(bundle, series)
        tail = sums[t_idx] - arr[t_idx]  # trailing h-1 actual rows
        win_buy = tail[:, 0] + combined[:, 0]
        win_sell = tail[:, 1] + combined[:, 1]
        predicted_vals = [
            clamp_ofi(ofi(b, s)) for b, s in zip(win_buy, win_sell)
        ]

    return [
        PredictionRecord(
            index=int(t),
            actual_ofi=float(a),
            predicted_ofi=float(pv),
            actual_signal=signal(a, threshold),
            predicted_signal=signal(pv, threshold),
        )
        for t, a, pv in zip(t_idx, actual_vals, predicted_vals)
    ]


def evaluate_on_holdout(
    bundle: ModelBundle, train_series, holdout_series
) -> list[PredictionRecord]:
    """Rolling predictions for every holdout row, warmed up on the train tail.

    Record indices are 0-based positions within the holdout.
    """
    warmup = required_warmup(bundle)
    if len(train_series) < warmup:
        raise ValueError(
            f"train series supplies {len(train_series)} rows but warmup needs {warmup}"
        )
    context = list(train_series[len(train_series) - warmup :]) + list(holdout_series)
    records = predict(bundle, context)
    return [replace(r, index=r.index - warmup) for r in records]


def zero_residual_head(bundle: ModelBundle) -> ModelBundle:
    """Hybrid ablation: replace the FNN with one that predicts exactly 0.0,
    leaving the VAR stage untouched."""
    if bundle.kind != "hybrid":
        raise ValueError("zero_residual_head applies to hybrid bundles")
    topo = bundle.fnn_part.topology
    zeroed = FnnModel(
        topology=topo,
        weights=[np.zeros_like(w) for w in bundle.fnn_part.weights],
        biases=[np.zeros_like(b) for b in bundle.fnn_part.biases],
        input_scaler=bundle.fnn_part.input_scaler,
        target_scaler=AffineScaler.identity(topo.output_dim),
    )
    return ModelBundle(
        kind="hybrid", config=bundle.config, var_part=bundle.var_part, fnn_part=zeroed
    )


def config_to_dict(config: PipelineConfig) -> dict:
    return {
        "var_lag": config.var_lag,
        "fnn_input_lags": config.fnn_input_lags,
        "hidden_layers": list(config.hidden_layers),
        "activation": config.activation,
        "train": {
            "epochs": config.train.epochs,
            "batch_size": config.train.batch_size,
            "optimizer": config.train.optimizer,
            "learning_rate": config.train.learning_rate,
            "early_stopping": config.train.early_stopping,
            "patience": config.train.patience,
            "validation_fraction": config.train.validation_fraction,
            "seed": config.train.seed,
        },
        "ofi": {
            "window_h": config.ofi.window_h,
            "threshold": config.ofi.threshold,
        },
    }


def config_from_dict(data: dict) -> PipelineConfig:
    train_cfg = TrainConfig(**data["train"])
    ofi_cfg = OfiParams(**data["ofi"])
    return PipelineConfig(
        var_lag=data["var_lag"],
        fnn_input_lags=data["fnn_input_lags"],
        hidden_layers=tuple(data["hidden_layers"]),
        activation=data["activation"],
        train=train_cfg,
        ofi=ofi_cfg,
    )


def save_bundle(bundle: ModelBundle, dirpath: str | Path) -> None:
    """Write a bundle directory: manifest.json plus the stage files."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": BUNDLE_FORMAT_TAG,
        "kind": bundle.kind,
        "config": config_to_dict(bundle.config),
    }
    with open(dirpath / MANIFEST_FILE, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    if bundle.var_part is not None:
        vm.save_var(bundle.var_part, dirpath / VAR_FILE)
    if bundle.fnn_part is not None:
        save_fnn(bundle.fnn_part, dirpath / FNN_FILE)


class BundleFormatError(ValueError):
    """Bundle directory and manifest disagree; ``field`` names the culprit."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"bundle field {field_name!r}: {message}")
        self.field = field_name


def load_bundle(dirpath: str | Path) -> ModelBundle:
    """Load and cross-validate a bundle directory.

    Any mismatch between the manifest and the stage files raises
    :class:`BundleFormatError` naming the inconsistent field.
    """
    dirpath = Path(dirpath)
    manifest_path = dirpath / MANIFEST_FILE
    if not manifest_path.exists():
        raise FileNotFoundError(str(manifest_path))
    with open(manifest_path, encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("format") != BUNDLE_FORMAT_TAG:
        raise BundleFormatError("format", f"expected {BUNDLE_FORMAT_TAG!r}")
    kind = manifest.get("kind")
    if kind not in KINDS:
        raise BundleFormatError("kind", f"expected one of {KINDS}, got {kind!r}")
    try:
        config = config_from_dict(manifest["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise BundleFormatError("config", str(exc)) from exc

    var_part = None
    if kind in ("var_only", "hybrid"):
        var_file = dirpath / VAR_FILE
        if not var_file.exists():
            raise BundleFormatError("kind", f"{kind} bundle is missing {VAR_FILE}")
        var_part = vm.load_var(var_file)
        if var_part.p != config.var_lag:
            raise BundleFormatError(
                "var_lag",
                f"manifest says {config.var_lag} but {VAR_FILE} was fitted with p={var_part.p}",
            )

    fnn_part = None
    if kind in ("fnn_only", "hybrid"):
        fnn_file = dirpath / FNN_FILE
        if not fnn_file.exists():
            raise BundleFormatError("kind", f"{kind} bundle is missing {FNN_FILE}")
        fnn_part = load_fnn(fnn_file)
        topo = fnn_part.topology
        if topo.input_dim != 2 * config.residual_lags:
            raise BundleFormatError(
                "fnn_input_lags",
                f"manifest implies input width {2 * config.residual_lags} "
                f"but {FNN_FILE} has {topo.input_dim}",
            )
        if topo.hidden_layers != config.hidden_layers:
            raise BundleFormatError(
                "hidden_layers",
                f"manifest says {config.hidden_layers} but {FNN_FILE} has {topo.hidden_layers}",
            )
        if topo.activation != config.activation:
            raise BundleFormatError(
                "activation",
                f"manifest says {config.activation!r} but {FNN_FILE} has {topo.activation!r}",
            )
        expected_out = 2 if kind == "hybrid" else 1
        if topo.output_dim != expected_out:
            raise BundleFormatError(
                "kind",
                f"{kind} bundle expects an output width of {expected_out}, "
                f"{FNN_FILE} has {topo.output_dim}",
            )

    # a stage file the declared kind cannot have used means the manifest
    # does not describe this directory
    if kind == "var_only" and (dirpath / FNN_FILE).exists():
        raise BundleFormatError(
            "kind", f"manifest says var_only but {FNN_FILE} is present"
        )
    if kind == "fnn_only" and (dirpath / VAR_FILE).exists():
        raise BundleFormatError(
            "kind", f"manifest says fnn_only but {VAR_FILE} is present"
        )
    return ModelBundle(kind=kind, config=config, var_part=var_part, fnn_part=fnn_part)


PREDICTIONS_HEADER = (
    "index",
    "actual_ofi",
    "predicted_ofi",
    "actual_signal",
    "predicted_signal",
)


def write_predictions_csv(records: list[PredictionRecord], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PREDICTIONS_HEADER)
        for r in records:
            writer.writerow(
                [
                    r.index,
                    repr(r.actual_ofi),
                    repr(r.predicted_ofi),
                    r.actual_signal.value,
                    r.predicted_signal.value,
                ]
            )


def read_predictions_csv(path: str | Path) -> list[PredictionRecord]:
    path = Path(path)
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != PREDICTIONS_HEADER:
            raise ValueError(
                f"{path}: expected header {','.join(PREDICTIONS_HEADER)}, got {header}"
            )
        for rec in reader:
            if not rec:
                continue
            records.append(
                PredictionRecord(
                    index=int(rec[0]),
                    actual_ofi=float(rec[1]),
                    predicted_ofi=float(rec[2]),
                    actual_signal=Signal(rec[3]),
                    predicted_signal=Signal(rec[4]),
                )
            )
    return records

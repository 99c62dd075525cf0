"""Training loop with early stopping, evaluation metrics and the
accuracy-versus-input-bandwidth sweep."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .datasets import BuildConfig, Dataset, DatasetSplit, build_dataset
from .errors import ConfigError, DataError
from .nn import AdamState, Model, adam_step, backward, build_reference_model, forward, loss_cce
from .sweep import encode_chunks

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 64
    max_epochs: int = 100
    early_stop_patience: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.early_stop_patience < 1:
            raise ConfigError("early_stop_patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size and max_epochs must be positive")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")


@dataclass(frozen=True)
class ModelConfig:
    filters: int = 16
    kernel: int = 7
    pool: int = 4
    dense_units: int = 128
    dropout: float = 0.5
    normalization: str = "maxabs"


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0

    def first_epoch_reaching(self, val_acc: float) -> int | None:
        """1-based epoch at which validation accuracy first reached ``val_acc``."""
        for i, acc in enumerate(self.val_acc):
            if acc >= val_acc:
                return i + 1
        return None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
            for i in range(len(self.train_loss)):
                w.writerow([i + 1, repr(self.train_loss[i]), repr(self.train_acc[i]),
                            repr(self.val_loss[i]), repr(self.val_acc[i])])


@dataclass
class EvalReport:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    confusion: np.ndarray  # rows = true class, columns = predicted
    class_names: list[str]

    @property
    def total(self) -> int:
        return int(self.confusion.sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["true\\pred"] + self.class_names)
            for name, row in zip(self.class_names, self.confusion):
                w.writerow([name] + row.tolist())

    def summary(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "total": self.total,
            "precision": dict(zip(self.class_names, self.precision.tolist())),
            "recall": dict(zip(self.class_names, self.recall.tolist())),
        }


def _predict_batched(model: Model, x: np.ndarray, batch: int = 2048) -> np.ndarray:
    return np.concatenate([model.predict(x[i:i + batch]) for i in range(0, x.shape[0], batch)])


def _loss_acc(model: Model, x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    probs = _predict_batched(model, x)
    loss, _ = loss_cce(probs, y)
    return loss, float(np.mean(probs.argmax(axis=1) == y))


def _required_classes(dataset: Dataset) -> list[int]:
    return sorted(dataset.meta.get("active_classes") or np.unique(dataset.labels).tolist())


def train(
    dataset: Dataset,
    model_config: ModelConfig | None = None,
    train_config: TrainConfig | None = None,
    model: Model | None = None,
) -> tuple[Model, TrainHistory]:
    """Adam + categorical cross-entropy, early stopping on validation loss.

    The returned model carries the weights of the best validation epoch.
    """
    mc = model_config or ModelConfig()
    tc = train_config or TrainConfig()
    tr, va = dataset.split("train"), dataset.split("val")
    needed = _required_classes(dataset)
    for split in (tr, va):
        missing = sorted(set(needed) - set(np.unique(split.labels).tolist()))
        if missing:
            raise DataError(f"split {split.name!r} lacks classes {missing}")

    if model is None:
        model = build_reference_model(
            dataset.chunk_len, dataset.num_classes,
            filters=mc.filters, kernel=mc.kernel, pool=mc.pool,
            dense_units=mc.dense_units, dropout=mc.dropout, seed=tc.seed,
        )
        model.normalization = mc.normalization
    x_tr = encode_chunks(tr.iq, model.normalization)
    x_va = encode_chunks(va.iq, model.normalization)
    y_tr, y_va = tr.labels, va.labels

    params = model.parameters()
    opt = AdamState(lr=tc.learning_rate)
    hist = TrainHistory()
    best_loss, best_weights, since_best = np.inf, model.get_weights(), 0
    n = x_tr.shape[0]
    for epoch in range(1, tc.max_epochs + 1):
        order = np.random.default_rng([tc.seed, epoch, 0]).permutation(n)
        drop_rng = np.random.default_rng([tc.seed, epoch, 1])
        loss_sum, correct = 0.0, 0
        for start in range(0, n, tc.batch_size):
            idx = order[start:start + tc.batch_size]
            probs, tape = forward(model, x_tr[idx], "train", drop_rng)
            loss, _ = loss_cce(probs, y_tr[idx])
            grads = backward(model, tape, y_tr[idx])
            adam_step(opt, params, grads)
            loss_sum += loss * idx.size
            correct += int(np.sum(probs.argmax(axis=1) == y_tr[idx]))
        val_loss, val_acc = _loss_acc(model, x_va, y_va)
        hist.train_loss.append(loss_sum / n)
        hist.train_acc.append(correct / n)
        hist.val_loss.append(val_loss)
        hist.val_acc.append(val_acc)
        hist.stopped_epoch = epoch
        logger.info("epoch %d loss %.4f acc %.4f val_loss %.4f val_acc %.4f",
                    epoch, loss_sum / n, correct / n, val_loss, val_acc)
        if val_loss < best_loss:
            best_loss, best_weights, since_best = val_loss, model.get_weights(), 0
            hist.best_epoch = epoch
        else:
            since_best += 1
            if since_best >= tc.early_stop_patience:
                break
    model.set_weights(best_weights)
    return model, hist


def evaluate(model: Model, split: DatasetSplit, class_names: list[str] | None = None) -> EvalReport:
    if len(split) == 0:
        raise DataError(f"split {split.name!r} is empty")
    x = encode_chunks(split.iq, model.normalization)
    pred = _predict_batched(model, x).argmax(axis=1)
    return report_from_predictions(split.labels, pred, model.num_classes, class_names)


def report_from_predictions(labels, pred, num_classes: int, class_names: list[str] | None = None) -> EvalReport:
    labels = np.asarray(labels, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    if labels.size == 0:
        raise DataError("cannot evaluate an empty split")
    cm = np.bincount(labels * num_classes + pred, minlength=num_classes**2).reshape(num_classes, num_classes)
    tp = np.diag(cm).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision = np.nan_to_num(tp / cm.sum(axis=0))
        recall = np.nan_to_num(tp / cm.sum(axis=1))
    names = class_names or [str(i) for i in range(num_classes)]
    return EvalReport(float(np.trace(cm) / cm.sum()), precision, recall, cm, list(names))


@dataclass
class SweepRow:
    g: int
    chunk_bins: int
    bandwidth_mhz: float
    accuracies: list[float]
    epochs: list[int]

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies))


def sweep_input_sizes(
    g_values=(1, 2, 4, 8),
    seeds=(0,),
    n_records: int = 20000,
    preset: str = "fullband8",
    train_config: TrainConfig | None = None,
    model_config: ModelConfig | None = None,
    **build_kwargs,
) -> list[SweepRow]:
    """Train and test one reference model per chunk size and seed."""
    tc = train_config or TrainConfig()
    rows = []
    for g in g_values:
        accs, epochs = [], []
        for seed in seeds:
            ds = build_dataset(BuildConfig(preset=preset, n_records=n_records, g=g, seed=seed, **build_kwargs))
            cfg = TrainConfig(tc.learning_rate, tc.batch_size, tc.max_epochs, tc.early_stop_patience, seed)
            model, hist = train(ds, model_config, cfg)
            accs.append(evaluate(model, ds.split("test")).accuracy)
            epochs.append(hist.stopped_epoch)
        sample_rate = ds.meta["sweep"]["sample_rate_hz"]
        rows.append(SweepRow(g, ds.chunk_len, sample_rate / g / 1e6, accs, epochs))
    return rows


def sweep_table_csv(rows: list[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["g", "chunk_bins", "bandwidth_mhz", "mean_accuracy", "accuracies"])
        for r in rows:
            w.writerow([r.g, r.chunk_bins, r.bandwidth_mhz, r.mean_accuracy, ";".join(f"{a:.6f}" for a in r.accuracies)])

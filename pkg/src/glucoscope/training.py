"""Adam training loop, evaluation and accuracy report tables."""

from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyDataset, ShapeMismatch
from .model import Model
from .nn_kernels import one_hot, softmax_cross_entropy, softmax_cross_entropy_grad
from .windowing import Label

log = logging.getLogger(__name__)

CLASS_NAMES = tuple(label.name.lower() for label in Label)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 0.001
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ValueError("epochs and batch_size must be >= 1 and learning_rate > 0")


@dataclass
class ImageDataset:
    images: np.ndarray  # B x H x W x 3
    labels: np.ndarray  # class indices, see Label
    patient_ids: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.images) != len(self.labels):
            raise ShapeMismatch("images and labels differ in length")
        if self.patient_ids is None:
            self.patient_ids = np.array([""] * len(self.labels))
        self.patient_ids = np.asarray(self.patient_ids, dtype=str)

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "ImageDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return ImageDataset(self.images[idx], self.labels[idx], self.patient_ids[idx])


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    """One bias-corrected Adam update, applied to ``params`` in place."""
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeMismatch(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        p -= (lr * (m / bc1) / (np.sqrt(v / bc2) + eps)).astype(p.dtype, copy=False)
    return state


@dataclass
class Metrics:
    accuracy: float
    confusion: np.ndarray  # rows = true class, cols = predicted
    dataset_tag: str
    patient_id: str | None = None

    @property
    def n(self) -> int:
        return int(self.confusion.sum())


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    val_accuracy: float


@dataclass
class RunHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    final: dict[str, Metrics] = field(default_factory=dict)
    wall_seconds: float = 0.0

    def to_csv(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(("epoch", "train_loss", "train_accuracy", "val_accuracy"))
        for r in self.epochs:
            w.writerow((r.epoch, f"{r.train_loss:.6f}", f"{r.train_accuracy:.2f}", f"{r.val_accuracy:.2f}"))
        return out.getvalue()


def predict_classes(probs: np.ndarray) -> np.ndarray:
    """Argmax; exact ties go to class 0 (``Label.NORMAL``)."""
    return np.argmax(probs, axis=1)


def metrics_from_predictions(y_true, y_pred, tag: str, patient_id: str | None = None) -> Metrics:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.size == 0:
        raise EmptyDataset(f"no samples for {tag}")
    conf = np.zeros((2, 2), dtype=np.int64)
    np.add.at(conf, (y_true, y_pred), 1)
    return Metrics(100.0 * np.trace(conf) / conf.sum(), conf, tag, patient_id)


def evaluate(model: Model, dataset: ImageDataset, tag: str = "test") -> Metrics:
    if len(dataset) == 0:
        raise EmptyDataset(f"cannot evaluate on an empty {tag} set")
    return metrics_from_predictions(dataset.labels, predict_classes(model.predict_proba(dataset.images)), tag)


def evaluate_by_patient(model: Model, dataset: ImageDataset, tag: str = "test") -> dict[str, Metrics]:
    if len(dataset) == 0:
        raise EmptyDataset(f"cannot evaluate on an empty {tag} set")
    pred = predict_classes(model.predict_proba(dataset.images))
    out = {}
    for pid in sorted(set(dataset.patient_ids.tolist())):
        mask = dataset.patient_ids == pid
        out[pid] = metrics_from_predictions(dataset.labels[mask], pred[mask], tag, pid)
    return out


def _batches(n: int, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(n)
    batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    # batch normalisation needs two samples; fold a lone trailing sample into its predecessor
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    return batches


def train(
    model: Model,
    train_set: ImageDataset,
    val_set: ImageDataset | None,
    config: TrainConfig = TrainConfig(),
) -> tuple[Model, RunHistory]:
    """Fixed-length Adam training (no early stopping, constant learning rate)."""
    if len(train_set) == 0:
        raise EmptyDataset("training set is empty")
    if len(train_set) < 2:
        raise EmptyDataset("training needs at least two images for batch statistics")
    size = model.config.input_size
    for ds in (train_set, val_set):
        if ds is not None and len(ds) and ds.images.shape[1:] != (size, size, 3):
            raise ShapeMismatch(f"images are {ds.images.shape[1:]}, model expects {(size, size, 3)}")

    rng = np.random.default_rng(config.seed)
    params = dict(model.named_parameters())
    grads = dict(model.named_gradients())
    state = AdamState()
    history = RunHistory()
    targets = one_hot(train_set.labels, 2, dtype=model.dtype)
    started = time.perf_counter()

    for epoch in range(1, config.epochs + 1):
        loss_sum = 0.0
        correct = 0
        for idx in _batches(len(train_set), config.batch_size, rng):
            x = train_set.images[idx]
            y = targets[idx]
            logits = model.logits(x, training=True)
            loss, probs = softmax_cross_entropy(logits, y)
            model.backward(softmax_cross_entropy_grad(probs, y))
            adam_step(params, grads, state, config.learning_rate, config.beta1, config.beta2, config.epsilon)
            loss_sum += loss * len(idx)
            correct += int((predict_classes(probs) == train_set.labels[idx]).sum())
        val_acc = float("nan")
        if val_set is not None and len(val_set):
            val_acc = evaluate(model, val_set, "validation").accuracy
        history.epochs.append(
            EpochRecord(epoch, loss_sum / len(train_set), 100.0 * correct / len(train_set), val_acc)
        )
        log.debug("epoch %d loss %.4f train %.2f val %.2f", epoch, history.epochs[-1].train_loss,
                  history.epochs[-1].train_accuracy, val_acc)

    history.wall_seconds = time.perf_counter() - started
    history.final["train"] = evaluate(model, train_set, "train")
    if val_set is not None and len(val_set):
        history.final["validation"] = evaluate(model, val_set, "validation")
    return model, history


# -------------------------------------------------------------------- reports


def _fmt(v: float) -> str:
    return "" if v is None or np.isnan(v) else f"{v:.2f}"


def summary_rows(columns: Sequence[Sequence[float]]) -> tuple[list[float], list[float]]:
    """Column mean and population standard deviation, NaNs ignored."""
    means, stds = [], []
    for col in columns:
        arr = np.asarray(col, dtype=float)
        arr = arr[~np.isnan(arr)]
        means.append(float(arr.mean()) if arr.size else float("nan"))
        stds.append(float(arr.std()) if arr.size else float("nan"))
    return means, stds


def table_csv(header: Sequence[str], rows: Sequence[Sequence[float]], first_col: str = "Model") -> str:
    """Rows numbered from 1 followed by ``Avg`` and ``Std`` rows."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow((first_col, *header))
    for i, row in enumerate(rows, start=1):
        w.writerow((i, *(_fmt(v) for v in row)))
    cols = list(zip(*rows)) if rows else [[] for _ in header]
    means, stds = summary_rows(cols)
    w.writerow(("Avg", *(_fmt(v) for v in means)))
    w.writerow(("Std", *(_fmt(v) for v in stds)))
    return out.getvalue()


def phase_table(runs: Iterable[Mapping[str, float]]) -> str:
    """Per-run table: Model, Training, Validation, Test."""
    rows = [(r["train"], r["validation"], r["test"]) for r in runs]
    return table_csv(("Training", "Validation", "Test"), rows)


def patient_table(runs: Iterable[Mapping[str, float]], patients: Sequence[str]) -> str:
    """Per-patient table: one test-accuracy column per patient."""
    rows = [tuple(r.get(p, float("nan")) for p in patients) for r in runs]
    return table_csv(tuple(f"Patient {p}" for p in patients), rows)


def boxplot_csv(columns: Mapping[str, Sequence[float]]) -> str:
    """Raw accuracy columns, one value per model, for box plots."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    names = list(columns)
    w.writerow(names)
    n = max((len(v) for v in columns.values()), default=0)
    for i in range(n):
        w.writerow(tuple(_fmt(columns[k][i]) if i < len(columns[k]) else "" for k in names))
    return out.getvalue()

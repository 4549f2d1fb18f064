import numpy as np
import pytest

from glucoscope.errors import EmptyDataset, ShapeMismatch
from glucoscope.model import ModelConfig, build
from glucoscope.training import (
    AdamState,
    ImageDataset,
    TrainConfig,
    adam_step,
    boxplot_csv,
    evaluate,
    evaluate_by_patient,
    metrics_from_predictions,
    patient_table,
    phase_table,
    predict_classes,
    summary_rows,
    train,
)
from glucoscope.windowing import SplitSpec, split

TABLE3 = {
    "1": [76.92, 76.92, 69.23, 73.08, 76.92, 73.08, 76.92, 69.23, 65.38, 69.23],
    "2": [66.67, 58.33, 83.33, 66.67, 91.67, 75.00, 83.33, 75.00, 83.33, 66.67],
    "3": [82.14, 75.00, 85.71, 78.57, 67.86, 78.57, 75.00, 75.00, 82.14, 82.14],
    "4": [95.83, 83.33, 87.50, 100.00, 87.50, 83.33, 79.17, 87.50, 87.50, 87.50],
}


def adam_reference(w, grad_fn, steps, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w -= lr * (m / (1 - b1**t)) / ((v / (1 - b2**t)) ** 0.5 + eps)
    return w


class ConstantModel:
    def __init__(self, cls):
        self.cls = cls

    def predict_proba(self, x):
        p = np.zeros((len(x), 2))
        p[:, self.cls] = 1.0
        return p


# -- adam


def test_adam_zero_gradient_leaves_parameters():
    p = {"w": np.array([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, AdamState())
    assert p["w"].tolist() == [1.0, -2.0]


def test_adam_first_step_moves_by_lr():
    p = {"w": np.array([0.5])}
    state = adam_step(p, {"w": np.array([1.0])}, AdamState(), lr=0.001)
    assert state.t == 1
    assert 0.5 - p["w"][0] == pytest.approx(0.001 / (1 + 1e-8), rel=1e-9)


def test_adam_quadratic_matches_reference_and_converges():
    p = {"w": np.array([1.0])}
    state = AdamState()
    for _ in range(100):
        adam_step(p, {"w": 2 * p["w"]}, state, lr=0.1)
    ref = adam_reference(1.0, lambda w: 2 * w, 100, 0.1)
    assert p["w"][0] == pytest.approx(ref, abs=1e-12)
    assert abs(p["w"][0]) < 0.1


def test_adam_rejects_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        adam_step({"w": np.zeros(2)}, {"w": np.zeros(3)}, AdamState())


# -- evaluation


def test_constant_normal_model_accuracy():
    ds = ImageDataset(np.zeros((4, 1, 1, 3)), [0, 0, 0, 1])
    m = evaluate(ConstantModel(0), ds)
    assert m.accuracy == 75.0
    assert m.confusion.tolist() == [[3, 0], [1, 0]]


def test_perfect_predictions():
    m = metrics_from_predictions([0, 1, 1, 0], [0, 1, 1, 0], "test")
    assert m.accuracy == 100.0
    assert m.confusion[0, 1] == m.confusion[1, 0] == 0
    assert m.n == 4


def test_argmax_tie_goes_to_normal():
    assert predict_classes(np.array([[0.5, 0.5]])).tolist() == [0]


def test_evaluate_by_patient():
    ds = ImageDataset(np.zeros((5, 1, 1, 3)), [0, 1, 1, 0, 1], ["A", "A", "B", "B", "B"])
    per = evaluate_by_patient(ConstantModel(1), ds)
    assert per["A"].accuracy == 50.0
    assert per["B"].accuracy == pytest.approx(200 / 3)


def test_empty_dataset():
    with pytest.raises(EmptyDataset):
        evaluate(ConstantModel(0), ImageDataset(np.zeros((0, 1, 1, 3)), []))


# -- reports


def test_summary_uses_population_std():
    means, stds = summary_rows([[1.0, 3.0], [2.0, float("nan"), 2.0]])
    assert means == [2.0, 2.0]
    assert stds == [1.0, 0.0]


def test_patient_table_reproduces_table3_summary_rows():
    runs = [{p: TABLE3[p][i] for p in TABLE3} for i in range(10)]
    text = patient_table(runs, ["1", "2", "3", "4"]).splitlines()
    assert text[0] == "Model,Patient 1,Patient 2,Patient 3,Patient 4"
    assert text[1] == "1,76.92,66.67,82.14,95.83"
    assert text[-2] == "Avg,72.69,75.00,78.21,87.92"
    assert text[-1] == "Std,4.02,9.86,4.91,5.73"


def test_phase_table_layout():
    text = phase_table([{"train": 90, "validation": 80, "test": 70}, {"train": 92, "validation": 82, "test": 72}])
    assert text.splitlines() == [
        "Model,Training,Validation,Test",
        "1,90.00,80.00,70.00",
        "2,92.00,82.00,72.00",
        "Avg,91.00,81.00,71.00",
        "Std,1.00,1.00,1.00",
    ]


def test_boxplot_columns():
    assert boxplot_csv({"a": [1.0, 2.0], "b": [3.0]}) == "a,b\n1.00,3.00\n2.00,\n"


# -- training runs


def test_memorises_eight_windows(balanced_images):
    images, labels, pids = balanced_images
    pick = np.concatenate([np.flatnonzero(labels == 0)[:4], np.flatnonzero(labels == 1)[:4]])
    ds = ImageDataset(images[pick], labels[pick], pids[pick])
    model, history = train(build(ModelConfig(seed=0)), ds, None, TrainConfig(epochs=50, seed=0))
    assert history.final["train"].accuracy == 100.0
    assert history.epochs[-1].train_loss < history.epochs[0].train_loss


def test_training_is_deterministic(balanced_images):
    images, labels, pids = balanced_images
    ds = ImageDataset(images[:24], labels[:24], pids[:24])
    cfg = TrainConfig(epochs=2, batch_size=8, seed=3)
    runs = [train(build(ModelConfig(seed=3)), ds.subset(range(16)), ds.subset(range(16, 24)), cfg) for _ in range(2)]
    assert runs[0][1].to_csv() == runs[1][1].to_csv()
    a, b = dict(runs[0][0].named_tensors()), dict(runs[1][0].named_tensors())
    assert all(np.array_equal(a[k], b[k]) for k in a)


def test_balanced_set_beats_majority_baseline(balanced_images):
    images, labels, pids = balanced_images
    ds = ImageDataset(images, labels, pids)
    tr, va, te = split(list(range(len(ds))), SplitSpec(seed=0))
    _, history = train(build(ModelConfig(seed=0)), ds.subset(tr), ds.subset(va), TrainConfig(epochs=50, seed=0))
    baseline = 100 * max(labels[va].mean(), 1 - labels[va].mean())
    assert history.final["validation"].accuracy >= baseline + 10


def test_train_rejects_bad_inputs():
    model = build(ModelConfig(input_size=16, growth_rate=2, block_layout=(1, 1)))
    with pytest.raises(EmptyDataset):
        train(model, ImageDataset(np.zeros((1, 16, 16, 3)), [0]), None)
    with pytest.raises(ShapeMismatch):
        train(model, ImageDataset(np.zeros((4, 8, 8, 3)), [0, 1, 0, 1]), None)

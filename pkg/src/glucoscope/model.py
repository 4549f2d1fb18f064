"""Dense-block CNN at configurable scale, plus checkpoint I/O.

Layout (DenseNet style)::

    7x7 conv /2 -> BN -> ReLU -> 3x3 maxpool /2
    dense block -> transition -> ... -> dense block
    BN -> ReLU -> global average pool -> dense(head_units) -> ReLU -> dense(2)

A dense layer is BN -> ReLU -> 1x1 conv (4 * growth) -> BN -> ReLU -> 3x3 conv
(growth), and its output is concatenated onto its input. A transition is
BN -> 1x1 conv (halving channels) -> 2x2 pooling.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import CorruptCheckpoint, IncompatibleGeometry, ShapeMismatch, VersionMismatch
from .nn_kernels import (
    AvgPool,
    BatchNorm,
    Conv2D,
    Dense,
    GlobalAvgPool,
    Layer,
    MaxPool,
    ReLU,
    softmax,
)

CHECKPOINT_MAGIC = "glucoscope-checkpoint"
CHECKPOINT_VERSION = 1
MANIFEST_NAME = "manifest.txt"
BLOB_NAME = "params.bin"


@dataclass(frozen=True)
class ModelConfig:
    input_size: int = 64
    growth_rate: int = 8
    block_layout: tuple[int, ...] = (2, 2)
    head_units: int = 512
    n_classes: int = 2
    seed: int = 0
    transition_pool: str = "avg"

    def __post_init__(self) -> None:
        object.__setattr__(self, "block_layout", tuple(int(b) for b in self.block_layout))
        if self.n_classes != 2:
            raise IncompatibleGeometry("this model is a two-class classifier")
        if self.head_units < 1 or self.growth_rate < 1:
            raise IncompatibleGeometry("head_units and growth_rate must be positive")
        if not self.block_layout or min(self.block_layout) < 1:
            raise IncompatibleGeometry("every dense block needs at least one layer")
        if self.transition_pool not in ("avg", "max"):
            raise IncompatibleGeometry("transition_pool must be 'avg' or 'max'")

    @property
    def downsampling(self) -> int:
        return 4 * 2 ** (len(self.block_layout) - 1)

    @property
    def stem_channels(self) -> int:
        return 2 * self.growth_rate


PAPER_CONFIG = ModelConfig(input_size=224, growth_rate=32, block_layout=(6, 12, 24, 16))
DESK_CONFIG = ModelConfig()


class Sequential(Layer):
    def __init__(self, named: list[tuple[str, Layer]]):
        super().__init__()
        self.children = named

    def forward(self, x, training=False):
        for _, layer in self.children:
            x = layer.forward(x, training)
        return x

    def backward(self, dout):
        for _, layer in reversed(self.children):
            dout = layer.backward(dout)
        return dout


class DenseBlock(Layer):
    """Each member sees the concatenation of the block input and all earlier outputs."""

    def __init__(self, named: list[tuple[str, Sequential]], in_channels: int, growth: int):
        super().__init__()
        self.children = named
        self.in_channels = in_channels
        self.growth = growth

    @property
    def out_channels(self) -> int:
        return self.in_channels + len(self.children) * self.growth

    def forward(self, x, training=False):
        feats = x
        for _, layer in self.children:
            feats = np.concatenate([feats, layer.forward(feats, training)], axis=-1)
        return feats

    def backward(self, dout):
        g = dout
        for _, layer in reversed(self.children):
            c_in = g.shape[-1] - self.growth
            g = g[..., :c_in] + layer.backward(np.ascontiguousarray(g[..., c_in:]))
        return g


def _iter_leaves(prefix: str, layer: Layer) -> Iterator[tuple[str, Layer]]:
    children = getattr(layer, "children", None)
    if children is None:
        yield prefix, layer
        return
    for name, child in children:
        yield from _iter_leaves(f"{prefix}.{name}" if prefix else name, child)


class Model:
    def __init__(self, config: ModelConfig, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        self.body = _build_body(config, self.dtype)

    # -- introspection
    def leaves(self) -> Iterator[tuple[str, Layer]]:
        return _iter_leaves("", self.body)

    def named_parameters(self) -> Iterator[tuple[str, np.ndarray]]:
        for name, layer in self.leaves():
            for key, value in layer.params.items():
                yield f"{name}.{key}", value

    def named_gradients(self) -> Iterator[tuple[str, np.ndarray]]:
        for name, layer in self.leaves():
            for key, value in layer.grads.items():
                yield f"{name}.{key}", value

    def named_buffers(self) -> Iterator[tuple[str, np.ndarray]]:
        for name, layer in self.leaves():
            for key, value in layer.buffers.items():
                yield f"{name}.{key}", value

    def named_tensors(self) -> Iterator[tuple[str, np.ndarray]]:
        yield from self.named_parameters()
        yield from self.named_buffers()

    @property
    def parameter_count(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    @property
    def backbone_parameter_count(self) -> int:
        return sum(p.size for n, p in self.named_parameters() if not n.startswith("head."))

    def describe(self) -> list[str]:
        return [f"{name}: {layer.describe()}" for name, layer in self.leaves()]

    # -- compute
    def logits(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        s = self.config.input_size
        if x.ndim != 4 or x.shape[1:] != (s, s, 3):
            raise ShapeMismatch(f"expected batch of {s}x{s}x3 images, got {x.shape}")
        return self.body.forward(x.astype(self.dtype, copy=False), training)

    def backward(self, dlogits: np.ndarray) -> None:
        self.body.backward(dlogits.astype(self.dtype, copy=False))

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        """Class probabilities, ``B x 2``."""
        return softmax(self.logits(x, training))

    def predict_proba(self, x: np.ndarray, batch_size: int = 64) -> np.ndarray:
        if len(x) == 0:
            return np.zeros((0, self.config.n_classes), dtype=self.dtype)
        return np.concatenate([self.forward(x[i : i + batch_size]) for i in range(0, len(x), batch_size)])


def _he(rng: np.random.Generator, shape: tuple, fan_in: int, dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


def _conv(rng, kh, c_in, c_out, dtype, stride=1, padding=0, input_grad=True) -> Conv2D:
    return Conv2D(_he(rng, (kh, kh, c_in, c_out), kh * kh * c_in, dtype), stride, padding, input_grad)


def _build_body(cfg: ModelConfig, dtype) -> Sequential:
    if cfg.input_size % cfg.downsampling or cfg.input_size < cfg.downsampling:
        raise IncompatibleGeometry(
            f"input_size {cfg.input_size} not divisible by total downsampling {cfg.downsampling}"
        )
    rng = np.random.default_rng(cfg.seed)
    g = cfg.growth_rate
    c = cfg.stem_channels
    stem = Sequential(
        [
            ("conv", _conv(rng, 7, 3, c, dtype, stride=2, padding=3, input_grad=False)),
            ("bn", BatchNorm(c, dtype=dtype)),
            ("relu", ReLU()),
            ("pool", MaxPool(3, 2, 1)),
        ]
    )
    parts: list[tuple[str, Layer]] = [("stem", stem)]
    for b, n_layers in enumerate(cfg.block_layout, start=1):
        members = []
        c_block = c
        for i in range(n_layers):
            members.append(
                (
                    f"layer{i + 1}",
                    Sequential(
                        [
                            ("bn1", BatchNorm(c, dtype=dtype)),
                            ("relu1", ReLU()),
                            ("conv1", _conv(rng, 1, c, 4 * g, dtype)),
                            ("bn2", BatchNorm(4 * g, dtype=dtype)),
                            ("relu2", ReLU()),
                            ("conv2", _conv(rng, 3, 4 * g, g, dtype, padding=1)),
                        ]
                    ),
                )
            )
            c += g
        parts.append((f"block{b}", DenseBlock(members, c_block, g)))
        if b < len(cfg.block_layout):
            pool = AvgPool(2) if cfg.transition_pool == "avg" else MaxPool(2, 2)
            parts.append(
                (
                    f"transition{b}",
                    Sequential(
                        [
                            ("bn", BatchNorm(c, dtype=dtype)),
                            ("conv", _conv(rng, 1, c, c // 2, dtype)),
                            ("pool", pool),
                        ]
                    ),
                )
            )
            c //= 2
    final = cfg.input_size // cfg.downsampling
    parts.append(("final", Sequential([("bn", BatchNorm(c, dtype=dtype)), ("relu", ReLU()),
                                       ("pool", GlobalAvgPool(final))])))
    u = cfg.head_units
    parts.append(
        (
            "head",
            Sequential(
                [
                    ("fc", Dense(_he(rng, (c, u), c, dtype), np.zeros(u, dtype=dtype))),
                    ("relu", ReLU()),
                    ("out", Dense(_he(rng, (u, cfg.n_classes), u, dtype), np.zeros(cfg.n_classes, dtype=dtype))),
                ]
            ),
        )
    )
    return Sequential(parts)


def build(config: ModelConfig = DESK_CONFIG, dtype=np.float32) -> Model:
    return Model(config, dtype)


def forward(model: Model, batch: np.ndarray, mode: str = "eval") -> np.ndarray:
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    return model.forward(batch, training=mode == "train")


# ---------------------------------------------------------------- checkpoints


def config_to_text(cfg: ModelConfig) -> dict[str, str]:
    d = asdict(cfg)
    d["block_layout"] = ",".join(str(b) for b in cfg.block_layout)
    return {k: str(v) for k, v in d.items()}


def config_from_text(d: dict[str, str]) -> ModelConfig:
    return ModelConfig(
        input_size=int(d["input_size"]),
        growth_rate=int(d["growth_rate"]),
        block_layout=tuple(int(b) for b in d["block_layout"].split(",")),
        head_units=int(d["head_units"]),
        n_classes=int(d["n_classes"]),
        seed=int(d["seed"]),
        transition_pool=d["transition_pool"],
    )


def save(model: Model, path: str | Path) -> None:
    """Write ``manifest.txt`` (config, layers, tensor table) and ``params.bin`` (<f4) into ``path``."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}", "", "[config]"]
    lines += [f"{k} = {v}" for k, v in config_to_text(model.config).items()]
    lines += ["", "[layers]"]
    lines += [f"{i} = {d}" for i, d in enumerate(model.describe())]
    lines += ["", "[tensors]"]
    blob = io.BytesIO()
    offset = 0
    for name, arr in model.named_tensors():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        shape = "x".join(str(s) for s in arr.shape)
        lines.append(f"{name} = {shape} {offset} {arr.size}")
        blob.write(data)
        offset += arr.size
    lines += ["", "[blob]", "dtype = float32-le", f"count = {offset}", ""]
    (path / MANIFEST_NAME).write_text("\n".join(lines), encoding="utf-8")
    (path / BLOB_NAME).write_bytes(blob.getvalue())


def _read_manifest(path: Path) -> tuple[ModelConfig, list[tuple[str, tuple[int, ...], int, int]], int]:
    try:
        text = (path / MANIFEST_NAME).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise CorruptCheckpoint(f"no {MANIFEST_NAME} in {path}") from None
    first, _, rest = text.partition("\n")
    parts = first.split()
    if len(parts) != 2 or parts[0] != CHECKPOINT_MAGIC:
        raise CorruptCheckpoint("not a glucoscope checkpoint")
    if parts[1] != str(CHECKPOINT_VERSION):
        raise VersionMismatch(f"checkpoint version {parts[1]}, expected {CHECKPOINT_VERSION}")
    cp = configparser.ConfigParser(delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(rest)
        cfg = config_from_text(dict(cp["config"]))
        tensors = []
        for name, spec in cp["tensors"].items():
            shape_s, off, count = spec.split()
            shape = tuple(int(s) for s in shape_s.split("x")) if shape_s else ()
            tensors.append((name, shape, int(off), int(count)))
        total = int(cp["blob"]["count"])
    except (KeyError, ValueError, configparser.Error) as exc:
        raise CorruptCheckpoint(f"unreadable manifest: {exc}") from None
    return cfg, tensors, total


def load(path: str | Path) -> Model:
    """Rebuild the model from the manifest and fill it from the blob.

    Every tensor's name, shape and count are checked against the rebuilt
    architecture before any data is read.
    """
    path = Path(path)
    cfg, tensors, total = _read_manifest(path)
    try:
        model = Model(cfg)
    except IncompatibleGeometry as exc:
        raise CorruptCheckpoint(f"manifest config invalid: {exc}") from None
    expected = list(model.named_tensors())
    if len(expected) != len(tensors):
        raise CorruptCheckpoint(f"manifest lists {len(tensors)} tensors, model has {len(expected)}")
    offset = 0
    for (name, arr), (m_name, m_shape, m_off, m_count) in zip(expected, tensors):
        if name != m_name or arr.shape != m_shape or m_count != arr.size or m_off != offset:
            raise CorruptCheckpoint(f"tensor {m_name} {m_shape} does not match model tensor {name} {arr.shape}")
        offset += m_count
    if offset != total:
        raise CorruptCheckpoint("tensor table does not add up to the blob count")
    try:
        raw = (path / BLOB_NAME).read_bytes()
    except FileNotFoundError:
        raise CorruptCheckpoint(f"no {BLOB_NAME} in {path}") from None
    if len(raw) != 4 * total:
        raise CorruptCheckpoint(f"blob holds {len(raw)} bytes, manifest expects {4 * total}")
    flat = np.frombuffer(raw, dtype="<f4")
    for (name, arr), (_, _, off, count) in zip(expected, tensors):
        arr[...] = flat[off : off + count].reshape(arr.shape)
    return model

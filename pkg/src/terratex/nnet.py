"""Texture-aware embedding network.

A small convolutional backbone feeds two branches: an orderless texture
encoder (soft assignment of spatial features to learned codewords, residual
aggregation) and a global average pool. The branches are fused by an outer
product (bilinear pooling, signed-sqrt + l2 normalized) and projected by a
single fully connected layer into the embedding space. There is no
classification head; the embedding is the output.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, conv2d, l2_normalize, no_grad, relu, signed_sqrt

CHECKPOINT_MAGIC = b"DEPC"
CHECKPOINT_VERSION = 1
_NORM_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters for the embedding network."""

    input_size: int = 64
    channels: tuple[int, ...] = (16, 32, 48, 64)
    strides: tuple[int, ...] = (1, 2, 2, 2)
    kernel: int = 3
    codewords: int = 8
    texture_dim: int = 64
    embed_dim: int = 512
    norm: bool = True

    @property
    def feature_dim(self) -> int:
        return self.channels[-1]

    @property
    def feature_size(self) -> int:
        s = self.input_size
        for stride in self.strides:
            s = (s + 2 * (self.kernel // 2) - self.kernel) // stride + 1
        return s


TINY_CONFIG = ModelConfig(
    input_size=16, channels=(8, 8), strides=(2, 2), codewords=4, texture_dim=8, embed_dim=16
)


@dataclass
class DepModel:
    """Parameter container for the embedding network."""

    config: ModelConfig
    params: dict[str, Tensor] = field(default_factory=dict)
    dtype: np.dtype = np.float32

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0, dtype=np.float32) -> "DepModel":
        rng = np.random.default_rng(seed)
        dtype = np.dtype(dtype)
        p: dict[str, Tensor] = {}

        def param(name, arr):
            p[name] = Tensor(arr.astype(dtype), requires_grad=True)

        in_ch = 3
        k = config.kernel
        for i, out_ch in enumerate(config.channels):
            fan_in = in_ch * k * k
            param(f"backbone.{i}.w", rng.normal(0.0, np.sqrt(2.0 / fan_in), (out_ch, in_ch, k, k)))
            param(f"backbone.{i}.b", np.zeros(out_ch))
            if config.norm:
                param(f"backbone.{i}.gamma", np.ones((1, out_ch, 1, 1)))
                param(f"backbone.{i}.beta", np.zeros((1, out_ch, 1, 1)))
            in_ch = out_ch

        d = config.feature_dim
        param("codewords", rng.normal(0.0, 1.0 / np.sqrt(d), (config.codewords, d)))
        param("log_smoothing", np.zeros(config.codewords))
        enc = config.codewords * d
        param("texture.w", rng.normal(0.0, np.sqrt(1.0 / enc), (enc, config.texture_dim)))
        param("texture.b", np.zeros(config.texture_dim))
        fused = config.texture_dim * d
        # the fused vector is unit norm; this scale makes embeddings start
        # near unit norm so distances are commensurate with the loss margin
        param("embed.w", rng.normal(0.0, np.sqrt(1.0 / config.embed_dim), (fused, config.embed_dim)))
        param("embed.b", np.zeros(config.embed_dim))
        return cls(config=config, params=p, dtype=dtype)

    def parameters(self) -> dict[str, Tensor]:
        return self.params

    def zero_grad(self) -> None:
        for t in self.params.values():
            t.zero_grad()

    def astype(self, dtype) -> "DepModel":
        dtype = np.dtype(dtype)
        params = {
            name: Tensor(t.data.astype(dtype), requires_grad=True) for name, t in self.params.items()
        }
        return DepModel(config=self.config, params=params, dtype=dtype)


def _as_batch(model: DepModel, x, expected_ch: int, rank_name: str):
    if isinstance(x, Tensor):
        t = x
    else:
        t = Tensor(np.asarray(x, dtype=model.dtype))
    single = t.data.ndim == 3
    if single:
        t = t.reshape((1,) + t.data.shape)
    if t.data.ndim != 4 or t.data.shape[1] != expected_ch:
        raise ValueError(f"expected {rank_name} with {expected_ch} channels, got shape {t.data.shape}")
    return t, single


def forward_backbone(model: DepModel, image) -> Tensor:
    """Convolutional feature extraction: image -> feature map."""
    cfg = model.config
    x, single = _as_batch(model, image, 3, "image")
    if x.data.shape[2] != cfg.input_size or x.data.shape[3] != cfg.input_size:
        raise ValueError(
            f"input is {x.data.shape[2]}x{x.data.shape[3]}, model expects "
            f"{cfg.input_size}x{cfg.input_size}"
        )
    p = model.params
    pad = cfg.kernel // 2
    for i, stride in enumerate(cfg.strides):
        x = conv2d(x, p[f"backbone.{i}.w"], p[f"backbone.{i}.b"], stride=stride, pad=pad)
        if cfg.norm:
            mu = x.mean(axis=(2, 3), keepdims=True)
            xc = x - mu
            var = (xc * xc).mean(axis=(2, 3), keepdims=True)
            x = xc / (var + _NORM_EPS).sqrt()
            x = x * p[f"backbone.{i}.gamma"] + p[f"backbone.{i}.beta"]
        x = relu(x)
    return x.reshape(x.data.shape[1:]) if single else x


def texture_encode(model: DepModel, features) -> Tensor:
    """Orderless encoding of a feature map against learned codewords.

    Each spatial position is softly assigned to every codeword (weights from
    a softmax over negative scaled squared distances); the weighted residuals
    are aggregated per codeword, flattened, l2-normalized, and projected.
    The result is invariant to any permutation of the spatial positions.
    """
    cfg = model.config
    f, single = _as_batch(model, features, cfg.feature_dim, "feature map")
    b, d = f.data.shape[0], cfg.feature_dim
    n = f.data.shape[2] * f.data.shape[3]
    kc = cfg.codewords
    p = model.params

    x = f.reshape(b, d, n).transpose((0, 2, 1))
    residuals = x.reshape(b, n, 1, d) - p["codewords"].reshape(1, 1, kc, d)
    sqdist = (residuals * residuals).sum(axis=3)
    smoothing = p["log_smoothing"].exp().reshape(1, 1, kc)
    logits = -(sqdist * smoothing)
    shift = Tensor(logits.data.max(axis=2, keepdims=True))
    expz = (logits - shift).exp()
    weights = expz / expz.sum(axis=2, keepdims=True)
    aggregated = (weights.reshape(b, n, kc, 1) * residuals).sum(axis=1)
    encoded = l2_normalize(aggregated.reshape(b, kc * d), axis=1)
    out = encoded @ p["texture.w"] + p["texture.b"]
    return out.reshape(cfg.texture_dim) if single else out


def assignment_weights(model: DepModel, features) -> np.ndarray:
    """Per-position soft-assignment weights over codewords (inference only)."""
    cfg = model.config
    with no_grad():
        f, single = _as_batch(model, features, cfg.feature_dim, "feature map")
        b, d = f.data.shape[0], cfg.feature_dim
        n = f.data.shape[2] * f.data.shape[3]
        x = f.data.reshape(b, d, n).transpose(0, 2, 1)
        residuals = x[:, :, None, :] - model.params["codewords"].data[None, None, :, :]
        sqdist = (residuals**2).sum(axis=3)
        logits = -sqdist * np.exp(model.params["log_smoothing"].data)[None, None, :]
        logits -= logits.max(axis=2, keepdims=True)
        expz = np.exp(logits)
        weights = expz / expz.sum(axis=2, keepdims=True)
    return weights[0] if single else weights


def global_pool(model: DepModel, features) -> Tensor:
    """Per-channel mean over the spatial grid."""
    f, single = _as_batch(model, features, model.config.feature_dim, "feature map")
    out = f.mean(axis=(2, 3))
    return out.reshape(model.config.feature_dim) if single else out


def bilinear_pool(x_t, x_g) -> Tensor:
    """Flattened outer product of the two branch vectors, signed-sqrt + l2."""
    t = x_t if isinstance(x_t, Tensor) else Tensor(np.asarray(x_t))
    g = x_g if isinstance(x_g, Tensor) else Tensor(np.asarray(x_g))
    single = t.data.ndim == 1
    if single:
        t = t.reshape(1, t.data.shape[0])
        g = g.reshape(1, g.data.shape[0])
    b, nt = t.data.shape
    d = g.data.shape[1]
    outer = t.reshape(b, nt, 1) * g.reshape(b, 1, d)
    fused = l2_normalize(signed_sqrt(outer.reshape(b, nt * d)), axis=1)
    return fused.reshape(nt * d) if single else fused


def embed(model: DepModel, image) -> Tensor:
    """Full composition: backbone -> {texture, pool} -> bilinear -> embedding."""
    ndim = image.data.ndim if isinstance(image, Tensor) else np.asarray(image).ndim
    single = ndim == 3
    features = forward_backbone(model, image)
    if single:
        features = features.reshape((1,) + features.data.shape)
    x_t = texture_encode(model, features)
    x_g = global_pool(model, features)
    x_b = bilinear_pool(x_t, x_g)
    out = x_b @ model.params["embed.w"] + model.params["embed.b"]
    return out.reshape(model.config.embed_dim) if single else out


def embed_batch(model: DepModel, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Embed a stack of images without recording gradients."""
    images = np.asarray(images, dtype=model.dtype)
    rows = []
    with no_grad():
        for start in range(0, images.shape[0], batch_size):
            out = embed(model, Tensor(images[start : start + batch_size]))
            rows.append(out.data)
    return np.concatenate(rows, axis=0) if rows else np.zeros((0, model.config.embed_dim))


def read_model_config(path) -> ModelConfig:
    """Parse a flat key=value architecture file; unknown keys are errors."""
    from pathlib import Path

    values: dict = {}
    for ln, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key=value")
        key, _, raw = line.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key in ("channels", "strides"):
            values[key] = tuple(int(v) for v in raw.split(","))
        elif key == "norm":
            values[key] = raw.lower() in ("1", "true", "yes")
        elif key in ("input_size", "kernel", "codewords", "texture_dim", "embed_dim"):
            values[key] = int(raw)
        else:
            raise ValueError(f"{path}:{ln}: unknown model config key {key!r}")
    return ModelConfig(**values)


# -- checkpoint io -----------------------------------------------------

def _arch_vector(cfg: ModelConfig) -> np.ndarray:
    vals = [
        cfg.input_size,
        cfg.kernel,
        1 if cfg.norm else 0,
        cfg.codewords,
        cfg.texture_dim,
        cfg.embed_dim,
        len(cfg.channels),
        *cfg.channels,
        *cfg.strides,
    ]
    return np.asarray(vals, dtype=np.float32)


def _arch_from_vector(vec: np.ndarray) -> ModelConfig:
    vals = [int(round(v)) for v in vec]
    n_layers = vals[6]
    channels = tuple(vals[7 : 7 + n_layers])
    strides = tuple(vals[7 + n_layers : 7 + 2 * n_layers])
    return ModelConfig(
        input_size=vals[0],
        kernel=vals[1],
        norm=bool(vals[2]),
        codewords=vals[3],
        texture_dim=vals[4],
        embed_dim=vals[5],
        channels=channels,
        strides=strides,
    )


def save_checkpoint(model: DepModel, path) -> None:
    """Write the parameter blocks (32-bit floats, little endian) to disk."""
    blocks: list[tuple[str, np.ndarray]] = [("__arch__", _arch_vector(model.config))]
    blocks += [(name, t.data) for name, t in sorted(model.params.items())]
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(blocks)))
        for name, arr in blocks:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_checkpoint(path, dtype=np.float32) -> DepModel:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"not a checkpoint file: bad magic {magic!r}")
        version, n_blocks = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        blocks: dict[str, np.ndarray] = {}
        for _ in range(n_blocks):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{rank}I", fh.read(4 * rank))
            count = int(np.prod(shape)) if rank else 1
            arr = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape)
            blocks[name] = arr
    if "__arch__" not in blocks:
        raise ValueError("checkpoint is missing the architecture block")
    cfg = _arch_from_vector(blocks.pop("__arch__"))
    dtype = np.dtype(dtype)
    params = {name: Tensor(arr.astype(dtype), requires_grad=True) for name, arr in blocks.items()}
    return DepModel(config=cfg, params=params, dtype=dtype)

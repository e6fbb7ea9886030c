"""A small k-layer transformer encoder classifier.

The same architecture serves as teacher and student; the student can be
initialized from the teacher's first k layers.  Two forward entry points
exist: from token ids and from raw embedding batches, the latter being
how interpolated (mixed) inputs are fed to either model.

Padding convention: a pad position carries the exact zero embedding
(token and position contribution both zeroed), and attention scores for
pad keys get an additive -1e9 before the softmax.  Position 0 is the
pooled classification slot.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import dataclass, asdict
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


class CheckpointError(Exception):
    """Malformed, truncated, or incompatible checkpoint file."""


@dataclass(frozen=True)
class ModelConfig:
    num_layers: int
    hidden_dim: int
    num_heads: int
    ffn_dim: int
    vocab_size: int
    max_seq_len: int
    num_classes: int
    dropout_rate: float = 0.0

    def __post_init__(self):
        for name in ("num_layers", "hidden_dim", "num_heads", "ffn_dim",
                     "vocab_size", "max_seq_len", "num_classes"):
            if getattr(self, name) <= 0:
                raise ValueError(f"ModelConfig.{name} must be positive")
        if self.hidden_dim % self.num_heads != 0:
            raise ValueError(
                f"hidden_dim {self.hidden_dim} not divisible by num_heads {self.num_heads}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")


def parameter_shapes(config: ModelConfig) -> dict[str, tuple]:
    """Canonical (ordered) name -> shape map for every learnable array."""
    d, f = config.hidden_dim, config.ffn_dim
    shapes: dict[str, tuple] = {
        "tok_emb": (config.vocab_size, d),
        "pos_emb": (config.max_seq_len, d),
    }
    for i in range(config.num_layers):
        p = f"layers.{i}"
        for proj in ("wq", "wk", "wv", "wo"):
            shapes[f"{p}.attn.{proj}"] = (d, d)
        for b in ("bq", "bk", "bv", "bo"):
            shapes[f"{p}.attn.{b}"] = (d,)
        shapes[f"{p}.ln1.gain"] = (d,)
        shapes[f"{p}.ln1.bias"] = (d,)
        shapes[f"{p}.ffn.w1"] = (d, f)
        shapes[f"{p}.ffn.b1"] = (f,)
        shapes[f"{p}.ffn.w2"] = (f, d)
        shapes[f"{p}.ffn.b2"] = (d,)
        shapes[f"{p}.ln2.gain"] = (d,)
        shapes[f"{p}.ln2.bias"] = (d,)
    shapes["head.weight"] = (d, config.num_classes)
    shapes["head.bias"] = (config.num_classes,)
    return shapes


def parameter_count_formula(config: ModelConfig) -> int:
    """Closed form: V*d + T*d + k*(4(d^2+d) + 2*2d + d*f+f + f*d+d + 2d) + d*C + C."""
    d, f, k = config.hidden_dim, config.ffn_dim, config.num_layers
    per_layer = 4 * (d * d + d) + 4 * d + (d * f + f) + (f * d + d)
    return (config.vocab_size * d + config.max_seq_len * d
            + k * per_layer
            + d * config.num_classes + config.num_classes)


class ModelParams:
    """All learnable arrays of one model, keyed by canonical names."""

    def __init__(self, config: ModelConfig, arrays: dict[str, Tensor]):
        expected = parameter_shapes(config)
        if set(arrays) != set(expected):
            missing = set(expected) - set(arrays)
            extra = set(arrays) - set(expected)
            raise ValueError(f"parameter name mismatch: missing={missing}, extra={extra}")
        for name, shape in expected.items():
            if arrays[name].shape != shape:
                raise ValueError(
                    f"parameter {name}: shape {arrays[name].shape}, expected {shape}")
        self.config = config
        self.arrays = {name: arrays[name] for name in expected}

    def __getitem__(self, name: str) -> Tensor:
        return self.arrays[name]

    @property
    def names(self) -> list[str]:
        return list(self.arrays)

    def param_count(self) -> int:
        return sum(t.size for t in self.arrays.values())

    def copy(self) -> "ModelParams":
        return ModelParams(self.config, {
            name: Tensor(t.data.copy(), requires_grad=t.requires_grad)
            for name, t in self.arrays.items()})

    def freeze(self) -> "ModelParams":
        for t in self.arrays.values():
            t.requires_grad = False
        return self

    def zero_grads(self) -> None:
        for t in self.arrays.values():
            t.zero_grad()

    def checksum(self) -> str:
        h = hashlib.sha256()
        for name in self.names:
            h.update(name.encode())
            h.update(np.ascontiguousarray(self.arrays[name].data).tobytes())
        return h.hexdigest()


def init_random(config: ModelConfig, seed: int) -> ModelParams:
    """Weights ~ N(0, 0.02^2), biases 0, layer-norm gains 1; deterministic per seed."""
    rng = np.random.default_rng(seed)
    arrays: dict[str, Tensor] = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".gain"):
            data = np.ones(shape)
        elif len(shape) == 1:
            data = np.zeros(shape)
        else:
            data = rng.normal(0.0, 0.02, size=shape)
        arrays[name] = Tensor(data, requires_grad=True)
    return ModelParams(config, arrays)


def init_student_from_teacher(teacher: ModelParams,
                              student_config: ModelConfig) -> ModelParams:
    """Copy embeddings, the first k layers, and the classifier head verbatim."""
    tc = teacher.config
    if student_config.num_layers > tc.num_layers:
        raise ValueError(
            f"student depth {student_config.num_layers} exceeds teacher {tc.num_layers}")
    for field in ("hidden_dim", "ffn_dim", "vocab_size", "max_seq_len", "num_classes"):
        if getattr(student_config, field) != getattr(tc, field):
            raise ValueError(f"teacher/student {field} differ")
    arrays = {}
    for name in parameter_shapes(student_config):
        arrays[name] = Tensor(teacher[name].data.copy(), requires_grad=True)
    return ModelParams(student_config, arrays)


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def embed_batch(params: ModelParams, token_ids: np.ndarray,
                pad_mask: np.ndarray) -> Tensor:
    """Token + position embeddings, exact zeros at pad positions; [n,T,d]."""
    cfg = params.config
    ids = np.asarray(token_ids, dtype=np.int64)
    mask = np.asarray(pad_mask, dtype=bool)
    if ids.shape != mask.shape or ids.ndim != 2:
        raise ValueError(f"token_ids {ids.shape} / pad_mask {mask.shape} must be [n,T]")
    n, T = ids.shape
    if T != cfg.max_seq_len:
        raise ValueError(f"sequence length {T} != max_seq_len {cfg.max_seq_len}")
    tok = ad.gather_rows(params["tok_emb"], ids.reshape(-1))
    pos = ad.gather_rows(params["pos_emb"], np.tile(np.arange(T), n))
    summed = ad.reshape(ad.add(tok, pos), (n, T, cfg.hidden_dim))
    keep = np.repeat(mask[:, :, None].astype(np.float64), cfg.hidden_dim, axis=2)
    return ad.mul(summed, ad.constant(keep))


def embed(params: ModelParams, token_ids: np.ndarray,
          pad_mask: np.ndarray) -> Tensor:
    """Single-sequence embedding, [T,d]."""
    out = embed_batch(params, np.asarray(token_ids)[None, :],
                      np.asarray(pad_mask)[None, :])
    return ad.reshape(out, out.shape[1:])


def forward_from_embeddings(params: ModelParams, emb: Tensor,
                            pad_mask: np.ndarray, train_mode: bool = False,
                            rng: Optional[np.random.Generator] = None,
                            return_features: bool = False):
    """Encoder stack over an embedding batch [n,T,d] -> logits [n,C].

    With ``return_features`` also returns the final-layer [CLS] vectors [n,d].
    """
    cfg = params.config
    n, T, d = emb.shape
    if (T, d) != (cfg.max_seq_len, cfg.hidden_dim):
        raise ValueError(f"embedding shape {emb.shape} incompatible with config")
    mask = np.asarray(pad_mask, dtype=bool)
    if mask.shape != (n, T):
        raise ValueError(f"pad_mask shape {mask.shape}, expected {(n, T)}")
    h, hd = cfg.num_heads, d // cfg.num_heads
    drop = cfg.dropout_rate if train_mode else 0.0
    if drop > 0.0 and rng is None:
        raise ValueError("dropout requires an rng in train mode")

    bias_row = np.where(mask, 0.0, -1e9)
    attn_bias = ad.constant(
        np.broadcast_to(bias_row[:, None, None, :], (n, h, T, T)).copy())

    x2 = ad.reshape(emb, (n * T, d))
    for i in range(cfg.num_layers):
        p = f"layers.{i}"

        def heads(name):
            y = ad.add_bias(ad.matmul(x2, params[f"{p}.attn.w{name}"]),
                            params[f"{p}.attn.b{name}"])
            return ad.transpose(ad.reshape(y, (n, T, h, hd)), (0, 2, 1, 3))

        q, k, v = heads("q"), heads("k"), heads("v")
        scores = ad.scale(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))),
                          1.0 / math.sqrt(hd))
        attn = ad.softmax(ad.add(scores, attn_bias), axis=-1)
        if drop > 0.0:
            attn = ad.dropout(attn, drop, rng)
        ctx = ad.reshape(ad.transpose(ad.matmul(attn, v), (0, 2, 1, 3)), (n * T, d))
        proj = ad.add_bias(ad.matmul(ctx, params[f"{p}.attn.wo"]),
                           params[f"{p}.attn.bo"])
        if drop > 0.0:
            proj = ad.dropout(proj, drop, rng)
        x2 = ad.layer_norm(ad.add(x2, proj),
                           params[f"{p}.ln1.gain"], params[f"{p}.ln1.bias"])

        ff = ad.gelu(ad.add_bias(ad.matmul(x2, params[f"{p}.ffn.w1"]),
                                 params[f"{p}.ffn.b1"]))
        ff = ad.add_bias(ad.matmul(ff, params[f"{p}.ffn.w2"]),
                         params[f"{p}.ffn.b2"])
        if drop > 0.0:
            ff = ad.dropout(ff, drop, rng)
        x2 = ad.layer_norm(ad.add(x2, ff),
                           params[f"{p}.ln2.gain"], params[f"{p}.ln2.bias"])

    cls = ad.select_index(ad.reshape(x2, (n, T, d)), 0, axis=1)
    logits = ad.add_bias(ad.matmul(cls, params["head.weight"]), params["head.bias"])
    if return_features:
        return logits, cls
    return logits


def forward_tokens(params: ModelParams, batch, train_mode: bool = False,
                   rng: Optional[np.random.Generator] = None,
                   return_features: bool = False):
    """embed -> encoder; ``batch`` needs .token_ids and .pad_mask arrays."""
    emb = embed_batch(params, batch.token_ids, batch.pad_mask)
    return forward_from_embeddings(params, emb, batch.pad_mask,
                                   train_mode=train_mode, rng=rng,
                                   return_features=return_features)


# ---------------------------------------------------------------------------
# checkpoint format
# ---------------------------------------------------------------------------

MAGIC = b"MKDCKPT1"


def save_checkpoint(params: ModelParams, config: ModelConfig, path,
                    extra: Optional[dict] = None) -> None:
    """Binary file: magic, u32-length JSON manifest, float32 LE arrays."""
    names = params.names
    manifest = {"config": asdict(config), "arrays": [], "extra": extra or {}}
    offset = 0
    blobs = []
    for name in names:
        data = params[name].data.astype("<f4")
        blob = np.ascontiguousarray(data).tobytes()
        manifest["arrays"].append({"name": name,
                                   "shape": list(params[name].shape),
                                   "offset": offset,
                                   "nbytes": len(blob)})
        blobs.append(blob)
        offset += len(blob)
    mbytes = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(mbytes)))
        fh.write(mbytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path) -> tuple[ModelParams, ModelConfig, dict]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != MAGIC:
        raise CheckpointError(f"bad magic bytes in {path}")
    if len(raw) < 12:
        raise CheckpointError("truncated checkpoint header")
    (mlen,) = struct.unpack("<I", raw[8:12])
    if len(raw) < 12 + mlen:
        raise CheckpointError("truncated checkpoint manifest")
    try:
        manifest = json.loads(raw[12:12 + mlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable manifest: {exc}") from exc
    config = ModelConfig(**manifest["config"])
    expected = parameter_shapes(config)
    base = 12 + mlen
    arrays: dict[str, Tensor] = {}
    for entry in manifest["arrays"]:
        name = entry["name"]
        shape = tuple(entry["shape"])
        if name not in expected or expected[name] != shape:
            raise CheckpointError(f"manifest array {name} {shape} does not match config")
        start = base + entry["offset"]
        end = start + entry["nbytes"]
        if end > len(raw):
            raise CheckpointError(f"truncated array data for {name}")
        flat = np.frombuffer(raw[start:end], dtype="<f4")
        if flat.size != int(np.prod(shape)):
            raise CheckpointError(f"array {name} has wrong element count")
        arrays[name] = Tensor(flat.astype(np.float64).reshape(shape),
                              requires_grad=True)
    if set(arrays) != set(expected):
        raise CheckpointError("manifest is missing parameter arrays")
    return ModelParams(config, arrays), config, manifest.get("extra", {})

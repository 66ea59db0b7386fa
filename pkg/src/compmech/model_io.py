"""Checkpoint parsing into validated, immutable weight structures."""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Mapping

import numpy as np
from safetensors.numpy import load_file, save_file

from compmech.errors import CheckpointError, ConfigError
from compmech.tokenizer import Tokenizer, load_tokenizer

MODEL_DIR_ENV = "COMPMECH_MODEL_DIR"

CHECKPOINT_NAME = "model.safetensors"
CONFIG_NAME = "config.json"
VOCAB_NAME = "vocab.json"
MERGES_NAME = "merges.txt"

# Non-parameter buffers some exporters include (causal mask tables).
_KNOWN_BUFFERS = ("attn.bias", "attn.masked_bias")


@dataclass(frozen=True)
class ModelConfig:
    n_layers: int = 12
    n_heads: int = 12
    d_model: int = 768
    d_head: int = 64
    d_mlp: int = 3072
    vocab_size: int = 50257
    max_context: int = 1024
    layernorm_epsilon: float = 1e-5
    positional_encoding: str = "learned-absolute"

    def __post_init__(self) -> None:
        for name in ("n_layers", "n_heads", "d_model", "d_head", "d_mlp", "vocab_size", "max_context"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d_model != self.n_heads * self.d_head:
            raise ConfigError(
                f"d_model ({self.d_model}) must equal n_heads * d_head ({self.n_heads} * {self.d_head})"
            )
        if not self.layernorm_epsilon > 0:
            raise ConfigError("layernorm_epsilon must be positive")
        if self.positional_encoding != "learned-absolute":
            raise ConfigError(f"unsupported positional encoding {self.positional_encoding!r}")

    @classmethod
    def gpt2_small(cls) -> "ModelConfig":
        return cls()

    @classmethod
    def from_hf_dict(cls, d: Mapping) -> "ModelConfig":
        n_embd, n_head = d["n_embd"], d["n_head"]
        return cls(
            n_layers=d["n_layer"],
            n_heads=n_head,
            d_model=n_embd,
            d_head=n_embd // n_head,
            d_mlp=d.get("n_inner") or 4 * n_embd,
            vocab_size=d["vocab_size"],
            max_context=d.get("n_positions", d.get("n_ctx", 1024)),
            layernorm_epsilon=d.get("layer_norm_epsilon", 1e-5),
        )

    def to_hf_dict(self) -> dict:
        return {
            "model_type": "gpt2",
            "n_layer": self.n_layers,
            "n_head": self.n_heads,
            "n_embd": self.d_model,
            "n_inner": self.d_mlp,
            "vocab_size": self.vocab_size,
            "n_positions": self.max_context,
            "layer_norm_epsilon": self.layernorm_epsilon,
        }


def load_config(path: str | Path) -> ModelConfig:
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if "n_layer" in raw:
        return ModelConfig.from_hf_dict(raw)
    return ModelConfig(**raw)


@dataclass(frozen=True, eq=False)
class WeightSet:
    """All model parameters in application orientation, stacked over layers.

    Attention projections are split per head: ``W_Q``/``W_K``/``W_V`` are
    ``[layers, heads, d_model, d_head]`` and ``W_O`` is ``[layers, heads, d_head, d_model]``.
    ``W_U`` is ``[d_model, vocab]``.
    """

    token_embedding: np.ndarray
    position_embedding: np.ndarray
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    W_Q: np.ndarray
    b_Q: np.ndarray
    W_K: np.ndarray
    b_K: np.ndarray
    W_V: np.ndarray
    b_V: np.ndarray
    W_O: np.ndarray
    b_O: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray
    W_in: np.ndarray
    b_in: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray
    lnf_g: np.ndarray
    lnf_b: np.ndarray
    W_U: np.ndarray
    tied_unembedding: bool = True

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, np.ndarray):
                value.flags.writeable = False

    def expected_shapes(self, cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
        L, H, d, dh, dm = cfg.n_layers, cfg.n_heads, cfg.d_model, cfg.d_head, cfg.d_mlp
        return {
            "token_embedding": (cfg.vocab_size, d),
            "position_embedding": (cfg.max_context, d),
            "ln1_g": (L, d), "ln1_b": (L, d),
            "W_Q": (L, H, d, dh), "b_Q": (L, H, dh),
            "W_K": (L, H, d, dh), "b_K": (L, H, dh),
            "W_V": (L, H, d, dh), "b_V": (L, H, dh),
            "W_O": (L, H, dh, d), "b_O": (L, d),
            "ln2_g": (L, d), "ln2_b": (L, d),
            "W_in": (L, d, dm), "b_in": (L, dm),
            "W_out": (L, dm, d), "b_out": (L, d),
            "lnf_g": (d,), "lnf_b": (d,),
            "W_U": (d, cfg.vocab_size),
        }

    def validate(self, cfg: ModelConfig) -> None:
        for name, shape in self.expected_shapes(cfg).items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise CheckpointError(f"{name}: expected shape {shape}, got {arr.shape}", tensor=name)
            if not np.all(np.isfinite(arr)):
                raise CheckpointError(f"{name}: contains non-finite values", tensor=name)


def _checkpoint_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    d, dm, V = cfg.d_model, cfg.d_mlp, cfg.vocab_size
    shapes = {"wte.weight": (V, d), "wpe.weight": (cfg.max_context, d), "ln_f.weight": (d,), "ln_f.bias": (d,)}
    for layer in range(cfg.n_layers):
        p = f"h.{layer}."
        shapes.update({
            p + "ln_1.weight": (d,), p + "ln_1.bias": (d,),
            p + "attn.c_attn.weight": (d, 3 * d), p + "attn.c_attn.bias": (3 * d,),
            p + "attn.c_proj.weight": (d, d), p + "attn.c_proj.bias": (d,),
            p + "ln_2.weight": (d,), p + "ln_2.bias": (d,),
            p + "mlp.c_fc.weight": (d, dm), p + "mlp.c_fc.bias": (dm,),
            p + "mlp.c_proj.weight": (dm, d), p + "mlp.c_proj.bias": (d,),
        })
    return shapes


def weights_from_state_dict(tensors: Mapping[str, np.ndarray], cfg: ModelConfig) -> WeightSet:
    """Convert GPT-2 named tensors (with or without a ``transformer.`` prefix)."""
    prefix = "transformer." if any(k.startswith("transformer.") for k in tensors) else ""
    expected = _checkpoint_shapes(cfg)
    sd: dict[str, np.ndarray] = {}
    for name, shape in expected.items():
        full = prefix + name
        if full not in tensors:
            raise CheckpointError(f"checkpoint is missing tensor {full!r}", tensor=full)
        arr = np.asarray(tensors[full])
        if arr.shape != shape:
            raise CheckpointError(f"{full}: expected shape {shape}, got {tuple(arr.shape)}", tensor=full)
        arr = arr.astype(np.float32, copy=False)
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"{full}: contains non-finite values", tensor=full)
        sd[name] = arr

    lm_head = tensors.get("lm_head.weight")
    extras = [
        k for k in tensors
        if k[len(prefix):] not in expected and k != "lm_head.weight" and not k.endswith(_KNOWN_BUFFERS)
    ]
    if extras:
        warnings.warn(f"ignoring {len(extras)} unknown checkpoint tensors: {sorted(extras)[:5]}", stacklevel=2)

    L, H, d, dh = cfg.n_layers, cfg.n_heads, cfg.d_model, cfg.d_head

    def stack(suffix: str) -> np.ndarray:
        return np.stack([sd[f"h.{layer}.{suffix}"] for layer in range(L)])

    c_attn_w = stack("attn.c_attn.weight")  # [L, d, 3d]
    c_attn_b = stack("attn.c_attn.bias")  # [L, 3d]

    def split_heads(part: int) -> tuple[np.ndarray, np.ndarray]:
        w = c_attn_w[:, :, part * d:(part + 1) * d].reshape(L, d, H, dh).transpose(0, 2, 1, 3)
        b = c_attn_b[:, part * d:(part + 1) * d].reshape(L, H, dh)
        return np.ascontiguousarray(w), np.ascontiguousarray(b)

    W_Q, b_Q = split_heads(0)
    W_K, b_K = split_heads(1)
    W_V, b_V = split_heads(2)

    if lm_head is not None:
        lm_head = np.asarray(lm_head, dtype=np.float32)
        if lm_head.shape != (cfg.vocab_size, d):
            raise CheckpointError(
                f"lm_head.weight: expected shape {(cfg.vocab_size, d)}, got {lm_head.shape}",
                tensor="lm_head.weight",
            )
        if not np.all(np.isfinite(lm_head)):
            raise CheckpointError("lm_head.weight: contains non-finite values", tensor="lm_head.weight")
        tied = bool(np.array_equal(lm_head, sd["wte.weight"]))
        W_U = np.ascontiguousarray(lm_head.T)
    else:
        tied = True
        W_U = np.ascontiguousarray(sd["wte.weight"].T)

    return WeightSet(
        token_embedding=sd["wte.weight"],
        position_embedding=sd["wpe.weight"],
        ln1_g=stack("ln_1.weight"), ln1_b=stack("ln_1.bias"),
        W_Q=W_Q, b_Q=b_Q, W_K=W_K, b_K=b_K, W_V=W_V, b_V=b_V,
        W_O=np.ascontiguousarray(stack("attn.c_proj.weight").reshape(L, H, dh, d)),
        b_O=stack("attn.c_proj.bias"),
        ln2_g=stack("ln_2.weight"), ln2_b=stack("ln_2.bias"),
        W_in=stack("mlp.c_fc.weight"), b_in=stack("mlp.c_fc.bias"),
        W_out=stack("mlp.c_proj.weight"), b_out=stack("mlp.c_proj.bias"),
        lnf_g=sd["ln_f.weight"], lnf_b=sd["ln_f.bias"],
        W_U=W_U,
        tied_unembedding=tied,
    )


def state_dict_from_weights(w: WeightSet, cfg: ModelConfig) -> dict[str, np.ndarray]:
    """Inverse of :func:`weights_from_state_dict`, using unprefixed GPT-2 names."""
    L, d = cfg.n_layers, cfg.d_model
    out = {
        "wte.weight": w.token_embedding,
        "wpe.weight": w.position_embedding,
        "ln_f.weight": w.lnf_g,
        "ln_f.bias": w.lnf_b,
    }
    for layer in range(L):
        p = f"h.{layer}."
        qkv_w = [x[layer].transpose(1, 0, 2).reshape(d, d) for x in (w.W_Q, w.W_K, w.W_V)]
        qkv_b = [x[layer].reshape(d) for x in (w.b_Q, w.b_K, w.b_V)]
        out.update({
            p + "ln_1.weight": w.ln1_g[layer], p + "ln_1.bias": w.ln1_b[layer],
            p + "attn.c_attn.weight": np.concatenate(qkv_w, axis=1),
            p + "attn.c_attn.bias": np.concatenate(qkv_b),
            p + "attn.c_proj.weight": w.W_O[layer].reshape(d, d),
            p + "attn.c_proj.bias": w.b_O[layer],
            p + "ln_2.weight": w.ln2_g[layer], p + "ln_2.bias": w.ln2_b[layer],
            p + "mlp.c_fc.weight": w.W_in[layer], p + "mlp.c_fc.bias": w.b_in[layer],
            p + "mlp.c_proj.weight": w.W_out[layer], p + "mlp.c_proj.bias": w.b_out[layer],
        })
    if not w.tied_unembedding:
        out["lm_head.weight"] = w.W_U.T
    return {k: np.ascontiguousarray(v) for k, v in out.items()}


def load_weights(path: str | Path, config: ModelConfig) -> WeightSet:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        tensors = load_file(str(path))
    except Exception as exc:  # safetensors raises its own error types for corrupt headers
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    weights = weights_from_state_dict(tensors, config)
    weights.validate(config)
    return weights


def save_weights(weights: WeightSet, config: ModelConfig, path: str | Path) -> None:
    save_file(state_dict_from_weights(weights, config), str(path))


def random_weights(cfg: ModelConfig, seed: int = 0, scale: float = 0.02) -> WeightSet:
    """Seeded GPT-2-shaped parameters, for synthetic models in tests and smoke runs."""
    rng = np.random.default_rng(seed)
    sd = {}
    for name, shape in _checkpoint_shapes(cfg).items():
        if name.endswith(("ln_1.weight", "ln_2.weight", "ln_f.weight")):
            sd[name] = (1.0 + 0.1 * rng.standard_normal(shape)).astype(np.float32)
        elif name.endswith("bias") and "ln_" in name:
            sd[name] = (0.05 * rng.standard_normal(shape)).astype(np.float32)
        else:
            sd[name] = (scale * rng.standard_normal(shape)).astype(np.float32)
    return weights_from_state_dict(sd, cfg)


@dataclass(frozen=True, eq=False)
class ModelBundle:
    """Config, weights and tokenizer loaded from one model directory."""

    config: ModelConfig
    weights: WeightSet
    tokenizer: Tokenizer
    checkpoint_path: Path | None = None


def resolve_model_dir(model_dir: str | Path | None = None) -> Path:
    if model_dir is None:
        model_dir = os.environ.get(MODEL_DIR_ENV)
        if not model_dir:
            raise CheckpointError(f"no model directory given and ${MODEL_DIR_ENV} is not set")
    return Path(model_dir)


def load_model_dir(model_dir: str | Path | None = None) -> ModelBundle:
    """Load ``model.safetensors``, optional ``config.json``, ``vocab.json`` and ``merges.txt``."""
    root = resolve_model_dir(model_dir)
    cfg_path = root / CONFIG_NAME
    cfg = load_config(cfg_path) if cfg_path.is_file() else ModelConfig.gpt2_small()
    ckpt = root / CHECKPOINT_NAME
    weights = load_weights(ckpt, cfg)
    tokenizer = load_tokenizer(root / VOCAB_NAME, root / MERGES_NAME, expected_vocab_size=cfg.vocab_size)
    return ModelBundle(config=cfg, weights=weights, tokenizer=tokenizer, checkpoint_path=ckpt)


def write_model_dir(root: str | Path, cfg: ModelConfig, weights: WeightSet, vocab_path, merges_path) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    save_weights(weights, cfg, root / CHECKPOINT_NAME)
    (root / CONFIG_NAME).write_text(json.dumps(cfg.to_hf_dict(), indent=2))
    (root / VOCAB_NAME).write_bytes(Path(vocab_path).read_bytes())
    (root / MERGES_NAME).write_bytes(Path(merges_path).read_bytes())
    return root

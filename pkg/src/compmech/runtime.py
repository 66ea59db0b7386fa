"""Pre-norm decoder-only transformer forward pass with activation capture and attention scaling.

Every evaluation is a full-sequence single pass in float32. Attention-scaling
interventions multiply post-softmax weights in place and never renormalize the
row, so ``alpha=0`` knocks a source out and ``alpha>1`` boosts it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from compmech.errors import ConfigError, InterventionError, NotCapturedError
from compmech.model_io import ModelBundle, ModelConfig, WeightSet, load_model_dir
from compmech.tokenizer import Tokenizer

_GELU_C = math.sqrt(2.0 / math.pi)


@dataclass(frozen=True)
class CaptureSpec:
    capture_residuals: bool = False
    capture_attention: bool = False
    capture_head_outputs: bool = False
    capture_mlp_outputs: bool = False
    capture_attn_outputs: bool = False
    positions: tuple[int, ...] | None = None

    @classmethod
    def everything(cls, positions: Iterable[int] | None = None) -> "CaptureSpec":
        return cls(True, True, True, True, True, None if positions is None else tuple(positions))

    @property
    def any(self) -> bool:
        return (
            self.capture_residuals or self.capture_attention or self.capture_head_outputs
            or self.capture_mlp_outputs or self.capture_attn_outputs
        )


NO_CAPTURE = CaptureSpec()


@dataclass(frozen=True)
class InterventionSpec:
    layer: int
    head: int
    dest: int
    sources: tuple[int, ...]
    alpha: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "sources", tuple(int(j) for j in self.sources))

    def validate(self, cfg: ModelConfig, seq_len: int) -> None:
        if not 0 <= self.layer < cfg.n_layers:
            raise InterventionError(f"layer {self.layer} out of range [0, {cfg.n_layers})")
        if not 0 <= self.head < cfg.n_heads:
            raise InterventionError(f"head {self.head} out of range [0, {cfg.n_heads})")
        if not 0 <= self.dest < seq_len:
            raise InterventionError(f"destination {self.dest} out of range for sequence of length {seq_len}")
        for j in self.sources:
            if not 0 <= j < self.dest:
                raise InterventionError(f"source position {j} must satisfy 0 <= j < dest={self.dest}")


@dataclass(eq=False)
class ForwardTrace:
    """Output of one forward pass.

    Captured arrays hold only the retained positions listed in ``positions``;
    use the accessor methods to index by absolute token position.
    """

    tokens: np.ndarray
    logits: np.ndarray  # [seq, vocab] (or [1, vocab] when only the last row was computed)
    final_norm_mean: np.ndarray  # [seq]
    final_norm_std: np.ndarray  # [seq]
    positions: np.ndarray  # retained absolute positions
    residuals: np.ndarray | None = None  # [layers+1, kept, d_model], index 0 = embeddings
    attention: np.ndarray | None = None  # [layers, heads, kept, seq]
    head_contribs: np.ndarray | None = None  # [layers, heads, kept, d_model]
    mlp_contribs: np.ndarray | None = None  # [layers, kept, d_model]
    attn_contribs: np.ndarray | None = None  # [layers, kept, d_model]
    interventions: tuple[InterventionSpec, ...] = ()
    _index: dict[int, int] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._index = {int(p): k for k, p in enumerate(self.positions)}

    @property
    def seq_len(self) -> int:
        return len(self.tokens)

    @property
    def last(self) -> int:
        return self.seq_len - 1

    def slot(self, position: int) -> int:
        position = position % self.seq_len if position < 0 else position
        try:
            return self._index[position]
        except KeyError:
            raise NotCapturedError(f"position {position} was not retained by the capture spec") from None

    def require(self, name: str) -> np.ndarray:
        value = getattr(self, name)
        if value is None:
            raise NotCapturedError(f"trace field {name!r} was not captured")
        return value

    def final_logits(self) -> np.ndarray:
        return self.logits[-1]


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float):
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    std = np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + np.float32(eps))
    return centered / std * gain + bias, mean[..., 0], std[..., 0]


def gelu_new(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(np.float32(_GELU_C) * (x + np.float32(0.044715) * x * x * x)))


def _softmax_causal(scores: np.ndarray) -> np.ndarray:
    T = scores.shape[-1]
    mask = np.triu(np.ones((T, T), dtype=bool), k=1)
    scores = np.where(mask, -np.inf, scores)
    scores = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    return e / e.sum(axis=-1, keepdims=True)


def forward(
    w: WeightSet,
    cfg: ModelConfig,
    tokens: Sequence[int],
    capture: CaptureSpec = NO_CAPTURE,
    interventions: Sequence[InterventionSpec] = (),
    all_logits: bool = True,
) -> ForwardTrace:
    tokens = np.asarray(tokens, dtype=np.int64)
    T = len(tokens)
    if T == 0:
        raise ConfigError("cannot run a forward pass on an empty token sequence")
    if T > cfg.max_context:
        raise ConfigError(f"sequence length {T} exceeds max context {cfg.max_context}")
    if tokens.min() < 0 or tokens.max() >= cfg.vocab_size:
        raise ConfigError("token id out of vocabulary range")
    for iv in interventions:
        iv.validate(cfg, T)

    keep = np.arange(T) if capture.positions is None else np.asarray(sorted(set(capture.positions)), dtype=np.int64)
    if keep.size and (keep.min() < 0 or keep.max() >= T):
        raise ConfigError(f"capture positions {capture.positions} outside sequence of length {T}")

    by_layer: dict[int, list[InterventionSpec]] = {}
    for iv in interventions:
        by_layer.setdefault(iv.layer, []).append(iv)

    L, H, d = cfg.n_layers, cfg.n_heads, cfg.d_model
    eps = cfg.layernorm_epsilon
    inv_sqrt_dh = np.float32(1.0 / math.sqrt(cfg.d_head))

    resid_store = np.empty((L + 1, len(keep), d), np.float32) if capture.capture_residuals else None
    attn_store = np.empty((L, H, len(keep), T), np.float32) if capture.capture_attention else None
    head_store = np.empty((L, H, len(keep), d), np.float32) if capture.capture_head_outputs else None
    mlp_store = np.empty((L, len(keep), d), np.float32) if capture.capture_mlp_outputs else None
    attn_out_store = np.empty((L, len(keep), d), np.float32) if capture.capture_attn_outputs else None

    x = w.token_embedding[tokens] + w.position_embedding[:T]
    if resid_store is not None:
        resid_store[0] = x[keep]

    for layer in range(L):
        h, _, _ = layer_norm(x, w.ln1_g[layer], w.ln1_b[layer], eps)
        q = np.matmul(h, w.W_Q[layer]) + w.b_Q[layer][:, None, :]  # [H, T, dh]
        k = np.matmul(h, w.W_K[layer]) + w.b_K[layer][:, None, :]
        v = np.matmul(h, w.W_V[layer]) + w.b_V[layer][:, None, :]
        pattern = _softmax_causal(np.matmul(q, k.transpose(0, 2, 1)) * inv_sqrt_dh)
        for iv in by_layer.get(layer, ()):
            pattern[iv.head, iv.dest, list(iv.sources)] *= np.float32(iv.alpha)
        z = np.matmul(pattern, v)  # [H, T, dh]
        attn_out = z.transpose(1, 0, 2).reshape(T, d) @ w.W_O[layer].reshape(d, d) + w.b_O[layer]
        if attn_store is not None:
            attn_store[layer] = pattern[:, keep, :]
        if head_store is not None:
            head_store[layer] = np.matmul(z[:, keep, :], w.W_O[layer])
        if attn_out_store is not None:
            attn_out_store[layer] = attn_out[keep]
        x = x + attn_out

        h2, _, _ = layer_norm(x, w.ln2_g[layer], w.ln2_b[layer], eps)
        mlp_out = gelu_new(h2 @ w.W_in[layer] + w.b_in[layer]) @ w.W_out[layer] + w.b_out[layer]
        if mlp_store is not None:
            mlp_store[layer] = mlp_out[keep]
        x = x + mlp_out
        if resid_store is not None:
            resid_store[layer + 1] = x[keep]

    normed, mean, std = layer_norm(x, w.lnf_g, w.lnf_b, eps)
    logits = (normed if all_logits else normed[-1:]) @ w.W_U

    return ForwardTrace(
        tokens=tokens,
        logits=logits,
        final_norm_mean=mean,
        final_norm_std=std,
        positions=keep,
        residuals=resid_store,
        attention=attn_store,
        head_contribs=head_store,
        mlp_contribs=mlp_store,
        attn_contribs=attn_out_store,
        interventions=tuple(interventions),
    )


def top1_from_logits(logits: np.ndarray) -> int:
    """Argmax over a logit vector; exact ties go to the lowest token id."""
    return int(np.argmax(logits))


def predict_top1(
    w: WeightSet, cfg: ModelConfig, tokens: Sequence[int], interventions: Sequence[InterventionSpec] = ()
) -> int:
    trace = forward(w, cfg, tokens, NO_CAPTURE, interventions, all_logits=False)
    return top1_from_logits(trace.final_logits())


def attention_to_position(trace: ForwardTrace, layer: int, head: int, dest: int, src: int) -> float:
    pattern = trace.require("attention")
    if not 0 <= src < trace.seq_len:
        raise IndexError(f"source position {src} out of range")
    return float(pattern[layer, head, trace.slot(dest), src])


class Model:
    """Shared, read-only model handle: weights, config and (optionally) tokenizer."""

    def __init__(self, weights: WeightSet, config: ModelConfig, tokenizer: Tokenizer | None = None,
                 checkpoint_path: Path | None = None):
        self.weights = weights
        self.config = config
        self.tokenizer = tokenizer
        self.checkpoint_path = checkpoint_path

    @classmethod
    def from_bundle(cls, bundle: ModelBundle) -> "Model":
        return cls(bundle.weights, bundle.config, bundle.tokenizer, bundle.checkpoint_path)

    @classmethod
    def from_dir(cls, model_dir: str | Path | None = None) -> "Model":
        return cls.from_bundle(load_model_dir(model_dir))

    def encode(self, text: str) -> list[int]:
        if self.tokenizer is None:
            raise ConfigError("model has no tokenizer attached")
        return self.tokenizer.encode(text)

    def forward(self, tokens, capture: CaptureSpec = NO_CAPTURE, interventions=(), all_logits=True) -> ForwardTrace:
        return forward(self.weights, self.config, tokens, capture, interventions, all_logits)

    def predict_top1(self, tokens, interventions=()) -> int:
        return predict_top1(self.weights, self.config, tokens, interventions)

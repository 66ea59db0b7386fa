"""Vocabulary-space projection and additive logit attribution.

All projections go through the final layer norm with per-position statistics
frozen from the completed forward pass. Freezing turns the norm into an affine
map, so the output logits split exactly into

    embedding term + sum over layers of (attention + MLP) terms + shared offset

where each component term uses only the gain/std scaling and the shared offset
carries the re-centering and the norm bias. Unembedding columns are not centered.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from compmech.errors import ConfigError, NotCapturedError
from compmech.model_io import WeightSet
from compmech.runtime import ForwardTrace

LENS_METADATA = {"unembedding_centered": False, "final_norm": "frozen-per-position"}


@dataclass(frozen=True)
class TargetPair:
    fact_id: int
    cofa_id: int

    def __post_init__(self) -> None:
        if self.fact_id == self.cofa_id:
            raise ConfigError(f"factual and counterfactual token ids must differ (both {self.fact_id})")
        if self.fact_id < 0 or self.cofa_id < 0:
            raise ConfigError("token ids must be non-negative")

    @property
    def ids(self) -> list[int]:
        return [self.fact_id, self.cofa_id]


@dataclass
class AttributionGrid:
    """Fact/cofa logits over a 2-D index (layers x positions, heads or block kinds).

    ``count`` holds, per cell, how many prompts contributed. Cells with count 0
    are NaN.
    """

    rows: list
    cols: list
    fact_logits: np.ndarray
    cofa_logits: np.ndarray
    count: np.ndarray
    row_name: str = "layer"
    col_name: str = "position"
    metadata: dict = field(default_factory=lambda: dict(LENS_METADATA))

    def __post_init__(self) -> None:
        shape = (len(self.rows), len(self.cols))
        for name in ("fact_logits", "cofa_logits", "count"):
            if np.shape(getattr(self, name)) != shape:
                raise ConfigError(f"{name} has shape {np.shape(getattr(self, name))}, expected {shape}")

    @property
    def delta_cofa(self) -> np.ndarray:
        return self.cofa_logits - self.fact_logits

    def cell(self, row, col) -> tuple[float, float]:
        r, c = self.rows.index(row), self.cols.index(col)
        return float(self.fact_logits[r, c]), float(self.cofa_logits[r, c])

    def to_records(self) -> list[dict]:
        out = []
        for r, row in enumerate(self.rows):
            for c, col in enumerate(self.cols):
                if self.count[r, c] == 0:
                    continue
                f, g = float(self.fact_logits[r, c]), float(self.cofa_logits[r, c])
                out.append({
                    self.row_name: row, self.col_name: col,
                    "fact_logit": f, "cofa_logit": g, "delta_cofa": delta_cofa(f, g),
                    "count": int(self.count[r, c]),
                })
        return out

    @classmethod
    def mean(cls, grids: Sequence["AttributionGrid"]) -> "AttributionGrid":
        """Cell-wise arithmetic mean, accumulated in input order (deterministic)."""
        if not grids:
            raise ConfigError("cannot average an empty list of grids")
        first = grids[0]
        fact = np.zeros(first.fact_logits.shape, np.float64)
        cofa = np.zeros_like(fact)
        count = np.zeros(fact.shape, np.int64)
        for g in grids:
            if g.rows != first.rows or g.cols != first.cols:
                raise ConfigError("grids have mismatched axes")
            present = g.count > 0
            fact[present] += g.fact_logits[present] * g.count[present]
            cofa[present] += g.cofa_logits[present] * g.count[present]
            count += g.count
        with np.errstate(invalid="ignore", divide="ignore"):
            fact = np.where(count > 0, fact / np.maximum(count, 1), np.nan)
            cofa = np.where(count > 0, cofa / np.maximum(count, 1), np.nan)
        return cls(list(first.rows), list(first.cols), fact, cofa, count,
                   first.row_name, first.col_name, dict(first.metadata))


def delta_cofa(fact_logit: float, cofa_logit: float) -> float:
    """Counterfactual-minus-factual margin; positive favours the copied attribute."""
    return cofa_logit - fact_logit


def project_to_vocab(
    resid: np.ndarray,
    final_norm: tuple[np.ndarray, np.ndarray],
    norm_stats: tuple[float, float],
    unembedding: np.ndarray,
    token_ids: Sequence[int] | None = None,
) -> np.ndarray:
    """Apply the final norm frozen at ``norm_stats`` (mean, std), then unembed.

    With ``token_ids`` only those columns of the unembedding are used.
    """
    gain, bias = final_norm
    mean, std = norm_stats
    if not np.all(np.asarray(std) > 0):
        raise ConfigError("normalization std must be strictly positive")
    W = unembedding if token_ids is None else unembedding[:, list(token_ids)]
    normed = (np.asarray(resid, np.float32) - np.float32(mean)) / np.float32(std) * gain + bias
    return normed @ W


def _linear_projection(vectors: np.ndarray, gain: np.ndarray, std, W: np.ndarray) -> np.ndarray:
    return (np.asarray(vectors, np.float64) / np.asarray(std, np.float64) * gain) @ W


def _stats(trace: ForwardTrace, position: int) -> tuple[float, float]:
    return float(trace.final_norm_mean[position]), float(trace.final_norm_std[position])


def logit_lens_grid(trace: ForwardTrace, w: WeightSet, targets: TargetPair) -> AttributionGrid:
    """Project every captured residual snapshot onto the target pair.

    Rows are residual indices 0..L (0 = embeddings), columns the retained
    absolute positions.
    """
    resid = trace.require("residuals")  # [L+1, kept, d]
    positions = trace.positions
    mean = trace.final_norm_mean[positions][None, :, None]
    std = trace.final_norm_std[positions][None, :, None]
    W = w.W_U[:, targets.ids]
    normed = (resid - mean) / std * w.lnf_g + w.lnf_b
    vals = normed @ W  # [L+1, kept, 2]
    n_rows = resid.shape[0]
    return AttributionGrid(
        rows=list(range(n_rows)),
        cols=[int(p) for p in positions],
        fact_logits=vals[..., 0].astype(np.float64),
        cofa_logits=vals[..., 1].astype(np.float64),
        count=np.ones((n_rows, len(positions)), np.int64),
    )


def component_projection(trace: ForwardTrace, w: WeightSet, vector: np.ndarray, targets: TargetPair,
                         position: int | None = None) -> tuple[float, float]:
    """Frozen-linear (gain/std only) projection of any residual-stream write."""
    position = trace.last if position is None else position
    _, std = _stats(trace, position)
    fact, cofa = _linear_projection(vector, w.lnf_g, std, w.W_U[:, targets.ids].astype(np.float64))
    return float(fact), float(cofa)


def block_logit_contribution(trace: ForwardTrace, w: WeightSet, layer: int, kind: str,
                             targets: TargetPair, position: int | None = None) -> tuple[float, float]:
    position = trace.last if position is None else position
    if kind == "attn":
        if trace.attn_contribs is not None:
            vec = trace.attn_contribs[layer, trace.slot(position)]
        elif trace.head_contribs is not None:
            vec = trace.head_contribs[layer, :, trace.slot(position)].sum(axis=0) + w.b_O[layer]
        else:
            raise NotCapturedError("attention block outputs were not captured")
    elif kind == "mlp":
        vec = trace.require("mlp_contribs")[layer, trace.slot(position)]
    else:
        raise ValueError(f"kind must be 'attn' or 'mlp', got {kind!r}")
    return component_projection(trace, w, vec, targets, position)


def head_logit_contribution(trace: ForwardTrace, w: WeightSet, layer: int, head: int,
                            targets: TargetPair, position: int | None = None) -> tuple[float, float]:
    position = trace.last if position is None else position
    vec = trace.require("head_contribs")[layer, head, trace.slot(position)]
    return component_projection(trace, w, vec, targets, position)


def head_contribution_matrix(trace: ForwardTrace, w: WeightSet, targets: TargetPair,
                             position: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised (fact, cofa) contributions of every head, each ``[layers, heads]``."""
    position = trace.last if position is None else position
    vecs = trace.require("head_contribs")[:, :, trace.slot(position)]  # [L, H, d]
    _, std = _stats(trace, position)
    out = _linear_projection(vecs, w.lnf_g, std, w.W_U[:, targets.ids].astype(np.float64))
    return out[..., 0], out[..., 1]


def bias_path_contribution(trace: ForwardTrace, w: WeightSet, layer: int, targets: TargetPair,
                           position: int | None = None) -> tuple[float, float]:
    """Contribution of the attention output-projection bias, booked to the block."""
    return component_projection(trace, w, w.b_O[layer], targets, position)


def embedding_contribution(trace: ForwardTrace, w: WeightSet, targets: TargetPair,
                           position: int | None = None) -> tuple[float, float]:
    position = trace.last if position is None else position
    vec = trace.require("residuals")[0, trace.slot(position)]
    return component_projection(trace, w, vec, targets, position)


def shared_offset(trace: ForwardTrace, w: WeightSet, targets: TargetPair,
                  position: int | None = None) -> tuple[float, float]:
    """Re-centering plus norm bias, booked once rather than per component."""
    position = trace.last if position is None else position
    mean, std = _stats(trace, position)
    W = w.W_U[:, targets.ids].astype(np.float64)
    const = -mean / std * w.lnf_g.astype(np.float64) + w.lnf_b
    fact, cofa = const @ W
    return float(fact), float(cofa)


def decompose_final_logits(trace: ForwardTrace, w: WeightSet, targets: TargetPair,
                           position: int | None = None) -> dict[str, np.ndarray]:
    """Every additive term of the target logits at ``position``.

    Returns ``embed`` (2,), ``attn`` (L, 2), ``mlp`` (L, 2) and ``offset`` (2,);
    their total equals the model's logits for the pair.
    """
    n_layers = w.ln1_g.shape[0]
    return {
        "embed": np.array(embedding_contribution(trace, w, targets, position)),
        "attn": np.array([block_logit_contribution(trace, w, l, "attn", targets, position) for l in range(n_layers)]),
        "mlp": np.array([block_logit_contribution(trace, w, l, "mlp", targets, position) for l in range(n_layers)]),
        "offset": np.array(shared_offset(trace, w, targets, position)),
    }

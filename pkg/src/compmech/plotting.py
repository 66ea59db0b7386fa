"""Deterministic SVG rendering of persisted experiment artifacts."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from compmech.errors import SchemaError  # noqa: E402

GRID_COLUMNS = ["layer", "position_class", "fact_logit", "cofa_logit", "delta_cofa"]
BLOCK_COLUMNS = ["layer", "block_kind", "fact_logit", "cofa_logit", "delta_cofa"]
HEAD_COLUMNS = ["layer", "head", "fact_logit", "cofa_logit", "delta_cofa"]
PLOT_KINDS = ("auto", "grid", "blocks", "heads", "ablation", "premise-sweep")

_RC = {"svg.hashsalt": "compmech", "svg.fonttype": "path", "font.size": 8}


def _read_csv(path: Path) -> tuple[list[str], list[dict]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return list(reader.fieldnames or []), list(reader)


def _require_columns(path: Path, header: list[str], expected: list[str]) -> None:
    if header[: len(expected)] != expected:
        raise SchemaError(f"{path}: expected columns {expected}, found {header}")


def detect_kind(path: Path) -> str:
    if path.suffix == ".csv":
        header, _ = _read_csv(path)
        for kind, cols in (("grid", GRID_COLUMNS), ("blocks", BLOCK_COLUMNS), ("heads", HEAD_COLUMNS)):
            if header[: len(cols)] == cols:
                return kind
    elif path.suffix == ".json":
        data = json.loads(path.read_text(encoding="utf-8"))
        if "summary" in data:
            return "ablation"
        if "table" in data:
            return "premise-sweep"
    raise SchemaError(f"{path}: cannot determine plot kind from contents")


def _save(fig, out: Path) -> Path:
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg", metadata={"Date": None, "Creator": "compmech"}, bbox_inches="tight")
    plt.close(fig)
    return out


def _heatmap(ax, values, row_labels, col_labels, title, cmap="viridis", center=False):
    vmax = np.nanmax(np.abs(values)) if center else None
    kwargs = {"vmin": -vmax, "vmax": vmax} if center and vmax else {}
    im = ax.imshow(values, aspect="auto", cmap=cmap, origin="lower", **kwargs)
    ax.set_xticks(range(len(col_labels)), col_labels, rotation=45, ha="right")
    ax.set_yticks(range(len(row_labels)), row_labels)
    ax.set_title(title)
    ax.figure.colorbar(im, ax=ax, shrink=0.8)


def plot_grid(path: Path, out: Path) -> list[Path]:
    header, rows = _read_csv(path)
    _require_columns(path, header, GRID_COLUMNS)
    layers = sorted({int(r["layer"]) for r in rows})
    classes = list(dict.fromkeys(r["position_class"] for r in rows))
    fact = np.full((len(layers), len(classes)), np.nan)
    cofa = np.full_like(fact, np.nan)
    for r in rows:
        i, j = layers.index(int(r["layer"])), classes.index(r["position_class"])
        fact[i, j], cofa[i, j] = float(r["fact_logit"]), float(r["cofa_logit"])
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, 2, figsize=(10, 4.5))
        _heatmap(axes[0], fact, layers, classes, "factual token logit")
        _heatmap(axes[1], cofa, layers, classes, "counterfactual token logit")
        axes[0].set_ylabel("layer")
        return [_save(fig, out)]


def plot_blocks(path: Path, out: Path) -> list[Path]:
    header, rows = _read_csv(path)
    _require_columns(path, header, BLOCK_COLUMNS)
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, 2, figsize=(10, 3.5), sharey=True)
        for ax, kind in zip(axes, ("attn", "mlp")):
            sel = [r for r in rows if r["block_kind"] == kind]
            layers = [int(r["layer"]) for r in sel]
            delta = [float(r["delta_cofa"]) for r in sel]
            ax.bar(layers, delta, color=["#c0392b" if d > 0 else "#2471a3" for d in delta])
            ax.axhline(0, color="black", linewidth=0.5)
            ax.set_xticks(layers)
            ax.set_xlabel("layer")
            ax.set_title(f"{kind} blocks: delta cofa")
        return [_save(fig, out)]


def plot_heads(path: Path, out: Path) -> list[Path]:
    header, rows = _read_csv(path)
    _require_columns(path, header, HEAD_COLUMNS)
    n_layers = max(int(r["layer"]) for r in rows) + 1
    n_heads = max(int(r["head"]) for r in rows) + 1
    delta = np.full((n_layers, n_heads), np.nan)
    attn = np.full_like(delta, np.nan)
    for r in rows:
        delta[int(r["layer"]), int(r["head"])] = float(r["delta_cofa"])
        if r.get("attn_last_to_attribute"):
            attn[int(r["layer"]), int(r["head"])] = float(r["attn_last_to_attribute"])
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, 2, figsize=(10, 4.5))
        _heatmap(axes[0], delta, range(n_layers), range(n_heads), "delta cofa per head", "RdBu_r", center=True)
        _heatmap(axes[1], attn, range(n_layers), range(n_heads), "attention last -> attribute", "Greens")
        for ax in axes:
            ax.set_xlabel("head")
        axes[0].set_ylabel("layer")
        return [_save(fig, out)]


def _grouped_bars(groups: list[str], fact: list[int], cofa: list[int], title: str, out: Path) -> Path:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(max(5, 0.6 * len(groups) + 2), 4))
        x = np.arange(len(groups))
        ax.bar(x - 0.2, fact, 0.4, label="factual", color="#2471a3")
        ax.bar(x + 0.2, cofa, 0.4, label="counterfactual", color="#c0392b")
        ax.set_xticks(x, groups, rotation=45, ha="right")
        ax.set_ylabel("prompts")
        ax.set_title(title)
        ax.legend()
        return _save(fig, out)


def plot_ablation(path: Path, out: Path) -> list[Path]:
    data = json.loads(path.read_text(encoding="utf-8"))
    summary = data.get("summary")
    if summary is None:
        raise SchemaError(f"{path}: missing 'summary'")
    per = summary.get("per_domain") or {"all": summary}
    groups = list(per)
    return [_grouped_bars(groups, [per[g]["n_factual"] for g in groups],
                          [per[g]["n_counterfactual"] for g in groups], "outcomes per domain", out)]


def plot_premise_sweep(path: Path, out: Path) -> list[Path]:
    data = json.loads(path.read_text(encoding="utf-8"))
    table = data.get("table")
    if table is None:
        raise SchemaError(f"{path}: missing 'table'")
    written = []
    for condition in ("baseline", "ablated"):
        rows = {p: v[condition] for p, v in table.items() if v.get(condition)}
        if not rows:
            continue
        target = out if condition == "baseline" else out.with_name(out.stem + "_ablated" + out.suffix)
        groups = list(rows)
        written.append(_grouped_bars(groups, [rows[g]["n_factual"] for g in groups],
                                     [rows[g]["n_counterfactual"] for g in groups],
                                     f"outcomes per premise ({condition})", target))
    return written


_PLOTTERS = {
    "grid": plot_grid,
    "blocks": plot_blocks,
    "heads": plot_heads,
    "ablation": plot_ablation,
    "premise-sweep": plot_premise_sweep,
}


def render(path: str | Path, kind: str = "auto", out: str | Path | None = None) -> list[Path]:
    path = Path(path)
    if kind == "auto":
        kind = detect_kind(path)
    if kind not in _PLOTTERS:
        raise SchemaError(f"unknown plot kind {kind!r}")
    out = Path(out) if out is not None else path.with_suffix(".svg")
    return _PLOTTERS[kind](path, out)

"""The four experiment families: positional logit inspection, block and head
attribution, and attention-scaling ablations (including premise and domain sweeps)."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
import tomli

from compmech import lens
from compmech.dataset import (
    STANDARD_PREMISES, UNLABELED, AssembledPrompt, PositionMap, PromptRecord, assemble,
    classify_prediction, ordered_map, read_records, sort_by_id,
)
from compmech.errors import ConfigError, PromptAssemblyError
from compmech.lens import AttributionGrid
from compmech.manifest import config_hash, file_digest
from compmech.model_io import CHECKPOINT_NAME
from compmech.runtime import CaptureSpec, InterventionSpec, Model, top1_from_logits

log = logging.getLogger(__name__)

POSITION_CLASSES = (
    "premise", "subject1", "subject1-last", "relation1", "relation1-last",
    "attribute", "subject2", "relation2", "last",
)
QNA_EXTRA_CLASSES = ("question",)
TEMPLATES = ("redefine", "qna")


def class_positions(pm: PositionMap, name: str) -> list[int] | None:
    """Token indices of a position class, or None when the prompt has no such role."""
    spans = {
        "premise": pm.premise_tokens,
        "subject1": pm.subject1_tokens,
        "relation1": pm.relation1_tokens,
        "subject2": pm.subject2_tokens,
        "relation2": pm.relation2_tokens,
        "question": pm.question_tokens,
    }
    singles = {
        "subject1-last": pm.subject1_last,
        "relation1-last": pm.relation1_last,
        "attribute": pm.attribute,
        "last": pm.last,
    }
    if name in singles:
        return [singles[name]]
    if name in spans:
        span = spans[name]
        return None if span is None else list(range(*span))
    raise ConfigError(f"unknown position class {name!r}")


def scheme_for(template: str) -> tuple[str, ...]:
    return POSITION_CLASSES + (QNA_EXTRA_CLASSES if template == "qna" else ())


@dataclass(frozen=True)
class InterventionTemplate:
    """Attention-scaling directive with positions named by class, resolved per prompt."""

    layer: int
    head: int
    alpha: float
    dest: str = "last"
    sources: tuple[str, ...] = ("attribute",)

    def __post_init__(self) -> None:
        if isinstance(self.sources, str):
            object.__setattr__(self, "sources", (self.sources,))
        else:
            object.__setattr__(self, "sources", tuple(self.sources))
        for name in (self.dest, *self.sources):
            if name not in POSITION_CLASSES + QNA_EXTRA_CLASSES:
                raise ConfigError(f"intervention references unknown position class {name!r}")

    @classmethod
    def parse(cls, spec: str | dict) -> "InterventionTemplate":
        """Accept a table or the compact ``L10H7:5`` / ``L10H7:5:last->attribute`` form."""
        if isinstance(spec, dict):
            return cls(**spec)
        try:
            head_part, alpha, *route = spec.split(":")
            layer_s, head_s = head_part.upper().lstrip("L").split("H")
            dest, sources = ("last", ("attribute",))
            if route:
                dest, src = route[0].split("->")
                sources = tuple(src.split("+"))
            return cls(int(layer_s), int(head_s), float(alpha), dest, sources)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"cannot parse intervention {spec!r}: {exc}") from None

    def resolve(self, pm: PositionMap) -> InterventionSpec:
        dest = class_positions(pm, self.dest)
        if not dest or len(dest) != 1:
            raise ConfigError(f"destination class {self.dest!r} must resolve to exactly one position")
        sources: list[int] = []
        for name in self.sources:
            pos = class_positions(pm, name)
            if pos is None:
                raise ConfigError(f"source class {name!r} is not defined for this prompt")
            sources.extend(pos)
        return InterventionSpec(self.layer, self.head, dest[0], tuple(sorted(set(sources))), self.alpha)


GPT2_COPY_HEADS = (
    InterventionTemplate(10, 7, 5.0),
    InterventionTemplate(11, 10, 5.0),
)


@dataclass
class ExperimentConfig:
    model_dir: str | None = None
    dataset: str | None = None
    template: str = "redefine"
    premise: str | None = None
    interventions: tuple[InterventionTemplate, ...] = ()
    premises: tuple[str, ...] = STANDARD_PREMISES
    subsample: int | None = 500
    shuffle_seed: int | None = None
    by_domain: bool = False
    n_jobs: int = 1
    output_dir: str | None = None
    config_path: str | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.template not in TEMPLATES:
            raise ConfigError(f"template must be one of {TEMPLATES}, got {self.template!r}")
        self.interventions = tuple(
            iv if isinstance(iv, InterventionTemplate) else InterventionTemplate.parse(iv)
            for iv in self.interventions
        )
        self.premises = tuple(self.premises)
        scheme = scheme_for(self.template)
        for iv in self.interventions:
            for name in (iv.dest, *iv.sources):
                if name not in scheme:
                    raise ConfigError(f"class {name!r} is not part of the {self.template} position scheme")
        if self.subsample is not None and self.subsample <= 0:
            raise ConfigError("subsample must be positive (or omitted for the full dataset)")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("config_path")
        d["interventions"] = [asdict(iv) for iv in self.interventions]
        d["premises"] = list(self.premises)
        return d

    @property
    def hash(self) -> str:
        d = self.to_dict()
        d.pop("output_dir")
        d.pop("n_jobs")
        return config_hash(d)

    @classmethod
    def from_mapping(cls, data: dict, config_path: str | None = None) -> "ExperimentConfig":
        """Build from a flat or sectioned mapping (``[model]``, ``[dataset]``, ``[run]`` tables)."""
        flat: dict[str, Any] = {}
        sections = {
            "model": {"dir": "model_dir"},
            "dataset": {"path": "dataset", "template": "template", "premise": "premise",
                        "subsample": "subsample", "shuffle_seed": "shuffle_seed", "by_domain": "by_domain"},
            "run": {"output_dir": "output_dir", "n_jobs": "n_jobs", "premises": "premises"},
        }
        known = {f.name for f in fields(cls)}
        for key, value in data.items():
            if key in sections and isinstance(value, dict):
                for sub, v in value.items():
                    target = sections[key].get(sub)
                    if target is None:
                        raise ConfigError(f"unknown config key {key}.{sub}")
                    flat[target] = v
            elif key in known:
                flat[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        if flat.get("subsample") in (0, "all", "none"):
            flat["subsample"] = None
        return cls(**flat, config_path=config_path)

    @classmethod
    def from_toml(cls, path: str | Path, overrides: Iterable[str] = ()) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            data = tomli.load(fh)
        for item in overrides:
            apply_override(data, item)
        cfg = cls.from_mapping(data, config_path=str(path))
        base = Path(path).parent
        # relative paths in a config file are relative to that file
        for attr in ("model_dir", "dataset", "output_dir"):
            value = getattr(cfg, attr)
            if value is not None and not Path(value).is_absolute():
                setattr(cfg, attr, str((base / value).resolve()))
        return cfg


def apply_override(data: dict, item: str) -> None:
    """Apply ``dotted.key=value`` to a nested mapping; the value is parsed as TOML when possible."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key=value")
    key, raw = item.split("=", 1)
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw
    node = data
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


# -- summaries -----------------------------------------------------------------

@dataclass
class AblationSummary:
    n_factual: int = 0
    n_counterfactual: int = 0
    n_other: int = 0
    per_domain: dict[str, "AblationSummary"] | None = None

    @property
    def total(self) -> int:
        return self.n_factual + self.n_counterfactual + self.n_other

    @property
    def pct_factual(self) -> float:
        """Percentage factual among binary (factual or counterfactual) outcomes."""
        denom = self.n_factual + self.n_counterfactual
        return 100.0 * self.n_factual / denom if denom else float("nan")

    @property
    def pct_factual_all(self) -> float:
        return 100.0 * self.n_factual / self.total if self.total else float("nan")

    def add(self, label: str) -> None:
        if label == "factual":
            self.n_factual += 1
        elif label == "counterfactual":
            self.n_counterfactual += 1
        elif label == "other":
            self.n_other += 1
        else:
            raise ValueError(f"unknown outcome {label!r}")

    @classmethod
    def from_labels(cls, labels: Sequence[str], domains: Sequence[str] | None = None) -> "AblationSummary":
        summary = cls()
        for label in labels:
            summary.add(label)
        if domains is not None:
            summary.per_domain = {}
            for label, dom in zip(labels, domains):
                summary.per_domain.setdefault(dom, cls()).add(label)
            summary.per_domain = dict(sorted(summary.per_domain.items()))
        return summary

    def to_dict(self) -> dict:
        def pct(x: float) -> float | None:
            return None if np.isnan(x) else round(x, 6)

        out = {
            "n_factual": self.n_factual,
            "n_counterfactual": self.n_counterfactual,
            "n_other": self.n_other,
            "total": self.total,
            "pct_factual": pct(self.pct_factual),
            "pct_factual_all": pct(self.pct_factual_all),
        }
        if self.per_domain is not None:
            out["per_domain"] = {k: v.to_dict() for k, v in self.per_domain.items()}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "AblationSummary":
        per = d.get("per_domain")
        return cls(d["n_factual"], d["n_counterfactual"], d["n_other"],
                   None if per is None else {k: cls.from_dict(v) for k, v in per.items()})


SUMMARY_NOTE = (
    "pct_factual uses factual + counterfactual as denominator; pct_factual_all uses every prompt "
    "(including 'other' outcomes)."
)


# -- shared plumbing -----------------------------------------------------------

@dataclass
class PreparedPrompt:
    record: PromptRecord
    prompt: AssembledPrompt


def select_records(records: Sequence[PromptRecord], subsample: int | None, shuffle_seed: int | None):
    """First ``subsample`` records by id, optionally after a seeded shuffle."""
    records = sort_by_id(records)
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(len(records))
        records = [records[i] for i in order]
    return records if subsample is None else records[:subsample]


class ExperimentContext:
    """Model, records and provenance for one run over one dataset."""

    def __init__(self, cfg: ExperimentConfig, model: Model | None = None,
                 records: Sequence[PromptRecord] | None = None):
        self.cfg = cfg
        if model is None:
            model = Model.from_dir(cfg.model_dir)
        self.model = model
        if records is None:
            if cfg.dataset is None:
                raise ConfigError("no dataset path configured")
            records = read_records(cfg.dataset)
        self.records = select_records(records, cfg.subsample, cfg.shuffle_seed)
        if not self.records:
            raise ConfigError("dataset is empty")
        self.skipped: list[tuple[str, str]] = []

    def prepare(self, premise: str | None = None) -> list[PreparedPrompt]:
        premise = self.cfg.premise if premise is None else premise
        out = []
        for rec in self.records:
            try:
                out.append(PreparedPrompt(rec, assemble(rec, self.model.tokenizer, self.cfg.template, premise)))
            except PromptAssemblyError as exc:
                self.skipped.append((rec.id, str(exc)))
                log.warning("skipping %s: %s", rec.id, exc)
        if not out:
            raise ConfigError("no prompt in the dataset could be assembled")
        return out

    def provenance(self) -> dict:
        ckpt = self.model.checkpoint_path
        if ckpt is None and self.cfg.model_dir:
            ckpt = Path(self.cfg.model_dir) / CHECKPOINT_NAME
        return {
            "config_hash": self.cfg.hash,
            "model_digest": file_digest(ckpt),
            "dataset_digest": file_digest(self.cfg.dataset),
            "n_records": len(self.records),
        }


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else repr(float(v))
    return v


def _write_json(path: Path, payload: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
    return path


def _persist_meta(csv_path: Path, meta: dict) -> Path:
    return _write_json(csv_path.with_suffix(".meta.json"), meta)


@dataclass
class ExperimentResult:
    kind: str
    payload: Any
    artifacts: list[Path] = field(default_factory=list)
    meta: dict = field(default_factory=dict)


# -- logit inspection ------------------------------------------------------------

def class_reduce(grid: AttributionGrid, pm: PositionMap, scheme: Sequence[str]) -> AttributionGrid:
    """Collapse a layers x positions grid onto position classes (within-class mean)."""
    col_of = {p: i for i, p in enumerate(grid.cols)}
    n_rows = len(grid.rows)
    fact = np.full((n_rows, len(scheme)), np.nan)
    cofa = np.full_like(fact, np.nan)
    count = np.zeros(fact.shape, np.int64)
    for c, name in enumerate(scheme):
        pos = class_positions(pm, name)
        if not pos:
            continue
        idx = [col_of[p] for p in pos]
        fact[:, c] = grid.fact_logits[:, idx].mean(axis=1)
        cofa[:, c] = grid.cofa_logits[:, idx].mean(axis=1)
        count[:, c] = 1
    return AttributionGrid(list(grid.rows), list(scheme), fact, cofa, count, grid.row_name, "position_class")


def prompt_class_grid(model: Model, prepared: PreparedPrompt, scheme: Sequence[str]) -> AttributionGrid:
    p = prepared.prompt
    trace = model.forward(p.tokens, CaptureSpec(capture_residuals=True), all_logits=False)
    grid = lens.logit_lens_grid(trace, model.weights, p.targets)
    # row l+1 is the residual after block l; the embedding row is dropped
    grid = AttributionGrid(list(range(len(grid.rows) - 1)), grid.cols, grid.fact_logits[1:],
                           grid.cofa_logits[1:], grid.count[1:])
    return class_reduce(grid, p.positions, scheme)


def run_logit_inspection(cfg: ExperimentConfig, model: Model | None = None,
                         records: Sequence[PromptRecord] | None = None) -> ExperimentResult:
    ctx = ExperimentContext(cfg, model, records)
    scheme = scheme_for(cfg.template)
    prepared = ctx.prepare()
    grids = ordered_map(lambda pp: prompt_class_grid(ctx.model, pp, scheme), prepared, cfg.n_jobs)
    grid = AttributionGrid.mean(grids)
    meta = {**ctx.provenance(), **lens.LENS_METADATA, "n_prompts": len(prepared),
            "layer_index": "residual stream after block <layer>", "skipped": len(ctx.skipped)}
    grid.metadata.update(meta)
    result = ExperimentResult("logit-inspection", grid, meta=meta)
    if cfg.output_dir:
        path = _write_csv(Path(cfg.output_dir) / "logit_inspection.csv",
                          ["layer", "position_class", "fact_logit", "cofa_logit", "delta_cofa"],
                          ((r["layer"], r["position_class"], r["fact_logit"], r["cofa_logit"], r["delta_cofa"])
                           for r in grid.to_records()))
        result.artifacts += [path, _persist_meta(path, meta)]
    return result


# -- block attribution -----------------------------------------------------------

@dataclass
class BlockAttribution:
    fact: dict[str, np.ndarray]  # kind -> [layers]
    cofa: dict[str, np.ndarray]
    n_prompts: int

    def delta(self, kind: str) -> np.ndarray:
        return self.cofa[kind] - self.fact[kind]


def prompt_block_contributions(model: Model, p: AssembledPrompt) -> dict[str, np.ndarray]:
    cap = CaptureSpec(capture_attn_outputs=True, capture_mlp_outputs=True, positions=(len(p.tokens) - 1,))
    trace = model.forward(p.tokens, cap, all_logits=False)
    n_layers = model.config.n_layers
    return {
        kind: np.array([lens.block_logit_contribution(trace, model.weights, l, kind, p.targets)
                        for l in range(n_layers)])
        for kind in ("attn", "mlp")
    }


def run_block_attribution(cfg: ExperimentConfig, model: Model | None = None,
                          records: Sequence[PromptRecord] | None = None) -> ExperimentResult:
    ctx = ExperimentContext(cfg, model, records)
    prepared = ctx.prepare()
    per_prompt = ordered_map(lambda pp: prompt_block_contributions(ctx.model, pp.prompt), prepared, cfg.n_jobs)
    fact, cofa = {}, {}
    for kind in ("attn", "mlp"):
        stacked = np.stack([c[kind] for c in per_prompt])  # [prompts, layers, 2]
        mean = stacked.mean(axis=0)
        fact[kind], cofa[kind] = mean[:, 0], mean[:, 1]
    result_obj = BlockAttribution(fact, cofa, len(prepared))
    meta = {**ctx.provenance(), **lens.LENS_METADATA, "n_prompts": len(prepared), "position": "last"}
    result = ExperimentResult("block-attrib", result_obj, meta=meta)
    if cfg.output_dir:
        rows = [
            (l, kind, fact[kind][l], cofa[kind][l], lens.delta_cofa(fact[kind][l], cofa[kind][l]))
            for kind in ("attn", "mlp") for l in range(len(fact[kind]))
        ]
        path = _write_csv(Path(cfg.output_dir) / "block_attribution.csv",
                          ["layer", "block_kind", "fact_logit", "cofa_logit", "delta_cofa"], rows)
        result.artifacts += [path, _persist_meta(path, meta)]
    return result


# -- head attribution ------------------------------------------------------------

@dataclass
class HeadAttribution:
    fact: np.ndarray  # [layers, heads]
    cofa: np.ndarray
    attn_to_attribute: np.ndarray
    n_prompts: int

    @property
    def delta(self) -> np.ndarray:
        return self.cofa - self.fact

    def ranking(self, by: str = "delta") -> list[tuple[int, int, float]]:
        """Heads sorted by descending mean delta (``by="abs"`` sorts by magnitude)."""
        d = self.delta
        key = np.abs(d) if by == "abs" else d
        order = sorted(np.ndindex(d.shape), key=lambda lh: (-key[lh], lh))
        return [(int(l), int(h), float(d[l, h])) for l, h in order]

    def top(self, k: int = 3, by: str = "delta") -> list[tuple[int, int]]:
        return [(l, h) for l, h, _ in self.ranking(by)[:k]]


def prompt_head_contributions(model: Model, p: AssembledPrompt):
    last = len(p.tokens) - 1
    cap = CaptureSpec(capture_head_outputs=True, capture_attention=True, positions=(last,))
    trace = model.forward(p.tokens, cap, all_logits=False)
    fact, cofa = lens.head_contribution_matrix(trace, model.weights, p.targets)
    attn = trace.attention[:, :, trace.slot(last), p.positions.attribute]
    return fact, cofa, attn.astype(np.float64)


def run_head_attribution(cfg: ExperimentConfig, model: Model | None = None,
                         records: Sequence[PromptRecord] | None = None) -> ExperimentResult:
    ctx = ExperimentContext(cfg, model, records)
    prepared = ctx.prepare()
    per_prompt = ordered_map(lambda pp: prompt_head_contributions(ctx.model, pp.prompt), prepared, cfg.n_jobs)
    fact = np.mean([x[0] for x in per_prompt], axis=0)
    cofa = np.mean([x[1] for x in per_prompt], axis=0)
    attn = np.mean([x[2] for x in per_prompt], axis=0)
    heads = HeadAttribution(fact, cofa, attn, len(prepared))
    meta = {**ctx.provenance(), **lens.LENS_METADATA, "n_prompts": len(prepared), "position": "last",
            "attention_score": "mean post-softmax weight last -> attribute"}
    result = ExperimentResult("head-attrib", heads, meta=meta)
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        rows = [(l, h, fact[l, h], cofa[l, h], heads.delta[l, h], attn[l, h]) for l, h in np.ndindex(fact.shape)]
        path = _write_csv(out / "head_attribution.csv",
                          ["layer", "head", "fact_logit", "cofa_logit", "delta_cofa", "attn_last_to_attribute"], rows)
        ranking = [{"layer": l, "head": h, "name": f"L{l}H{h}", "delta_cofa": d,
                    "attn_last_to_attribute": float(attn[l, h])} for l, h, d in heads.ranking()]
        rank_path = _write_json(out / "head_ranking.json", {"meta": meta, "ranking": ranking})
        result.artifacts += [path, _persist_meta(path, meta), rank_path]
    return result


# -- ablation --------------------------------------------------------------------

def classify_prompts(model: Model, prepared: Sequence[PreparedPrompt],
                     templates: Sequence[InterventionTemplate], n_jobs: int = 1) -> list[str]:
    def one(pp: PreparedPrompt) -> str:
        p = pp.prompt
        specs = [t.resolve(p.positions) for t in templates]
        trace = model.forward(p.tokens, interventions=specs, all_logits=False)
        return classify_prediction(top1_from_logits(trace.final_logits()), p.targets)

    return ordered_map(one, prepared, n_jobs)


def _summarize(prepared: Sequence[PreparedPrompt], labels: Sequence[str], by_domain: bool) -> AblationSummary:
    domains = [pp.record.domain or UNLABELED for pp in prepared] if by_domain else None
    return AblationSummary.from_labels(labels, domains)


def run_ablation(cfg: ExperimentConfig, model: Model | None = None,
                 records: Sequence[PromptRecord] | None = None) -> ExperimentResult:
    ctx = ExperimentContext(cfg, model, records)
    prepared = ctx.prepare()
    labels = classify_prompts(ctx.model, prepared, cfg.interventions, cfg.n_jobs)
    summary = _summarize(prepared, labels, cfg.by_domain)
    meta = {**ctx.provenance(), "n_prompts": len(prepared), "skipped": len(ctx.skipped),
            "interventions": [asdict(t) for t in cfg.interventions], "denominator_note": SUMMARY_NOTE}
    result = ExperimentResult("ablation", summary, meta=meta)
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        path = _write_json(out / "ablation_summary.json", {"meta": meta, "summary": summary.to_dict()})
        result.artifacts.append(path)
    return result


def run_premise_sweep(cfg: ExperimentConfig, premises: Sequence[str] | None = None,
                      model: Model | None = None, records: Sequence[PromptRecord] | None = None) -> ExperimentResult:
    """Re-assemble the same record set under each premise word; report baseline and ablated outcomes."""
    premises = list(cfg.premises if premises is None else premises)
    if not premises:
        raise ConfigError("premise list is empty")
    if cfg.template != "redefine":
        raise ConfigError("the premise sweep needs the redefine template")
    ctx = ExperimentContext(cfg, model, records)
    table: dict[str, dict[str, AblationSummary | None]] = {}
    for premise in premises:
        prepared = ctx.prepare(premise)
        baseline = _summarize(prepared, classify_prompts(ctx.model, prepared, (), cfg.n_jobs), cfg.by_domain)
        ablated = None
        if cfg.interventions:
            labels = classify_prompts(ctx.model, prepared, cfg.interventions, cfg.n_jobs)
            ablated = _summarize(prepared, labels, cfg.by_domain)
        table[premise] = {"baseline": baseline, "ablated": ablated}
    meta = {**ctx.provenance(), "premises": premises,
            "interventions": [asdict(t) for t in cfg.interventions], "denominator_note": SUMMARY_NOTE}
    result = ExperimentResult("premise-sweep", table, meta=meta)
    if cfg.output_dir:
        payload = {
            "meta": meta,
            "table": {p: {k: (None if v is None else v.to_dict()) for k, v in row.items()} for p, row in table.items()},
        }
        result.artifacts.append(_write_json(Path(cfg.output_dir) / "premise_sweep.json", payload))
    return result


EXPERIMENTS = {
    "logit-inspection": run_logit_inspection,
    "block-attrib": run_block_attribution,
    "head-attrib": run_head_attribution,
    "ablation": run_ablation,
    "premise-sweep": run_premise_sweep,
}

"""Prompt corpora: assembly, position annotation and model-conditional filtering."""

from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Sequence

from compmech.errors import PromptAssemblyError, SchemaError
from compmech.lens import TargetPair
from compmech.tokenizer import Tokenizer

DEFAULT_PREMISE = "Redefine"
STANDARD_PREMISES = ("Redefine", "Assess", "Fact Check", "Review", "Validate", "Verify")
UNLABELED = "unlabeled"

_RECORD_FIELDS = (
    "id", "subject", "relation", "fact_attr", "cofa_attr",
    "interrogative", "relation_reformulated", "domain", "premise",
)


@dataclass(frozen=True)
class PromptRecord:
    id: str
    subject: str
    relation: str
    fact_attr: str
    cofa_attr: str
    interrogative: str | None = None
    relation_reformulated: str | None = None
    domain: str | None = None
    premise: str = DEFAULT_PREMISE
    meta: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self) -> None:
        if self.fact_attr.strip() == self.cofa_attr.strip():
            raise SchemaError(f"record {self.id}: fact_attr and cofa_attr are identical ({self.fact_attr!r})")

    @property
    def fact_word(self) -> str:
        return self.fact_attr.strip()

    @property
    def cofa_word(self) -> str:
        return self.cofa_attr.strip()

    @property
    def fact_token_text(self) -> str:
        """Space-prefixed form, which is how the word appears mid-sentence."""
        return " " + self.fact_word

    @property
    def cofa_token_text(self) -> str:
        return " " + self.cofa_word

    @property
    def dedup_key(self) -> tuple[str, str, str, str]:
        return (self.subject, self.relation, self.fact_word, self.cofa_word)

    def base_prompt(self) -> str:
        return f"{self.subject} {self.relation}"

    def base_question(self) -> str:
        _require_question(self)
        return f"{self.interrogative} {self.relation_reformulated} {self.subject}? Answer:"

    @classmethod
    def from_dict(cls, d: dict) -> "PromptRecord":
        missing = [k for k in ("id", "subject", "relation", "fact_attr", "cofa_attr") if d.get(k) in (None, "")]
        if missing:
            raise SchemaError(f"record is missing required fields {missing}")
        kwargs = {k: d[k] for k in _RECORD_FIELDS if k in d and d[k] is not None}
        kwargs["id"] = str(kwargs["id"])
        return cls(**kwargs)

    @classmethod
    def from_counterfact(cls, d: dict, fallback_id: str) -> "PromptRecord":
        """Translate a COUNTERFACT-style entry (``requested_rewrite`` with a ``{}`` subject slot).

        Only prompts that start with the subject fit the two-sentence template.
        """
        rw = d.get("requested_rewrite", d)
        if isinstance(rw, list):
            rw = rw[0]
        prompt = rw.get("prompt", "")
        if not prompt.startswith("{}"):
            raise SchemaError(f"prompt {prompt!r} does not start with the subject slot")

        def attr(v):
            return v.get("str") if isinstance(v, dict) else v

        return cls(
            id=str(d.get("case_id", d.get("id", fallback_id))),
            subject=rw["subject"],
            relation=prompt[2:].strip(),
            fact_attr=attr(rw["target_true"]),
            cofa_attr=attr(rw["target_new"]),
            domain=d.get("domain"),
        )

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in _RECORD_FIELDS}
        if self.meta:
            out["meta"] = dict(self.meta)
        return out


@dataclass(frozen=True)
class PositionMap:
    """Token intervals (half-open) and indices of the semantic prompt roles."""

    premise_tokens: tuple[int, int]
    subject1_tokens: tuple[int, int]
    relation1_tokens: tuple[int, int]
    relation1_last: int
    attribute: int
    last: int
    subject2_tokens: tuple[int, int] | None = None
    relation2_tokens: tuple[int, int] | None = None
    question_tokens: tuple[int, int] | None = None

    @property
    def subject1_last(self) -> int:
        return self.subject1_tokens[1] - 1

    def intervals(self) -> list[tuple[int, int]]:
        spans = [self.premise_tokens, self.subject1_tokens, self.relation1_tokens,
                 (self.attribute, self.attribute + 1)]
        spans += [s for s in (self.subject2_tokens, self.relation2_tokens, self.question_tokens) if s is not None]
        return spans

    def check(self, seq_len: int) -> None:
        spans = self.intervals()
        for (a0, a1), (b0, b1) in zip(spans, spans[1:]):
            if not (a0 < a1 <= b0 < b1):
                raise PromptAssemblyError(f"position intervals overlap or are out of order: {spans}")
        if self.last != seq_len - 1:
            raise PromptAssemblyError(f"last index {self.last} != sequence length - 1 ({seq_len - 1})")


@dataclass(frozen=True)
class AssembledPrompt:
    text: str
    tokens: tuple[int, ...]
    positions: PositionMap
    targets: TargetPair
    record_id: str
    template: str = "redefine"


@dataclass(frozen=True)
class Rejection:
    id: str
    stage: str
    reason: str
    predicted_token: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SingleTokenCheck:
    passed: bool
    fact_ids: tuple[int, ...]
    cofa_ids: tuple[int, ...]
    reason: str | None = None
    unspaced_single: tuple[bool, bool] = (False, False)

    @property
    def targets(self) -> TargetPair:
        return TargetPair(self.fact_ids[0], self.cofa_ids[0])


def check_single_token(rec: PromptRecord, t: Tokenizer) -> SingleTokenCheck:
    """Both space-prefixed attributes must encode to exactly one token.

    The bare (no leading space) variants are also checked and reported, but
    do not affect the verdict.
    """
    fact_ids = tuple(t.encode(rec.fact_token_text))
    cofa_ids = tuple(t.encode(rec.cofa_token_text))
    unspaced = (len(t.encode(rec.fact_word)) == 1, len(t.encode(rec.cofa_word)) == 1)
    if rec.fact_word == rec.cofa_word:
        return SingleTokenCheck(False, fact_ids, cofa_ids, "identical-attributes", unspaced)
    if len(fact_ids) != 1 or len(cofa_ids) != 1:
        return SingleTokenCheck(False, fact_ids, cofa_ids, "multi-token-attribute", unspaced)
    return SingleTokenCheck(True, fact_ids, cofa_ids, None, unspaced)


def _require_question(rec: PromptRecord) -> None:
    if not rec.interrogative or not rec.relation_reformulated:
        raise PromptAssemblyError(f"record {rec.id}: QnA template needs interrogative and relation_reformulated")


class _TextBuilder:
    def __init__(self) -> None:
        self.parts: list[str] = []
        self.length = 0

    def add(self, s: str) -> tuple[int, int]:
        start = self.length
        self.parts.append(s)
        self.length += len(s)
        return start, self.length

    @property
    def text(self) -> str:
        return "".join(self.parts)


def _targets(rec: PromptRecord, t: Tokenizer) -> TargetPair:
    check = check_single_token(rec, t)
    if not check.passed:
        raise PromptAssemblyError(f"record {rec.id}: {check.reason} "
                                  f"(fact -> {list(check.fact_ids)}, cofa -> {list(check.cofa_ids)})")
    return check.targets


def _attribute_index(rec: PromptRecord, t: Tokenizer, text, span, ids) -> int:
    a0, a1 = t.align_span(text, span, ids)
    if a1 - a0 != 1 or t.decode([ids[a0]]) != rec.cofa_token_text:
        raise PromptAssemblyError(
            f"record {rec.id}: attribute {rec.cofa_word!r} does not align to a single in-context token"
        )
    return a0


def assemble_redefine(rec: PromptRecord, t: Tokenizer, premise: str | None = None) -> AssembledPrompt:
    premise = rec.premise if premise is None else premise
    targets = _targets(rec, t)
    b = _TextBuilder()
    premise_span = b.add(f"{premise}:")
    b.add(" ")
    subj1 = b.add(rec.subject)
    b.add(" ")
    rel1 = b.add(rec.relation)
    b.add(" ")
    attr = b.add(rec.cofa_word)
    b.add(". ")
    subj2 = b.add(rec.subject)
    b.add(" ")
    rel2 = b.add(rec.relation)
    text = b.text
    ids = t.encode(text)
    rel1_tokens = t.align_span(text, rel1, ids)
    positions = PositionMap(
        premise_tokens=t.align_span(text, premise_span, ids),
        subject1_tokens=t.align_span(text, subj1, ids),
        relation1_tokens=rel1_tokens,
        relation1_last=rel1_tokens[1] - 1,
        attribute=_attribute_index(rec, t, text, attr, ids),
        subject2_tokens=t.align_span(text, subj2, ids),
        relation2_tokens=t.align_span(text, rel2, ids),
        last=len(ids) - 1,
    )
    positions.check(len(ids))
    return AssembledPrompt(text, tuple(ids), positions, targets, rec.id, "redefine")


def assemble_qna(rec: PromptRecord, t: Tokenizer, premise: str | None = None) -> AssembledPrompt:
    _require_question(rec)
    premise = rec.premise if premise is None else premise
    targets = _targets(rec, t)
    b = _TextBuilder()
    premise_span = b.add(f"{premise}:")
    b.add(" ")
    subj1 = b.add(rec.subject)
    b.add(" ")
    rel1 = b.add(rec.relation)
    b.add(" ")
    attr = b.add(rec.cofa_word)
    b.add(". ")
    question = b.add(f"{rec.interrogative} {rec.relation_reformulated} {rec.subject}?")
    b.add(" Answer:")
    text = b.text
    ids = t.encode(text)
    rel1_tokens = t.align_span(text, rel1, ids)
    positions = PositionMap(
        premise_tokens=t.align_span(text, premise_span, ids),
        subject1_tokens=t.align_span(text, subj1, ids),
        relation1_tokens=rel1_tokens,
        relation1_last=rel1_tokens[1] - 1,
        attribute=_attribute_index(rec, t, text, attr, ids),
        question_tokens=t.align_span(text, question, ids),
        last=len(ids) - 1,
    )
    positions.check(len(ids))
    return AssembledPrompt(text, tuple(ids), positions, targets, rec.id, "qna")


ASSEMBLERS: dict[str, Callable[..., AssembledPrompt]] = {"redefine": assemble_redefine, "qna": assemble_qna}


def assemble(rec: PromptRecord, t: Tokenizer, template: str = "redefine", premise: str | None = None) -> AssembledPrompt:
    try:
        fn = ASSEMBLERS[template]
    except KeyError:
        raise PromptAssemblyError(f"unknown template {template!r}; expected one of {sorted(ASSEMBLERS)}") from None
    return fn(rec, t, premise)


# -- ordering / parallel map -------------------------------------------------

def natural_key(record_id: str) -> tuple:
    return tuple((0, int(p), "") if p.isdigit() else (1, 0, p) for p in re.split(r"(\d+)", record_id) if p)


def sort_by_id(records: Iterable[PromptRecord]) -> list[PromptRecord]:
    return sorted(records, key=lambda r: natural_key(r.id))


def ordered_map(fn, items: Sequence, n_jobs: int = 1) -> list:
    """Map preserving input order; numpy releases the GIL so threads overlap the matmuls."""
    if n_jobs <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


# -- filters -------------------------------------------------------------------

def _token_str(t: Tokenizer, token_id: int) -> str:
    return t.decode([token_id])


def filter_single_token(records: Sequence[PromptRecord], t: Tokenizer):
    kept, rejected = [], []
    for rec in sort_by_id(records):
        check = check_single_token(rec, t)
        if check.passed:
            kept.append(rec)
        else:
            rejected.append(Rejection(rec.id, "single-token", check.reason))
    return kept, rejected


def filter_base_factual(records: Sequence[PromptRecord], model, template: str = "redefine", n_jobs: int = 1):
    """Keep records whose bare prompt (no premise sentence) already predicts the factual token.

    For the QnA template the bare prompt is the question itself.
    """
    t = model.tokenizer
    records = sort_by_id(records)

    def judge(rec: PromptRecord):
        check = check_single_token(rec, t)
        if not check.passed:
            return Rejection(rec.id, "base-factual", check.reason)
        prompt = rec.base_question() if template == "qna" else rec.base_prompt()
        pred = model.predict_top1(t.encode(prompt))
        if pred == check.fact_ids[0]:
            return None
        return Rejection(rec.id, "base-factual", "base-not-factual", _token_str(t, pred))

    verdicts = ordered_map(judge, records, n_jobs)
    kept = [r for r, v in zip(records, verdicts) if v is None]
    return kept, [v for v in verdicts if v is not None]


def classify_prediction(pred: int, targets: TargetPair) -> str:
    if pred == targets.fact_id:
        return "factual"
    if pred == targets.cofa_id:
        return "counterfactual"
    return "other"


def filter_full_binary(records: Sequence[PromptRecord], model, template: str = "redefine", n_jobs: int = 1):
    """Keep records whose full prompt predicts either the factual or the counterfactual token.

    Kept records carry the outcome in ``meta["full_outcome"]``.
    """
    t = model.tokenizer
    records = sort_by_id(records)

    def judge(rec: PromptRecord):
        try:
            prompt = assemble(rec, t, template)
        except PromptAssemblyError as exc:
            return Rejection(rec.id, "full-binary", f"assembly-failed: {exc}"), None
        pred = model.predict_top1(prompt.tokens)
        label = classify_prediction(pred, prompt.targets)
        if label == "other":
            return Rejection(rec.id, "full-binary", "neither", _token_str(t, pred)), None
        return None, label

    verdicts = ordered_map(judge, records, n_jobs)
    kept, rejected = [], []
    for rec, (rej, label) in zip(records, verdicts):
        if rej is None:
            kept.append(replace(rec, meta={**rec.meta, "full_outcome": label}))
        else:
            rejected.append(rej)
    return kept, rejected


def dedupe_records(records: Iterable[PromptRecord]):
    """Drop repeats of (subject, relation, fact, cofa); the first occurrence by id wins."""
    seen: dict[tuple, str] = {}
    kept, collisions = [], []
    for rec in sort_by_id(records):
        first = seen.get(rec.dedup_key)
        if first is None:
            seen[rec.dedup_key] = rec.id
            kept.append(rec)
        else:
            collisions.append(Rejection(rec.id, "dedupe", f"duplicate-of:{first}"))
    return kept, collisions


def group_by_domain(records: Iterable[PromptRecord]) -> dict[str, list[PromptRecord]]:
    groups: dict[str, list[PromptRecord]] = {}
    for rec in records:
        groups.setdefault(rec.domain or UNLABELED, []).append(rec)
    return groups


# -- JSONL ---------------------------------------------------------------------

def read_records(path: str | Path) -> list[PromptRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(raw, dict):
                raise SchemaError(f"{path}:{lineno}: expected a JSON object")
            try:
                if "requested_rewrite" in raw:
                    records.append(PromptRecord.from_counterfact(raw, str(lineno)))
                else:
                    records.append(PromptRecord.from_dict(raw))
            except (SchemaError, TypeError, KeyError) as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from None
    return records


def write_jsonl(path: str | Path, rows: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    return path


def write_records(path: str | Path, records: Iterable[PromptRecord]) -> Path:
    return write_jsonl(path, (r.to_dict() for r in records))


def write_rejections(path: str | Path, rejections: Iterable[Rejection]) -> Path:
    return write_jsonl(path, (r.to_dict() for r in rejections))

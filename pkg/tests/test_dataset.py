import json

import pytest
from hypothesis import given, settings, strategies as st

from compmech.dataset import (
    UNLABELED, PromptRecord, assemble, assemble_qna, assemble_redefine, check_single_token,
    classify_prediction, dedupe_records, filter_base_factual, filter_full_binary, filter_single_token,
    group_by_domain, natural_key, ordered_map, read_records, sort_by_id, write_records,
)
from compmech.errors import PromptAssemblyError, SchemaError
from compmech.lens import TargetPair

from conftest import StubModel

IPHONE = PromptRecord("1", "iPhone", "was developed by", "Apple", "Google",
                      interrogative="What company", relation_reformulated="developed",
                      domain="Computers and Electronics")


def test_redefine_text_and_positions(tokenizer):
    p = assemble_redefine(IPHONE, tokenizer)
    assert p.text == "Redefine: iPhone was developed by Google. iPhone was developed by"
    pm = p.positions
    assert pm.premise_tokens == (0, 4)
    assert pm.subject1_tokens == (4, 5)
    assert pm.relation1_tokens == (5, 8) and pm.relation1_last == 7
    assert pm.attribute == 8
    assert pm.subject2_tokens == (10, 11) and pm.relation2_tokens == (11, 14)
    assert pm.last == 13 == len(p.tokens) - 1
    assert p.targets == TargetPair(4196, 3012)


def test_review_premise(tokenizer):
    p = assemble_redefine(IPHONE, tokenizer, premise="Review")
    assert p.text == "Review: iPhone was developed by Google. iPhone was developed by"
    assert tokenizer.decode(list(p.tokens[slice(*p.positions.premise_tokens)])) == "Review:"


def test_multi_word_premise(tokenizer):
    p = assemble(IPHONE, tokenizer, premise="Fact Check")
    assert p.text.startswith("Fact Check: iPhone")
    assert tokenizer.decode(list(p.tokens[p.positions.attribute:p.positions.attribute + 1])) == " Google"


def test_qna_text(tokenizer):
    p = assemble_qna(IPHONE, tokenizer)
    assert p.text == "Redefine: iPhone was developed by Google. What company developed iPhone? Answer:"
    assert tokenizer.decode(list(p.tokens)) == p.text
    q0, q1 = p.positions.question_tokens
    assert tokenizer.decode(list(p.tokens[q0:q1])) == " What company developed iPhone?"
    assert p.positions.subject2_tokens is None
    assert p.positions.last == len(p.tokens) - 1


def test_qna_needs_question_fields(tokenizer):
    rec = PromptRecord("2", "iPhone", "was developed by", "Apple", "Google")
    with pytest.raises(PromptAssemblyError):
        assemble_qna(rec, tokenizer)


def test_multi_token_attribute_rejected(tokenizer):
    rec = PromptRecord("7", "The octopus", "belongs to the class", "Mollusca", "Cephalopoda")
    with pytest.raises(PromptAssemblyError, match="multi-token"):
        assemble_redefine(rec, tokenizer)
    check = check_single_token(rec, tokenizer)
    assert not check.passed and check.reason == "multi-token-attribute"


def test_single_token_check_pass(tokenizer):
    check = check_single_token(IPHONE, tokenizer)
    assert check.passed and check.fact_ids == (4196,)


def test_identical_attributes_rejected():
    with pytest.raises(SchemaError):
        PromptRecord("3", "x", "is", "Apple", " Apple")


def test_unknown_template(tokenizer):
    with pytest.raises(PromptAssemblyError):
        assemble(IPHONE, tokenizer, template="cloze")


def test_kept_prompts_satisfy_alignment_invariant(tokenizer, bank):
    for rec in bank:
        try:
            p = assemble_redefine(rec, tokenizer)
        except PromptAssemblyError:
            continue
        pm = p.positions
        assert tokenizer.decode([p.tokens[pm.attribute]]) == " " + rec.cofa_word
        s1 = tokenizer.decode(list(p.tokens[slice(*pm.subject1_tokens)]))
        s2 = tokenizer.decode(list(p.tokens[slice(*pm.subject2_tokens)]))
        assert s1.strip() == s2.strip() == rec.subject


words = st.text(alphabet="abcdefghijklmnopqrstuvwxyzABCXYZ", min_size=1, max_size=8)


@settings(max_examples=60, deadline=None)
@given(subject=st.lists(words, min_size=1, max_size=3).map(" ".join),
       relation=st.lists(words, min_size=1, max_size=4).map(" ".join))
def test_positions_are_consistent_for_arbitrary_text(tokenizer, subject, relation):
    rec = PromptRecord("h", subject, relation, "Apple", "Google")
    p = assemble_redefine(rec, tokenizer)
    p.positions.check(len(p.tokens))
    assert tokenizer.decode(list(p.tokens)) == p.text
    assert p.tokens[p.positions.attribute] == 3012


def test_classify_prediction():
    t = TargetPair(1, 2)
    assert [classify_prediction(x, t) for x in (1, 2, 3)] == ["factual", "counterfactual", "other"]


def fact_rule(tokenizer, full_outcome):
    """Stub predictor: bare prompts predict the fact; full prompts follow ``full_outcome[subject]``."""
    def rule(text):
        for subj, (fact, cofa, outcome) in full_outcome.items():
            if text.endswith(subj + " was developed by") or text.endswith(subj + " is produced by"):
                if not text.startswith("Redefine"):
                    return tokenizer.encode(" " + fact)[0] if outcome != "base-wrong" else 13
                return {"factual": tokenizer.encode(" " + fact)[0],
                        "counterfactual": tokenizer.encode(" " + cofa)[0]}.get(outcome, 13)
        return 13
    return rule


def test_filters_on_stub_model(tokenizer):
    recs = [
        PromptRecord("1", "iPhone", "was developed by", "Apple", "Google"),
        PromptRecord("2", "Windows", "was developed by", "Microsoft", "Apple"),
        PromptRecord("3", "Toyota Corolla", "is produced by", "Toyota", "Honda"),
        PromptRecord("4", "Playstation", "is produced by", "Sony", "Nintendo"),
    ]
    outcome = {"iPhone": ("Apple", "Google", "counterfactual"),
               "Windows": ("Microsoft", "Apple", "factual"),
               "Toyota Corolla": ("Toyota", "Honda", "base-wrong"),
               "Playstation": ("Sony", "Nintendo", "other")}
    model = StubModel(tokenizer, fact_rule(tokenizer, outcome))
    kept, rej = filter_base_factual(recs, model)
    assert [r.id for r in kept] == ["1", "2", "4"]
    assert [(r.id, r.reason) for r in rej] == [("3", "base-not-factual")]
    assert rej[0].predicted_token == "."
    kept2, rej2 = filter_full_binary(kept, model)
    assert [(r.id, r.meta["full_outcome"]) for r in kept2] == [("1", "counterfactual"), ("2", "factual")]
    assert [(r.id, r.reason) for r in rej2] == [("4", "neither")]
    # idempotent, and every input accounted for
    again, _ = filter_full_binary(kept2, model)
    assert [r.id for r in again] == [r.id for r in kept2]
    assert {r.id for r in kept2} | {r.id for r in rej + rej2} == {r.id for r in recs}


def test_parallel_filters_match_serial(tokenizer, bank):
    model = StubModel(tokenizer, lambda text: tokenizer.encode(" Apple")[0])
    serial = filter_base_factual(bank, model, n_jobs=1)
    parallel = filter_base_factual(bank, model, n_jobs=4)
    assert serial == parallel


def test_single_token_filter(tokenizer, bank):
    kept, rej = filter_single_token(bank, tokenizer)
    assert [r.id for r in rej] == ["7"]
    assert len(kept) + len(rej) == len(bank)


def test_dedupe(bank):
    kept, collisions = dedupe_records(bank)
    assert [(c.id, c.reason) for c in collisions] == [("9", "duplicate-of:1")]
    assert len(kept) == len(bank) - 1


def test_group_by_domain():
    recs = [PromptRecord(str(i), "s", "r", "a", "b", domain=d) for i, d in enumerate("AAB")]
    groups = group_by_domain(recs)
    assert {k: len(v) for k, v in groups.items()} == {"A": 2, "B": 1}
    unl = group_by_domain([PromptRecord("1", "s", "r", "a", "b")])
    assert list(unl) == [UNLABELED]


def test_natural_order():
    ids = ["10", "9", "a2", "a10", "100"]
    assert sorted(ids, key=natural_key) == ["9", "10", "100", "a2", "a10"]
    recs = [PromptRecord(i, "s", "r", "a", "b") for i in ids]
    assert [r.id for r in sort_by_id(recs)] == ["9", "10", "100", "a2", "a10"]


def test_ordered_map_preserves_order():
    assert ordered_map(lambda x: x * x, list(range(50)), n_jobs=8) == [x * x for x in range(50)]


def test_jsonl_round_trip(tmp_path, bank):
    p = write_records(tmp_path / "out.jsonl", bank)
    assert read_records(p) == bank


def test_read_records_reports_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"id": "1", "subject": "s", "relation": "r", "fact_attr": "a", "cofa_attr": "b"}\n{oops\n')
    with pytest.raises(SchemaError, match=":2:"):
        read_records(p)
    p.write_text('{"id": "1", "subject": "s"}\n')
    with pytest.raises(SchemaError, match="missing"):
        read_records(p)


def test_counterfact_style_rows(tmp_path):
    p = tmp_path / "cf.jsonl"
    row = {"case_id": 42, "requested_rewrite": {"prompt": "{} was developed by", "subject": "iPhone",
                                                 "target_true": {"str": "Apple"}, "target_new": {"str": "Google"}}}
    p.write_text(json.dumps(row) + "\n")
    (rec,) = read_records(p)
    assert (rec.id, rec.subject, rec.relation, rec.fact_attr, rec.cofa_attr) == \
        ("42", "iPhone", "was developed by", "Apple", "Google")
    row["requested_rewrite"]["prompt"] = "The developer of {} is"
    p.write_text(json.dumps(row) + "\n")
    with pytest.raises(SchemaError, match="subject slot"):
        read_records(p)


def test_gpt2_small_keeps_iphone(gpt2_model):
    kept, rej = filter_base_factual([IPHONE], gpt2_model)
    assert [r.id for r in kept] == ["1"]
    kept, rej = filter_full_binary(kept, gpt2_model)
    assert [r.id for r in kept] == ["1"]

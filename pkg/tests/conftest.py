import json
import os
from pathlib import Path

import numpy as np
import pytest

from compmech.dataset import read_records
from compmech.model_io import MODEL_DIR_ENV, ModelConfig, random_weights, write_model_dir
from compmech.runtime import Model
from compmech.tokenizer import load_tokenizer

FIXTURES = Path(__file__).parent / "fixtures"
VOCAB = FIXTURES / "gpt2" / "vocab.json"
MERGES = FIXTURES / "gpt2" / "merges.txt"

TINY = ModelConfig(n_layers=2, n_heads=4, d_model=32, d_head=8, d_mlp=128, vocab_size=50257, max_context=128)


@pytest.fixture(scope="session")
def tokenizer():
    return load_tokenizer(VOCAB, MERGES, expected_vocab_size=50257)


@pytest.fixture(scope="session")
def tiny_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_model")
    write_model_dir(root, TINY, random_weights(TINY, seed=7, scale=0.2), VOCAB, MERGES)
    return root


@pytest.fixture(scope="session")
def tiny_model(tiny_dir):
    return Model.from_dir(tiny_dir)


@pytest.fixture(scope="session")
def bank_path():
    return FIXTURES / "sample_bank.jsonl"


@pytest.fixture(scope="session")
def bank(bank_path):
    return read_records(bank_path)


@pytest.fixture(scope="session")
def gpt2_model():
    """The real GPT-2 small checkpoint, when one is available locally."""
    root = os.environ.get(MODEL_DIR_ENV)
    if not root or not (Path(root) / "model.safetensors").is_file():
        pytest.skip(f"GPT-2 small checkpoint not available (set ${MODEL_DIR_ENV})")
    return Model.from_dir(root)


def load_fixture(name):
    return json.loads((FIXTURES / name).read_text(encoding="utf-8"))


class StubModel:
    """Stands in for a model in filter tests: the prediction is a function of the prompt text."""

    def __init__(self, tokenizer, rule):
        self.tokenizer = tokenizer
        self.rule = rule

    def predict_top1(self, tokens, interventions=()):
        return self.rule(self.tokenizer.decode(tokens))


def rel_err(a, b):
    a, b = np.asarray(a, np.float64), np.asarray(b, np.float64)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), 1e-12))


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion and fail the test on FAIL."""
    def record(criterion, ok, detail):
        line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        if not ok:
            pytest.fail(line, pytrace=False)
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)

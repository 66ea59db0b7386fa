"""Freeze reference GPT-2 token ids for a text corpus using the HF `tokenizers` library.

Run once; the output is committed as tests/fixtures/tokenizer_reference.json.
"""

import json
import random
from pathlib import Path

from pydoc_data.topics import topics
from tokenizers import Tokenizer as HFTokenizer
from tokenizers.decoders import ByteLevel as ByteLevelDecoder
from tokenizers.models import BPE
from tokenizers.pre_tokenizers import ByteLevel

ROOT = Path(__file__).resolve().parents[1]
FIX = ROOT / "tests" / "fixtures"

EDGE_CASES = [
    "", " ", "  ", "\n", "\n\n", "\t", "a", " a", "a ", "  a  b  ",
    "iPhone is developed by",
    "Redefine: iPhone was developed by Google. iPhone was developed by",
    "Redefine: iPhone was developed by Google. What company developed iPhone? Answer:",
    " Apple", "Apple", " Cephalopoda", "Toyota Corolla is produced by",
    "I'm sure they'll say it's fine, we've done what you'd've done.",
    "DON'T SHOUT'S", "12345 678.90 1,000,000 3.14159", "e-mail: someone@example.com",
    "naïve café résumé", "Zürich München Köln", "東京は日本の首都です", "Москва — столица России",
    "emoji 🙂🚀 and flags 🇫🇷", "mixed\tspace\r\nline", "trailing spaces   ", "   leading spaces",
    "<|endoftext|>", "a b", "ﬁ ligature", "x" * 200, "the the the the the",
]


def main() -> None:
    hf = HFTokenizer(BPE.from_file(str(FIX / "gpt2" / "vocab.json"), str(FIX / "gpt2" / "merges.txt")))
    hf.pre_tokenizer = ByteLevel(add_prefix_space=False)
    hf.decoder = ByteLevelDecoder()

    rng = random.Random(1234)
    lines = []
    for key in sorted(topics):
        for line in topics[key].splitlines():
            line = line.rstrip()
            if 8 <= len(line) <= 300:
                lines.append(line)
    rng.shuffle(lines)
    corpus = EDGE_CASES + lines[:1100]
    entries = [{"text": s, "ids": hf.encode(s).ids} for s in corpus]
    (FIX / "tokenizer_reference.json").write_text(json.dumps({
        "oracle": "huggingface tokenizers ByteLevel BPE over the published GPT-2 vocab/merges",
        "entries": entries,
    }, ensure_ascii=False, indent=0))
    print(len(entries), "entries")


if __name__ == "__main__":
    main()

"""Byte-level BPE tokenizer compatible with the published GPT-2 vocab/merges files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import regex

from compmech.errors import TokenizerError

# GPT-2 pre-tokenization pattern (contractions, letters, numbers, punctuation, whitespace).
PRETOKENIZE_PATTERN = regex.compile(
    r"""'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"""
)


@lru_cache(maxsize=1)
def bytes_to_unicode() -> dict[int, str]:
    """Reversible byte -> printable unicode character table used by GPT-2."""
    printable = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("¡"), ord("¬") + 1))
        + list(range(ord("®"), ord("ÿ") + 1))
    )
    chars = printable[:]
    n = 0
    for b in range(256):
        if b not in printable:
            printable.append(b)
            chars.append(256 + n)
            n += 1
    return dict(zip(printable, map(chr, chars)))


@dataclass(frozen=True, eq=False)
class Tokenizer:
    vocabulary: dict[str, int]
    merge_ranks: dict[tuple[str, str], int]
    byte_encoder: dict[int, str] = field(default_factory=bytes_to_unicode)

    def __post_init__(self) -> None:
        object.__setattr__(self, "_id_to_token", {i: t for t, i in self.vocabulary.items()})
        object.__setattr__(self, "_byte_decoder", {c: b for b, c in self.byte_encoder.items()})
        object.__setattr__(self, "_cache", {})

    @property
    def vocab_size(self) -> int:
        return len(self.vocabulary)

    def _bpe(self, word: str) -> list[str]:
        cached = self._cache.get(word)
        if cached is not None:
            return cached
        parts = list(word)
        while len(parts) > 1:
            best_rank, best_i = None, -1
            for i in range(len(parts) - 1):
                rank = self.merge_ranks.get((parts[i], parts[i + 1]))
                if rank is not None and (best_rank is None or rank < best_rank):
                    best_rank, best_i = rank, i
            if best_rank is None:
                break
            first, second = parts[best_i], parts[best_i + 1]
            merged: list[str] = []
            i = 0
            # merge every occurrence of the winning pair in one left-to-right sweep
            while i < len(parts):
                if i < len(parts) - 1 and parts[i] == first and parts[i + 1] == second:
                    merged.append(first + second)
                    i += 2
                else:
                    merged.append(parts[i])
                    i += 1
            parts = merged
        self._cache[word] = parts
        return parts

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for piece in PRETOKENIZE_PATTERN.findall(text):
            mapped = "".join(self.byte_encoder[b] for b in piece.encode("utf-8"))
            for token in self._bpe(mapped):
                try:
                    ids.append(self.vocabulary[token])
                except KeyError:
                    raise TokenizerError(f"BPE produced token {token!r} missing from vocabulary") from None
        return ids

    def token_bytes(self, token_id: int) -> bytes:
        try:
            token = self._id_to_token[int(token_id)]
        except KeyError:
            raise TokenizerError(
                f"token id {token_id} out of range for vocabulary of size {self.vocab_size}"
            ) from None
        return bytes(self._byte_decoder[c] for c in token)

    def decode(self, ids: Sequence[int]) -> str:
        return b"".join(self.token_bytes(i) for i in ids).decode("utf-8", errors="replace")

    def byte_offsets(self, ids: Sequence[int]) -> list[tuple[int, int]]:
        """Half-open byte interval of every token in the UTF-8 encoding of the decoded text."""
        offsets = []
        pos = 0
        for i in ids:
            n = len(self.token_bytes(i))
            offsets.append((pos, pos + n))
            pos += n
        return offsets

    def align_span(
        self, text: str, char_range: tuple[int, int], ids: Sequence[int] | None = None
    ) -> tuple[int, int]:
        """Return the minimal half-open token interval covering ``text[start:end]``.

        Alignment works on byte offsets, so tokens that straddle a multi-byte
        character or a word boundary are still covered rather than rejected.
        """
        start, end = char_range
        if not (0 <= start < end <= len(text)):
            raise TokenizerError(f"character range {char_range} outside text of length {len(text)}")
        if ids is None:
            ids = self.encode(text)
        byte_start = len(text[:start].encode("utf-8"))
        byte_end = len(text[:end].encode("utf-8"))
        first = last = None
        for idx, (lo, hi) in enumerate(self.byte_offsets(ids)):
            if hi > byte_start and lo < byte_end:
                if first is None:
                    first = idx
                last = idx
        if first is None:
            raise TokenizerError(f"no token covers character range {char_range}")
        return first, last + 1


def load_tokenizer(
    vocab_path: str | Path, merges_path: str | Path, expected_vocab_size: int | None = None
) -> Tokenizer:
    """Read a GPT-2 style ``vocab.json`` (token -> id) and ``merges.txt``."""
    vocab_path, merges_path = Path(vocab_path), Path(merges_path)
    with open(vocab_path, encoding="utf-8") as fh:
        vocabulary = json.load(fh)
    if not isinstance(vocabulary, dict):
        raise TokenizerError(f"{vocab_path}: expected a JSON object mapping token -> id")

    merge_ranks: dict[tuple[str, str], int] = {}
    with open(merges_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line or (lineno == 1 and line.startswith("#version")):
                continue
            pair = line.split(" ")
            if len(pair) != 2 or not all(pair):
                raise TokenizerError(f"{merges_path}:{lineno}: malformed merge line {line!r}")
            merge_ranks[(pair[0], pair[1])] = len(merge_ranks)
    if not merge_ranks:
        raise TokenizerError(f"{merges_path}: no merge rules found")

    if expected_vocab_size is not None and len(vocabulary) != expected_vocab_size:
        raise TokenizerError(
            f"vocabulary has {len(vocabulary)} entries but the model expects {expected_vocab_size}"
        )
    return Tokenizer(vocabulary=vocabulary, merge_ranks=merge_ranks)

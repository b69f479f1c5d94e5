"""Token counting and ids for prompt encoding.

Two interchangeable tokenizers: a byte-pair tokenizer loaded from standard
vocabulary/merges files, and a byte-level fallback whose counts are an
upper bound on any byte-level BPE count (every merge only shrinks the
sequence). The fallback flags itself as approximate so logs can say so.
"""
from __future__ import annotations

import json
import logging
import re
from functools import lru_cache
from typing import Optional

from .errors import TokenizerUnavailable

log = logging.getLogger(__name__)

EOT_TOKEN = "<|endoftext|>"

# ASCII approximation of the usual byte-level BPE pre-splitter
_PRETOKEN_PATTERN = re.compile(
    r"'(?:[sdmt]|ll|ve|re)| ?[A-Za-z]+| ?[0-9]+| ?[^\sA-Za-z0-9]+|\s+(?!\S)|\s+"
)


@lru_cache(maxsize=1)
def _bytes_to_unicode() -> dict[int, str]:
    """Map every byte to a printable unicode character (the standard
    reversible table used by byte-level BPE vocabularies)."""
    printable = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("\xa1"), ord("\xac") + 1))
        + list(range(ord("\xae"), ord("\xff") + 1))
    )
    mapping = {}
    extra = 0
    for b in range(256):
        if b in printable:
            mapping[b] = chr(b)
        else:
            mapping[b] = chr(256 + extra)
            extra += 1
    return mapping


class ByteTokenizer:
    """Fallback tokenizer: one token per UTF-8 byte, plus an EOS id."""

    name = "byte-fallback"
    approximate = True

    def __init__(self):
        self.eos_id = 256
        self.vocab_size = 257

    def encode(self, text: str) -> list[int]:
        return list(text.encode("utf-8"))


class BpeTokenizer:
    """Byte-level BPE over vocabulary JSON + merges text files."""

    name = "bpe"
    approximate = False

    def __init__(self, vocab: dict[str, int], merges: list[tuple[str, str]]):
        self.vocab = vocab
        self.ranks = {pair: rank for rank, pair in enumerate(merges)}
        byte_map = _bytes_to_unicode()
        missing = [b for b in range(256) if byte_map[b] not in vocab]
        if missing:
            raise TokenizerUnavailable(
                f"vocabulary lacks {len(missing)} base byte tokens (first: {missing[:5]})"
            )
        self._byte_encoder = byte_map
        if EOT_TOKEN in vocab:
            self.eos_id = vocab[EOT_TOKEN]
            self.vocab_size = max(vocab.values()) + 1
        else:
            self.eos_id = max(vocab.values()) + 1
            self.vocab_size = self.eos_id + 1
        self._cache: dict[str, tuple[str, ...]] = {}

    @classmethod
    def from_files(cls, vocab_path: str, merges_path: str) -> "BpeTokenizer":
        try:
            with open(vocab_path, "r", encoding="utf-8") as fh:
                vocab = json.load(fh)
            merges: list[tuple[str, str]] = []
            with open(merges_path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.rstrip("\n")
                    if not line or line.startswith("#"):
                        continue
                    left, right = line.split(" ")
                    merges.append((left, right))
        except (OSError, ValueError, json.JSONDecodeError) as exc:
            raise TokenizerUnavailable(f"cannot load tokenizer files: {exc}") from exc
        return cls(vocab, merges)

    def _bpe(self, unit: str) -> tuple[str, ...]:
        if unit in self._cache:
            return self._cache[unit]
        word = tuple(unit)
        while len(word) > 1:
            pairs = {(word[i], word[i + 1]) for i in range(len(word) - 1)}
            best = min(pairs, key=lambda p: self.ranks.get(p, float("inf")))
            if best not in self.ranks:
                break
            merged: list[str] = []
            i = 0
            while i < len(word):
                if i < len(word) - 1 and (word[i], word[i + 1]) == best:
                    merged.append(word[i] + word[i + 1])
                    i += 2
                else:
                    merged.append(word[i])
                    i += 1
            word = tuple(merged)
        self._cache[unit] = word
        return word

    def encode(self, text: str) -> list[int]:
        ids: list[int] = []
        for pretoken in _PRETOKEN_PATTERN.findall(text):
            mapped = "".join(self._byte_encoder[b] for b in pretoken.encode("utf-8"))
            for symbol in self._bpe(mapped):
                try:
                    ids.append(self.vocab[symbol])
                except KeyError:
                    # unmergeable symbols decompose into base byte tokens
                    ids.extend(self.vocab[ch] for ch in symbol)
        return ids


def load_tokenizer(
    vocab_path: Optional[str] = None,
    merges_path: Optional[str] = None,
    allow_fallback: bool = True,
):
    """Load a BPE tokenizer when files are configured, else the byte fallback."""
    if vocab_path and merges_path:
        return BpeTokenizer.from_files(vocab_path, merges_path)
    if not allow_fallback:
        raise TokenizerUnavailable("no tokenizer files configured and fallback disallowed")
    log.info("using byte-level fallback tokenizer; token counts are approximate upper bounds")
    return ByteTokenizer()

"""Tokenization, vocabulary, and the plain-text corpus format.

Corpus files are line oriented and diff friendly: one tokenized sentence per
line (tokens separated by single spaces), a blank line closes the current
text, and two directive lines set metadata::

    #genre: fairy
    #text: story-01
    the dog ran .
    the cat sat .

    #text: story-02
    ...

A ``#genre:`` directive applies to every following text until changed.
Sentences appearing before any ``#text:`` directive open an auto-numbered
text.
"""

from __future__ import annotations

import hashlib
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .validation import DataInvariantError, check_count

UNK, BOS, EOS = "<unk>", "<bos>", "<eos>"
RESERVED_TOKENS = (UNK, BOS, EOS)
UNK_ID, BOS_ID, EOS_ID = 0, 1, 2

_SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])\s+(?=[A-Z])")
_TOKEN = re.compile(r"\w+(?:'\w+)*|[^\w\s]")


def tokenize(raw: str) -> list[list[str]]:
    """Split raw UTF-8 text into sentences of lowercase tokens.

    Rules, applied in order: sentence boundaries fall after '.', '!' or '?'
    followed by whitespace and a capitalized character; text is lowercased;
    punctuation marks become their own tokens; words keep internal
    apostrophes. Deterministic, and idempotent on its own output rejoined
    with single spaces. Empty input yields an empty list.
    """
    sentences = []
    for chunk in _SENTENCE_BOUNDARY.split(raw):
        tokens = _TOKEN.findall(chunk.lower())
        if tokens:
            sentences.append(tokens)
    return sentences


@dataclass
class Text:
    """An ordered sequence of sentences with an id and optional genre label."""

    text_id: str
    sentences: list[list[str]]
    genre: str | None = None

    def __post_init__(self):
        if not self.sentences:
            raise DataInvariantError(f"text {self.text_id!r} has no sentences")

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


def as_texts(data, genre: str | None = None) -> list[Text]:
    """Coerce raw nested token lists (or Text objects) into a list of Text."""
    texts = []
    for i, item in enumerate(data):
        if isinstance(item, Text):
            texts.append(item)
        else:
            texts.append(Text(text_id=f"text{i:04d}", sentences=[list(s) for s in item], genre=genre))
    return texts


class Vocabulary:
    """Token/id bijection with reserved unknown, begin and end markers.

    Ids 0..2 are pinned to the reserved tokens; remaining ids are assigned
    by descending corpus frequency, ties broken lexically, so two builds of
    the same corpus agree exactly.
    """

    def __init__(self, tokens: Sequence[str], min_count: int = 1):
        tokens = list(tokens)
        if tokens[: len(RESERVED_TOKENS)] != list(RESERVED_TOKENS):
            raise DataInvariantError(f"vocabulary must start with the reserved tokens {RESERVED_TOKENS}")
        if len(set(tokens)) != len(tokens):
            raise DataInvariantError("vocabulary contains duplicate tokens")
        self.tokens = tokens
        self.min_count = min_count
        self._index = {tok: i for i, tok in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id_of(self, token: str) -> int:
        return self._index.get(token, UNK_ID)

    def token_of(self, token_id: int) -> str:
        return self.tokens[token_id]

    def encode(self, words: Iterable[str]) -> list[int]:
        index = self._index
        return [index.get(w, UNK_ID) for w in words]

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tokens[i] for i in ids]

    def fingerprint(self) -> bytes:
        """32-byte SHA-256 digest of the vocabulary contents, id order."""
        h = hashlib.sha256()
        h.update(f"min_count={self.min_count}\n".encode())
        for tok in self.tokens:
            h.update(tok.encode())
            h.update(b"\n")
        return h.digest()

    def save(self, path) -> None:
        lines = [f"#min_count: {self.min_count}"] + self.tokens
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        if not lines or not lines[0].startswith("#min_count:"):
            raise DataInvariantError(f"{path}: not a vocabulary file (missing #min_count header)")
        min_count = int(lines[0].split(":", 1)[1].strip())
        return cls(lines[1:], min_count=min_count)


def build_vocab(texts: Sequence[Text] | Sequence[Sequence[Sequence[str]]], min_count: int = 1) -> Vocabulary:
    """Count tokens over a corpus and keep those seen at least `min_count` times."""
    check_count("min_count", min_count, minimum=1)
    counts: Counter[str] = Counter()
    for text in as_texts(texts):
        for sentence in text.sentences:
            counts.update(sentence)
    if not counts:
        raise DataInvariantError("cannot build a vocabulary from an empty corpus")
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count and tok not in RESERVED_TOKENS),
        key=lambda tok: (-counts[tok], tok),
    )
    return Vocabulary(list(RESERVED_TOKENS) + kept, min_count=min_count)


# ---------------------------------------------------------------------------
# Corpus file format
# ---------------------------------------------------------------------------


def read_corpus(path) -> list[Text]:
    texts: list[Text] = []
    genre: str | None = None
    current_id: str | None = None
    current: list[list[str]] = []
    auto = 0

    def close():
        nonlocal current, current_id
        if current:
            texts.append(Text(text_id=current_id, sentences=current, genre=genre))
        current, current_id = [], None

    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            close()
        elif line.startswith("#genre:"):
            close()
            genre = line.split(":", 1)[1].strip()
        elif line.startswith("#text:"):
            close()
            current_id = line.split(":", 1)[1].strip()
        elif line.startswith("#"):
            raise DataInvariantError(f"{path}:{lineno}: unknown directive {line.split(':')[0]!r}")
        else:
            if current_id is None:
                current_id = f"text{auto:04d}"
                auto += 1
            current.append(line.split())
    close()
    if not texts:
        raise DataInvariantError(f"{path}: corpus file contains no sentences")
    return texts


def write_corpus(texts: Sequence[Text], path) -> None:
    lines: list[str] = []
    last_genre: str | None = None
    for text in texts:
        if text.genre != last_genre and text.genre is not None:
            lines.append(f"#genre: {text.genre}")
            last_genre = text.genre
        lines.append(f"#text: {text.text_id}")
        lines.extend(" ".join(s) for s in text.sentences)
        lines.append("")
    Path(path).write_text("\n".join(lines), encoding="utf-8")


def group_by_genre(texts: Sequence[Text]) -> dict[str, list[Text]]:
    groups: dict[str, list[Text]] = {}
    for t in texts:
        groups.setdefault(t.genre or "default", []).append(t)
    return groups


@dataclass
class EncodedText:
    """A Text bound to a vocabulary: sentences as id lists plus unk flags."""

    text_id: str
    genre: str | None
    sentences: list[list[int]]
    tokens: list[list[str]] = field(repr=False, default_factory=list)

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


def encode_text(text: Text, vocab: Vocabulary) -> EncodedText:
    return EncodedText(
        text_id=text.text_id,
        genre=text.genre,
        sentences=[vocab.encode(s) for s in text.sentences],
        tokens=[list(s) for s in text.sentences],
    )

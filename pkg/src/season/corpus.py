"""Corpus ingestion, sentence splitting, vocabulary and document encoding."""

from __future__ import annotations

import json
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DuplicateId, EmptyDocument, ParseError

PAD, BOS, EOS, UNK, SENT = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("<pad>", "<s>", "</s>", "<unk>", "<sent>")

TERMINATORS = frozenset(".!?")
CLOSERS = frozenset("\"'”’)]}")

_TOKEN_RE = re.compile(r"<unk>|\w+|[^\w\s]")
_BOUNDARY_RE = re.compile(r"[.!?]+[\"'”’)\]}]*(?=\s|$)")


@dataclass
class RawDocument:
    id: str
    article: str
    summary: str = ""
    salience_scores: list[float] | None = None
    degrees: list[int] | None = None

    def to_json(self) -> dict:
        out = {"id": self.id, "article": self.article, "summary": self.summary}
        if self.salience_scores is not None:
            out["salience_scores"] = list(self.salience_scores)
        if self.degrees is not None:
            out["degrees"] = list(self.degrees)
        return out


@dataclass
class SentenceSplit:
    sentences: list[str]
    char_spans: list[tuple[int, int]]


@dataclass
class EncodedDocument:
    input_ids: list[int]
    sent_index: list[int]
    marker_positions: list[int]
    target_ids: list[int]
    n_sentences: int
    id: str = ""


def tokenize(text: str) -> list[str]:
    """Lowercased word and punctuation tokens."""
    return _TOKEN_RE.findall(text.lower())


def split_sentences(text: str) -> SentenceSplit:
    """Split on terminator runs followed by whitespace or end of text.

    Closing quotes and brackets right after the terminator stay with the
    sentence they close.

    >>> split_sentences('He said "Go." Then left.').sentences
    ['He said "Go."', 'Then left.']
    """
    if not text or not text.strip():
        raise EmptyDocument("text is empty")
    sentences, spans = [], []
    start = 0
    for m in _BOUNDARY_RE.finditer(text):
        _append_span(text, start, m.end(), sentences, spans)
        start = m.end()
    _append_span(text, start, len(text), sentences, spans)
    return SentenceSplit(sentences, spans)


def _append_span(text, start, end, sentences, spans):
    chunk = text[start:end]
    stripped = chunk.strip()
    if not stripped:
        return
    lead = len(chunk) - len(chunk.lstrip())
    s = start + lead
    sentences.append(stripped)
    spans.append((s, s + len(stripped)))


@dataclass
class Vocabulary:
    tokens: list[str]
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[: len(SPECIAL_TOKENS)]) != SPECIAL_TOKENS:
            raise ValueError("special tokens must occupy indices 0..4")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ValueError("duplicate tokens in vocabulary")

    special = {"pad": PAD, "bos": BOS, "eos": EOS, "unk": UNK, "sent": SENT}

    def __len__(self):
        return len(self.tokens)

    def id(self, token: str) -> int:
        return self.index.get(token, UNK)

    def ids(self, tokens) -> list[int]:
        get = self.index.get
        return [get(t, UNK) for t in tokens]

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)


def build_vocab(corpus: list[RawDocument], max_size: int) -> Vocabulary:
    """Frequency-ranked vocabulary over articles and summaries.

    Ties are broken lexicographically; ``max_size`` counts the special tokens.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    if max_size < len(SPECIAL_TOKENS) + 1:
        raise ValueError(f"max_size must be >= {len(SPECIAL_TOKENS) + 1}")
    counts = Counter()
    for doc in corpus:
        counts.update(tokenize(doc.article))
        counts.update(tokenize(doc.summary))
    for special in SPECIAL_TOKENS:
        counts.pop(special, None)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    words = [w for w, _ in ranked[: max_size - len(SPECIAL_TOKENS)]]
    return Vocabulary(list(SPECIAL_TOKENS) + words)


def sentence_tokens(article: str) -> list[list[str]]:
    """Token lists per sentence, dropping sentences with no tokens."""
    out = []
    for sent in split_sentences(article).sentences:
        toks = tokenize(sent)
        if toks:
            out.append(toks)
    return out


def encode_document(doc: RawDocument, vocab: Vocabulary, max_src: int = 512,
                    max_tgt: int = 128) -> EncodedDocument:
    if max_src < 2:
        raise ValueError("max_src must be >= 2")
    if max_tgt < 2:
        raise ValueError("max_tgt must be >= 2")
    if not doc.article or not doc.article.strip():
        raise EmptyDocument(f"document {doc.id!r} has an empty article")
    sents = sentence_tokens(doc.article)
    if not sents:
        raise EmptyDocument(f"document {doc.id!r} yields no tokens")

    input_ids, sent_index, markers = [], [], []
    for j, toks in enumerate(sents, start=1):
        if len(input_ids) + 2 > max_src:
            # room for the marker but not its first token: drop the sentence
            break
        markers.append(len(input_ids))
        ids = [SENT] + vocab.ids(toks)
        ids = ids[: max_src - len(input_ids)]
        input_ids.extend(ids)
        sent_index.extend([j] * len(ids))

    target = vocab.ids(tokenize(doc.summary))[: max_tgt - 2]
    return EncodedDocument(
        input_ids=input_ids,
        sent_index=sent_index,
        marker_positions=markers,
        target_ids=[BOS] + target + [EOS],
        n_sentences=len(markers),
        id=doc.id,
    )


def decode_tokens(ids, vocab: Vocabulary) -> list[str]:
    """Map ids back to token strings, dropping PAD/BOS/EOS/SENT."""
    skip = (PAD, BOS, EOS, SENT)
    return [vocab.tokens[i] for i in ids if i not in skip]


def detokenize(tokens: list[str]) -> str:
    """Join tokens so that re-splitting and re-tokenizing reproduces them.

    Terminators inside a sentence are glued to what follows so they do not
    create a new sentence boundary.
    """
    parts = []
    glue = False
    for i, tok in enumerate(tokens):
        if parts and not glue:
            parts.append(" ")
        parts.append(tok)
        if tok in TERMINATORS:
            glue = i + 1 < len(tokens)
        elif glue and tok in CLOSERS:
            glue = i + 1 < len(tokens)
        else:
            glue = False
    return "".join(parts)


def decode_article(encoded: EncodedDocument, vocab: Vocabulary) -> str:
    """Reconstruct article text sentence by sentence from ``input_ids``."""
    sentences = []
    bounds = list(encoded.marker_positions) + [len(encoded.input_ids)]
    for a, b in zip(bounds, bounds[1:]):
        sentences.append(detokenize(decode_tokens(encoded.input_ids[a:b], vocab)))
    return " ".join(sentences)


def load_corpus(path) -> list[RawDocument]:
    """Read a JSON-lines corpus, keeping file order."""
    docs, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON ({exc.msg})", line=lineno) from None
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", line=lineno)
            for key in ("id", "article"):
                if not isinstance(obj.get(key), str):
                    raise ParseError(f"missing or non-string field {key!r}", line=lineno)
            summary = obj.get("summary", "")
            if not isinstance(summary, str):
                raise ParseError("field 'summary' must be a string", line=lineno)
            if not obj["article"].strip():
                raise ParseError("empty article", line=lineno)
            if obj["id"] in seen:
                raise DuplicateId(f"duplicate id {obj['id']!r} on line {lineno}")
            seen.add(obj["id"])
            docs.append(RawDocument(
                id=obj["id"], article=obj["article"], summary=summary,
                salience_scores=obj.get("salience_scores"),
                degrees=obj.get("degrees"),
            ))
    if not docs:
        raise ParseError("corpus file contains no documents", line=0)
    return docs


def save_corpus(docs: list[RawDocument], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_json(), ensure_ascii=False) + "\n")

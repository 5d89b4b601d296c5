"""Issue text to token sequence: the five-stage cleaning pipeline.

Stages, in order: title+body composition, markup stripping (void elements
and code blocks become special ``[NAME]`` tokens), Unicode NFC
normalization, boundary punctuation removal, whitespace tokenization,
then optional stopword removal and stemming.

Every operation here is a pure function; documents can be processed in
parallel with no shared state.
"""
from __future__ import annotations

import hashlib
import json
import re
import unicodedata
from dataclasses import dataclass, field
from html.parser import HTMLParser
from importlib import resources
from typing import FrozenSet, List, Optional, Sequence, Tuple

from .errors import EmptyDocument
from .records import IssueRecord

SPECIAL_TOKEN = re.compile(r"^\[[A-Z]+\]$")
CODE_TOKEN = "[CODE]"

# HTML void elements, translated to special tokens.
VOID_ELEMENTS = frozenset({
    "area", "base", "br", "col", "embed", "hr", "img", "input", "link",
    "meta", "param", "source", "track", "wbr",
})

_FENCED_BLOCK = re.compile(r"```.*?```|~~~.*?~~~", re.DOTALL)
_INLINE_CODE = re.compile(r"`([^`\n]*)`")


def _load_default_stopwords() -> FrozenSet[str]:
    text = resources.files("issue_surprisal").joinpath("data/stopwords.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


@dataclass(frozen=True)
class PreprocessConfig:
    remove_stopwords: bool = True
    apply_stemming: bool = True
    lowercase: bool = True
    stopword_list: FrozenSet[str] = field(default_factory=_load_default_stopwords)

    def __post_init__(self):
        object.__setattr__(self, "stopword_list", frozenset(self.stopword_list))

    def fingerprint(self) -> str:
        payload = json.dumps({
            "remove_stopwords": self.remove_stopwords,
            "apply_stemming": self.apply_stemming,
            "lowercase": self.lowercase,
            "stopword_list": sorted(self.stopword_list),
        }, sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class TokenSequence:
    tokens: Tuple[str, ...]
    source: Tuple[str, int]
    config_fingerprint: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        for tok in self.tokens:
            if not tok or any(c.isspace() for c in tok):
                raise ValueError(f"invalid token {tok!r}")

    def __len__(self) -> int:
        return len(self.tokens)


def compose_document(title: str, body: str) -> str:
    """Title prepended to the body, separated by a token boundary."""
    parts = [p for p in (title, body) if p]
    return " ".join(parts)


class _Extractor(HTMLParser):
    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.out: List[str] = []
        self._pre_depth = 0
        self._code_buffer: Optional[List[str]] = None

    def handle_starttag(self, tag, attrs):
        if tag == "pre":
            if self._pre_depth == 0:
                self.out.append(f" {CODE_TOKEN} ")
            self._pre_depth += 1
        elif tag == "code" and self._pre_depth == 0:
            self._code_buffer = []
        elif tag in VOID_ELEMENTS and self._pre_depth == 0:
            self.out.append(f" [{tag.upper()}] ")

    def handle_startendtag(self, tag, attrs):
        self.handle_starttag(tag, attrs)

    def handle_endtag(self, tag):
        if tag == "pre":
            self._pre_depth = max(0, self._pre_depth - 1)
        elif tag == "code" and self._code_buffer is not None:
            content = "".join(self._code_buffer)
            # Multi-line <code> renders as a block; inline spans stay verbatim.
            self.out.append(f" {CODE_TOKEN} " if "\n" in content.strip() else content)
            self._code_buffer = None

    def handle_data(self, data):
        if self._pre_depth > 0:
            return
        if self._code_buffer is not None:
            self._code_buffer.append(data)
        else:
            self.out.append(data)

    def flush(self) -> str:
        if self._code_buffer is not None:
            self.out.append("".join(self._code_buffer))
            self._code_buffer = None
        return "".join(self.out)


def strip_html(text: str) -> str:
    """Replace markup with text: void elements and code blocks become
    special tokens, other elements are unwrapped to their contents.

    Malformed markup degrades to literal text; this never raises.
    """
    text = _FENCED_BLOCK.sub(f" {CODE_TOKEN} ", text)
    text = _INLINE_CODE.sub(r" \1 ", text)
    parser = _Extractor()
    try:
        parser.feed(text)
        parser.close()
    except Exception:
        pass
    cleaned = parser.flush()
    # Any angle bracket that survived was not parseable markup.
    return cleaned.replace("<", " ").replace(">", " ")


def normalize_unicode(text: str) -> str:
    return unicodedata.normalize("NFC", text)


def _strip_boundary_symbols(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start])[0] in "PS":
        start += 1
    while end > start and unicodedata.category(token[end - 1])[0] in "PS":
        end -= 1
    return token[start:end]


def strip_punctuation(text: str) -> str:
    """Remove punctuation and symbols at word boundaries and when isolated.

    Intra-word punctuation ("foo_bar", "my.var") survives: such
    identifier-shaped words carry contextual information across issues.
    """
    out = []
    for token in text.split():
        if SPECIAL_TOKEN.match(token):
            out.append(token)
            continue
        stripped = _strip_boundary_symbols(token)
        if stripped:
            out.append(stripped)
    return " ".join(out)


def tokenize(text: str) -> List[str]:
    return text.split()


def filter_and_stem(tokens: Sequence[str], config: PreprocessConfig) -> List[str]:
    """Apply the configured stopword and stemming passes.

    Special ``[NAME]`` tokens are never lowercased, dropped, or stemmed.
    """
    from . import porter

    out = []
    for token in tokens:
        if SPECIAL_TOKEN.match(token):
            out.append(token)
            continue
        word = token.lower() if config.lowercase else token
        if config.remove_stopwords and word.lower() in config.stopword_list:
            continue
        if config.apply_stemming:
            word = porter.stem(word)
        if word:
            out.append(word)
    return out


def preprocess(issue: IssueRecord, config: Optional[PreprocessConfig] = None) -> TokenSequence:
    """Full pipeline for one issue. Raises EmptyDocument when nothing survives."""
    config = config or PreprocessConfig()
    text = compose_document(issue.title, issue.body)
    text = strip_html(text)
    text = normalize_unicode(text)
    text = strip_punctuation(text)
    tokens = filter_and_stem(tokenize(text), config)
    if not tokens:
        raise EmptyDocument(f"no tokens remain for {issue.repo}#{issue.number}")
    return TokenSequence(tokens=tuple(tokens), source=(issue.repo, issue.number),
                         config_fingerprint=config.fingerprint())


def preprocess_corpus(issues: Sequence[IssueRecord],
                      config: Optional[PreprocessConfig] = None) -> List[TokenSequence]:
    """Preprocess every issue, silently skipping empty documents."""
    config = config or PreprocessConfig()
    corpus = []
    for issue in issues:
        try:
            corpus.append(preprocess(issue, config))
        except EmptyDocument:
            continue
    return corpus

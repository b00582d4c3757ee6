"""Main-content extraction for mainframe documentation pages.

Built on the stdlib HTML parser so it recovers from the unclosed tags
that real documentation pages are full of.  Extraction walks the tag
tree keeping a skip marker: subtrees rooted at script/style, at any
configured strip tag, or at elements whose id/class contains a strip
identifier contribute no text.  Surviving text is grouped into blocks
at block-level tag boundaries (and at blank lines inside text runs, so
extraction is idempotent on its own output) and joined with single
blank lines.

If the parser itself blows up on catastrophically malformed input the
result degrades to a text-only fallback: tags stripped by regex,
entities decoded, whitespace collapsed.  The extractor never raises.
"""

from __future__ import annotations

import html as html_mod
import re
from dataclasses import dataclass
from html.parser import HTMLParser

from .ingest import Document
from .textutil import content_id, normalize_ws, tokenize

DEFAULT_STRIP_TAGS = frozenset(
    {"script", "style", "nav", "header", "footer", "aside", "form"}
)
DEFAULT_STRIP_IDS_OR_CLASSES = frozenset(
    {"nav", "menu", "sidebar", "footer", "banner", "cookie", "advert"}
)
DEFAULT_MIN_DOC_TOKENS = 64

# Always removed, independent of the configured strip set.
_ALWAYS_STRIP = frozenset({"script", "style"})

# Tags that end one text block and start another.
_BLOCK_TAGS = frozenset(
    {
        "p",
        "div",
        "section",
        "article",
        "main",
        "h1",
        "h2",
        "h3",
        "h4",
        "h5",
        "h6",
        "li",
        "ul",
        "ol",
        "table",
        "tr",
        "td",
        "th",
        "pre",
        "blockquote",
        "br",
        "hr",
        "title",
        "body",
        "nav",
        "header",
        "footer",
        "aside",
        "form",
    }
)

# Elements that never contain content and are not pushed on the stack.
_VOID_TAGS = frozenset(
    {"br", "hr", "img", "input", "meta", "link", "area", "base", "col", "embed",
     "source", "track", "wbr"}
)

_BLANK_LINE_RE = re.compile(r"\n\s*\n")
_TAG_RE = re.compile(r"<[^>]*>")


@dataclass(frozen=True)
class ExtractionRules:
    """What to cut: tags, id/class substrings, line keywords, size floor."""

    strip_tags: frozenset[str] = DEFAULT_STRIP_TAGS
    strip_ids_or_classes: frozenset[str] = DEFAULT_STRIP_IDS_OR_CLASSES
    strip_keywords: frozenset[str] = frozenset()
    min_doc_tokens: int = DEFAULT_MIN_DOC_TOKENS

    def __post_init__(self) -> None:
        if self.min_doc_tokens < 0:
            raise ValueError("min_doc_tokens must be >= 0")

    @staticmethod
    def from_dict(raw: dict) -> "ExtractionRules":
        kwargs = dict(raw)
        for key in ("strip_tags", "strip_ids_or_classes", "strip_keywords"):
            if key in kwargs:
                kwargs[key] = frozenset(str(v).lower() for v in kwargs[key])
        return ExtractionRules(**kwargs)


class _ContentParser(HTMLParser):
    def __init__(self, rules: ExtractionRules):
        super().__init__(convert_charrefs=True)
        self.strip_tags = _ALWAYS_STRIP | {t.lower() for t in rules.strip_tags}
        self.strip_markers = {m.lower() for m in rules.strip_ids_or_classes}
        self.stack: list[str] = []
        self.skip_from: int | None = None
        self.blocks: list[str] = []
        self.current: list[str] = []

    def _flush(self) -> None:
        text = normalize_ws("".join(self.current))
        self.current = []
        if text:
            self.blocks.append(text)

    def _marks_stripped(self, attrs) -> bool:
        for key, value in attrs:
            if key not in ("id", "class") or not value:
                continue
            lowered = value.lower()
            if any(marker in lowered for marker in self.strip_markers):
                return True
        return False

    def handle_starttag(self, tag, attrs):
        tag = tag.lower()
        if tag in _BLOCK_TAGS:
            self._flush()
        if tag in _VOID_TAGS:
            return
        self.stack.append(tag)
        if self.skip_from is None and (
            tag in self.strip_tags or self._marks_stripped(attrs)
        ):
            self.skip_from = len(self.stack) - 1

    def handle_startendtag(self, tag, attrs):
        if tag.lower() in _BLOCK_TAGS:
            self._flush()

    def handle_endtag(self, tag):
        tag = tag.lower()
        if tag in _BLOCK_TAGS:
            self._flush()
        if tag in _VOID_TAGS:
            return
        # Tolerant recovery: close the nearest matching open tag, or
        # ignore a stray end tag entirely.
        if tag not in self.stack:
            return
        while self.stack:
            depth = len(self.stack) - 1
            popped = self.stack.pop()
            if self.skip_from is not None and depth <= self.skip_from:
                self.skip_from = None
            if popped == tag:
                break

    def handle_data(self, data):
        if self.skip_from is not None:
            return
        # Blank lines inside a text run separate blocks, which keeps
        # re-extraction of our own output block-stable.
        parts = _BLANK_LINE_RE.split(data)
        for i, part in enumerate(parts):
            if i > 0:
                self._flush()
            self.current.append(part)

    def result(self) -> str:
        self._flush()
        return "\n\n".join(self.blocks)


def _text_fallback(markup: str) -> str:
    """Degraded extraction: drop tags, decode entities, collapse runs."""
    return normalize_ws(html_mod.unescape(_TAG_RE.sub(" ", markup)))


def extract_main_content(markup: str, rules: ExtractionRules | None = None) -> str:
    """Pull block-separated main text out of tolerably-formed markup."""
    rules = rules or ExtractionRules()
    parser = _ContentParser(rules)
    try:
        parser.feed(markup)
        parser.close()
        return parser.result()
    except Exception:
        return _text_fallback(markup)


def clean_document(
    text: str,
    rules: ExtractionRules | None = None,
    *,
    path_or_url: str = "",
    origin: str = "web_page",
) -> Document:
    """Strip keyword-bearing lines and apply the token floor.

    Returns a Document either kept or dropped(too_short); the id hashes
    the cleaned text so re-cleaning is stable.
    """
    rules = rules or ExtractionRules()
    keywords = [kw.lower() for kw in rules.strip_keywords]
    lines = []
    for line in text.splitlines():
        lowered = line.lower()
        if any(kw in lowered for kw in keywords):
            continue
        line = normalize_ws(line)
        if line:
            lines.append(line)
    cleaned = "\n".join(lines)
    n_tokens = len(tokenize(cleaned))
    doc = Document(
        id=content_id(cleaned),
        origin=origin,
        path_or_url=path_or_url,
        kind="mainframe_doc",
        content=cleaned,
        loc=len(lines),
        approx_tokens=n_tokens,
        filter_status="kept",
    )
    if n_tokens < rules.min_doc_tokens:
        doc.filter_status = "dropped"
        doc.drop_reason = "too_short"
    return doc


def extract_document(
    markup: str,
    rules: ExtractionRules | None = None,
    *,
    path_or_url: str = "",
    origin: str = "web_page",
) -> Document:
    """extract_main_content followed by clean_document."""
    rules = rules or ExtractionRules()
    text = extract_main_content(markup, rules)
    return clean_document(text, rules, path_or_url=path_or_url, origin=origin)

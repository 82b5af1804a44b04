"""Corpus cleaning: strip HTML/RSS/XML boilerplate and keep sentence-bearing text.

Dispatch is by format hint.  HTML pages contribute paragraph-tag text after
ad containers are removed; RSS feeds contribute item titles and
descriptions; XML contributes per-tag text; plain text contributes lines.
Every retained string must pass the sentence heuristic.
"""

from __future__ import annotations

import json
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from functools import lru_cache
from html.parser import HTMLParser
from importlib import resources
from pathlib import Path

DEFAULT_DENYLIST = frozenset(
    {
        "ad",
        "ads",
        "advert",
        "advertisement",
        "sponsored",
        "sponsor",
        "social",
        "share",
        "tracker",
        "tracking",
        "banner",
        "promo",
        "promoted",
        "plugin",
        "widget",
    }
)

# subtrees that never carry article prose
STRUCTURAL_TAGS = frozenset({"script", "style", "iframe", "nav", "footer", "header"})

_VOID_TAGS = frozenset(
    {"br", "hr", "img", "meta", "link", "input", "area", "base", "col", "embed", "source", "wbr"}
)

_WS = re.compile(r"\s+")
_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")
_TRAILING_PUNCT = "\"')]}»"


class CleanError(ValueError):
    """Undecodable or unreadable document."""


@lru_cache(maxsize=1)
def _bundled_verbs() -> frozenset[str]:
    text = resources.files("ontogen").joinpath("data/common_verbs.txt").read_text("utf-8")
    return frozenset(
        w.strip().lower() for w in text.splitlines() if w.strip() and not w.startswith("#")
    )


@dataclass(frozen=True)
class CleanConfig:
    min_words: int = 4
    long_text_words: int = 12
    min_alpha_ratio: float = 0.6
    denylist: frozenset[str] = DEFAULT_DENYLIST
    extra_verbs: frozenset[str] = frozenset()


_FORMAT_BY_EXT = {
    ".html": "html",
    ".htm": "html",
    ".rss": "rss",
    ".xml": "xml",
}


@dataclass
class RawDocument:
    data: bytes
    format_hint: str
    origin: str

    @staticmethod
    def from_path(path: Path, format_override: str | None = None) -> "RawDocument":
        fmt = format_override or _FORMAT_BY_EXT.get(path.suffix.lower(), "plain")
        return RawDocument(path.read_bytes(), fmt, str(path))


@dataclass
class CleanDocument:
    sentences: list[str]
    origin: str
    dropped_segments: int


# ----------------------------------------------------------------------
# sentence heuristic

def _verb_like(word: str, cfg: CleanConfig) -> bool:
    w = word.strip("\"'.,;:!?()[]{}").lower()
    if not w:
        return False
    if w in _bundled_verbs() or w in cfg.extra_verbs:
        return True
    if w in cfg.denylist:
        return False
    return w.isalpha() and len(w) >= 4 and (w.endswith("ed") or w.endswith("ing"))


def _ends_sentence(text: str) -> bool:
    tail = text.rstrip().rstrip(_TRAILING_PUNCT)
    return bool(tail) and tail[-1] in ".!?"


def is_sentence(text: str, cfg: CleanConfig | None = None) -> bool:
    """Deterministic stand-in for a tagger-based sentence check.

    Requires enough words, a verb-like token, a sentence ending (or enough
    length to pass without one), and a mostly-alphabetic character mix.
    """
    cfg = cfg or CleanConfig()
    words = text.split()
    if len(words) < cfg.min_words:
        return False
    nonspace = sum(1 for c in text if not c.isspace())
    alpha = sum(1 for c in text if c.isalpha())
    if nonspace == 0 or alpha / nonspace < cfg.min_alpha_ratio:
        return False
    if not _ends_sentence(text) and len(words) <= cfg.long_text_words:
        return False
    return any(_verb_like(w, cfg) for w in words)


# ----------------------------------------------------------------------
# tolerant HTML tree

@dataclass
class HtmlNode:
    tag: str
    attrs: dict[str, str] = field(default_factory=dict)
    children: list = field(default_factory=list)  # HtmlNode | str


class _TreeBuilder(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.root = HtmlNode("#root")
        self.stack = [self.root]

    def handle_starttag(self, tag, attrs):
        # paragraphs do not nest; a new <p> implicitly closes an open one
        if tag == "p" and any(n.tag == "p" for n in self.stack[1:]):
            while self.stack[-1].tag != "p":
                self.stack.pop()
            self.stack.pop()
        node = HtmlNode(tag, {k: (v or "") for k, v in attrs})
        self.stack[-1].children.append(node)
        if tag not in _VOID_TAGS:
            self.stack.append(node)

    def handle_startendtag(self, tag, attrs):
        self.stack[-1].children.append(HtmlNode(tag, {k: (v or "") for k, v in attrs}))

    def handle_endtag(self, tag):
        if any(n.tag == tag for n in self.stack[1:]):
            while self.stack[-1].tag != tag:
                self.stack.pop()
            self.stack.pop()

    def handle_data(self, data):
        if data:
            self.stack[-1].children.append(data)


def parse_html(text: str) -> HtmlNode:
    """Parse HTML tolerantly: stray end tags are ignored, unclosed tags
    are closed when an ancestor closes."""
    builder = _TreeBuilder()
    builder.feed(text)
    builder.close()
    return builder.root


def _attr_tokens(node: HtmlNode) -> set[str]:
    raw = " ".join((node.tag, node.attrs.get("id", ""), node.attrs.get("class", "")))
    return {tok for tok in _TOKEN_SPLIT.split(raw.lower()) if tok}


def strip_ad_containers(node: HtmlNode, denylist: frozenset[str] = DEFAULT_DENYLIST) -> tuple[HtmlNode, int]:
    """Copy the tree without structural boilerplate and denylisted subtrees.

    Returns the pruned copy and the number of removed subtrees.
    """
    removed = 0
    copy = HtmlNode(node.tag, dict(node.attrs))
    for child in node.children:
        if isinstance(child, str):
            copy.children.append(child)
            continue
        if child.tag in STRUCTURAL_TAGS or _attr_tokens(child) & denylist:
            removed += 1
            continue
        kept, sub_removed = strip_ad_containers(child, denylist)
        removed += sub_removed
        copy.children.append(kept)
    return copy, removed


def node_text(node: HtmlNode) -> str:
    parts = []
    for child in node.children:
        if isinstance(child, str):
            parts.append(child)
        else:
            parts.append(node_text(child))
    return "".join(parts)


def _find_tags(node: HtmlNode, tag: str) -> list[HtmlNode]:
    out = []
    for child in node.children:
        if isinstance(child, HtmlNode):
            if child.tag == tag:
                out.append(child)
            out.extend(_find_tags(child, tag))
    return out


def _normalize(text: str) -> str:
    return _WS.sub(" ", text).strip()


def _strip_markup(text: str) -> str:
    """Flatten embedded HTML (e.g. inside RSS descriptions) to plain text."""
    if "<" not in text:
        return _normalize(text)
    return _normalize(node_text(parse_html(text)))


# ----------------------------------------------------------------------
# cleaning proper

def _clean_html(text: str, cfg: CleanConfig) -> tuple[list[str], int]:
    tree, removed = strip_ad_containers(parse_html(text), cfg.denylist)
    segments = [_normalize(node_text(p)) for p in _find_tags(tree, "p")]
    segments = [s for s in segments if s]
    kept = [s for s in segments if is_sentence(s, cfg)]
    return kept, removed + (len(segments) - len(kept))


def _iter_xml_elements(text: str):
    try:
        root = ET.fromstring(text)
    except ET.ParseError:
        # malformed feed or document: fall back to the tolerant HTML walker
        def walk(node: HtmlNode):
            for child in node.children:
                if isinstance(child, HtmlNode):
                    yield child.tag, "".join(c for c in child.children if isinstance(c, str))
                    yield from walk(child)

        yield from walk(parse_html(text))
        return

    def strip_ns(tag: str) -> str:
        return tag.rsplit("}", 1)[-1].lower()

    for elem in root.iter():
        yield strip_ns(elem.tag), elem.text or ""


def _clean_rss(text: str, cfg: CleanConfig) -> tuple[list[str], int]:
    segments: list[str] = []
    in_item = False
    for tag, content in _iter_xml_elements_with_items(text):
        if tag == "item":
            in_item = True
            continue
        if in_item and tag in ("title", "description"):
            norm = _strip_markup(content)
            if norm:
                segments.append(norm)
    kept = [s for s in segments if is_sentence(s, cfg)]
    return kept, len(segments) - len(kept)


def _iter_xml_elements_with_items(text: str):
    """Yield (tag, text) pairs, with item children appearing after their 'item'."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError:
        yield from _iter_xml_elements(text)
        return

    def strip_ns(tag: str) -> str:
        return tag.rsplit("}", 1)[-1].lower()

    def walk(elem, inside_item: bool):
        tag = strip_ns(elem.tag)
        if tag == "item":
            yield ("item", "")
            inside_item = True
        elif inside_item:
            yield (tag, elem.text or "")
        for child in elem:
            yield from walk(child, inside_item)

    yield from walk(root, False)


def _clean_xml(text: str, cfg: CleanConfig) -> tuple[list[str], int]:
    segments = []
    for _tag, content in _iter_xml_elements(text):
        norm = _normalize(content)
        if norm:
            segments.append(norm)
    kept = [s for s in segments if is_sentence(s, cfg)]
    return kept, len(segments) - len(kept)


def _clean_plain(text: str, cfg: CleanConfig) -> tuple[list[str], int]:
    segments = [_normalize(line) for line in text.splitlines()]
    segments = [s for s in segments if s]
    kept = [s for s in segments if is_sentence(s, cfg)]
    return kept, len(segments) - len(kept)


_CLEANERS = {
    "html": _clean_html,
    "rss": _clean_rss,
    "xml": _clean_xml,
    "plain": _clean_plain,
}


def clean(doc: RawDocument, cfg: CleanConfig | None = None) -> CleanDocument:
    """Clean one document according to its format hint."""
    cfg = cfg or CleanConfig()
    if doc.format_hint not in _CLEANERS:
        raise CleanError(f"unknown format hint {doc.format_hint!r} for {doc.origin}")
    try:
        text = doc.data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CleanError(f"cannot decode {doc.origin}: {exc}") from None
    kept, dropped = _CLEANERS[doc.format_hint](text, cfg)
    return CleanDocument(kept, doc.origin, dropped)


def clean_directory(
    in_dir: Path,
    out_dir: Path,
    cfg: CleanConfig | None = None,
    format_override: str | None = None,
) -> dict:
    """Clean every file in a directory, writing one .txt per input plus a
    JSON summary of kept/dropped counts."""
    cfg = cfg or CleanConfig()
    out_dir.mkdir(parents=True, exist_ok=True)
    summary: dict = {"files": {}, "total_kept": 0, "total_dropped": 0}
    for path in sorted(p for p in in_dir.iterdir() if p.is_file()):
        doc = RawDocument.from_path(path, format_override)
        result = clean(doc, cfg)
        (out_dir / (path.stem + ".txt")).write_text(
            "".join(s + "\n" for s in result.sentences), encoding="utf-8"
        )
        summary["files"][path.name] = {
            "kept": len(result.sentences),
            "dropped": result.dropped_segments,
        }
        summary["total_kept"] += len(result.sentences)
        summary["total_dropped"] += result.dropped_segments
    (out_dir / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return summary


def load_denylist(path: Path) -> frozenset[str]:
    words = set()
    for line in path.read_text("utf-8").splitlines():
        line = line.strip().lower()
        if line and not line.startswith("#"):
            words.add(line)
    return frozenset(words)

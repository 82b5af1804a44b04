"""On-disk formats: an N-Triples subset, a read-only Turtle subset, the
line-delimited scored-triple ingestion format, and DOT export.

Parsers never raise on malformed content; bad lines become diagnostics and
are skipped.  The one hard error is input that does not decode as UTF-8.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable

from .model import KnowledgeGraph, ModelError, ScoredTriple, Term, Triple, RDF_TYPE


class ParseError(ValueError):
    """Unrecoverable parse failure (non-UTF-8 input, bad single term)."""


@dataclass(frozen=True)
class Diagnostic:
    """One skipped line: where and why."""

    line: int
    message: str


_IRI_RE = r"<([^>]*)>"
_BLANK_RE = r"_:([A-Za-z0-9][A-Za-z0-9_.-]*)"
_LITERAL_RE = r'"((?:[^"\\]|\\.)*)"(?:\^\^<([^>]*)>|@([A-Za-z]+(?:-[A-Za-z0-9]+)*))?'

_SUBJECT_RE = f"(?:{_IRI_RE}|{_BLANK_RE})"

_NT_LINE = re.compile(
    rf"^[ \t]*{_SUBJECT_RE}[ \t]+{_IRI_RE}[ \t]+"
    rf"(?:<([^>]*)>|_:([A-Za-z0-9][A-Za-z0-9_.-]*)|{_LITERAL_RE})"
    rf"[ \t]*\.[ \t]*(?:#.*)?$"
)

_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t"}
_UNESCAPES = {"\\": "\\", '"': '"', "n": "\n", "r": "\r", "t": "\t"}


def _escape_char(c: str) -> str:
    if c in _ESCAPES:
        return _ESCAPES[c]
    # control and line-separator characters would break line framing
    if ord(c) < 0x20 or c in "\x85  ":
        return f"\\u{ord(c):04x}"
    return c


def _escape_literal(value: str) -> str:
    return "".join(_escape_char(c) for c in value)


def _unescape_literal(raw: str) -> str:
    out = []
    i = 0
    while i < len(raw):
        c = raw[i]
        if c != "\\":
            out.append(c)
            i += 1
            continue
        if i + 1 >= len(raw):
            raise ParseError("dangling escape")
        nxt = raw[i + 1]
        if nxt in _UNESCAPES:
            out.append(_UNESCAPES[nxt])
            i += 2
        elif nxt == "u":
            hexpart = raw[i + 2 : i + 6]
            if len(hexpart) != 4 or any(h not in "0123456789abcdefABCDEF" for h in hexpart):
                raise ParseError(f"bad \\u escape at offset {i}")
            out.append(chr(int(hexpart, 16)))
            i += 6
        else:
            raise ParseError(f"unsupported escape \\{nxt}")
    return "".join(out)


def render_term(t: Term) -> str:
    """The N-Triples form of a term."""
    if t.kind == "iri":
        return f"<{t.value}>"
    if t.kind == "blank":
        return f"_:{t.value}"
    body = f'"{_escape_literal(t.value)}"'
    if t.datatype:
        return f"{body}^^<{t.datatype}>"
    if t.language:
        return f"{body}@{t.language}"
    return body


def render_triple(t: Triple) -> str:
    return f"{render_term(t.subject)} {render_term(t.predicate)} {render_term(t.object)} ."


def parse_term(text: str) -> Term:
    """Parse a single rendered term; raises ParseError on malformed input."""
    text = text.strip()
    m = re.fullmatch(_IRI_RE, text)
    if m:
        return Term.iri(m.group(1))
    m = re.fullmatch(_BLANK_RE, text)
    if m:
        return Term.blank(m.group(1))
    m = re.fullmatch(_LITERAL_RE, text)
    if m:
        return Term.literal(_unescape_literal(m.group(1)), m.group(2), m.group(3))
    raise ParseError(f"cannot parse term {text!r}")


def _decode(data: bytes, what: str) -> str:
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"{what} is not valid UTF-8: {exc}") from None


def parse_ntriples(data: bytes) -> tuple[list[Triple], list[Diagnostic]]:
    """Parse the N-Triples subset; invalid lines become diagnostics."""
    text = _decode(data, "N-Triples input")
    triples: list[Triple] = []
    diagnostics: list[Diagnostic] = []
    # split on newlines only: exotic Unicode separators may occur inside literals
    for lineno, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        m = _NT_LINE.match(line)
        if not m:
            diagnostics.append(Diagnostic(lineno, f"not a valid triple line: {stripped[:80]!r}"))
            continue
        s_iri, s_blank, p_iri, o_iri, o_blank, o_lit, o_dt, o_lang = m.groups()
        try:
            subject = Term.iri(s_iri) if s_iri is not None else Term.blank(s_blank)
            predicate = Term.iri(p_iri)
            if o_iri is not None:
                obj = Term.iri(o_iri)
            elif o_blank is not None:
                obj = Term.blank(o_blank)
            else:
                obj = Term.literal(_unescape_literal(o_lit), o_dt, o_lang)
            triples.append(Triple(subject, predicate, obj))
        except (ModelError, ParseError) as exc:
            diagnostics.append(Diagnostic(lineno, str(exc)))
    return triples, diagnostics


def serialize_ntriples(triples: Iterable[Triple]) -> bytes:
    """Deterministic N-Triples: unique triples sorted by rendered (s, p, o)."""
    lines = sorted(
        {
            (render_term(t.subject), render_term(t.predicate), render_term(t.object))
            for t in triples
        }
    )
    return "".join(f"{s} {p} {o} .\n" for s, p, o in lines).encode("utf-8")


# ----------------------------------------------------------------------
# Turtle subset (read-only)

_PREFIX_LINE = re.compile(r"@prefix\s+([A-Za-z][A-Za-z0-9_-]*)?:\s*<([^>]*)>\s*\.\s*$")
_PNAME_RE = re.compile(r"([A-Za-z][A-Za-z0-9_-]*)?:([A-Za-z0-9_][A-Za-z0-9_.-]*)$")

_TTL_TOKEN = re.compile(
    r"""
    <[^>]*>                                 # IRI
    | "(?:[^"\\]|\\.)*"(?:\^\^<[^>]*>|@[A-Za-z][A-Za-z0-9-]*)?   # literal
    | [A-Za-z][A-Za-z0-9_-]*?:[A-Za-z0-9_][A-Za-z0-9_.-]*        # prefixed name
    | :[A-Za-z0-9_][A-Za-z0-9_.-]*          # default-prefix name
    | \ba\b                                 # rdf:type shorthand
    | \.
    """,
    re.VERBOSE,
)


def _strip_ttl_comment(line: str) -> str:
    out = []
    in_literal = False
    in_iri = False
    i = 0
    while i < len(line):
        c = line[i]
        if in_literal:
            if c == "\\" and i + 1 < len(line):
                out.append(line[i : i + 2])
                i += 2
                continue
            if c == '"':
                in_literal = False
        elif in_iri:
            if c == ">":
                in_iri = False
        else:
            if c == '"':
                in_literal = True
            elif c == "<":
                in_iri = True
            elif c == "#":
                break
        out.append(c)
        i += 1
    return "".join(out)


def parse_turtle(data: bytes) -> tuple[list[Triple], list[Diagnostic]]:
    """Parse the Turtle subset: @prefix declarations plus one-triple statements.

    Prefixed names are expanded at parse time; `a` abbreviates rdf:type.
    """
    text = _decode(data, "Turtle input")
    prefixes: dict[str, str] = {}
    triples: list[Triple] = []
    diagnostics: list[Diagnostic] = []
    pending: list[tuple[int, str]] = []

    def expand(token: str, lineno: int) -> Term | None:
        if token == "a":
            return Term.iri(RDF_TYPE)
        if token.startswith("<"):
            return Term.iri(token[1:-1])
        if token.startswith('"'):
            return parse_term(token)
        m = _PNAME_RE.match(token)
        if m:
            prefix = m.group(1) or ""
            if prefix not in prefixes:
                diagnostics.append(Diagnostic(lineno, f"unknown prefix {prefix!r}:"))
                return None
            return Term.iri(prefixes[prefix] + m.group(2))
        diagnostics.append(Diagnostic(lineno, f"cannot interpret token {token!r}"))
        return None

    def flush(lineno: int) -> None:
        if not pending:
            return
        tokens = [tok for _, tok in pending]
        first_line = pending[0][0]
        pending.clear()
        if len(tokens) != 3:
            diagnostics.append(
                Diagnostic(first_line, f"expected 3 terms per statement, got {len(tokens)}")
            )
            return
        terms = [expand(tok, first_line) for tok in tokens]
        if any(t is None for t in terms):
            return
        try:
            triples.append(Triple(terms[0], terms[1], terms[2]))
        except ModelError as exc:
            diagnostics.append(Diagnostic(first_line, str(exc)))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_ttl_comment(raw).strip()
        if not line:
            continue
        pm = _PREFIX_LINE.match(line)
        if pm:
            prefixes[pm.group(1) or ""] = pm.group(2)
            continue
        pos = 0
        for m in _TTL_TOKEN.finditer(line):
            if line[pos : m.start()].strip():
                diagnostics.append(
                    Diagnostic(lineno, f"unexpected text {line[pos:m.start()].strip()!r}")
                )
            pos = m.end()
            tok = m.group(0)
            if tok == ".":
                flush(lineno)
            else:
                pending.append((lineno, tok))
        if line[pos:].strip():
            diagnostics.append(Diagnostic(lineno, f"unexpected text {line[pos:].strip()!r}"))
    if pending:
        diagnostics.append(Diagnostic(pending[0][0], "statement not terminated by '.'"))
        pending.clear()
    return triples, diagnostics


# ----------------------------------------------------------------------
# scored-triple ingestion records

_RECORD_KEYS = {"s", "p", "o", "o_kind", "conf", "id"}


def parse_scored_jsonl(data: bytes) -> tuple[list[ScoredTriple], list[Diagnostic]]:
    """Parse line-delimited scored-triple records.

    Keys: `s`, `p`, `o`, `o_kind` (iri|literal), `conf`, optional `id`.
    Subjects starting with `_:` are read as blank nodes.  Records with a
    confidence outside [0, 1] are skipped with a diagnostic.
    """
    text = _decode(data, "scored-triple input")
    out: list[ScoredTriple] = []
    diagnostics: list[Diagnostic] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            diagnostics.append(Diagnostic(lineno, f"invalid JSON: {exc.msg}"))
            continue
        if not isinstance(rec, dict):
            diagnostics.append(Diagnostic(lineno, "record is not an object"))
            continue
        missing = {"s", "p", "o", "o_kind", "conf"} - rec.keys()
        if missing:
            diagnostics.append(Diagnostic(lineno, f"missing keys: {sorted(missing)}"))
            continue
        conf = rec["conf"]
        if not isinstance(conf, (int, float)) or isinstance(conf, bool) or not 0.0 <= conf <= 1.0:
            diagnostics.append(Diagnostic(lineno, f"confidence {conf!r} outside [0, 1]"))
            continue
        if rec["o_kind"] not in ("iri", "literal"):
            diagnostics.append(Diagnostic(lineno, f"unknown o_kind {rec['o_kind']!r}"))
            continue
        try:
            s = str(rec["s"])
            subject = Term.blank(s[2:]) if s.startswith("_:") else Term.iri(s)
            predicate = Term.iri(str(rec["p"]))
            obj = Term.iri(str(rec["o"])) if rec["o_kind"] == "iri" else Term.literal(str(rec["o"]))
            out.append(
                ScoredTriple(Triple(subject, predicate, obj), float(conf), rec.get("id"))
            )
        except ModelError as exc:
            diagnostics.append(Diagnostic(lineno, str(exc)))
    return out, diagnostics


def serialize_scored_jsonl(statements: Iterable[ScoredTriple]) -> bytes:
    """Write scored statements back out as ingestion records."""
    lines = []
    for st in sorted(statements, key=lambda s: s.triple.sort_key()):
        t = st.triple
        rec = {
            "s": ("_:" + t.subject.value) if t.subject.kind == "blank" else t.subject.value,
            "p": t.predicate.value,
            "o": t.object.value,
            "o_kind": "literal" if t.object.is_literal else "iri",
            "conf": st.confidence,
        }
        if st.source_id is not None:
            rec["id"] = st.source_id
        lines.append(json.dumps(rec, sort_keys=True))
    return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")


# ----------------------------------------------------------------------
# DOT export

def local_name(iri: str) -> str:
    for sep in ("#", "/", ":"):
        if sep in iri:
            return iri.rsplit(sep, 1)[1] or iri
    return iri


def _dot_quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def export_dot(kg: KnowledgeGraph) -> bytes:
    """Render a knowledge graph as a deterministic DOT digraph."""
    terms = sorted(kg.nodes(), key=Term.sort_key)
    ids = {t: f"n{i}" for i, t in enumerate(terms)}
    lines = ["digraph kg {"]
    for t in terms:
        lines.append(f"  {ids[t]} [label={_dot_quote(t.value)}];")
    for t in kg.triples():
        label = local_name(t.predicate.value)
        lines.append(f"  {ids[t.subject]} -> {ids[t.object]} [label={_dot_quote(label)}];")
    lines.append("}")
    return ("\n".join(lines) + "\n").encode("utf-8")

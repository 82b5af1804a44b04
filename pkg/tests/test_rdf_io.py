import json

import pytest
from hypothesis import given, settings, strategies as st

from ontogen.model import KnowledgeGraph, ScoredTriple, Term, Triple
from ontogen.rdf_io import (
    Diagnostic,
    ParseError,
    export_dot,
    parse_ntriples,
    parse_scored_jsonl,
    parse_term,
    parse_turtle,
    render_term,
    serialize_ntriples,
    serialize_scored_jsonl,
)

iri_values = st.from_regex(r"[a-z][a-z0-9]{0,8}", fullmatch=True).map(
    lambda s: "http://example.org/" + s
)
blank_labels = st.from_regex(r"[A-Za-z0-9][A-Za-z0-9_]{0,6}", fullmatch=True)
literal_values = st.text(
    alphabet=st.characters(blacklist_categories=("Cs",)), max_size=12
)
lang_tags = st.sampled_from(["en", "de", "en-GB", "pt-BR"])

iris = iri_values.map(Term.iri)
blanks = blank_labels.map(Term.blank)
literals = st.one_of(
    literal_values.map(Term.literal),
    st.tuples(literal_values, iri_values).map(lambda t: Term.literal(t[0], datatype=t[1])),
    st.tuples(literal_values, lang_tags).map(lambda t: Term.literal(t[0], language=t[1])),
)

triples = st.builds(
    Triple,
    subject=st.one_of(iris, blanks),
    predicate=iris,
    object=st.one_of(iris, blanks, literals),
)
triple_sets = st.lists(triples, max_size=40).map(set)


class TestNTriples:
    def test_single_line(self):
        parsed, diags = parse_ntriples(b"<urn:a> <urn:b> <urn:c> .\n")
        assert diags == []
        assert parsed == [Triple(Term.iri("urn:a"), Term.iri("urn:b"), Term.iri("urn:c"))]

    def test_empty_file(self):
        assert parse_ntriples(b"") == ([], [])

    def test_comments_and_blanks_ignored(self):
        data = b"# header\n\n<urn:a> <urn:b> <urn:c> .\n   \n# trailing\n"
        parsed, diags = parse_ntriples(data)
        assert len(parsed) == 1 and not diags

    def test_malformed_line_reports_line_number(self):
        data = (
            b"<urn:a> <urn:p> <urn:b> .\n"
            b"<urn:c> <urn:p> <urn:d> .\n"
            b"this is not a triple\n"
            b"<urn:e> <urn:p> <urn:f> .\n"
        )
        parsed, diags = parse_ntriples(data)
        assert len(parsed) == 3
        assert len(diags) == 1
        assert diags[0].line == 3

    def test_literal_forms(self):
        data = (
            '<urn:a> <urn:p> "plain" .\n'
            '<urn:a> <urn:p> "typed"^^<urn:int> .\n'
            '<urn:a> <urn:p> "tagged"@en .\n'
            '<urn:a> <urn:p> "esc \\"q\\" \\n \\t \\\\ \\u00e9" .\n'
        ).encode()
        parsed, diags = parse_ntriples(data)
        assert not diags
        objs = [t.object for t in parsed]
        assert objs[0] == Term.literal("plain")
        assert objs[1] == Term.literal("typed", datatype="urn:int")
        assert objs[2] == Term.literal("tagged", language="en")
        assert objs[3].value == 'esc "q" \n \t \\ é'

    def test_non_utf8_is_hard_error(self):
        with pytest.raises(ParseError):
            parse_ntriples(b"\xff\xfe<urn:a> <urn:b> <urn:c> .")

    def test_serializer_deterministic_and_order_independent(self):
        a = Triple(Term.iri("urn:a"), Term.iri("urn:p"), Term.iri("urn:b"))
        b = Triple(Term.iri("urn:b"), Term.iri("urn:p"), Term.literal("x"))
        assert serialize_ntriples([a, b]) == serialize_ntriples([b, a])
        assert serialize_ntriples([a, b, a]) == serialize_ntriples([a, b])

    def test_empty_set_serializes_to_empty_file(self):
        assert serialize_ntriples([]) == b""

    @settings(max_examples=60)
    @given(triple_sets)
    def test_round_trip(self, ts):
        parsed, diags = parse_ntriples(serialize_ntriples(ts))
        assert not diags
        assert set(parsed) == ts

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.text(max_size=60), max_size=30))
    def test_parser_survives_arbitrary_text(self, lines):
        data = "\n".join(lines).encode("utf-8")
        parsed, diags = parse_ntriples(data)
        assert isinstance(parsed, list)
        assert all(isinstance(d, Diagnostic) for d in diags)


class TestTerms:
    @given(st.one_of(iris, blanks, literals))
    def test_term_round_trip(self, term):
        assert parse_term(render_term(term)) == term

    def test_parse_term_rejects_garbage(self):
        with pytest.raises(ParseError):
            parse_term("not a term")


class TestTurtle:
    def test_prefix_expansion(self):
        data = (
            "@prefix ex: <http://example.org/> .\n"
            "@prefix rdfs: <http://www.w3.org/2000/01/rdf-schema#> .\n"
            "ex:Dog rdfs:subClassOf ex:Animal .\n"
            'ex:Dog ex:label "dog" .\n'
        ).encode()
        parsed, diags = parse_turtle(data)
        assert not diags
        assert parsed[0].subject == Term.iri("http://example.org/Dog")
        assert parsed[0].object == Term.iri("http://example.org/Animal")

    def test_a_keyword(self):
        data = (
            "@prefix ex: <http://example.org/> .\n"
            "@prefix owl: <http://www.w3.org/2002/07/owl#> .\n"
            "ex:Dog a owl:Class .\n"
        ).encode()
        parsed, diags = parse_turtle(data)
        assert not diags
        assert parsed[0].predicate.value.endswith("#type")

    def test_unknown_prefix_diagnostic(self):
        parsed, diags = parse_turtle(b"ex:a ex:b ex:c .\n")
        assert parsed == []
        assert diags and "prefix" in diags[0].message

    def test_comments_respect_iris(self):
        data = (
            "@prefix ex: <http://example.org/ns#> .  # namespace\n"
            "ex:a ex:knows <http://other.example/x#frag> . # comment\n"
        ).encode()
        parsed, diags = parse_turtle(data)
        assert not diags
        assert parsed[0].object.value == "http://other.example/x#frag"


class TestScoredJsonl:
    def test_accepts_generator_style_confidence(self):
        rec = {"s": "urn:usa", "p": "urn:locatedNear", "o": "urn:mexico", "o_kind": "iri", "conf": 0.917}
        parsed, diags = parse_scored_jsonl(json.dumps(rec).encode())
        assert not diags
        assert parsed[0].confidence == 0.917

    def test_out_of_range_confidence_skipped(self):
        rec = {"s": "urn:a", "p": "urn:b", "o": "urn:c", "o_kind": "iri", "conf": 1.3}
        parsed, diags = parse_scored_jsonl(json.dumps(rec).encode())
        assert parsed == []
        assert len(diags) == 1

    def test_counts_match_line_count_oracle(self):
        n = 10_000
        lines = []
        for i in range(n):
            lines.append(
                json.dumps(
                    {"s": f"urn:s{i}", "p": "urn:p", "o": f"v{i}", "o_kind": "literal",
                     "conf": (i % 100) / 100, "id": f"r{i}"}
                )
            )
        data = "\n".join(lines).encode()
        oracle_lines = sum(1 for line in data.splitlines() if line.strip())
        parsed, diags = parse_scored_jsonl(data)
        assert oracle_lines == n
        assert len(parsed) + len(diags) == oracle_lines
        assert not diags

    def test_bad_json_and_missing_keys(self):
        data = b'{"s": "urn:a"}\nnot json\n'
        parsed, diags = parse_scored_jsonl(data)
        assert parsed == []
        assert [d.line for d in diags] == [1, 2]

    def test_round_trip(self):
        sts = [
            ScoredTriple(Triple(Term.iri("urn:a"), Term.iri("urn:p"), Term.literal("v")), 0.5, "x1"),
            ScoredTriple(Triple(Term.blank("b0"), Term.iri("urn:p"), Term.iri("urn:c")), 0.25),
        ]
        parsed, diags = parse_scored_jsonl(serialize_scored_jsonl(sts))
        assert not diags
        assert {(s.triple, s.confidence, s.source_id) for s in parsed} == {
            (s.triple, s.confidence, s.source_id) for s in sts
        }


class TestDot:
    def test_single_triple(self):
        kg = KnowledgeGraph()
        kg.add_triple(Triple(Term.iri("urn:a"), Term.iri("urn:p#knows"), Term.iri("urn:b")), 0.9)
        dot = export_dot(kg).decode()
        assert dot.startswith("digraph")
        assert dot.count("[label=") == 3  # 2 nodes + 1 edge
        assert '"knows"' in dot

    def test_empty_graph(self):
        assert export_dot(KnowledgeGraph()) == b"digraph kg {\n}\n"

    def test_node_count_matches_distinct_terms(self):
        kg = KnowledgeGraph()
        for i in range(6):
            kg.add_triple(
                Triple(Term.iri(f"urn:s{i % 2}"), Term.iri("urn:p"), Term.literal(f"v{i % 3}")),
                0.9,
            )
        distinct = {t.subject for t in kg.triples()} | {t.object for t in kg.triples()}
        dot = export_dot(kg).decode()
        node_lines = [l for l in dot.splitlines() if l.startswith("  n") and "->" not in l]
        assert len(node_lines) == len(distinct)

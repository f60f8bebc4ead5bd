import json
import random
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from randgen import random_query
from srquery.query_ast import (
    AdjacentTermsError,
    EmptyQueryError,
    FieldKind,
    FieldTag,
    Op,
    Operator,
    Query,
    QueryParseError,
    Term,
    UnbalancedParenError,
    UnbalancedQuoteError,
    count_clauses,
    extract_mesh_terms,
    iter_terms,
    parse,
    serialize,
    validate,
)

TEG_QUERY = json.loads(
    (Path(__file__).parent.parent / "src/srquery/data/hqe_example.json").read_text()
)["query"]


# ---------------------------------------------------------------------------
# parse
# ---------------------------------------------------------------------------

def test_parse_simple_structure():
    q = parse("(A[Title/Abstract] OR B[Title/Abstract]) AND C[MeSH]")
    root = q.root
    assert isinstance(root, Operator) and root.op is Op.AND
    inner, c = root.children
    assert isinstance(inner, Operator) and inner.op is Op.OR
    assert [t.text for t in iter_terms(inner)] == ["A", "B"]
    assert all(t.field.kind is FieldKind.TITLE_ABSTRACT for t in iter_terms(inner))
    assert isinstance(c, Term) and c.field.kind is FieldKind.MESH_EXPLODED


def test_parse_untagged_defaults_to_all_fields():
    q = parse("cancer")
    assert q.root == Term("cancer", FieldTag(FieldKind.ALL_FIELDS))


def test_parse_teg_query_from_fixture():
    q = parse(TEG_QUERY)
    mesh = extract_mesh_terms(q)
    assert mesh == [("Thrombelastography", False)]
    all_fields = [t for t in iter_terms(q.root) if t.field.kind is FieldKind.ALL_FIELDS]
    assert len(all_fields) >= 10
    # Curly-quoted phrase survives with its text intact.
    assert any(t.text == "tem international" for t in iter_terms(q.root))


def test_parse_unbalanced_bracket():
    with pytest.raises(UnbalancedParenError):
        parse("cancer[Title/Abstract")


def test_parse_unbalanced_paren():
    with pytest.raises(UnbalancedParenError):
        parse("(a AND b")
    with pytest.raises(UnbalancedParenError):
        parse("a AND b)")


def test_parse_unbalanced_quote():
    with pytest.raises(UnbalancedQuoteError):
        parse('"thyroid cancer')


def test_parse_adjacent_terms_is_an_error():
    with pytest.raises(AdjacentTermsError):
        parse("a[Title] b[Title]")
    with pytest.raises(AdjacentTermsError):
        parse('"some phrase" word')
    with pytest.raises(AdjacentTermsError):
        parse("thromb* elastom*")


def test_parse_empty_inputs():
    for text in ("", "   ", "\n"):
        with pytest.raises(EmptyQueryError):
            parse(text)


def test_parse_dangling_operator():
    with pytest.raises(QueryParseError):
        parse("a AND")
    with pytest.raises(QueryParseError):
        parse("OR a")
    with pytest.raises(QueryParseError):
        parse("NOT a")  # NOT is binary


def test_parse_multiword_sequence_is_one_phrase():
    q = parse("differentiated thyroid cancer[MeSH]")
    assert q.root == Term("differentiated thyroid cancer", FieldTag(FieldKind.MESH_EXPLODED))


def test_parse_same_operator_collapses():
    q = parse("a OR b OR c")
    assert isinstance(q.root, Operator)
    assert q.root.op is Op.OR and len(q.root.children) == 3


def test_parse_mixed_operators_left_to_right():
    q = parse("a AND b OR c")
    assert q.root.op is Op.OR
    left = q.root.children[0]
    assert isinstance(left, Operator) and left.op is Op.AND


def test_parse_not_is_binary_left_associative():
    q = parse("a NOT b NOT c")
    assert q.root.op is Op.NOT and len(q.root.children) == 2
    left = q.root.children[0]
    assert isinstance(left, Operator) and left.op is Op.NOT


def test_field_tag_spellings_canonicalize():
    for raw, kind in [
        ("MeSH", FieldKind.MESH_EXPLODED),
        ("MeSH Terms", FieldKind.MESH_EXPLODED),
        ("mesh", FieldKind.MESH_EXPLODED),
        ("mesh:noexp", FieldKind.MESH_NOEXP),
        ("Title/Abstract", FieldKind.TITLE_ABSTRACT),
        ("tiab", FieldKind.TITLE_ABSTRACT),
        ("All Fields", FieldKind.ALL_FIELDS),
        ("pt", FieldKind.PUBLICATION_TYPE),
    ]:
        assert FieldTag.from_raw(raw).kind is kind, raw


def test_unknown_tag_becomes_other():
    tag = FieldTag.from_raw("Supplementary Concept")
    assert tag.kind is FieldKind.OTHER and tag.raw == "Supplementary Concept"


# ---------------------------------------------------------------------------
# serialize
# ---------------------------------------------------------------------------

def test_serialize_canonical_form():
    assert serialize(parse("a AND b")) == "(a[All Fields] AND b[All Fields])"


def test_serialize_round_trips_the_parse():
    texts = [
        "a AND b",
        '("heart attack*"[tiab] OR infarct*[Title]) NOT review[pt]',
        TEG_QUERY,
        "differentiated thyroid cancer[MeSH] OR autopsy[mesh:noexp]",
    ]
    for text in texts:
        q = parse(text)
        assert parse(serialize(q)) == q


def test_serialize_is_a_fixed_point():
    q = parse(TEG_QUERY)
    once = serialize(q)
    assert serialize(parse(once)) == once


def test_serialize_quotes_operator_words():
    q = Query(Term("and"))
    assert parse(serialize(q)) == q


def test_round_trip_1000_random_asts():
    rng = random.Random(20230501)
    for _ in range(1000):
        q = random_query(rng, max_depth=5, max_terms=30)
        assert parse(serialize(q)) == q


@settings(max_examples=300, deadline=None)
@given(st.text(max_size=120))
def test_parse_never_crashes_on_arbitrary_text(text):
    try:
        parse(text)
    except QueryParseError:
        pass  # structured failure is the contract


# ---------------------------------------------------------------------------
# inspection
# ---------------------------------------------------------------------------

def test_count_clauses_single_term():
    stats = count_clauses(parse("cancer"))
    assert (stats.term_count, stats.or_operator_count, stats.max_depth) == (1, 0, 1)


def test_count_clauses_flat_or_under_and():
    stats = count_clauses(parse("(a OR b OR c) AND d"))
    assert (stats.term_count, stats.or_operator_count, stats.max_depth) == (4, 1, 2)


def test_count_clauses_teg_query_hand_counted():
    # Counted by hand from the fixture text: 16 leaf terms, 3 OR groups,
    # ANDed pairs nested two levels below the root OR.
    stats = count_clauses(parse(TEG_QUERY))
    assert stats.term_count == 16
    assert stats.or_operator_count == 3
    assert stats.max_depth == 3


def test_extract_mesh_terms_order_and_flags():
    q = parse("autopsy[MeSH] AND (x[tiab] OR Thrombelastography[mesh:noexp])")
    assert extract_mesh_terms(q) == [("autopsy", True), ("Thrombelastography", False)]


def test_extract_mesh_terms_empty_without_mesh_fields():
    assert extract_mesh_terms(parse("a AND b[Title]")) == []


def test_mesh_extraction_never_exceeds_term_count():
    rng = random.Random(7)
    for _ in range(200):
        q = random_query(rng, max_depth=4, max_terms=15)
        assert len(extract_mesh_terms(q)) <= count_clauses(q).term_count


# ---------------------------------------------------------------------------
# validate
# ---------------------------------------------------------------------------

def test_validate_other_tag_warns():
    report = validate(parse("term[Foo]"))
    assert report.ok
    assert [w.code for w in report.warnings] == ["unknown-field-tag"]


def test_validate_mesh_in_vocab_ok(vocab):
    report = validate(parse("Thrombelastography[mesh:noexp]"), vocab)
    assert report.ok and not report.warnings


def test_validate_mesh_missing_from_vocab_warns(vocab):
    report = validate(parse("differentiated thyroid cancer[MeSH]"), vocab)
    codes = [w.code for w in report.warnings]
    assert codes == ["mesh-not-in-vocabulary"]


def test_validate_short_truncation_stem_warns():
    report = validate(parse("te*[tiab]"))
    assert any(w.code == "short-truncation-stem" for w in report.warnings)


def test_validate_matches_linear_leaf_scan(vocab):
    rng = random.Random(99)
    for _ in range(200):
        q = random_query(rng, max_depth=4, max_terms=12)
        report = validate(q, vocab)
        expected = []
        for t in iter_terms(q.root):
            if t.field.kind is FieldKind.OTHER:
                expected.append("unknown-field-tag")
            if t.truncated and len(t.text.replace(" ", "")) < 3:
                expected.append("short-truncation-stem")
            if t.field.kind in (FieldKind.MESH_EXPLODED, FieldKind.MESH_NOEXP) \
                    and vocab.lookup(t.text) is None:
                expected.append("mesh-not-in-vocabulary")
        assert sorted(w.code for w in report.warnings) == sorted(expected)


def test_unserializable_other_tag_is_an_error():
    bad = Query(Term("x", FieldTag(FieldKind.OTHER, "a]b")))
    report = validate(bad)
    assert not report.ok
    assert report.errors[0].code == "unserializable-term"
    with pytest.raises(ValueError):
        serialize(bad)


def test_invariant_not_arity_enforced():
    with pytest.raises(ValueError):
        Operator(Op.NOT, (Term("a"),))
    with pytest.raises(ValueError):
        Operator(Op.AND, (Term("a"),))
    with pytest.raises(ValueError):
        Term("")

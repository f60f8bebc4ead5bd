"""Local Boolean retrieval over a fielded inverted index, plus a deliberately
naive per-document evaluator used as a testing oracle.

Both engines implement identical semantics:

* ``[Title/Abstract]`` — token or phrase occurs in title or abstract
* ``[All Fields]`` (and unknown tags) — title, abstract, or MeSH names
* ``[Title]`` — title only
* ``[MeSH]`` — document tagged with the descriptor or any tree descendant
* ``[mesh:noexp]`` — exact descriptor only
* ``[Publication Type]`` — whole-string match against the doc's pub types
* trailing ``*`` — token prefix match (final token of a phrase)
* AND/OR/NOT — intersection, union, left-to-right set difference

Tokenization is lowercase, split on non-alphanumerics, digits kept, no
stemming.  PubMed's proprietary term normalization is intentionally not
emulated.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from typing import Optional

from .collections import Corpus, CorpusDoc, MeshVocab
from .query_ast import (
    FieldKind,
    Node,
    Op,
    Query,
    Term,
    validate,
)

__all__ = [
    "Index",
    "InvalidQueryError",
    "UnknownDescriptorError",
    "tokenize",
    "build_index",
    "execute_local",
    "execute_naive",
    "explode_mesh",
]


class InvalidQueryError(ValueError):
    pass


class UnknownDescriptorError(KeyError):
    pass


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


# ---------------------------------------------------------------------------
# MeSH explosion
# ---------------------------------------------------------------------------

def explode_mesh(vocab: MeshVocab, name: str) -> set[str]:
    """The descriptor and every descriptor whose tree number extends one of
    its tree numbers at a dot boundary."""
    descriptor = vocab.lookup(name)
    if descriptor is None:
        raise UnknownDescriptorError(name)
    roots = descriptor.tree_numbers
    result = {descriptor.name}
    for other in vocab.descriptors.values():
        for tree in other.tree_numbers:
            if any(tree == root or tree.startswith(root + ".") for root in roots):
                result.add(other.name)
                break
    return result


# ---------------------------------------------------------------------------
# Index
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Index:
    """Immutable fielded index.  Postings are pmid sets per token; phrase
    queries check positions against per-document token arrays."""

    postings: dict[str, dict[str, frozenset[str]]]          # field -> token -> pmids
    token_arrays: dict[str, dict[str, tuple[str, ...]]]      # field -> pmid -> tokens
    mesh_text: dict[str, tuple[tuple[str, ...], ...]]        # pmid -> token arrays per name
    descriptor_map: dict[str, frozenset[str]]                # lower name -> pmids
    pub_types: dict[str, tuple[str, ...]]                    # pmid -> lowered type strings
    all_pmids: frozenset[str]
    vocab: Optional[MeshVocab]
    sorted_tokens: dict[str, tuple[str, ...]]                # field -> sorted token list

    def digest(self) -> str:
        payload = {
            field: {tok: sorted(pmids) for tok, pmids in tokens.items()}
            for field, tokens in self.postings.items()
        }
        payload["__mesh__"] = {name: sorted(pmids) for name, pmids in self.descriptor_map.items()}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def build_index(corpus: Corpus, vocab: Optional[MeshVocab] = None) -> Index:
    postings: dict[str, dict[str, set[str]]] = {"title": {}, "abstract": {}, "mesh": {}}
    token_arrays: dict[str, dict[str, tuple[str, ...]]] = {"title": {}, "abstract": {}}
    mesh_text: dict[str, tuple[tuple[str, ...], ...]] = {}
    descriptor_map: dict[str, set[str]] = {}
    pub_types: dict[str, tuple[str, ...]] = {}

    for pmid, doc in corpus.docs.items():
        for field, text in (("title", doc.title), ("abstract", doc.abstract)):
            tokens = tuple(tokenize(text))
            token_arrays[field][pmid] = tokens
            for tok in set(tokens):
                postings[field].setdefault(tok, set()).add(pmid)
        name_arrays = []
        for name in doc.mesh_terms:
            canonical = name
            if vocab is not None:
                descriptor = vocab.lookup(name)
                if descriptor is not None:
                    canonical = descriptor.name
            descriptor_map.setdefault(canonical.lower(), set()).add(pmid)
            name_tokens = tuple(tokenize(canonical))
            name_arrays.append(name_tokens)
            for tok in set(name_tokens):
                postings["mesh"].setdefault(tok, set()).add(pmid)
        mesh_text[pmid] = tuple(name_arrays)
        pub_types[pmid] = tuple(p.lower().strip() for p in doc.pub_types)

    return Index(
        postings={f: {t: frozenset(p) for t, p in toks.items()} for f, toks in postings.items()},
        token_arrays=token_arrays,
        mesh_text=mesh_text,
        descriptor_map={n: frozenset(p) for n, p in descriptor_map.items()},
        pub_types=pub_types,
        all_pmids=frozenset(corpus.docs),
        vocab=vocab,
        sorted_tokens={f: tuple(sorted(toks)) for f, toks in postings.items()},
    )


# ---------------------------------------------------------------------------
# Shared matching helpers
# ---------------------------------------------------------------------------

def _phrase_at(arr: tuple[str, ...], tokens: list[str], prefix_last: bool) -> bool:
    k = len(tokens)
    if k == 0 or len(arr) < k:
        return False
    for i in range(len(arr) - k + 1):
        window = arr[i : i + k]
        head_ok = all(window[j] == tokens[j] for j in range(k - 1))
        if not head_ok:
            continue
        last = window[k - 1]
        if last == tokens[-1] or (prefix_last and last.startswith(tokens[-1])):
            return True
    return False


def _exploded_names(vocab: Optional[MeshVocab], text: str) -> set[str]:
    """Lowercased descriptor names matched by an exploded MeSH term; falls
    back to the literal name when the vocabulary has no entry."""
    if vocab is not None and vocab.lookup(text) is not None:
        return {n.lower() for n in explode_mesh(vocab, text)}
    return {text.strip().lower()}


# ---------------------------------------------------------------------------
# Indexed execution
# ---------------------------------------------------------------------------

def _index_tokens_matching(idx: Index, field: str, stem: str) -> list[str]:
    # Prefix scan over the sorted token list; stems shorter than the
    # validation minimum still work, they are just slow.
    return [t for t in idx.sorted_tokens.get(field, ()) if t.startswith(stem)]


def _index_field_match(idx: Index, fields: list[str], term: Term) -> set[str]:
    tokens = tokenize(term.text)
    if not tokens:
        return set()
    result: set[str] = set()
    for field in fields:
        if len(tokens) == 1 and not term.truncated:
            result |= idx.postings.get(field, {}).get(tokens[0], frozenset())
            continue
        if len(tokens) == 1 and term.truncated:
            for tok in _index_tokens_matching(idx, field, tokens[0]):
                result |= idx.postings[field][tok]
            continue
        # Phrase: candidates must contain every non-final token, then the
        # positional windows are checked.
        candidates: Optional[set[str]] = None
        for tok in tokens[:-1]:
            pmids = idx.postings.get(field, {}).get(tok, frozenset())
            candidates = set(pmids) if candidates is None else candidates & pmids
            if not candidates:
                break
        if not candidates:
            continue
        if field == "mesh":
            for pmid in candidates:
                if any(
                    _phrase_at(arr, tokens, term.truncated)
                    for arr in idx.mesh_text.get(pmid, ())
                ):
                    result.add(pmid)
        else:
            for pmid in candidates:
                if _phrase_at(idx.token_arrays[field].get(pmid, ()), tokens, term.truncated):
                    result.add(pmid)
    return result


def _index_mesh_match(idx: Index, term: Term, exploded: bool) -> set[str]:
    key = term.text.strip().lower()
    if term.truncated:
        names = [n for n in idx.descriptor_map if n.startswith(key)]
    elif exploded:
        names = list(_exploded_names(idx.vocab, term.text))
    else:
        names = [key]
    result: set[str] = set()
    for name in names:
        result |= idx.descriptor_map.get(name, frozenset())
    return result


def _index_term(idx: Index, term: Term) -> set[str]:
    kind = term.field.kind
    if kind is FieldKind.TITLE:
        return _index_field_match(idx, ["title"], term)
    if kind is FieldKind.TITLE_ABSTRACT:
        return _index_field_match(idx, ["title", "abstract"], term)
    if kind in (FieldKind.ALL_FIELDS, FieldKind.OTHER):
        return _index_field_match(idx, ["title", "abstract", "mesh"], term)
    if kind is FieldKind.MESH_EXPLODED:
        return _index_mesh_match(idx, term, exploded=True)
    if kind is FieldKind.MESH_NOEXP:
        return _index_mesh_match(idx, term, exploded=False)
    if kind is FieldKind.PUBLICATION_TYPE:
        want = term.text.strip().lower()
        return {
            pmid
            for pmid, types in idx.pub_types.items()
            if any(t == want or (term.truncated and t.startswith(want)) for t in types)
        }
    raise InvalidQueryError(f"unsupported field kind {kind}")


def execute_local(idx: Index, q: Query) -> set[str]:
    """Evaluate a query against the index via postings set algebra."""
    report = validate(q)
    if not report.ok:
        raise InvalidQueryError("; ".join(i.message for i in report.errors))

    def evaluate(node: Node) -> set[str]:
        if isinstance(node, Term):
            return _index_term(idx, node)
        sets = [evaluate(child) for child in node.children]
        if node.op is Op.AND:
            out = sets[0]
            for s in sets[1:]:
                out = out & s
            return out
        if node.op is Op.OR:
            out = set()
            for s in sets:
                out |= s
            return out
        return sets[0] - sets[1]

    return evaluate(q.root)


# ---------------------------------------------------------------------------
# Naive oracle execution
# ---------------------------------------------------------------------------

def _doc_term_match(doc: CorpusDoc, term: Term, vocab: Optional[MeshVocab]) -> bool:
    tokens = tokenize(term.text)
    kind = term.field.kind

    def in_text(text: str) -> bool:
        return _phrase_at(tuple(tokenize(text)), tokens, term.truncated)

    def in_mesh_names() -> bool:
        return any(_phrase_at(tuple(tokenize(m)), tokens, term.truncated) for m in doc.mesh_terms)

    if kind is FieldKind.TITLE:
        return in_text(doc.title)
    if kind is FieldKind.TITLE_ABSTRACT:
        return in_text(doc.title) or in_text(doc.abstract)
    if kind in (FieldKind.ALL_FIELDS, FieldKind.OTHER):
        return in_text(doc.title) or in_text(doc.abstract) or in_mesh_names()
    if kind is FieldKind.PUBLICATION_TYPE:
        want = term.text.strip().lower()
        return any(
            p.lower().strip() == want or (term.truncated and p.lower().strip().startswith(want))
            for p in doc.pub_types
        )

    doc_names = {m.strip().lower() for m in doc.mesh_terms}
    if vocab is not None:
        canonical = set()
        for m in doc.mesh_terms:
            descriptor = vocab.lookup(m)
            canonical.add(descriptor.name.lower() if descriptor else m.strip().lower())
        doc_names = canonical
    key = term.text.strip().lower()
    if term.truncated:
        return any(n.startswith(key) for n in doc_names)
    if kind is FieldKind.MESH_EXPLODED:
        return bool(_exploded_names(vocab, term.text) & doc_names)
    return key in doc_names  # MESH_NOEXP


def execute_naive(corpus: Corpus, q: Query, vocab: Optional[MeshVocab] = None) -> set[str]:
    """Oracle evaluator: one boolean predicate per document, no index."""
    report = validate(q)
    if not report.ok:
        raise InvalidQueryError("; ".join(i.message for i in report.errors))

    def matches(doc: CorpusDoc, node: Node) -> bool:
        if isinstance(node, Term):
            return _doc_term_match(doc, node, vocab)
        if node.op is Op.AND:
            return all(matches(doc, c) for c in node.children)
        if node.op is Op.OR:
            return any(matches(doc, c) for c in node.children)
        return matches(doc, node.children[0]) and not matches(doc, node.children[1])

    return {pmid for pmid, doc in corpus.docs.items() if matches(doc, q.root)}

"""Loaders for review topics, relevance judgments, document corpora, and the
MeSH vocabulary.

Canonical on-disk formats:

* ``topics.jsonl`` — one JSON object per line:
  ``{"topic_id", "title", "original_query"?, "collection": "CLEF"|"SEED",
  "seed_studies": [{"pmid", "title", "abstract"}]?}``
* ``qrels.txt`` — TREC format, whitespace separated: ``topic 0 pmid rel``
* ``corpus.jsonl`` — ``{"pmid", "title", "abstract", "mesh": [...],
  "pub_types": [...]}``
* ``mesh.tsv`` — ``ui<TAB>name<TAB>tree;tree``

All loaded structures are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Optional

__all__ = [
    "CollectionTag",
    "SeedStudy",
    "ReviewTopic",
    "Qrels",
    "CorpusDoc",
    "Corpus",
    "MeshDescriptor",
    "MeshVocab",
    "CollectionError",
    "MalformedLineError",
    "DuplicateTopicError",
    "DuplicateJudgmentError",
    "NegativeGradeError",
    "MissingFieldError",
    "load_topics",
    "write_topics",
    "dedupe_topics",
    "load_qrels",
    "write_qrels",
    "load_corpus",
    "write_corpus",
    "load_mesh",
    "write_mesh",
]

# Collection tags; CLEF topics carry expert queries, SEED topics carry seed
# studies for the guided pipeline.
CLEF = "CLEF"
SEED = "SEED"
CollectionTag = str


class CollectionError(ValueError):
    pass


class MalformedLineError(CollectionError):
    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.line_no = line_no


class DuplicateTopicError(CollectionError):
    def __init__(self, topic_id: str):
        super().__init__(f"duplicate topic_id {topic_id!r}")
        self.topic_id = topic_id


class DuplicateJudgmentError(CollectionError):
    pass


class NegativeGradeError(CollectionError):
    pass


class MissingFieldError(CollectionError):
    pass


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SeedStudy:
    pmid: str
    title: str = ""
    abstract: str = ""

    def __post_init__(self) -> None:
        if not self.pmid:
            raise MissingFieldError("seed study pmid must be non-empty")

    @property
    def has_abstract(self) -> bool:
        return bool(self.abstract.strip())


@dataclass(frozen=True)
class ReviewTopic:
    topic_id: str
    title: str
    original_query: Optional[str] = None
    collection_tag: CollectionTag = CLEF
    seed_studies: tuple[SeedStudy, ...] = ()

    def __post_init__(self) -> None:
        if not self.topic_id:
            raise MissingFieldError("topic_id must be non-empty")
        if not self.title:
            raise MissingFieldError(f"topic {self.topic_id}: title must be non-empty")


@dataclass(frozen=True)
class Qrels:
    """Relevance judgments keyed by (topic_id, pmid)."""

    judgments: dict[tuple[str, str], int]

    def relevant_for(self, topic_id: str, threshold: int = 1) -> set[str]:
        """Pmids judged relevant (grade >= threshold; set-based metrics are
        binary, so the default binarization is grade >= 1)."""
        return {
            pmid
            for (tid, pmid), grade in self.judgments.items()
            if tid == topic_id and grade >= threshold
        }

    def judged_for(self, topic_id: str) -> set[str]:
        return {pmid for (tid, pmid) in self.judgments if tid == topic_id}

    def topic_ids(self) -> set[str]:
        return {tid for (tid, _) in self.judgments}


@dataclass(frozen=True)
class CorpusDoc:
    pmid: str
    title: str
    abstract: str = ""
    mesh_terms: tuple[str, ...] = ()
    pub_types: tuple[str, ...] = ()


@dataclass(frozen=True)
class Corpus:
    docs: dict[str, CorpusDoc]

    def __len__(self) -> int:
        return len(self.docs)

    def __contains__(self, pmid: str) -> bool:
        return pmid in self.docs

    def get(self, pmid: str) -> Optional[CorpusDoc]:
        return self.docs.get(pmid)


@dataclass(frozen=True)
class MeshDescriptor:
    name: str
    ui: str
    tree_numbers: tuple[str, ...]


@dataclass(frozen=True)
class MeshVocab:
    """Descriptor lookup is case-insensitive; keys are lowercased names."""

    descriptors: dict[str, MeshDescriptor]

    def lookup(self, name: str) -> Optional[MeshDescriptor]:
        return self.descriptors.get(name.strip().lower())

    def __contains__(self, name: str) -> bool:
        return self.lookup(name) is not None

    def __len__(self) -> int:
        return len(self.descriptors)

    def names(self) -> list[str]:
        return [d.name for d in self.descriptors.values()]


# ---------------------------------------------------------------------------
# Topics
# ---------------------------------------------------------------------------

def _parse_seed_studies(raw, path, line_no) -> tuple[SeedStudy, ...]:
    studies = []
    for entry in raw or []:
        if "pmid" not in entry:
            raise MalformedLineError(path, line_no, "seed study missing pmid")
        studies.append(
            SeedStudy(
                pmid=str(entry["pmid"]),
                title=entry.get("title", ""),
                abstract=entry.get("abstract", ""),
            )
        )
    return tuple(studies)


def load_topics(path, tag: CollectionTag = CLEF) -> list[ReviewTopic]:
    """Load review topics from a JSONL file, in file order.

    ``tag`` is the default collection tag; a per-line ``"collection"`` field
    overrides it.  Duplicate topic_ids within one file are an error.
    """
    topics: list[ReviewTopic] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedLineError(path, line_no, f"invalid JSON: {e}") from e
            if not isinstance(obj, dict) or "topic_id" not in obj or "title" not in obj:
                raise MalformedLineError(path, line_no, "topic_id and title are required")
            if not isinstance(obj["title"], str) or not obj["title"].strip():
                raise MalformedLineError(path, line_no, "title must be a non-empty string")
            topic_id = str(obj["topic_id"])
            if topic_id in seen:
                raise DuplicateTopicError(topic_id)
            seen.add(topic_id)
            topics.append(
                ReviewTopic(
                    topic_id=topic_id,
                    title=obj["title"],
                    original_query=obj.get("original_query"),
                    collection_tag=obj.get("collection", tag),
                    seed_studies=_parse_seed_studies(obj.get("seed_studies"), path, line_no),
                )
            )
    return topics


def write_topics(topics: Iterable[ReviewTopic], path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for t in topics:
            obj = {"topic_id": t.topic_id, "title": t.title, "collection": t.collection_tag}
            if t.original_query is not None:
                obj["original_query"] = t.original_query
            if t.seed_studies:
                obj["seed_studies"] = [
                    {"pmid": s.pmid, "title": s.title, "abstract": s.abstract}
                    for s in t.seed_studies
                ]
            f.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def dedupe_topics(a: list[ReviewTopic], b: list[ReviewTopic]) -> list[ReviewTopic]:
    """Union of two topic lists keyed by topic_id; first occurrence wins."""
    out: list[ReviewTopic] = []
    seen: set[str] = set()
    for topic in list(a) + list(b):
        if topic.topic_id in seen:
            continue
        seen.add(topic.topic_id)
        out.append(topic)
    return out


# ---------------------------------------------------------------------------
# Qrels
# ---------------------------------------------------------------------------

def load_qrels(path) -> Qrels:
    """Load TREC-format qrels: ``topic 0 pmid rel``, whitespace separated.

    Grades are kept as given (CLEF assessments include grades above 1);
    binarization happens at evaluation time via :meth:`Qrels.relevant_for`.
    """
    judgments: dict[tuple[str, str], int] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 4:
                raise MalformedLineError(path, line_no, f"expected 4 columns, got {len(parts)}")
            topic_id, _, pmid, grade_str = parts
            try:
                grade = int(grade_str)
            except ValueError:
                raise MalformedLineError(path, line_no, f"grade {grade_str!r} is not an integer")
            if grade < 0:
                raise NegativeGradeError(f"{path}:{line_no}: negative grade {grade}")
            key = (topic_id, pmid)
            if key in judgments:
                raise DuplicateJudgmentError(
                    f"{path}:{line_no}: duplicate judgment for {key} "
                    f"(grades {judgments[key]} and {grade})"
                )
            judgments[key] = grade
    return Qrels(judgments)


def write_qrels(qrels: Qrels, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for (topic_id, pmid), grade in sorted(qrels.judgments.items()):
            f.write(f"{topic_id} 0 {pmid} {grade}\n")


# ---------------------------------------------------------------------------
# Corpus and MeSH
# ---------------------------------------------------------------------------

def load_corpus(path) -> Corpus:
    docs: dict[str, CorpusDoc] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise MalformedLineError(path, line_no, f"invalid JSON: {e}") from e
            for required in ("pmid", "title"):
                if required not in obj:
                    raise MissingFieldError(f"{path}:{line_no}: missing {required!r}")
            if not isinstance(obj["title"], str):
                raise MalformedLineError(path, line_no, "title must be a string")
            pmid = str(obj["pmid"])
            if pmid in docs:
                raise MalformedLineError(path, line_no, f"duplicate pmid {pmid!r}")
            docs[pmid] = CorpusDoc(
                pmid=pmid,
                title=obj["title"],
                abstract=str(obj.get("abstract") or ""),
                mesh_terms=tuple(str(m) for m in obj.get("mesh", [])),
                pub_types=tuple(str(p) for p in obj.get("pub_types", [])),
            )
    return Corpus(docs)


def write_corpus(corpus: Corpus, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc in corpus.docs.values():
            obj = {
                "pmid": doc.pmid,
                "title": doc.title,
                "abstract": doc.abstract,
                "mesh": list(doc.mesh_terms),
                "pub_types": list(doc.pub_types),
            }
            f.write(json.dumps(obj, ensure_ascii=False, sort_keys=True) + "\n")


def load_mesh(path) -> MeshVocab:
    """Load a TSV of descriptors: ``ui<TAB>name<TAB>tree;tree``."""
    descriptors: dict[str, MeshDescriptor] = {}
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 3:
                raise MalformedLineError(path, line_no, f"expected 3 columns, got {len(parts)}")
            ui, name, trees = parts
            tree_numbers = tuple(t for t in trees.split(";") if t.strip())
            if not tree_numbers:
                raise MalformedLineError(path, line_no, f"descriptor {name!r} has no tree numbers")
            if not name.strip():
                raise MissingFieldError(f"{path}:{line_no}: empty descriptor name")
            descriptors[name.strip().lower()] = MeshDescriptor(
                name=name.strip(), ui=ui.strip(), tree_numbers=tree_numbers
            )
    return MeshVocab(descriptors)


def write_mesh(vocab: MeshVocab, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for descriptor in vocab.descriptors.values():
            f.write(f"{descriptor.ui}\t{descriptor.name}\t{';'.join(descriptor.tree_numbers)}\n")

# Parse a real PubMed-style Boolean query into an AST, inspect it, and
# serialize it back to the canonical text form.

import json
from pathlib import Path

from srquery.query_ast import count_clauses, extract_mesh_terms, parse, serialize, validate

# The bundled high-quality example topic ships with its published query.
fixture = json.loads(
    (Path(__file__).parent.parent / "src/srquery/data/hqe_example.json").read_text()
)
query_text = fixture["query"]
print("raw query:")
print(query_text)
print()

q = parse(query_text)

stats = count_clauses(q)
print(f"terms: {stats.term_count}")
print(f"OR operators: {stats.or_operator_count}")
print(f"operator nesting depth: {stats.max_depth}")
print(f"MeSH terms: {extract_mesh_terms(q)}")
print()

# Canonical serialization: uppercase operators, explicit [All Fields],
# canonical tag spellings.  It re-parses to the identical tree.
canonical = serialize(q)
print("canonical form:")
print(canonical)
assert parse(canonical) == q

# Malformed queries fail with structured errors rather than partial trees.
for bad in ("cancer[Title/Abstract", "a[tiab] b[tiab]", '"unclosed phrase'):
    try:
        parse(bad)
    except Exception as e:
        print(f"rejected {bad!r}: {type(e).__name__}: {e}")

# Validation distinguishes hard errors from warnings (unknown tags, short
# truncation stems, MeSH terms missing from a vocabulary).
report = validate(parse("thyroid[Foo] OR te*[tiab]"))
print("\nwarnings:")
for w in report.warnings:
    print(f"  {w.code}: {w.message}")

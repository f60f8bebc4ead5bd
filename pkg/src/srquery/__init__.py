"""srquery: generate, refine, execute, and evaluate systematic-review
Boolean queries with chat-completion models.

The package is organized around a small immutable core:

* :mod:`srquery.query_ast` — PubMed-style Boolean query AST
* :mod:`srquery.collections` — topics, qrels, corpus, MeSH vocabulary
* :mod:`srquery.prompts` — verbatim prompt templates and example selection
* :mod:`srquery.gateway` — chat backends, query extraction, guided sessions
* :mod:`srquery.retrieval` / :mod:`srquery.entrez` — local and PubMed execution
* :mod:`srquery.metrics` / :mod:`srquery.analysis` — evaluation and statistics
* :mod:`srquery.pipeline` / :mod:`srquery.cli` — staged batch orchestration
"""

from .query_ast import Query, parse, serialize, validate

__version__ = "0.1.0"

__all__ = ["Query", "parse", "serialize", "validate", "__version__"]

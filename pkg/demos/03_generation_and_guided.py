# Drive generation against the deterministic mock backend: single-prompt
# generation with retry, and the four-step guided session.

from srquery.collections import ReviewTopic, SeedStudy
from srquery.gateway import (
    BackendConfig,
    MockBackend,
    extract_query,
    generate_with_retry,
    run_guided_session,
)
from srquery.query_ast import extract_mesh_terms, serialize

cfg = BackendConfig(kind="mock", max_retries=3)

# The mock backend scripts responses in order; the first is malformed, so
# the driver retries with a fresh conversation.
backend = MockBackend(script=[
    "I am sorry, I cannot help with that.",
    "Certainly:\n((thyroid[Title/Abstract] OR carcinoma[tiab]) AND screening[tiab])",
])
outcome = generate_with_retry("...rendered q1 prompt would go here...", cfg, backend=backend)
print(f"attempts: {outcome.attempts}")
print(f"query: {serialize(outcome.query)}")
print(f"failures recorded: {outcome.failures}")

# Query extraction works on prose, fenced blocks, or bare queries.
prose = "Here is your query:\n(a[Title/Abstract] AND b[MeSH])\nGood luck!"
print(f"\nextracted from prose: {serialize(extract_query(prose))}")

# The guided session walks four steps in one conversation: identify terms,
# categorize them, assemble a grouped query, refine it with MeSH terms.
topic = ReviewTopic("SR100", "Prevalence of differentiated thyroid cancer in autopsy studies")
seed = SeedStudy(
    pmid="1012",
    title="Autopsy prevalence of differentiated thyroid cancer",
    abstract="Occult papillary carcinomas of the thyroid gland were found in "
             "unselected autopsies, suggesting early stages of development.",
)
script = [
    "1. Differentiated thyroid cancer\n2. Autopsy studies\n3. Occult carcinomas\n4. Prevalence",
    "1. (A) Differentiated thyroid cancer\n2. (C) Autopsy studies\n"
    "3. (A) Occult carcinomas\n4. (N/A) Prevalence",
    "((differentiated[Title/Abstract] OR thyroid[Title/Abstract] OR "
    "carcinoma[Title/Abstract]) AND (autopsy[Title/Abstract]))",
    "((differentiated thyroid cancer[MeSH] OR \"occult carcinoma\"[All Fields]) "
    "AND (autopsy[MeSH] OR autopsies[All Fields]))",
]
outcome = run_guided_session(topic, seed, cfg, backend=MockBackend(script=script))
print(f"\nguided session attempts: {outcome.attempts}")
print(f"final query: {serialize(outcome.query)}")
print(f"MeSH terms added in step 4: {extract_mesh_terms(outcome.query)}")
roles = [m.role for m in outcome.conversation_log.messages]
print(f"conversation roles: {roles}")

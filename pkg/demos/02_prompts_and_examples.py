# Render the formulation and refinement prompts, and pick a related example
# review by lexical similarity.

from srquery.collections import ReviewTopic
from srquery.prompts import (
    ExampleReview,
    PromptBindings,
    dice_score,
    hqe_example,
    render,
    select_related_example,
)

topic = ReviewTopic(
    topic_id="CD900001",
    title="Screening tests for thyroid cancer in adults",
)

# q1 is the simplest prompt: just the review title.
print("--- q1 ---")
print(render("q1", PromptBindings(review_title=topic.title)))

# q4 adds an example review and its published query.  The bundled
# high-quality example is CLEF topic CD010438.
example = hqe_example()
print("\n--- q4 with the bundled high-quality example ---")
q4 = render("q4", PromptBindings(
    review_title=topic.title,
    example_review_title=example.title,
    example_review_query=example.query_text,
))
print(q4[:400] + " ...")

# Related-example selection scores candidate titles against the topic title.
pool = [
    ExampleReview("CD1", "Thyroid cancer screening programmes", "(a[tiab] AND b[tiab])"),
    ExampleReview("CD2", "Ultrasound for liver fibrosis", "(c[tiab] AND d[tiab])"),
    ExampleReview("CD3", "Rapid influenza testing", "(e[tiab] AND f[tiab])"),
]
print("\n--- related-example selection ---")
for candidate in pool:
    print(f"  dice({topic.title!r}, {candidate.title!r}) = "
          f"{dice_score(topic.title, candidate.title):.4f}")
best = select_related_example(topic, pool)
print(f"selected: {best.topic_id} ({best.title})")

# q6 refines an existing query.
print("\n--- q6 ---")
print(render("q6", PromptBindings(
    review_title=topic.title,
    initial_query="(thyroid[Title/Abstract] AND cancer[Title/Abstract])",
)))

# Score retrieval results, test significance, and run the failure-analysis
# protocol on synthetic runs.

from srquery.analysis import (
    RunResult,
    RunSeries,
    bonferroni,
    classify_topic,
    oracle_select,
    paired_t_test,
    retrieved_ratio_stats,
    variability_summary,
)
from srquery.collections import Qrels
from srquery.metrics import Metrics, evaluate_topic, f_beta

# --- set-based metrics ------------------------------------------------------
qrels = Qrels({("T1", "a"): 1, ("T1", "b"): 1, ("T1", "c"): 2})  # graded row counts as relevant
m = evaluate_topic({"a", "b", "x", "y"}, qrels, "T1")
print(f"precision={m.precision:.4f} recall={m.recall:.4f} f1={m.f1:.4f} f3={m.f3:.4f}")
print(f"f_beta weights recall when beta=3: f1={f_beta(0.2, 0.8, 1):.4f} vs f3={f_beta(0.2, 0.8, 3):.4f}")

# --- significance -----------------------------------------------------------
method_a = [0.42, 0.38, 0.51, 0.47, 0.45, 0.40]
method_b = [0.31, 0.30, 0.44, 0.39, 0.33, 0.36]
result = paired_t_test(method_a, method_b)
adjusted = bonferroni(result.p, m=3)  # three method pairs tested
print(f"\npaired t: t={result.t:.4f} p={result.p:.6f} bonferroni(x3)={adjusted:.6f}")

# --- oracle selection over 10 runs and topic classification ------------------
runs = RunSeries("T1", tuple(
    RunResult(i, Metrics(precision=p, recall=r, f1=0, f3=0, retrieved_count=n))
    for i, (p, r, n) in enumerate([
        (0.10, 0.50, 900), (0.20, 0.50, 450), (0.90, 0.40, 40),
        (0.15, 0.62, 800), (0.22, 0.62, 700),
    ])
))
oracle = oracle_select(runs)
print(f"\noracle run: index={oracle.run_index} "
      f"(recall={oracle.metrics.recall}, precision={oracle.metrics.precision})")

original = Metrics(precision=0.12, recall=0.55, f1=0, f3=0, retrieved_count=600)
cls = classify_topic(oracle.metrics, original)
print(f"class vs original: {cls.value}")

medians = retrieved_ratio_stats(
    [(oracle.metrics.retrieved_count, original.retrieved_count)], [cls]
)
print(f"median retrieved-count ratio per class: "
      f"{{ {cls.value}: {medians[cls]:.2f} }}")

# --- across-run variability ---------------------------------------------------
series = [
    RunSeries("T1", tuple(RunResult(i, Metrics(0, r, 0, 0)) for i, r in enumerate([0.4, 0.6, 0.5]))),
    RunSeries("T2", tuple(RunResult(i, Metrics(0, r, 0, 0)) for i, r in enumerate([0.2, 0.3, 0.4]))),
]
summary = variability_summary(series, "recall")
print(f"\nrecall across runs: mean={summary.mean:.4f} variance={summary.variance:.4f} "
      f"variance/mean={summary.variance_to_mean_ratio:.4f}")
for topic_id, (lo, q1, med, q3, hi) in summary.per_topic_quartiles.items():
    print(f"  {topic_id}: min={lo} q1={q1} median={med} q3={q3} max={hi}")

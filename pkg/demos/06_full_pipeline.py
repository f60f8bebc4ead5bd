# The whole pipeline on the bundled three-topic fixture collection with the
# deterministic mock backend: ingest -> formulate -> execute -> evaluate ->
# analyze -> report.  Everything lands in a temporary working directory.
#
# The equivalent CLI session:
#   srquery ingest    --config run.json
#   srquery formulate --config run.json --prompt q4 --example-mode hqe
#   srquery execute   --config run.json
#   srquery evaluate  --config run.json
#   srquery analyze   --config run.json
#   srquery report    --config run.json

import json
import tempfile
from pathlib import Path

from srquery.gateway import BackendConfig
from srquery.pipeline import (
    AppConfig,
    cmd_analyze,
    cmd_evaluate,
    cmd_execute,
    cmd_formulate,
    cmd_ingest,
    cmd_report,
)

FIXTURES = Path(__file__).parent.parent / "tests" / "fixtures" / "collection"

with tempfile.TemporaryDirectory() as tmp:
    work = Path(tmp)
    cfg = AppConfig(
        topics=str(FIXTURES / "topics.jsonl"),
        qrels=str(FIXTURES / "qrels.txt"),
        corpus=str(FIXTURES / "corpus.jsonl"),
        mesh=str(FIXTURES / "mesh.tsv"),
        runlog=str(work / "runlog.jsonl"),
        cache_dir=str(work / "cache"),
        report_dir=str(work / "reports"),
        backend=BackendConfig(kind="mock",
                              fixtures_path=str(FIXTURES / "mock_responses.json")),
        execution_backend="local",
    )

    print("ingest:", cmd_ingest(cfg))
    generated = cmd_formulate(cfg, "q4", "hqe")
    print(f"\nformulated {len(generated)} queries:")
    for record in generated:
        print(f"  {record.topic_id}: {record.query}")

    executed = cmd_execute(cfg)
    print(f"\nexecuted {len(executed)} queries (local index):")
    for record in executed:
        print(f"  {record.run_id}: {record.retrieved_count} docs")

    cmd_evaluate(cfg)
    analysis = cmd_analyze(cfg)
    print("\ntopic classes (q4-hqe oracle vs original):",
          analysis["methods"]["q4-hqe"]["topic_classes"])

    report_path = cmd_report(cfg)
    print(f"\n{report_path.name}:")
    print(report_path.read_text())

    runlog = (work / "runlog.jsonl").read_text().splitlines()
    print(f"run log holds {len(runlog)} append-only records; sample:")
    print(json.dumps(json.loads(runlog[-1]), indent=2, sort_keys=True)[:400])

"""JSON-lines artifact IO.

Every file this package writes starts with a one-line header record
carrying a schema tag, the config hash of the producing run, and the seed.
Readers tolerate missing headers so externally produced files in the same
record schema can be ingested.
"""

from __future__ import annotations

import json
from pathlib import Path

SCHEMA_SCENES = "scenes/v1"
SCHEMA_TRIPLES = "triples/v1"
SCHEMA_INSTANCES = "instances/v1"
SCHEMA_SOFT_LABELS = "soft-labels/v1"
SCHEMA_ORACLE = "oracle-triples/v1"
SCHEMA_CHECKPOINT = "reader-checkpoint/v1"
SCHEMA_REPORT = "pipeline-report/v1"


def dumps_canonical(record: dict) -> str:
    """Compact, key-order-preserving JSON; callers build keys deterministically."""
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def write_jsonl(path, records, schema: str, *, config_hash: str | None = None,
                seed: int | None = None) -> None:
    path = Path(path)
    header: dict = {"schema": schema}
    if config_hash is not None:
        header["config_hash"] = config_hash
    if seed is not None:
        header["seed"] = seed
    lines = [dumps_canonical(header)]
    lines.extend(dumps_canonical(r) for r in records)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_jsonl(path, expect_schema: str | None = None) -> tuple[dict, list[dict]]:
    """Returns (header, records). A file with no header gets header == {}."""
    path = Path(path)
    header: dict = {}
    records: list[dict] = []
    with path.open(encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            if i == 0 and isinstance(rec, dict) and "schema" in rec:
                header = rec
                continue
            records.append(rec)
    if expect_schema is not None and header and header.get("schema") != expect_schema:
        raise ValueError(
            f"{path}: expected schema {expect_schema!r}, found {header.get('schema')!r}")
    return header, records

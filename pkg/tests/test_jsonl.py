import pytest

from stagecue.jsonl import (SCHEMA_TRIPLES, dumps_canonical, read_jsonl,
                            write_jsonl)


def test_round_trip_with_header(tmp_path):
    path = tmp_path / "x.jsonl"
    records = [{"a": 1}, {"a": 2, "b": "ü"}]
    write_jsonl(path, records, SCHEMA_TRIPLES, config_hash="abc123", seed=5)
    header, got = read_jsonl(path, expect_schema=SCHEMA_TRIPLES)
    assert header == {"schema": SCHEMA_TRIPLES, "config_hash": "abc123", "seed": 5}
    assert got == records


def test_header_fields_are_optional(tmp_path):
    path = tmp_path / "x.jsonl"
    write_jsonl(path, [], SCHEMA_TRIPLES)
    header, records = read_jsonl(path)
    assert header == {"schema": SCHEMA_TRIPLES}
    assert records == []


def test_headerless_file_is_tolerated(tmp_path):
    path = tmp_path / "x.jsonl"
    path.write_text('{"a": 1}\n\n{"a": 2}\n', encoding="utf-8")
    header, records = read_jsonl(path, expect_schema=SCHEMA_TRIPLES)
    assert header == {}
    assert records == [{"a": 1}, {"a": 2}]


def test_schema_mismatch_raises(tmp_path):
    path = tmp_path / "x.jsonl"
    write_jsonl(path, [{"a": 1}], "other/v1")
    with pytest.raises(ValueError, match="expected schema"):
        read_jsonl(path, expect_schema=SCHEMA_TRIPLES)


def test_dumps_canonical_is_compact_and_preserves_order():
    assert dumps_canonical({"b": 1, "a": [1, 2]}) == '{"b":1,"a":[1,2]}'
    assert dumps_canonical({"s": "café"}) == '{"s":"café"}'


def test_write_is_byte_stable(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    records = [{"k": i, "v": "x" * i} for i in range(5)]
    write_jsonl(a, records, SCHEMA_TRIPLES, config_hash="c", seed=1)
    write_jsonl(b, records, SCHEMA_TRIPLES, config_hash="c", seed=1)
    assert a.read_bytes() == b.read_bytes()

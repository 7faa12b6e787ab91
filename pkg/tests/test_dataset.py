import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iris_ir import dataset
from iris_ir.dataset import IoTest, SampleRecord
from iris_ir.errors import BuildRejected, MalformedLine, SchemaMismatch
from iris_ir.toolchain import dump_llvm_ir

from conftest import ADD_MAIN
from strategies import corpora
from test_toolchain import NESTED_FUNCTION


def _rec(i, src="int f(void){return 0;}", gimple="g"):
    return SampleRecord(f"local-{i:04d}", "local", src, gimple, "l")


def test_build_pair(add_main_record):
    r = add_main_record
    assert r.id.startswith("local-") and len(r.id) == len("local-") + 12
    assert r.gimple and r.llvm_ir and r.granularity == "translation_unit"


def test_build_rejections(toolchain):
    with pytest.raises(BuildRejected) as info:
        dataset.build_pair(NESTED_FUNCTION, toolchain)
    assert info.value.side == "llvm"
    with pytest.raises(BuildRejected) as info:
        dataset.build_pair("this is not C at all {", toolchain)
    assert info.value.side == "both"
    with pytest.raises(ValueError):
        dataset.build_pair(ADD_MAIN, toolchain, origin="elsewhere")


def test_explode(add_main_record):
    fns = dataset.explode_functions(add_main_record)
    assert [f.meta["function"] for f in fns] == ["add", "main"]
    assert all(f.granularity == "function" and f.meta["standalone"] is False for f in fns)
    assert fns[0].id == add_main_record.id + "/add"
    assert "define dso_local i32 @add(" in fns[0].llvm_ir


def test_explode_empty_unit(toolchain):
    src = "int x = 3;\n"
    with pytest.raises(BuildRejected) as info:
        dataset.build_pair(src, toolchain)
    assert info.value.side == "gimple"
    rec = SampleRecord("local-x", "local", src, "", dump_llvm_ir(src, toolchain))
    assert dataset.explode_functions(rec) == []


def test_explode_reports_clone(add_main_record):
    clone = add_main_record.replace(gimple=add_main_record.gimple.replace("int add (", "int add.part.0 ("))
    report = []
    fns = dataset.explode_functions(clone, report)
    assert [f.meta["function"] for f in fns] == ["main"]
    assert report and report[0]["name"] == "add"


def test_dedup_rules():
    a = _rec(1, "int f(void) { return 0; }")
    b = _rec(2, "int f(void) { return 0; }")
    c = _rec(3, "/* doc */ int f(void)\n{\n  return 0; // zero\n}")
    d = _rec(4, "int f(void) { return 1; }")
    e = _rec(5, "int g(void) { return 0; }")
    assert [r.id for r in dataset.dedup([a, b, c, d, e])] == [a.id, d.id, e.id]


def test_filter_context_arithmetic():
    assert dataset.estimate_tokens("x" * 400) == 100
    small, big, empty = _rec(1, gimple="x" * 400), _rec(2, gimple="x" * 33000), _rec(3, gimple="")
    rejected = []
    kept = dataset.filter_context([small, big, empty], rejected=rejected)
    assert [r.id for r in kept] == [small.id, empty.id]
    assert rejected == [(big.id, 8250)]
    assert len(dataset.filter_context([big], output_factor=0.0)) == 1


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 5000), max_size=20), st.integers(1, 40000), st.integers(0, 40000))
def test_filter_is_monotone(lengths, lo, extra):
    recs = [_rec(i, gimple="x" * n) for i, n in enumerate(lengths)]
    small = {r.id for r in dataset.filter_context(recs, max_tokens=lo)}
    large = {r.id for r in dataset.filter_context(recs, max_tokens=lo + extra)}
    assert small <= large


@settings(max_examples=60, deadline=None)
@given(corpora)
def test_round_trip(tmp_path_factory, recs):
    path = tmp_path_factory.mktemp("c") / "corpus.jsonl"
    manifest = dataset.write_corpus(recs, path)
    assert manifest.record_count == len(recs)
    back = dataset.read_corpus(path)
    assert back == recs
    assert "".join(dataset.dumps_record(r) + "\n" for r in back) == path.read_text()


def test_bytes_survive(tmp_path):
    t = IoTest(b"\xff\x00\xed\xb2\x80\n", b"\x80caf\xc3\xa9")
    r = _rec(1).replace(io_tests=(t,))
    dataset.write_corpus([r], tmp_path / "b")
    assert dataset.read_corpus(tmp_path / "b")[0].io_tests == (t,)


def test_empty_corpus(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    m = dataset.write_corpus([], tmp_path / "empty")
    assert m.record_count == 0 and m.created_at == "1970-01-01T00:00:00+00:00"
    assert (tmp_path / "empty.jsonl").read_text() == ""
    assert dataset.read_corpus(tmp_path / "empty") == []


def test_bare_names_use_corpus_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("IRIS_CORPUS_DIR", str(tmp_path))
    dataset.write_corpus([_rec(1)], "named")
    assert (tmp_path / "named.jsonl").exists() and (tmp_path / "named.manifest").exists()


def test_duplicate_ids_refused(tmp_path):
    with pytest.raises(ValueError):
        dataset.write_corpus([_rec(1), _rec(1)], tmp_path / "dup")


def test_thousand_records_rewrite_identically(tmp_path):
    recs = [_rec(i, src=f"int f{i}(void) {{ return {i}; }}\n") for i in range(1000)]
    dataset.write_corpus(recs, tmp_path / "a")
    dataset.write_corpus(dataset.read_corpus(tmp_path / "a"), tmp_path / "b")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_truncated_last_line(tmp_path):
    dataset.write_corpus([_rec(1), _rec(2)], tmp_path / "t")
    data = tmp_path / "t.jsonl"
    data.write_text(data.read_text()[:-10])
    with pytest.raises(MalformedLine) as info:
        dataset.read_corpus(data)
    assert info.value.line_number == 2


def test_garbage_line(tmp_path):
    dataset.write_corpus([_rec(1)], tmp_path / "g")
    data = tmp_path / "g.jsonl"
    data.write_text(data.read_text() + "{not json}\n")
    with pytest.raises(MalformedLine) as info:
        dataset.read_corpus(data)
    assert info.value.line_number == 2


def test_unknown_schema_version(tmp_path):
    dataset.write_corpus([_rec(1)], tmp_path / "s")
    mp = tmp_path / "s.manifest"
    m = json.loads(mp.read_text())
    m["schema_version"] = 99
    mp.write_text(json.dumps(m))
    with pytest.raises(SchemaMismatch):
        dataset.read_corpus(tmp_path / "s")


@settings(max_examples=60, deadline=None)
@given(corpora)
def test_dedup_idempotent(recs):
    once = dataset.dedup(recs)
    assert dataset.dedup(once) == once


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 120), st.floats(0, 1), st.integers(0, 99))
def test_split_partitions(n, frac, seed):
    recs = [_rec(i) for i in range(n)]
    train, test = dataset.split(recs, frac, seed)
    ids_train, ids_test = {r.id for r in train}, {r.id for r in test}
    assert not ids_train & ids_test
    assert ids_train | ids_test == {r.id for r in recs}
    assert (train, test) == dataset.split(recs, frac, seed)


def test_split_examples():
    recs = [_rec(i) for i in range(100)]
    assert dataset.split(recs, 0.0) == (dataset.split(recs, 0.0)[0], [])
    assert len(dataset.split(recs, 0.0)[0]) == 100
    assert len(dataset.split(recs, 1.0)[1]) == 100
    train, test = dataset.split(recs, 0.2, seed=3)
    assert (len(train), len(test)) == (80, 20)
    with pytest.raises(ValueError):
        dataset.split(recs, 1.5)


def test_io_test_timeout_must_be_positive():
    assert IoTest().timeout_s == 15.0
    with pytest.raises(ValueError):
        IoTest(b"", b"", 0)

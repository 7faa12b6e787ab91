import re
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iris_ir import evalharness as ev
from iris_ir.dataset import IoTest, build_pair
from iris_ir.errors import DomainError, EmptyInput
from iris_ir.evalharness import CandidateResult, EvalTask, SampleCounts, pass_at_k, pass_at_k_exact

from conftest import PROGRAMS, load_program
from oracles import pass_at_k_enumerated
from test_toolchain import FIVE_FUNCTIONS


@pytest.fixture(scope="module")
def add_sample(toolchain):
    src, tests, wrapper = load_program(PROGRAMS / "w01_add.c")
    return build_pair(src, toolchain, io_tests=tests, wrapper_cpp=wrapper)


def off_by_one(ir: str) -> str:
    """Make @add return a+b+1 using a named value so numbering stays valid."""
    return re.sub(r"  ret i32 %7\n", "  %wrong = add nsw i32 %7, 1\n  ret i32 %wrong\n", ir, count=1)


@pytest.mark.parametrize("n,c,k,expected", [(3, 3, 1, Fraction(1)), (3, 1, 1, Fraction(1, 3)), (4, 2, 2, Fraction(5, 6))])
def test_pass_at_k_examples(n, c, k, expected):
    assert pass_at_k_exact(n, c, k) == expected
    assert pass_at_k(n, c, k) == float(expected)


@pytest.mark.parametrize("args", [(3, 4, 1), (3, -1, 1), (3, 1, 0), (3, 1, 4), (3.0, 1, 1)])
def test_pass_at_k_domain(args):
    with pytest.raises(DomainError):
        pass_at_k(*args)


def test_pass_at_k_matches_enumeration():
    for n in range(1, 7):
        for c in range(n + 1):
            for k in range(1, n + 1):
                assert pass_at_k_exact(n, c, k) == pass_at_k_enumerated(n, c, k)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 60).flatmap(lambda n: st.tuples(st.just(n), st.integers(0, n), st.integers(1, n))))
def test_pass_at_k_monotone(nck):
    n, c, k = nck
    p = pass_at_k_exact(n, c, k)
    assert 0 <= p <= 1
    if k < n:
        assert pass_at_k_exact(n, c, k + 1) >= p
    if c < n:
        assert pass_at_k_exact(n, c + 1, k) >= p


def _results(sid, flags):
    """flags: iterable of (compiled, linked, io_passed) per candidate."""
    return [CandidateResult(sid, i, *f) for i, f in enumerate(flags)]


def test_aggregate_examples():
    ok, bad = (True, True, True), (True, True, False)
    rep = ev.aggregate(_results("a", [ok] * 3) + _results("b", [bad] * 3))
    assert rep.io_rate_pct == 50.0 and rep.compile_rate_pct == 100.0 and rep.n_per_sample == 3
    assert rep.pass_at == {1: 0.5}
    with pytest.raises(EmptyInput):
        ev.aggregate([])


def test_mixed_candidate_counts():
    rep = ev.aggregate_counts([SampleCounts("a", 3, 3, 3, 1), SampleCounts("b", 2, 1, 1, 1)], k_values=(1, 3))
    assert rep.n_per_sample is None
    assert rep.pass_at[1] == pytest.approx((1 / 3 + 1 / 2) / 2)
    assert rep.pass_at[3] == 1.0  # only sample a has 3 candidates


def test_report_serializes():
    rep = ev.aggregate(_results("a", [(True, True, True), (False, False, False)]), k_values=(1, 2))
    d = rep.to_dict()
    assert d["pass_at"] == {"1": 0.5, "2": 1.0}
    assert d["per_sample"] == [{"sample_id": "a", "n": 2, "c_compile": 1, "c_link": 1, "c_io": 1}]
    assert "I/O test (%)" in rep.format_table()


def test_candidate_result_round_trip():
    r = CandidateResult("s", 1, True, True, False, (ev.TestOutcome(False, 0.1, None),), "[io] test 0: timeout")
    assert CandidateResult.from_dict(r.to_dict()) == r
    assert r.failing_tests == [0]


def test_stdout_normalization():
    assert ev.outputs_match(b"1 \r\n2\t\n\n\n", b"1\n2")
    assert not ev.outputs_match(b"1\n\n2\n", b"1\n2\n")
    assert not ev.outputs_match(b" 1\n", b"1\n")


def test_ground_truth_passes(toolchain, add_sample):
    task = EvalTask.for_sample(add_sample)
    assert task.mode == "wrapper"
    res = ev.evaluate_candidate(add_sample.llvm_ir, task, toolchain)
    assert (res.compiled, res.linked, res.io_passed) == (True, True, True)
    assert ev.validate_ground_truth(task, toolchain)


def test_wrong_constant_fails_io(toolchain, add_sample):
    mutated = off_by_one(add_sample.llvm_ir)
    assert mutated != add_sample.llvm_ir
    res = ev.evaluate_candidate(mutated, EvalTask.for_sample(add_sample), toolchain)
    assert (res.compiled, res.linked, res.io_passed) == (True, True, False)
    assert res.failing_tests == [0]


def test_empty_ir(toolchain, add_sample):
    res = ev.evaluate_candidate("", EvalTask.for_sample(add_sample), toolchain)
    assert not res.compiled and not res.linked and res.diagnostics.startswith("[llc]")


def test_missing_symbol_fails_at_link(toolchain, add_sample):
    broken = add_sample.replace(wrapper_cpp='extern "C" int sub(int, int);\nint main() { return sub(1, 1); }\n')
    res = ev.evaluate_candidate(broken.llvm_ir, EvalTask.for_sample(broken), toolchain)
    assert res.compiled and not res.linked and res.diagnostics.startswith("[link]")
    assert not ev.validate_ground_truth(EvalTask.for_sample(broken), toolchain)


def test_whole_program_needs_main(toolchain, add_sample):
    task = EvalTask(add_sample.replace(wrapper_cpp=None), "whole_program")
    res = ev.evaluate_candidate(add_sample.llvm_ir, task, toolchain)
    assert res.compiled and not res.linked


def test_timeout_fails_validation(toolchain):
    rec = build_pair("int main(void) { for (;;); }\n", toolchain, io_tests=[IoTest(b"", b"", timeout_s=0.5)])
    res = ev.evaluate_candidate(rec.llvm_ir, EvalTask.for_sample(rec), toolchain)
    assert res.linked and not res.io_passed
    assert res.per_test[0].exit_code is None and res.diagnostics == "[io] test 0: timeout"


def test_nonzero_exit_fails_even_with_matching_stdout(toolchain):
    src = '#include <stdio.h>\nint main(void) { puts("hi"); return 1; }\n'
    rec = build_pair(src, toolchain, io_tests=[IoTest(b"", b"hi\n")])
    res = ev.evaluate_candidate(rec.llvm_ir, EvalTask.for_sample(rec), toolchain)
    assert not res.io_passed and res.per_test[0].exit_code == 1


def test_wrapper_task_validation(add_sample):
    with pytest.raises(ValueError):
        EvalTask(add_sample.replace(wrapper_cpp=None), "wrapper")
    with pytest.raises(ValueError):
        EvalTask(add_sample, "mystery")


def test_build_wrapper_blocks(toolchain, add_sample):
    text = ev.build_wrapper(EvalTask.for_sample(add_sample), toolchain)
    assert text.startswith('extern "C" {\nint add(int a, int b);\n}\n')
    assert text.endswith(add_sample.wrapper_cpp)
    empty = add_sample.replace(c_source="/* nothing */\n")
    assert ev.build_wrapper(EvalTask.for_sample(empty), toolchain).startswith('extern "C" {\n}\n')


def test_declaration_names_match_definitions(toolchain):
    block = ev.declaration_block(FIVE_FUNCTIONS, toolchain)
    funcs = re.findall(r"\b(\w+)\([^;]*\);", block)
    assert [f for f in funcs if f != "handler"] == ["sq", "twice", "dup", "flag"]

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iris_ir import irparse
from iris_ir.errors import DuplicateSymbol, EmptyDump, EmptyModule, UnbalancedBraces

GIMPLE = """;; Function add (add, funcdef_no=0, decl_uid=1, cgraph_uid=1, symbol_order=0)

int add (int a, int b)
{
  int D.1951;

  D.1951 = a + b;
  return D.1951;
}


int main ()
{
  int D.1953;

  {
    const char * s;

    s = "}{";
    D.1953 = add (2, 3);
    return D.1953;
  }
}
"""

LLVM = """; ModuleID = 'input.c'
source_filename = "input.c"

@.str = private unnamed_addr constant [3 x i8] c"}{\\00", align 1

; Function Attrs: noinline nounwind
define dso_local i32 @add(i32 noundef %0, i32 noundef %1) #0 {
  %3 = add nsw i32 %0, %1
  ret i32 %3
}

; Function Attrs: noinline nounwind
define dso_local i32 @main() #0 {
  %1 = call i32 @add(i32 noundef 2, i32 noundef 3)
  ret i32 %1
}

declare i32 @puts(i8* noundef)

attributes #0 = { noinline nounwind }
"""

C_SRC = "int add(int a, int b) { return a + b; }\nint main(void) { return add(2, 3); }\n"


def test_gimple_split():
    fns = irparse.parse_gimple_dump(GIMPLE)
    assert [f.name for f in fns] == ["add", "main"]
    assert fns[0].header == "int add (int a, int b)"
    for f in fns:
        a, b = f.byte_span
        assert GIMPLE[a:b] == f.body
        assert f.body.rstrip().endswith("}")
    assert '"}{"' in fns[1].body  # braces inside strings do not end the body


def test_gimple_errors():
    with pytest.raises(EmptyDump):
        irparse.parse_gimple_dump("  \n")
    with pytest.raises(UnbalancedBraces):
        irparse.parse_gimple_dump("int f ()\n{\n  return 0;\n")
    with pytest.raises(UnbalancedBraces):
        irparse.parse_gimple_dump("}\n")


def test_llvm_split_and_exact_rebuild():
    prelude, fns = irparse.parse_llvm_module(LLVM)
    assert [f.symbol for f in fns] == ["add", "main"]
    assert fns[0].define_header.startswith("define dso_local i32 @add(")
    assert prelude.declare_lines() == ["declare i32 @puts(i8* noundef)"]
    assert irparse.rebuild_module(prelude, fns) == LLVM


def test_llvm_errors():
    with pytest.raises(EmptyModule):
        irparse.parse_llvm_module("")
    with pytest.raises(UnbalancedBraces):
        irparse.parse_llvm_module("define i32 @f() {\n  ret i32 0\n")
    prelude, fns = irparse.parse_llvm_module("; only a comment\n")
    assert fns == [] and prelude.header_text.startswith("; only")


def test_quoted_llvm_symbol():
    _, fns = irparse.parse_llvm_module('define void @"odd name"() {\n  ret void\n}\n')
    assert fns[0].symbol == "odd name"


def test_alignment_pairs_by_symbol():
    triplets = irparse.align_functions(
        irparse.parse_gimple_dump(GIMPLE),
        irparse.parse_llvm_module(LLVM)[1],
        irparse.extract_c_functions(C_SRC),
        origin="t",
    )
    assert [t.gimple_function.name for t in triplets] == ["add", "main"]
    assert triplets[0].c_function.startswith("int add(")
    assert triplets[0].llvm_function.symbol == "add"


def test_clone_is_excluded_with_one_report_entry():
    dump = GIMPLE.replace("int add (int a, int b)", "int add.constprop.0 (int a, int b)")
    report = []
    triplets = irparse.align_functions(
        irparse.parse_gimple_dump(dump),
        irparse.parse_llvm_module(LLVM)[1],
        irparse.extract_c_functions(C_SRC),
        report=report,
    )
    assert [t.gimple_function.name for t in triplets] == ["main"]
    assert report == [{"name": "add", "side": "gimple", "reason": "only compiler clone add.constprop.0 present"}]


def test_unmatched_names_are_reported():
    report = []
    irparse.align_functions(irparse.parse_gimple_dump(GIMPLE), [], [("add", "int add(){}")], report=report)
    reasons = {(r["name"], r["reason"]) for r in report}
    assert ("add", "missing") in reasons
    assert ("main", "no C counterpart") in reasons


def test_leading_underscore_is_normalized():
    _, fns = irparse.parse_llvm_module("define i32 @_add() {\n  ret i32 0\n}\n")
    gimple = irparse.parse_gimple_dump("int add ()\n{\n  return 0;\n}\n")
    assert len(irparse.align_functions(gimple, fns, [("add", "int add(){return 0;}")])) == 1


def test_duplicate_symbol():
    g = irparse.parse_gimple_dump("int f ()\n{\n}\nint f ()\n{\n}\n")
    with pytest.raises(DuplicateSymbol):
        irparse.align_functions(g, [], [])


def test_is_clone():
    assert irparse.is_clone("foo.part.1") and irparse.is_clone("bar.isra.0") and irparse.is_clone("baz.cold")
    assert not irparse.is_clone("plain")


@settings(max_examples=60, deadline=None)
@given(st.lists(st.sampled_from(["a", "bb", "c_d", "e9"]), min_size=1, max_size=4, unique=True))
def test_generated_modules_round_trip(names):
    body = "".join(f"\ndefine i32 @{n}() #0 {{\n  ret i32 {i}\n}}\n" for i, n in enumerate(names))
    module = "; ModuleID = 'x'\n" + body + "\nattributes #0 = { nounwind }\n"
    prelude, fns = irparse.parse_llvm_module(module)
    assert [f.symbol for f in fns] == names
    assert irparse.rebuild_module(prelude, fns) == module

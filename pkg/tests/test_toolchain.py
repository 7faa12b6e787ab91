import subprocess

import pytest

from iris_ir import toolchain as tc_mod
from iris_ir.errors import ConfigError, IrRejected, LinkFailure, ToolFailure, ToolMissing
from iris_ir.toolchain import (
    ToolchainConfig,
    build_native,
    check_compiles_both,
    compile_ir_to_object,
    dump_gimple,
    dump_llvm_ir,
    extract_declarations,
    link_executable,
    link_with_wrapper,
    source_declarations,
)

from conftest import ADD_MAIN

NESTED_FUNCTION = """int outer(int x)
{
    int inner(int y) { return y * 2; }
    return inner(x);
}
"""


def test_resolve_finds_host_tools(toolchain):
    assert toolchain.gcc_path and toolchain.clang_path and toolchain.clangxx_path


def test_resolve_reports_missing_tool(monkeypatch, tmp_path):
    monkeypatch.setenv("PATH", str(tmp_path))
    monkeypatch.setenv("IRIS_TOOLCHAIN_DIR", str(tmp_path))
    with pytest.raises(ToolMissing):
        ToolchainConfig.resolve()


def test_unknown_frontend_is_a_config_error():
    with pytest.raises(ConfigError):
        ToolchainConfig.resolve(frontend_language="cobol")


def test_dumps_have_both_functions(toolchain):
    gimple = dump_gimple(ADD_MAIN, toolchain)
    assert "int add (int a, int b)" in gimple
    llvm = dump_llvm_ir(ADD_MAIN, toolchain)
    assert "define dso_local i32 @add(" in llvm and "@main(" in llvm
    assert "/tmp" not in llvm  # temp paths are scrubbed


def test_gcc_only_extension_is_rejected_by_clang(toolchain):
    assert dump_gimple(NESTED_FUNCTION, toolchain)
    with pytest.raises(ToolFailure):
        dump_llvm_ir(NESTED_FUNCTION, toolchain)
    assert not check_compiles_both(NESTED_FUNCTION, toolchain)
    assert check_compiles_both(ADD_MAIN, toolchain)


def test_object_and_link(toolchain, tmp_path):
    obj = compile_ir_to_object(dump_llvm_ir(ADD_MAIN, toolchain), toolchain, tmp_path)
    exe = link_executable([obj], toolchain, tmp_path)
    assert subprocess.run([str(exe)]).returncode == 5


def test_bad_ir_is_rejected(toolchain, tmp_path):
    with pytest.raises(IrRejected):
        compile_ir_to_object("", toolchain, tmp_path)
    with pytest.raises(IrRejected):
        compile_ir_to_object("define i32 @f( {\n", toolchain, tmp_path)


def test_wrapper_link_failure(toolchain, tmp_path):
    ir = dump_llvm_ir("int f(void) { return 1; }\n", toolchain)
    obj = compile_ir_to_object(ir, toolchain, tmp_path)
    wrapper = 'extern "C" int g(void);\nint main() { return g(); }\n'
    with pytest.raises(LinkFailure):
        link_with_wrapper(obj, wrapper, toolchain, tmp_path)


def test_native_build(toolchain, tmp_path):
    exe = build_native(ADD_MAIN, toolchain, tmp_path)
    assert subprocess.run([str(exe)]).returncode == 5


FIVE_FUNCTIONS = """#include <string.h>
static int counter = 0;
const char *const names[] = {"a", "b"};
int table[4];
void (*handler)(int);
int sq(int v) { return v * v; }
static inline int twice(int v) { return 2 * v; }
char *dup(const char *restrict s, int new) { (void)new; return strdup(s); }
_Bool flag(void) { return 1; }
int main(void) { return sq(twice(1)) - 4; }
"""


def test_source_declarations_cover_every_definition():
    decls = source_declarations(FIVE_FUNCTIONS)
    by_name = {name: text for name, _, _, text in decls}
    assert [n for n, kind, *_ in decls if kind == "function"] == ["sq", "twice", "dup", "flag", "main"]
    assert by_name["sq"] == "int sq(int v);"
    assert by_name["twice"] == "int twice(int v);"
    assert by_name["dup"] == "char *dup(const char * __restrict s, int new_);"
    assert by_name["flag"] == "bool flag(void);"
    assert by_name["counter"] == "extern int counter;"
    assert by_name["names"] == "extern const char * const names[];"
    assert by_name["table"] == "extern int table[4];"
    assert by_name["handler"] == "extern void (*handler)(int);"


def test_declaration_block_compiles_as_cxx(toolchain, tmp_path):
    decls = extract_declarations(FIVE_FUNCTIONS, toolchain)
    body = "\n".join(d for d in decls if "main(" not in d)
    (tmp_path / "w.cpp").write_text('extern "C" {\n' + body + "\n}\nint main() { return sq(3) - 9; }\n")
    proc = subprocess.run([toolchain.clangxx_path, "-fsyntax-only", "w.cpp"], cwd=tmp_path, capture_output=True)
    assert proc.returncode == 0, proc.stderr.decode()


def test_run_tool_reports_missing_binary(tmp_path):
    with pytest.raises(ToolMissing):
        tc_mod.run_tool([str(tmp_path / "nope")], tmp_path, 5)

"""
From C to GIMPLE to LLVM IR and back to a binary
=================================================

The smallest useful program: ``main`` returns ``add(2, 3)``. We dump both
compiler IRs, split them into functions, line the functions up, and then
push the GIMPLE through the oracle backend to get a runnable executable.
"""

import subprocess
import tempfile

from iris_ir import dataset, irparse, translate
from iris_ir.toolchain import ToolchainConfig, tool_versions

SOURCE = """int add(int a, int b)
{
    return a + b;
}

int main(void)
{
    int x = add(2, 3);
    return x;
}
"""

cfg = ToolchainConfig.resolve()
print(tool_versions(cfg))

# one record holds the source plus both dumps
rec = dataset.build_pair(SOURCE, cfg)
print(rec.id)
print(rec.gimple)

# GIMPLE is three-address code: a + b lands in a compiler temporary
for line in rec.gimple.splitlines():
    if "= a + b" in line:
        print("temporary:", line.strip())

prelude, llvm_fns = irparse.parse_llvm_module(rec.llvm_ir)
for fn in llvm_fns:
    print(fn.define_header)

# the module rebuilds byte for byte from its pieces
assert irparse.rebuild_module(prelude, llvm_fns) == rec.llvm_ir

triplets = irparse.align_functions(
    irparse.parse_gimple_dump(rec.gimple), llvm_fns, irparse.extract_c_functions(SOURCE), origin=rec.id
)
for t in triplets:
    print(t.gimple_function.name, "->", t.llvm_function.symbol)

# the oracle backend answers with the ground-truth IR
backend = translate.OracleBackend([rec])
with tempfile.TemporaryDirectory() as tmp:
    result = translate.run_end_to_end(SOURCE, backend, cfg, workdir=tmp)
    for step in result.trace:
        print(step["stage"], "ok" if step["ok"] else "failed")
    status = subprocess.run([str(result.executable)]).returncode

print("exit status:", status)  # 5

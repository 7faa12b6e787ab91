"""
Published leaderboard, sorted by model size
===========================================

Feed reported compile and I/O rates in, get the table back ordered by
parameter count plus log-scaled scatter points.
"""

import json
from pathlib import Path

from iris_ir import analysis

FIXTURES = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

for bench in ("codeforces", "exebench"):
    rows = json.loads((FIXTURES / f"leaderboard_{bench}.json").read_text())
    table, scatter = analysis.leaderboard([(r["model"], r["params_billions"], r) for r in rows])
    print(bench)
    for row, (x, y) in zip(table, scatter):
        print(f"  {row.model:<24} {row.params_billions:7.0f}B  log10={x:.4f}  compile={row.compile_rate_pct:6.2f}  io={y:6.2f}")

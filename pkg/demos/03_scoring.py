"""
pass@k and the evaluation report
================================

The estimator is ``1 - C(n-c, k) / C(n, k)``. With three candidates per
sample, pass@1 is just the fraction of candidates that pass.
"""

import json
from fractions import Fraction
from itertools import combinations
from pathlib import Path

from iris_ir.evalharness import CandidateResult, aggregate, pass_at_k_exact

HERE = Path(__file__).resolve().parent

# the full table for n = 3
for c in range(4):
    print(c, [str(pass_at_k_exact(3, c, k)) for k in (1, 2, 3)])

# check one entry the slow way: 4 candidates, 2 correct, draw 2
subsets = list(combinations(range(4), 2))
hits = sum(any(i < 2 for i in s) for s in subsets)
print(Fraction(hits, len(subsets)), pass_at_k_exact(4, 2, 2))

fixture = json.loads((HERE.parent / "tests" / "fixtures" / "mixed_five_samples.json").read_text())
results = [CandidateResult(**row) for row in fixture["candidates"]]
report = aggregate(results, k_values=(1, 2, 3))
print(report.format_table())

for s in report.per_sample:
    print(s.sample_id, s.n, s.c_compile, s.c_link, s.c_io)

# a candidate cannot pass I/O without compiling first
assert report.io_rate_pct <= report.compile_rate_pct

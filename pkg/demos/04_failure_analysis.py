"""
Which code features go with failed translations
===============================================

Synthetic outcomes: records with loops or pointer arithmetic fail more
often. The conditional rates should recover that, and the line-count
densities of the two populations should separate.
"""

import numpy as np

from iris_ir import analysis
from iris_ir.cmetrics import StaticMetrics, feature_flags

rng = np.random.default_rng(3)

records = []
for i in range(400):
    loops = int(rng.poisson(1.5))
    ptr = int(rng.poisson(0.7))
    loc = int(rng.integers(5, 40) + 12 * loops + 8 * ptr)
    m = StaticMetrics(loops=loops, pointer_arith_ops=ptr, lines_of_code=loc, conditionals=int(rng.poisson(2)))
    p_fail = 0.1 + 0.15 * (loops > 0) + 0.3 * (ptr > 0)
    outcome = "failure" if rng.random() < p_fail else "success"
    records.append(analysis.FailureRecord(f"s{i}", feature_flags(m), m, outcome))

rates = analysis.conditional_failure_rates(records)
print(analysis.format_rates(rates))

# the two planted features lead the ranking
print([r.feature for r in rates[:2]])

dist = analysis.metric_distributions(records, "lines_of_code")
widths = np.diff(dist.edges)
print(len(widths), "bins")
print("success mass:", float((dist.density_success * widths).sum()))
print("failure mass:", float((dist.density_failure * widths).sum()))

centers = (dist.edges[:-1] + dist.edges[1:]) / 2
print("mean loc, success:", float((centers * dist.density_success * widths).sum()))
print("mean loc, failure:", float((centers * dist.density_failure * widths).sum()))

print(analysis.threshold_summary(records, "lines_of_code", 50))

"""
Static metrics and picking diverse submissions
===============================================

Every fixture program gets its lexical counters. Then we pretend the
programs are submissions to one problem and keep three of them, one per
k-means cluster in z-scored feature space.
"""

from pathlib import Path

import numpy as np

from iris_ir import cmetrics, selection
from iris_ir.dataset import SampleRecord

HERE = Path(__file__).resolve().parent
PROGRAMS = HERE.parent / "tests" / "fixtures" / "programs"

records = []
for path in sorted(PROGRAMS.glob("p*.c")):
    src = path.read_text()
    m = cmetrics.analyze_c(src)
    records.append(SampleRecord(path.stem, "local", src, "", "", static_metrics=m))

names = [f.name for f in cmetrics.StaticMetrics.__dataclass_fields__.values()]
table = np.array([[getattr(r.static_metrics, n) for n in names] for r in records])
print(table.shape)

# a few columns, one row per program
for r, row in zip(records, table):
    print(f"{r.id:<22} loc={row[names.index('lines_of_code')]:3d} loops={row[names.index('loops')]} depth={row[names.index('nesting_depth')]}")

# which constructs show up anywhere in the set
flags = np.array([list(cmetrics.feature_flags(r.static_metrics).values()) for r in records])
print(dict(zip(cmetrics.FLAG_FEATURES, flags.sum(axis=0).tolist())))

vectors = [cmetrics.feature_vector(r.static_metrics, None, "static13") for r in records]
normed, stats = selection.zscore_normalize(vectors)
print("dropped dims:", [i for i, d in enumerate(stats.dropped) if d])

model = selection.kmeans(normed, k=3, seed=0)
print("inertia per Lloyd step:", [round(v, 3) for v in model.inertia_history])
for j in range(model.k):
    print(j, [records[i].id for i in model.members(j)])

chosen = selection.select_submissions(records, k=3, seed=0, schema_id="static13")
print("representatives:", [r.id for r in chosen])

# same seed, same answer
assert [r.id for r in selection.select_submissions(records, k=3, seed=0, schema_id="static13")] == [r.id for r in chosen]

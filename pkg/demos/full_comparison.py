"""
The day-versus-vector comparison grid
=====================================

The same experiment as ``churnvec generate/extract/label/compare`` with
the default config, driven from Python. Takes about 17 minutes; pass a
smaller replicate count on the command line to shorten it, e.g.
``python3 demos/full_comparison.py 1``.
"""

import sys
from pathlib import Path

from churnvec.eval import ComparisonConfig, direction_summary, emit_report, prepare_dataset, run_comparison
from churnvec.eventlog import build_timelines
from churnvec.features import assemble_feature_rows, compute_daily_records
from churnvec.labels import label_dataset, split_by_user
from churnvec.models import Task
from churnvec.synthgen import CohortConfig, generate_cohort

n_seeds = int(sys.argv[1]) if len(sys.argv) > 1 else 5

events, _ = generate_cohort(CohortConfig())
timelines = build_timelines(events)
rows = assemble_feature_rows(compute_daily_records(timelines, 240))
data = prepare_dataset(split_by_user(label_dataset(timelines, rows), rng_seed=0), rows)
print(f"matched vector threshold {data.tau:.4f}; rows {data.sizes()}")

report = run_comparison(data, ComparisonConfig(seeds=tuple(range(n_seeds))), log=print)

for task in Task:
    print(f"\n{task.value} (median over {n_seeds} seeds)")
    for family, (day, vector) in direction_summary(report, task).items():
        if day is None or vector is None:
            print(f"  {family:12s} skipped")
            continue
        mark = "vector" if vector >= day else "day"
        print(f"  {family:12s} day {day:.4f}  vector {vector:.4f}  -> {mark}")

out = Path("comparison_out")
for path in emit_report(report, out):
    print("wrote", path)

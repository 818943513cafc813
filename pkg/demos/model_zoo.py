"""
Ten estimator families on one dataset
=====================================

Fit every family with its default hyperparameters on a small cohort and
score both targets on the held-out users.
"""

import time

from churnvec.eval import prepare_dataset, regression_metrics
from churnvec.eventlog import build_timelines
from churnvec.features import assemble_feature_rows, compute_daily_records
from churnvec.labels import Split, Target, label_dataset, split_by_user
from churnvec.models import FAMILY_ORDER, EstimatorSpec, Task, fit, predict
from churnvec.synthgen import CohortConfig, generate_cohort

events, _ = generate_cohort(CohortConfig(n_users=250, rng_seed=2))
timelines = build_timelines(events)
rows = assemble_feature_rows(compute_daily_records(timelines, 240))
examples = split_by_user(label_dataset(timelines, rows), rng_seed=0)

# Standardized tabular rows and 20-day windows, censored rows dropped.
data = prepare_dataset(examples, rows, window=20)
train, test = data.split(Split.TRAIN), data.split(Split.TEST)
print("rows per split:", data.sizes())

# Regression R^2 on days remaining and on the churn vector.
for family in FAMILY_ORDER:
    start = time.perf_counter()
    r2 = []
    for target in Target:
        model = fit(EstimatorSpec(family, Task.REGRESSION, rng_seed=0),
                    train.inputs(family), train.target(target, Task.REGRESSION))
        y = test.target(target, Task.REGRESSION)
        r2.append(regression_metrics(y, predict(model, test.inputs(family)).values).r2)
    print(f"{family.value:12s} day {r2[0]:6.3f}  vector {r2[1]:6.3f}  ({time.perf_counter() - start:.1f}s)")

import pytest

from churnvec.eval import prepare_dataset
from churnvec.eventlog import build_timelines
from churnvec.features import assemble_feature_rows, compute_daily_records
from churnvec.labels import label_dataset, split_by_user
from churnvec.synthgen import CohortConfig, generate_cohort


def build_dataset(n_users=150, seed=3, window=8):
    events, _ = generate_cohort(CohortConfig(n_users=n_users, rng_seed=seed))
    tls = build_timelines(events)
    rows = assemble_feature_rows(compute_daily_records(tls, 240))
    examples = split_by_user(label_dataset(tls, rows), rng_seed=seed)
    return prepare_dataset(examples, rows, window=window)


@pytest.fixture(scope="session")
def small_dataset():
    return build_dataset()


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from procoutcome.eventlog import CATEGORICAL, RANGE, Case, Event, EventLog, Feature, FeatureSchema  # noqa: E402
from procoutcome.experiments import SyntheticLogSpec, generate_synthetic_log, synthetic_rule  # noqa: E402
from procoutcome.models import ModelConfig  # noqa: E402
from procoutcome.pipeline import prepare  # noqa: E402
from procoutcome.prefixes import window_log  # noqa: E402
from procoutcome.training import shuffle_split, train  # noqa: E402

SANITY_SEQ_LEN = 15
SANITY_CONFIGS = {
    "lstm": ModelConfig("lstm", seq_len=SANITY_SEQ_LEN, seed=1, max_epochs=30),
    "lstm_attention": ModelConfig("lstm_attention", seq_len=SANITY_SEQ_LEN, seed=1, max_epochs=30),
    # kernel 2 keeps both conv outputs even, so pooling never drops the newest window
    "cnn": ModelConfig("cnn", seq_len=SANITY_SEQ_LEN, kernel_size=2, seed=1, max_epochs=30),
}


def simple_schema(extra=()):
    feats = [Feature("activity", CATEGORICAL), *extra]
    return FeatureSchema(tuple(feats), "case_id", "timestamp", "activity", timestamp_format="epoch")


def make_log(spec, schema=None):
    """Log from ``{case_id: [(timestamp, activity), ...]}``."""
    schema = schema or simple_schema()
    cases = []
    row = 0
    for cid, evs in spec.items():
        events = []
        for ts, act in evs:
            events.append(Event(cid, ts, {"activity": act}, row))
            row += 1
        cases.append(Case(cid, events))
    return EventLog(schema, tuple(cases))


@pytest.fixture(scope="session")
def sanity_raw():
    """2,000 cases; positive iff activity X occurs within the first 3 events; 40% positive."""
    return generate_synthetic_log(SyntheticLogSpec(n_cases=2000, positive_rate=0.4, seed=7))


@pytest.fixture(scope="session")
def sanity_prepared(sanity_raw):
    return prepare(sanity_raw, synthetic_rule(), 0.2)


@pytest.fixture(scope="session")
def sanity_split(sanity_prepared):
    tr, va = shuffle_split(sanity_prepared.pool, 0.8, seed=1)
    return (window_log(tr, SANITY_SEQ_LEN), window_log(va, SANITY_SEQ_LEN),
            window_log(sanity_prepared.test, SANITY_SEQ_LEN))


@pytest.fixture(scope="session")
def sanity_runs(sanity_split):
    train_ds, val_ds, _ = sanity_split
    return {kind: train(cfg, train_ds, val_ds) for kind, cfg in SANITY_CONFIGS.items()}


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)

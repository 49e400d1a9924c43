from pathlib import Path

import pytest

from csgm.graph import Edge, Party, TransactionGraph, split_views
from csgm.synth import GenConfig, generate

DATA = Path(__file__).parent / "data"


def views_from(edges, owner):
    """Build both views from (src, dst, amount_cents) triples and an owner map."""
    full = TransactionGraph.from_edges([Edge(s, d, a, False) for s, d, a in edges], nodes=owner)
    return split_views(full, {n: Party(p) for n, p in owner.items()})


@pytest.fixture(scope="session")
def small_dataset():
    cfg = GenConfig(num_accounts=1500, background_edges=900, num_groups=8, seed=11)
    return generate(cfg)


# acceptance criteria register their verdict lines here; printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

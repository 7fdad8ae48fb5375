from pathlib import Path

import pytest

from gnnppi.data import Dataset, PpiGraph, parse_interactions, parse_sequences

FIXTURES = Path(__file__).parent / "fixtures"

# A=0 B=1 C=2 D=3 E=4; edges AB=0 BC=1 CD=2 DE=3 BD=4
TRACE_PAIRS = [(0, 1), (1, 2), (2, 3), (3, 4), (1, 3)]


@pytest.fixture
def trace_graph() -> PpiGraph:
    return PpiGraph.from_pairs(5, TRACE_PAIRS)


@pytest.fixture
def trace_dataset() -> Dataset:
    inter, prot = parse_interactions((FIXTURES / "trace.tsv").read_text())
    seqs, _ = parse_sequences((FIXTURES / "trace.fasta").read_text())
    return Dataset(prot.with_sequences(seqs), inter)


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES

import os

import pytest

from resodrive import corpus
from resodrive.netlist import parse
from resodrive.trapfield import TrapGeometry, build_trap_model


@pytest.fixture(scope="session")
def two_tank():
    return parse(corpus.load("two_tank.cir"))


@pytest.fixture(scope="session")
def drive_chain():
    return parse(corpus.load("drive_chain.cir"))


@pytest.fixture(scope="session")
def trap_model():
    """Default trap geometry at the default mesh (the expensive solve, done once)."""
    return build_trap_model(TrapGeometry())


@pytest.fixture(scope="session")
def trap_model_fine():
    return build_trap_model(TrapGeometry(panels_per_electrode=800))


# sample-level parallelism; results are identical for any thread count
os.environ.setdefault("RESODRIVE_THREADS", str(min(8, os.cpu_count() or 1)))

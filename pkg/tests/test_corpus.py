import json
from pathlib import Path

import pytest

from resodrive import analysis, corpus, geometry as geo
from resodrive.netlist import parse

GOLDEN = Path(__file__).parent / "golden"


@pytest.mark.parametrize("name", corpus.FILES)
def test_bundled_files_in_sync(name):
    assert corpus.load(name) == corpus.GENERATORS[name]()


def test_regenerate_writes_all(tmp_path):
    written = corpus.regenerate(tmp_path)
    assert sorted(p.name for p in written) == sorted(corpus.FILES)
    for p in written:
        assert p.read_text() == corpus.load(p.name)


def test_unknown_bundled_file():
    with pytest.raises(KeyError):
        corpus.path("nope.cir")


def test_drive_chain_corpus_parses():
    n = parse(corpus.load("drive_chain.cir"))
    assert n.ports and n.sweep is not None
    assert {"V1", "V3"} <= set(n.probes)


def stage_lower_resonances():
    n = parse(corpus.load("drive_chain.cir"))
    return [analysis.lower_resonance(geo.stage_netlist(n, s)).frequency for s in ("bare", "biastee", "trap")]


def test_stage_shifts_match_golden():
    golden = json.loads((GOLDEN / "stage_shifts.json").read_text())
    f = stage_lower_resonances()
    assert f[0] > f[1] > f[2]
    shifts = [b / a - 1 for a, b in zip(f, f[1:])]
    for got, want in zip(shifts, golden["fractional_shifts"]):
        assert got == pytest.approx(want, rel=0.01)

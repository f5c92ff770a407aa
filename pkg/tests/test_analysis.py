import math
import warnings

import numpy as np
import pytest

from resodrive import analysis, mna, modes
from resodrive.netlist import SweepSpec, parse

SERIES_RLC = "VS 1 0 AC 1\nR1 1 2 {R}\nL1 2 3 1u\nC1 3 0 1p\n.ac lin {N} 100e6 250e6\n.port VS 50\n"
F0 = 1 / (2 * math.pi * math.sqrt(1e-6 * 1e-12))


def rlc(R=50, N=3001):
    return parse(SERIES_RLC.format(R=R, N=N))


def test_s11_values():
    assert analysis.s11(50, 50) == 0
    assert analysis.s11(1e13, 50) == 1
    g = analysis.s11(50 + 50j, 50)
    assert g == pytest.approx(0.2 + 0.4j, abs=1e-15)
    assert abs(g) == pytest.approx(0.4472, abs=1e-4)
    with pytest.raises(ZeroDivisionError):
        analysis.s11(-50, 50)
    with pytest.raises(ValueError):
        analysis.s11(1, 0)


def test_matched_resistor_has_no_resonance():
    n = parse("VS 1 0 AC 1\nR1 1 0 50\n.ac lin 101 1e6 1e8\n.port VS 50\n")
    assert analysis.find_resonances(mna.sweep(n)) == []


def test_series_rlc_resonance_within_grid_step():
    n = rlc()
    sw = mna.sweep(n)
    res = analysis.find_resonances(sw)
    assert len(res) == 1
    step = sw.frequencies[1] - sw.frequencies[0]
    assert abs(res[0].frequency - F0) <= step
    assert F0 == pytest.approx(159.155e6, rel=1e-6)


@pytest.mark.parametrize("R,q", [(50, 20), (5, 200)])
def test_series_rlc_q(R, q):
    sw = mna.sweep(rlc(R, N=30001))
    r = analysis.find_resonances(sw)[0]
    est = analysis.q_factor(sw, r)
    assert est.q == pytest.approx(q, rel=0.05)
    assert not est.under_sampled


def test_q_under_resolved():
    n = rlc(5, N=301)
    sw = mna.sweep(n)
    r = analysis.find_resonances(sw, with_q=False)[0]
    with pytest.raises(analysis.UnderResolvedError):
        analysis.q_factor(sw, r)


def test_q_coarse_band_warns():
    # Q=200 gives a 0.8 MHz band; a 0.2 MHz grid puts 3-4 points inside it
    n = parse(SERIES_RLC.format(R=5, N=751))
    sw = mna.sweep(n)
    r = analysis.find_resonances(sw, with_q=False)[0]
    with pytest.warns(RuntimeWarning, match="coarse"):
        est = analysis.q_factor(sw, r)
    assert est.under_sampled


def test_two_tank_resonances_and_q(two_tank):
    sw = mna.sweep(two_tank)
    res = analysis.find_resonances(sw, netlist=two_tank)
    p = modes.mode_frequencies(modes.CoupledLCRParams.from_k(0.9e-6, 4.7e-12, 0.03, 0.2e-12, 0.1))
    assert len(res) == 2
    assert res[0].frequency == pytest.approx(73.3e6, rel=5e-3)
    assert res[1].frequency == pytest.approx(78.6e6, rel=5e-3)
    assert res[0].q_factor == pytest.approx(p.q_a, rel=0.10)


def test_phase_between_identity_and_antisymmetry(drive_chain):
    sol = mna.solve(drive_chain, 31.3e6)
    nodes = ["N1", "N2", "V1", "V2", "V3", "V4"]
    for a in nodes:
        assert analysis.phase_between(sol, a, a) == 0.0
        for b in nodes:
            d = analysis.phase_between(sol, a, b) + analysis.phase_between(sol, b, a)
            assert analysis.wrap_deg(d) == pytest.approx(0.0, abs=1e-9)


def test_phase_ideal_symmetric_tank():
    # centre-grounded secondary of a symmetric transformer: the two ends swing in antiphase
    n = parse("V1 a 0 AC 1\nR1 a p 10\nLP p 0 1u\nL1 x 0 1u\nL2 0 y 1u\nK1 LP L1 0.3\nK2 LP L2 0.3\n"
              "K3 L1 L2 0.3\nC1 x y 1p\nRX x 0 10k\nRY y 0 10k\n")
    for f in (30e6, 80e6, 200e6):
        sol = mna.solve(n, f)
        assert abs(analysis.phase_between(sol, "x", "y")) == pytest.approx(180, abs=1e-9)


def test_degenerate_voltage():
    sol = mna.solve(parse("V1 1 0 AC 1\nR1 1 0 1\n"), 1e6)
    with pytest.raises(analysis.DegenerateVoltageError):
        analysis.phase_between(sol, "1", "0")


def test_drive_chain_phase_contract(drive_chain):
    r = analysis.lower_resonance(drive_chain)
    sol = mna.solve(drive_chain, r.frequency)
    assert abs(analysis.phase_between(sol, "N1", "N2")) == pytest.approx(180, abs=1)
    assert analysis.phase_between(sol, "V1", "V3") == pytest.approx(0, abs=0.01)


def test_s11_bounded_on_corpus(two_tank, drive_chain):
    for n in (two_tank, drive_chain):
        sw = mna.sweep(n)
        assert np.all(np.abs(analysis.s11(sw.port_input_impedance, 50)) <= 1 + 1e-12)


def test_refinement_is_grid_stable(two_tank):
    coarse = two_tank.with_sweep(SweepSpec("lin", 1201, 70e6, 82e6))
    fine = two_tank.with_sweep(SweepSpec("lin", 2401, 70e6, 82e6))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = analysis.find_resonances(mna.sweep(coarse))
        b = analysis.find_resonances(mna.sweep(fine))
    step = 12e6 / 1200
    assert len(a) == len(b) == 2
    for x, y in zip(a, b):
        assert abs(x.frequency - y.frequency) < step


def test_lower_resonance_matches_sweep(drive_chain):
    sw = mna.sweep(drive_chain)
    first = analysis.find_resonances(sw)[0]
    r = analysis.lower_resonance(drive_chain)
    assert r.frequency == pytest.approx(first.frequency, rel=1e-5)

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from resodrive import analysis, mna, modes
from resodrive.netlist import parse

REFERENCE = modes.CoupledLCRParams.from_k(0.9e-6, 4.7e-12, 0.03, 0.2e-12, 0.1)


def test_uncoupled_limit():
    p = modes.mode_frequencies(modes.CoupledLCRParams(1e-6, 1e-12, 0.0, 0.0, 1.0))
    assert p.omega_a == pytest.approx(p.omega_s, rel=1e-15)
    assert p.omega_a == pytest.approx(1 / math.sqrt(1e-6 * 1e-12), rel=1e-15)


def test_reference_values():
    m = modes.mode_frequencies(REFERENCE)
    # frozen evaluation of the closed forms (see test_closed_forms_by_hand)
    assert m.f_a == pytest.approx(73.1973e6, rel=1e-5)
    assert m.f_s == pytest.approx(78.5713e6, rel=1e-5)
    assert m.f_a == pytest.approx(73.3e6, rel=5e-3) and m.f_s == pytest.approx(78.6e6, rel=5e-3)
    assert m.q_a == pytest.approx(4.3e3, rel=0.02) and m.q_s == pytest.approx(4.3e3, rel=0.02)


def test_closed_forms_by_hand():
    L, C, M, Cc, R = 0.9e-6, 4.7e-12, 0.027e-6, 0.2e-12, 0.1
    wa = 1 / math.sqrt((L + M) * (C + 2 * Cc))
    ws = 1 / math.sqrt((L - M) * C)
    m = modes.mode_frequencies(modes.CoupledLCRParams(L, C, M, Cc, R))
    assert m.omega_a == pytest.approx(wa, rel=1e-14) and m.omega_s == pytest.approx(ws, rel=1e-14)
    assert m.q_a * m.gamma_a == pytest.approx(m.omega_a, rel=1e-15)
    assert m.q_s * m.gamma_s == pytest.approx(m.omega_s, rel=1e-15)


def test_coupling_capacitor_lowers_only_asymmetric_mode():
    a = modes.mode_frequencies(REFERENCE)
    b = modes.mode_frequencies(modes.CoupledLCRParams(REFERENCE.L, REFERENCE.C, REFERENCE.M, 0.4e-12, REFERENCE.R))
    assert b.omega_a < a.omega_a and b.omega_s == a.omega_s


def test_driven_response_at_resonance():
    m = modes.mode_frequencies(REFERENCE)
    w = np.linspace(m.omega_a * (1 - 2e-3), m.omega_a * (1 + 2e-3), 2001)
    amp = np.array([abs(modes.driven_mode_response(REFERENCE, x)[0]) for x in w])
    assert abs(w[np.argmax(amp)] - m.omega_a) <= (w[1] - w[0])
    i_a, _ = modes.driven_mode_response(REFERENCE, m.omega_a)
    # in phase with the source, i.e. 90 degrees behind the dV/dt forcing
    assert math.degrees(math.atan2(i_a.imag, i_a.real)) == pytest.approx(0.0, abs=1e-9)


def test_driven_response_low_frequency_is_linear():
    a1 = abs(modes.driven_mode_response(REFERENCE, 1e3)[0])
    a2 = abs(modes.driven_mode_response(REFERENCE, 2e3)[0])
    assert a2 / a1 == pytest.approx(2.0, rel=1e-6)


def test_zero_coupling_capacitor_limit():
    p = modes.CoupledLCRParams(REFERENCE.L, REFERENCE.C, REFERENCE.M, 0.0, REFERENCE.R)
    i_a, i_s = modes.driven_mode_response(p, 4.6e8)
    assert i_a == 0 and i_s != 0
    with pytest.raises(ValueError):
        modes.driven_mode_response(p, 0.0)


def test_modes_against_mna_coil_currents():
    # coil 1 driven by a series source; coil 2 wound in the opposite sense
    text = ("V1 s 0 AC 1\nR1 s A1 0.1\nL1 A1 N1 0.9u\nC1 N1 0 4.7p\n"
            "R2 0 A2 0.1\nL2 N2 A2 0.9u\nC2 N2 0 4.7p\nCC N1 N2 0.2p\nK1 L1 L2 0.03\n")
    n = parse(text)
    m = modes.mode_frequencies(REFERENCE)
    for w0 in (m.omega_a, m.omega_s):
        for off in (-0.5, 0.0, 0.5):
            w = w0 + off * (m.gamma_a if w0 == m.omega_a else m.gamma_s)
            sol = mna.solve(n, w / (2 * math.pi))
            i1, i2 = modes.coil_currents(REFERENCE, w)
            dominant = max(abs(i1), abs(i2))
            assert abs(sol.inductor_currents["L1"] - i1) < 0.02 * dominant
            assert abs(-sol.inductor_currents["L2"] - i2) < 0.02 * dominant


def test_two_tank_mna_dips_match_modes(two_tank):
    m = modes.mode_frequencies(REFERENCE)
    res = analysis.find_resonances(mna.sweep(two_tank), netlist=two_tank)
    assert res[0].frequency == pytest.approx(m.f_a, rel=5e-3)
    assert res[1].frequency == pytest.approx(m.f_s, rel=5e-3)


def test_k_sweep():
    rows = modes.mode_split_k_sweep(REFERENCE, np.linspace(0, 0.5, 26))
    assert rows[0][0] == 0
    zero = modes.mode_frequencies(modes.CoupledLCRParams(REFERENCE.L, REFERENCE.C, 0, REFERENCE.C_c, REFERENCE.R))
    assert rows[0][1] == pytest.approx(zero.f_a) and rows[0][2] == pytest.approx(zero.f_s)
    assert modes.split_is_monotone(rows)
    with pytest.raises(ValueError):
        modes.mode_split_k_sweep(REFERENCE, [1.0])


def test_param_validation():
    with pytest.raises(ValueError):
        modes.CoupledLCRParams(1e-6, 1e-12, 1e-6, 0, 1)
    with pytest.raises(ValueError):
        modes.CoupledLCRParams(1e-6, 1e-12, 0, -1e-12, 1)


@settings(max_examples=10_000, deadline=None)
@given(st.floats(1e-8, 1e-5), st.floats(1e-13, 1e-10), st.floats(1e-4, 0.9), st.floats(1e-15, 1e-11),
       st.floats(1e-3, 10))
def test_mode_ordering(L, C, k, Cc, R):
    m = modes.mode_frequencies(modes.CoupledLCRParams.from_k(L, C, k, Cc, R))
    assert m.omega_a < m.omega_s
    assert m.q_a * m.gamma_a == pytest.approx(m.omega_a, rel=1e-14)

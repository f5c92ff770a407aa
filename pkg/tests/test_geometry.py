import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.constants import epsilon_0, mu_0

from resodrive import geometry as geo
from resodrive import corpus
from resodrive.netlist import validate

DESIGN = geo.ResonatorGeometry()


def biot_savart_mutual(a: float, b: float, x: float, n_seg: int = 4000, n_r: int = 400) -> float:
    """Flux through a disk of radius b from unit current in a coaxial loop of radius a at distance x.

    The field of loop a is a Biot-Savart sum over straight segments; the flux is
    a Gauss-Legendre integral of B_z over the disk (axisymmetric, so radial only).
    """
    phi = np.linspace(0, 2 * np.pi, n_seg + 1)
    src = np.stack([a * np.cos(phi), a * np.sin(phi), np.zeros_like(phi)], axis=1)
    mid = 0.5 * (src[1:] + src[:-1])
    dl = src[1:] - src[:-1]
    t, w = np.polynomial.legendre.leggauss(n_r)
    r = 0.5 * b * (t + 1)
    obs = np.stack([r, np.zeros_like(r), np.full_like(r, x)], axis=1)
    d = obs[:, None, :] - mid[None, :, :]
    cross_z = dl[None, :, 0] * d[..., 1] - dl[None, :, 1] * d[..., 0]
    bz = mu_0 / (4 * np.pi) * np.sum(cross_z / np.linalg.norm(d, axis=2) ** 3, axis=1)
    return float(np.sum(0.5 * b * w * bz * 2 * np.pi * r))


# straight wire

def test_straight_wire_values():
    assert geo.straight_wire_inductance(0.10, 0.25e-3) == pytest.approx(114e-9, rel=0.01)
    assert geo.straight_wire_inductance(0.18, 0.5e-3) == pytest.approx(200e-9, rel=0.05)


def test_straight_wire_radius_doubling():
    d = geo.straight_wire_inductance(0.2, 1e-3) - geo.straight_wire_inductance(0.2, 2e-3)
    assert d == pytest.approx(mu_0 / (2 * math.pi) * 0.2 * math.log(2), rel=1e-12)


def test_straight_wire_domain():
    with pytest.raises(geo.GeometryDomainError, match="straight_wire_inductance"):
        geo.straight_wire_inductance(1e-3, 1e-3)


# capacitances

def test_parallel_wire():
    assert geo.parallel_wire_capacitance(0.15, 20e-3, 0.5e-3) == pytest.approx(1.14e-12, rel=0.01)
    assert geo.parallel_wire_capacitance(0.3, 20e-3, 0.5e-3) == pytest.approx(
        2 * geo.parallel_wire_capacitance(0.15, 20e-3, 0.5e-3), rel=1e-14)
    c = [geo.parallel_wire_capacitance(0.15, d, 0.5e-3) for d in np.geomspace(2e-3, 1e30, 50)]
    assert np.all(np.diff(c) < 0) and c[-1] < 0.1 * c[0]
    with pytest.raises(geo.GeometryDomainError):
        geo.parallel_wire_capacitance(0.15, 1e-3, 0.5e-3)


def test_wire_over_ground():
    assert geo.wire_over_ground_capacitance(0.15, 0.08, 0.5e-3) == pytest.approx(1.45e-12, rel=0.01)
    r = 0.5e-3
    assert geo.wire_over_ground_capacitance(0.15, r * math.cosh(1), r) == pytest.approx(
        epsilon_0 * 2 * math.pi * 0.15, rel=1e-12)
    c = [geo.wire_over_ground_capacitance(0.15, h, r) for h in np.geomspace(1e-3, 1, 50)]
    assert np.all(np.diff(c) < 0)
    with pytest.raises(geo.GeometryDomainError):
        geo.wire_over_ground_capacitance(0.15, r, r)


def test_coil_self_capacitance():
    assert geo.coil_self_capacitance(0.08, 0.042) == pytest.approx(2.06e-12, rel=0.01)
    big = geo.coil_self_capacitance(1e3, 0.042)
    assert big == pytest.approx(geo.C_SELF_PER_HEIGHT * 1e3, rel=1e-4)


def test_coil_shield_capacitance():
    assert geo.coil_shield_capacitance(0.08, 0.042, 0.103) == pytest.approx(2.63e-12, rel=0.01)
    assert geo.coil_shield_capacitance(0.08, 0.042, 0.042 * math.e) == pytest.approx(29.53e-12 * 0.08, rel=1e-12)
    assert geo.coil_shield_capacitance(0.08, 0.042, 0.042 * (1 + 1e-9)) > 1e-3
    with pytest.raises(geo.GeometryDomainError):
        geo.coil_shield_capacitance(0.08, 0.042, 0.042)


def test_shielded_coil_inductance():
    assert geo.shielded_coil_inductance(0.037, 0.08, 0.010, 0.103) == pytest.approx(0.94e-6, rel=0.01)
    shielded = geo.shielded_coil_inductance(0.037, 0.08, 0.010, 0.103)
    open_ = geo.shielded_coil_inductance(0.037, 0.08, 0.010, 1e9)
    assert open_ / shielded == pytest.approx(1 / (1 - (0.037 / 0.103) ** 2), rel=1e-9)
    assert geo.shielded_coil_inductance(0.037, 0.08, 0.005, 0.103) == pytest.approx(4 * shielded, rel=1e-12)
    with pytest.raises(geo.GeometryDomainError):
        geo.shielded_coil_inductance(0.2, 0.08, 0.01, 0.103)


def test_loop_mutual_against_biot_savart():
    ref = biot_savart_mutual(21e-3, 21e-3, 30e-3)
    assert geo.loop_mutual_inductance(21e-3, 21e-3, 30e-3) == pytest.approx(ref, rel=1e-5)
    for a, b, x in [(10e-3, 25e-3, 5e-3), (30e-3, 7e-3, 40e-3), (21e-3, 21e-3, 2e-3)]:
        assert geo.loop_mutual_inductance(a, b, x) == pytest.approx(biot_savart_mutual(a, b, x), rel=1e-4)


def test_loop_mutual_symmetry_and_far_field():
    assert geo.loop_mutual_inductance(0.01, 0.03, 0.02) == pytest.approx(
        geo.loop_mutual_inductance(0.03, 0.01, 0.02), rel=1e-14)
    a, b = 0.01, 0.02
    for x in (10.0, 30.0):
        dipole = mu_0 * math.pi * a**2 * b**2 / (2 * x**3)
        assert geo.loop_mutual_inductance(a, b, x) == pytest.approx(dipole, rel=1e-4)


def test_agm_elliptic_against_scipy():
    from scipy.special import ellipe, ellipk
    for m in (0.0, 0.1, 0.5, 0.9, 0.999999):
        k, e = geo._agm_elliptic(m)
        assert k == pytest.approx(ellipk(m), rel=1e-12)
        assert e == pytest.approx(ellipe(m), rel=1e-12)


def test_ring_coupling():
    assert geo.ring_coupling_capacitance(0.042, 5e-3, 30e-3) == pytest.approx(0.195e-12, rel=0.01)
    assert geo.ring_coupling_capacitance(0.042, 5e-3, 60e-3) == pytest.approx(
        0.5 * geo.ring_coupling_capacitance(0.042, 5e-3, 30e-3), rel=1e-14)
    assert geo.ring_coupling_capacitance(0.042, 1e-12, 30e-3) < 1e-20


def test_skin_depth_and_resistance():
    assert geo.skin_depth(30e6) == pytest.approx(11.9e-6, rel=0.01)
    assert geo.skin_depth(120e6) == pytest.approx(geo.skin_depth(30e6) / 2, rel=1e-12)
    assert geo.skin_depth(30e6, geo.MaterialSpec(4 * 1.68e-8)) == pytest.approx(2 * geo.skin_depth(30e6), rel=1e-12)
    helix = DESIGN.helix_length
    assert helix == pytest.approx(8 * math.hypot(math.pi * 0.042, 0.010), rel=1e-12)
    assert geo.ac_resistance(helix, 2.5e-3, 30e6) == pytest.approx(0.1, rel=0.10)
    rt = geo.ac_resistance(0.10, 0.25e-3, 30e6)
    assert 0.02 < rt < 0.2
    assert geo.ac_resistance(1, 1e-3, 4e8) == pytest.approx(2 * geo.ac_resistance(1, 1e-3, 1e8), rel=1e-12)
    with pytest.warns(RuntimeWarning):
        dc = geo.ac_resistance(1, 1e-6, 1e3)
    assert dc == pytest.approx(1.68e-8 / (math.pi * 1e-12), rel=1e-12)


def test_geometry_invariants():
    with pytest.raises(geo.GeometryDomainError):
        geo.ResonatorGeometry(shield_inner_diameter=0.045)
    with pytest.raises(geo.GeometryDomainError):
        geo.ResonatorGeometry(pitch=4e-3)
    with pytest.raises(geo.GeometryDomainError):
        geo.WireRun(0.1, 0.5e-3, separation=0.8e-3)
    assert DESIGN.height == pytest.approx(0.08)


# randomized positivity and monotonicity

pos = st.floats(1e-4, 1.0)


@settings(max_examples=1000, deadline=None)
@given(pos, pos, st.floats(1.01, 100))
def test_outputs_positive_and_monotone(length, r, ratio):
    d = 2 * r * ratio
    assert geo.parallel_wire_capacitance(length, d, r) > geo.parallel_wire_capacitance(length, 1.1 * d, r) > 0
    assert geo.wire_over_ground_capacitance(length, d, r) > geo.wire_over_ground_capacitance(length, 1.1 * d, r) > 0
    assert geo.coil_self_capacitance(length, r) > 0
    assert geo.coil_shield_capacitance(length, r, r * ratio) > geo.coil_shield_capacitance(length, r, 1.1 * r * ratio)
    if length > 2 * r:
        assert geo.straight_wire_inductance(length, r) > 0
    assert geo.shielded_coil_inductance(r, length, d, r * ratio) > 0
    assert geo.loop_mutual_inductance(r, length, d) > geo.loop_mutual_inductance(r, length, 1.1 * d) > 0
    assert geo.ring_coupling_capacitance(r, length, d) > 0
    assert math.isfinite(geo.skin_depth(1 / r)) and geo.skin_depth(1 / r) > 0


# derived circuit

def test_derived_values_match_quoted_set():
    rec = geo.derive_values(geo.CircuitInputs())
    quoted = {"C": 4.7e-12, "L": 0.9e-6, "C_c": 0.2e-12, "R": 0.1, "L_f": 500e-9, "R_s": 50.0}
    for sym, v in quoted.items():
        assert rec[sym].value == pytest.approx(v, rel=0.10), sym
    assert all(r.provenance in ("derived", "catalog") for r in rec.values())
    assert rec["L"].formula == "shielded_coil_inductance"
    assert rec["L"].inputs["D_eff"] == pytest.approx(0.037)


def test_overrides_replace_verbatim_and_are_flagged():
    rec = geo.derive_values(geo.CircuitInputs(overrides={"C_t": 1.2e-12, "L": 1e-6}))
    assert rec["C_t"].value == 1.2e-12 and rec["C_t"].provenance == "override"
    assert rec["L"].value == 1e-6 and rec["L"].provenance == "override"
    assert rec["C_coil"].provenance == "derived"
    with pytest.raises(KeyError):
        geo.derive_values(geo.CircuitInputs(overrides={"bogus": 1.0}))


def test_coupling_alternatives_reported():
    rec = geo.derive_values(geo.CircuitInputs())
    m = rec["M_loop"].value
    assert m == pytest.approx(biot_savart_mutual(21e-3, 21e-3, 30e-3), rel=1e-5)
    assert rec["k"].value == 0.03 and rec["k"].provenance == "catalog"
    assert rec["k_helix"].value == pytest.approx(m / rec["L"].value, rel=1e-14)
    assert rec["k_loop"].value > rec["k"].value > rec["k_helix"].value


def test_derive_circuit_requires_feed_coupling():
    with pytest.raises(KeyError, match="M_f"):
        geo.derive_circuit(geo.CircuitInputs())


def test_derive_circuit_is_deterministic_and_valid():
    inp = geo.CircuitInputs(overrides={"M_f": 48e-9})
    a = geo.derive_circuit(inp).netlist
    b = geo.derive_circuit(inp).netlist
    assert a == b and validate(a) == []


def test_stages_by_omission():
    inp = geo.CircuitInputs(overrides=corpus.REFERENCE_OVERRIDES)
    full = geo.derive_circuit(inp, stage="trap").netlist
    for stage in geo.STAGES:
        direct = geo.derive_circuit(inp, stage=stage).netlist
        pruned = geo.stage_netlist(full, stage)
        assert pruned.components == direct.components
        assert pruned.couplings == direct.couplings
        assert pruned.probes == direct.probes
    bare = geo.derive_circuit(inp, stage="bare").netlist
    assert {c.name[:2] for c in bare.components} <= {"LF", "R1", "R2", "L1", "L2", "CC", "CS"}
    with pytest.raises(ValueError):
        geo.stage_netlist(full, "nope")


def test_feed_coupling_optimum_matches_corpus(two_tank):
    k, s = geo.optimize_feed_coupling(two_tank)
    assert k == pytest.approx(0.049, abs=0.001)
    assert s < 0.01

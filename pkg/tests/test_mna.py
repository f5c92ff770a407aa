import math

import numpy as np
import pytest

from resodrive import analysis, mna, modes
from resodrive.netlist import AcSource, Component, MutualCoupling, Netlist, PortSpec, SweepSpec, parse


def kcl_residuals(n: Netlist, sol: mna.PhasorSolution) -> dict:
    """Sum of currents leaving each node, relative to the largest branch current there."""
    w = 2 * math.pi * sol.frequency
    net = {}
    big = {}

    def add(node, i):
        net[node] = net.get(node, 0j) + i
        big[node] = max(big.get(node, 0.0), abs(i))

    for c in n.components:
        va, vb = sol.voltage(c.node_a), sol.voltage(c.node_b)
        if c.kind == "R":
            i = (va - vb) / c.value
        elif c.kind == "C":
            i = 1j * w * c.value * (va - vb)
        else:
            i = sol.inductor_currents[c.name]
        add(c.node_a, i)
        add(c.node_b, -i)
    for s in n.sources:
        i = sol.source_currents[s.name]
        add(s.node_a, -i)
        add(s.node_b, i)
    return {k: abs(v) / max(big[k], 1e-300) for k, v in net.items() if k != "0"}


def test_single_resistor_system():
    n = parse("V1 1 0 AC 1\nR1 1 0 2\n")
    A, b = mna.assemble(n, 1e6)
    assert A.shape == (2, 2)
    assert mna.solve(n, 1e6).source_currents["V1"] == pytest.approx(0.5)


def test_capacitor_admittance_stamp():
    n = parse("V1 1 0 AC 1\nR1 1 2 1\nC1 2 0 1p\n")
    st = mna.build_stamp(n)
    i = st.node_index["2"]
    A = st.matrix(1e9)
    assert A[i, i] - 1.0 == pytest.approx(2j * math.pi * 1e9 * 1e-12, rel=1e-12)
    assert abs(A[i, i] - 1.0) == pytest.approx(6.2832e-3, rel=1e-4)


def test_zero_coupling_matches_independent_inductors():
    base = "V1 1 0 AC 1\nL1 1 2 1u\nR1 2 0 5\nL2 3 0 2u\nR2 3 1 7\n"
    a, _ = mna.assemble(parse(base + "K1 L1 L2 0\n"), 3e7)
    b, _ = mna.assemble(parse(base), 3e7)
    np.testing.assert_array_equal(a, b)


def test_divider():
    sol = mna.solve(parse("V1 1 0 AC 1\nR1 1 2 1k\nR2 2 0 1k\n"), 1e3)
    assert sol.voltage("2") == pytest.approx(0.5 + 0j, abs=1e-15)
    assert sol.voltage("0") == 0


def test_series_rlc_oracle():
    L, C, R = 1e-6, 1e-12, 50.0
    f0 = 1 / (2 * math.pi * math.sqrt(L * C))
    assert f0 == pytest.approx(159.155e6, rel=1e-5)
    n = parse("V1 1 0 AC 1\nR1 1 2 50\nL1 2 3 1u\nC1 3 0 1p\n")
    sol = mna.solve(n, f0)
    assert abs(sol.source_currents["V1"]) == pytest.approx(1 / R, rel=1e-9)
    q = 2 * math.pi * f0 * L / R
    assert abs(sol.voltage("3")) == pytest.approx(q, rel=1e-9)
    assert q == pytest.approx(20.0, rel=1e-12)


def test_coupled_tanks_oracle():
    # two identical lossless LC tanks, lightly loaded, driven through a large resistor
    n = parse("V1 s 0 AC 1\nRS s 1 1meg\nL1 1 0 1u\nC1 1 0 1p\nL2 2 0 1u\nC2 2 0 1p\n"
              "RL1 1 0 10meg\nRL2 2 0 10meg\nK1 L1 L2 0.1\n")
    f0 = 1 / (2 * math.pi * math.sqrt(1e-6 * 1e-12))
    expected = sorted([f0 / math.sqrt(1 + 0.1), f0 / math.sqrt(1 - 0.1)])
    assert expected[0] == pytest.approx(151.7e6, rel=1e-3)
    assert expected[1] == pytest.approx(167.8e6, rel=1e-3)
    f = np.linspace(140e6, 180e6, 40001)
    mag = np.abs(mna.sweep(n, f).node_voltage("1"))
    peaks = [i for i in range(1, len(f) - 1) if mag[i] > mag[i - 1] and mag[i] > mag[i + 1]]
    assert len(peaks) == 2
    for i, fe in zip(peaks, expected):
        assert f[i] == pytest.approx(fe, abs=2 * (f[1] - f[0]))


def test_sweep_grids():
    lin = SweepSpec("lin", 3, 1e6, 3e6).frequencies()
    assert lin.tolist() == [1e6, 2e6, 3e6]
    dec = SweepSpec("dec", 2, 1e6, 1e8).frequencies()
    assert dec[0] == 1e6 and dec[-1] == 1e8
    assert np.allclose(np.diff(np.log10(dec)), 0.5)


def test_two_tank_two_dips_lower_is_asymmetric(two_tank):
    sw = mna.sweep(two_tank)
    res = analysis.find_resonances(sw)
    assert [r.kind_hint for r in res] == ["lower", "upper"]
    p = modes.mode_frequencies(modes.CoupledLCRParams.from_k(0.9e-6, 4.7e-12, 0.03, 0.2e-12, 0.1))
    assert res[0].frequency == pytest.approx(p.f_a, rel=5e-3)
    assert abs(analysis.phase_between(mna.solve(two_tank, res[0].frequency), "N1", "N2")) == pytest.approx(180, abs=1)
    assert abs(analysis.phase_between(mna.solve(two_tank, res[1].frequency), "N1", "N2")) == pytest.approx(0, abs=1)


def test_solution_residual_and_kcl(drive_chain):
    for f in (25e6, 31.3e6, 60e6):
        sol = mna.solve(drive_chain, f)
        assert max(kcl_residuals(drive_chain, sol).values()) < 1e-9
        st = mna.build_stamp(drive_chain)
        x = mna.solve_raw(st, np.array([f]))[0]
        A = st.matrix(f)
        assert np.linalg.norm(A @ x - st.rhs) / np.linalg.norm(st.rhs) < 1e-10


def test_singular_circuit_reports_unknowns():
    n = parse("V1 1 0 AC 1\nV2 1 0 AC 2\nR1 1 0 1\n")
    with pytest.raises(mna.SingularCircuitError) as e:
        mna.solve(n, 1e6)
    assert {"i(V1)", "i(V2)"} <= set(e.value.unknowns)
    with pytest.raises(mna.SingularCircuitError) as e:
        mna.sweep(n, np.array([1e6, 2e6]))
    assert e.value.frequency == 1e6


def test_invalid_frequency():
    with pytest.raises(ValueError):
        mna.assemble(parse("V1 1 0 AC 1\nR1 1 0 2\n"), 0.0)


# randomized circuit properties

def random_network(rng, n_nodes=5, extra=6, with_source=True):
    nodes = ["0"] + [str(i) for i in range(1, n_nodes + 1)]
    comps = []
    for i in range(1, n_nodes + 1):
        a = nodes[rng.integers(0, i)]
        kind = "RLC"[rng.integers(0, 3)]
        comps.append(Component(kind, f"{kind}{len(comps)}", a, nodes[i], float(10 ** rng.uniform(-1, 3)) * {"R": 1, "L": 1e-7, "C": 1e-11}[kind]))
    for _ in range(extra):
        a, b = rng.choice(len(nodes), 2, replace=False)
        kind = "RLC"[rng.integers(0, 3)]
        comps.append(Component(kind, f"{kind}{len(comps)}", nodes[a], nodes[b], float(10 ** rng.uniform(-1, 3)) * {"R": 1, "L": 1e-7, "C": 1e-11}[kind]))
    # every node also gets a resistive path so no cut-set is purely inductive/capacitive at DC-like limits
    for i in range(1, n_nodes + 1):
        comps.append(Component("R", f"RG{i}", nodes[i], "0", float(10 ** rng.uniform(2, 4))))
    inds = [c.name for c in comps if c.kind == "L"]
    cpls = []
    for j in range(0, len(inds) - 1, 2):  # disjoint pairs keep the inductance matrix positive definite
        cpls.append(MutualCoupling(f"K{j}", inds[j], inds[j + 1], float(rng.uniform(-0.9, 0.9))))
    return Netlist(tuple(comps), tuple(cpls))


@pytest.mark.parametrize("seed", range(8))
def test_reciprocity(seed):
    rng = np.random.default_rng(seed)
    base = random_network(rng)
    a, b = "2", "4"
    r0 = 50.0

    def drive(src, load):
        extra = (Component("R", "RSRC", "s", src, r0), Component("R", "RLOAD", load, "0", r0))
        return Netlist(base.components + extra, base.couplings, (AcSource("VX", "s", "0", 1.0),))

    for f in (1e6, 3e7, 4e8):
        vb = mna.solve(drive(a, b), f).voltage(b)
        va = mna.solve(drive(b, a), f).voltage(a)
        assert abs(va - vb) <= 1e-10 * max(abs(va), abs(vb), 1e-30)


@pytest.mark.parametrize("seed", range(8))
def test_passivity(seed):
    rng = np.random.default_rng(100 + seed)
    base = random_network(rng)
    n = Netlist(base.components, base.couplings, (AcSource("VS", "1", "0", 1.0),), ports=(PortSpec("VS"),))
    f = np.logspace(5, 9, 400)
    z = mna.sweep(n, f).port_input_impedance
    assert np.all(z.real >= -1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_superposition(seed):
    rng = np.random.default_rng(200 + seed)
    base = random_network(rng)
    s1 = AcSource("VA", "1", "0", float(rng.uniform(0.1, 2)), float(rng.uniform(-180, 180)))
    s2 = AcSource("VB", "3", "5", float(rng.uniform(0.1, 2)), float(rng.uniform(-180, 180)))
    zero = lambda s: AcSource(s.name, s.node_a, s.node_b, 0.0, 0.0)
    both = Netlist(base.components, base.couplings, (s1, s2))
    only1 = Netlist(base.components, base.couplings, (s1, zero(s2)))
    only2 = Netlist(base.components, base.couplings, (zero(s1), s2))
    for f in (2e6, 7e7):
        x = mna.solve(both, f).node_voltages
        y1, y2 = mna.solve(only1, f).node_voltages, mna.solve(only2, f).node_voltages
        v = np.array(list(x.values()))
        vsum = np.array([y1[k] + y2[k] for k in x])
        assert np.linalg.norm(v - vsum) <= 1e-10 * np.linalg.norm(v)


def test_k_to_zero_continuity(two_tank):
    zero = two_tank.with_values({"K1": 0.0})
    tiny = two_tank.with_values({"K1": 1e-12})
    f = np.linspace(70e6, 82e6, 101)
    a = mna.solve_raw(mna.build_stamp(zero), f)
    b = mna.solve_raw(mna.build_stamp(tiny), f)
    assert np.max(np.linalg.norm(a - b, axis=1) / np.linalg.norm(a, axis=1)) < 1e-8


def test_thread_count_does_not_change_results(drive_chain, monkeypatch):
    f = np.linspace(20e6, 100e6, 5001)
    monkeypatch.setenv("RESODRIVE_THREADS", "1")
    a = mna.sweep(drive_chain, f).port_input_impedance
    monkeypatch.setenv("RESODRIVE_THREADS", "4")
    b = mna.sweep(drive_chain, f).port_input_impedance
    np.testing.assert_array_equal(a, b)

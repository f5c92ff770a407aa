"""Lumped-element values from resonator, wire and trap geometry.

All lengths in metres, results in SI units. The empirical helical-resonator
coefficients are kept as printed (pF/m, uH/m) and never re-derived.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Optional

from scipy.constants import epsilon_0, mu_0

from .netlist import AcSource, Component, MutualCoupling, Netlist, PortSpec, SweepSpec, without

# helical-resonator empirical constants
C_SELF_PER_HEIGHT = 11.26e-12  # F/m
C_SELF_PER_DIAMETER = 8e-12  # F/m
C_SELF_SHAPE = 27e-12  # F/m, multiplies sqrt(D^3/b)
C_SHIELD_PER_HEIGHT = 29.53e-12  # F/m, divided by ln(D_s/D_c)
L_SHIELDED_COIL = 0.984e-6  # H/m

COPPER_RESISTIVITY = 1.68e-8  # ohm m at 20 C

STAGES = ("bare", "biastee", "trap")


class GeometryDomainError(ValueError):
    """A closed-form estimate was evaluated outside its domain of validity."""

    def __init__(self, formula: str, message: str):
        self.formula = formula
        super().__init__(f"{formula}: {message}")


@dataclass(frozen=True)
class ResonatorGeometry:
    coil_diameter: float = 42e-3
    wire_thickness: float = 5e-3
    pitch: float = 10e-3
    turns: int = 8
    shield_inner_diameter: float = 103e-3
    shield_length: float = 0.20
    coil_separation: float = 30e-3
    coil_height: Optional[float] = None

    def __post_init__(self):
        for name in ("coil_diameter", "wire_thickness", "pitch", "shield_inner_diameter",
                     "shield_length", "coil_separation"):
            if not getattr(self, name) > 0:
                raise GeometryDomainError("ResonatorGeometry", f"{name} must be positive")
        if self.turns < 1:
            raise GeometryDomainError("ResonatorGeometry", "turns must be >= 1")
        if self.coil_height is not None and not self.coil_height > 0:
            raise GeometryDomainError("ResonatorGeometry", "coil_height must be positive")
        if not self.coil_diameter + self.wire_thickness < self.shield_inner_diameter:
            raise GeometryDomainError("ResonatorGeometry", "coil (plus wire) does not fit inside the shield")
        if self.pitch < self.wire_thickness:
            raise GeometryDomainError("ResonatorGeometry", "pitch smaller than the wire thickness")

    @property
    def height(self) -> float:
        return self.coil_height if self.coil_height is not None else self.turns * self.pitch

    @property
    def inner_diameter(self) -> float:
        return self.coil_diameter - self.wire_thickness

    @property
    def helix_length(self) -> float:
        return self.turns * math.hypot(math.pi * self.coil_diameter, self.pitch)


@dataclass(frozen=True)
class WireRun:
    length: float
    radius: float
    separation: float = 20e-3
    height: float = 80e-3

    def __post_init__(self):
        if not self.length > 0:
            raise GeometryDomainError("WireRun", "length must be positive")
        if not self.separation > 2 * self.radius:
            raise GeometryDomainError("WireRun", "wire separation must exceed the wire diameter")
        if not self.height > self.radius:
            raise GeometryDomainError("WireRun", "height must exceed the wire radius")


@dataclass(frozen=True)
class MaterialSpec:
    resistivity: float = COPPER_RESISTIVITY
    permeability: float = mu_0

    def __post_init__(self):
        if not (self.resistivity > 0 and self.permeability > 0):
            raise GeometryDomainError("MaterialSpec", "resistivity and permeability must be positive")


def straight_wire_inductance(length: float, radius: float) -> float:
    if not length > 2 * radius > 0:
        raise GeometryDomainError("straight_wire_inductance", "needs length > 2*radius > 0")
    return mu_0 / (2 * math.pi) * length * (math.log(2 * length / radius) - 1)


def parallel_wire_capacitance(length: float, separation: float, radius: float) -> float:
    if not (length > 0 and radius > 0 and separation > 2 * radius):
        raise GeometryDomainError("parallel_wire_capacitance", "needs separation > 2*radius")
    return epsilon_0 * 2 * math.pi * length / math.acosh(separation**2 / (2 * radius**2) - 1)


def wire_over_ground_capacitance(length: float, height: float, radius: float) -> float:
    if not (length > 0 and radius > 0 and height > radius):
        raise GeometryDomainError("wire_over_ground_capacitance", "needs height > radius")
    return epsilon_0 * 2 * math.pi * length / math.acosh(height / radius)


def coil_self_capacitance(height: float, diameter: float) -> float:
    if not (height > 0 and diameter > 0):
        raise GeometryDomainError("coil_self_capacitance", "height and diameter must be positive")
    return (C_SELF_PER_HEIGHT * height + C_SELF_PER_DIAMETER * diameter
            + C_SELF_SHAPE * math.sqrt(diameter**3 / height))


def coil_shield_capacitance(height: float, coil_diameter: float, shield_diameter: float) -> float:
    if not (height > 0 and coil_diameter > 0):
        raise GeometryDomainError("coil_shield_capacitance", "height and diameter must be positive")
    if not shield_diameter > coil_diameter:
        raise GeometryDomainError("coil_shield_capacitance", "shield diameter must exceed coil diameter")
    return C_SHIELD_PER_HEIGHT * height / math.log(shield_diameter / coil_diameter)


def shielded_coil_inductance(diameter: float, height: float, pitch: float, shield_diameter: float) -> float:
    """Short helix inside a shield; ``diameter`` is the coil's inner diameter."""
    if not (pitch > 0 and height > 0 and diameter > 0):
        raise GeometryDomainError("shielded_coil_inductance", "pitch, height and diameter must be positive")
    if not shield_diameter > diameter:
        raise GeometryDomainError("shielded_coil_inductance", "shield diameter must exceed coil diameter")
    return L_SHIELDED_COIL * diameter**2 * height / pitch**2 * (1 - (diameter / shield_diameter) ** 2)


def _agm_elliptic(m: float) -> tuple[float, float]:
    """Complete elliptic integrals K(m), E(m) (parameter m = k^2) by the AGM."""
    if not 0 <= m < 1:
        raise ValueError("elliptic parameter must lie in [0, 1)")
    a, b = 1.0, math.sqrt(1 - m)
    c2_sum = 0.5 * m  # sum 2^(n-1) c_n^2 with c_0^2 = m
    power = 0.5
    while abs(a - b) > 1e-15 * a:
        c = 0.5 * (a - b)
        a, b = 0.5 * (a + b), math.sqrt(a * b)
        power *= 2
        c2_sum += power * c * c
    k = math.pi / (2 * a)
    return k, k * (1 - c2_sum)


def loop_mutual_inductance(radius_a: float, radius_b: float, axial_separation: float) -> float:
    """Mutual inductance of two coaxial circular filaments (Maxwell's formula)."""
    if not (radius_a > 0 and radius_b > 0 and axial_separation >= 0):
        raise GeometryDomainError("loop_mutual_inductance", "radii must be positive, separation >= 0")
    ab = radius_a * radius_b
    m = 4 * ab / ((radius_a + radius_b) ** 2 + axial_separation**2)
    k = math.sqrt(m)
    if m < 0.1:
        return mu_0 * math.sqrt(ab) * _loop_bracket_series(m)
    K, E = _agm_elliptic(m)
    return mu_0 * math.sqrt(ab) * ((2 / k - k) * K - (2 / k) * E)


def _loop_bracket_series(m: float) -> float:
    """(2/k - k) K - (2/k) E as a power series in m = k^2.

    The leading terms of the closed form cancel exactly, so for weakly
    coupled (distant or very unequal) loops the series keeps full precision:
    (pi/2) k sum_j m^j (4 (j+1)/(2j+1) c_{j+1}^2 - c_j^2), c_j = (2j)!/(4^j j!^2).
    """
    c = [1.0]
    for j in range(60):
        c.append(c[-1] * (2 * j + 1) / (2 * j + 2))
    total, power = 0.0, m
    for j in range(1, 60):
        term = power * (4 * (j + 1) / (2 * j + 1) * c[j + 1] ** 2 - c[j] ** 2)
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
        power *= m
    return 0.5 * math.pi * math.sqrt(m) * total


def loop_self_inductance(loop_radius: float, wire_radius: float) -> float:
    """Thin circular ring of round wire: mu0*a*(ln(8a/r) - 2)."""
    if not loop_radius > wire_radius > 0:
        raise GeometryDomainError("loop_self_inductance", "needs loop radius > wire radius > 0")
    return mu_0 * loop_radius * (math.log(8 * loop_radius / wire_radius) - 2)


def ring_coupling_capacitance(coil_diameter: float, thickness: float, separation: float) -> float:
    """Parallel-plate estimate for two facing rings of face area pi*D*phi."""
    if not separation > 0:
        raise GeometryDomainError("ring_coupling_capacitance", "separation must be positive")
    return epsilon_0 * math.pi * coil_diameter * thickness / separation


def skin_depth(f: float, mat: MaterialSpec = MaterialSpec()) -> float:
    if not f > 0:
        raise GeometryDomainError("skin_depth", "frequency must be positive")
    return math.sqrt(mat.resistivity / (math.pi * f * mat.permeability))


def ac_resistance(length: float, radius: float, f: float, mat: MaterialSpec = MaterialSpec()) -> float:
    """Skin-effect resistance of a round wire; DC resistance outside the thin-shell regime."""
    if not (length > 0 and radius > 0):
        raise GeometryDomainError("ac_resistance", "length and radius must be positive")
    delta = skin_depth(f, mat)
    if not delta < radius / 3:
        warnings.warn("skin depth not small against the wire radius; using DC resistance", RuntimeWarning)
        return mat.resistivity * length / (math.pi * radius**2)
    return mat.resistivity * length / (2 * math.pi * radius * delta)


# ---------------------------------------------------------------------------
# equivalent circuit


@dataclass(frozen=True)
class ValueRecord:
    symbol: str
    value: float
    unit: str
    formula: str
    inputs: dict
    provenance: str  # "derived", "catalog" or "override"


# Catalog values: measured or bought parts that no geometry formula covers.
CATALOG = {
    "k": (0.03, "", "quoted coil-coil coupling coefficient"),
    "C_t": (1.2e-12, "F", "measured electrode-electrode capacitance"),
    "C_tc": (1.9e-12, "F", "estimated electrode-chamber capacitance"),
    "C_con_g": (1e-12, "F", "measured connector capacitance to ground"),
    "C_b": (3.3e-9, "F", "bias-tee series capacitor"),
    "R_b": (10e6, "ohm", "bias-tee DC resistor"),
    "R_f": (560e3, "ohm", "DC filter resistor"),
    "C_f": (220e-12, "F", "DC filter capacitor"),
    "L_f": (500e-9, "H", "feed coil inductance"),
    "R_s": (50.0, "ohm", "source internal resistance (port reference)"),
    "C_pk": (0.1e-12, "F", "pick-off antenna coupling capacitance"),
    "R_pk": (50.0, "ohm", "pick-off termination"),
}

OVERRIDABLE = {
    "L", "C_coil", "C_shield", "C_c", "R", "L_w", "R_w", "C_ww", "C_wg", "L_t", "R_t", "M_f",
    *CATALOG,
}


@dataclass(frozen=True)
class CircuitInputs:
    resonator: ResonatorGeometry = ResonatorGeometry()
    wires: WireRun = WireRun(length=0.15, radius=0.5e-3)
    trap_wire: WireRun = WireRun(length=0.10, radius=0.25e-3)
    material: MaterialSpec = MaterialSpec()
    resistance_frequency: float = 30e6
    overrides: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class DerivedCircuit:
    netlist: Netlist
    records: dict  # symbol -> ValueRecord


def derive_values(inp: CircuitInputs) -> dict:
    """Every lumped value with its formula, inputs and provenance."""
    g, w, t, mat, f_r = inp.resonator, inp.wires, inp.trap_wire, inp.material, inp.resistance_frequency
    unknown = set(inp.overrides) - OVERRIDABLE
    if unknown:
        raise KeyError(f"unknown override(s): {', '.join(sorted(unknown))}")
    rec: dict[str, ValueRecord] = {}

    def put(symbol, value, unit, formula, inputs):
        rec[symbol] = ValueRecord(symbol, value, unit, formula, inputs, "derived")

    b = g.height
    put("C_coil", coil_self_capacitance(b, g.coil_diameter), "F", "coil_self_capacitance",
        {"b": b, "D_c": g.coil_diameter})
    put("C_shield", coil_shield_capacitance(b, g.coil_diameter, g.shield_inner_diameter), "F",
        "coil_shield_capacitance", {"b": b, "D_c": g.coil_diameter, "D_s": g.shield_inner_diameter})
    put("L", shielded_coil_inductance(g.inner_diameter, b, g.pitch, g.shield_inner_diameter), "H",
        "shielded_coil_inductance", {"D_eff": g.inner_diameter, "b": b, "tau": g.pitch, "D_s": g.shield_inner_diameter})
    put("C_c", ring_coupling_capacitance(g.coil_diameter, g.wire_thickness, g.coil_separation), "F",
        "ring_coupling_capacitance", {"D_c": g.coil_diameter, "phi": g.wire_thickness, "x": g.coil_separation})
    put("delta", skin_depth(f_r, mat), "m", "skin_depth", {"f": f_r, "rho": mat.resistivity})
    put("R", ac_resistance(g.helix_length, g.wire_thickness / 2, f_r, mat), "ohm", "ac_resistance",
        {"length": g.helix_length, "r": g.wire_thickness / 2, "f": f_r})
    put("L_w", straight_wire_inductance(w.length, w.radius), "H", "straight_wire_inductance",
        {"length": w.length, "r": w.radius})
    put("R_w", ac_resistance(w.length, w.radius, f_r, mat), "ohm", "ac_resistance",
        {"length": w.length, "r": w.radius, "f": f_r})
    put("C_ww", parallel_wire_capacitance(w.length, w.separation, w.radius), "F", "parallel_wire_capacitance",
        {"length": w.length, "d": w.separation, "r": w.radius})
    put("C_wg", wire_over_ground_capacitance(w.length, w.height, w.radius), "F", "wire_over_ground_capacitance",
        {"length": w.length, "h": w.height, "r": w.radius})
    put("L_t", straight_wire_inductance(t.length, t.radius), "H", "straight_wire_inductance",
        {"length": t.length, "r": t.radius})
    put("R_t", ac_resistance(t.length, t.radius, f_r, mat), "ohm", "ac_resistance",
        {"length": t.length, "r": t.radius, "f": f_r})
    m_loop = loop_mutual_inductance(g.coil_diameter / 2, g.coil_diameter / 2, g.coil_separation)
    put("M_loop", m_loop, "H", "loop_mutual_inductance",
        {"a": g.coil_diameter / 2, "b": g.coil_diameter / 2, "x": g.coil_separation})
    l_loop = loop_self_inductance(g.coil_diameter / 2, g.wire_thickness / 2)
    put("k_loop", m_loop / l_loop, "", "loop_mutual_inductance/loop_self_inductance",
        {"M_loop": m_loop, "L_loop": l_loop})
    put("k_helix", m_loop / rec["L"].value, "", "loop_mutual_inductance/shielded_coil_inductance",
        {"M_loop": m_loop, "L": rec["L"].value})

    for sym, (value, unit, note) in CATALOG.items():
        rec[sym] = ValueRecord(sym, value, unit, note, {}, "catalog")
    for sym, value in inp.overrides.items():
        old = rec.get(sym)
        unit = old.unit if old else "H"
        rec[sym] = ValueRecord(sym, float(value), unit, old.formula if old else "measured", {}, "override")
    total = rec["C_coil"].value + rec["C_shield"].value
    rec["C"] = ValueRecord("C", total, "F", "C_coil + C_shield", {}, "derived")
    return rec


def _netlist_from_values(v: Mapping[str, float], stage: str, sweep: Optional[SweepSpec]) -> Netlist:
    if stage not in STAGES:
        raise ValueError(f"stage must be one of {STAGES}")
    comps: list[Component] = []
    add = lambda kind, name, a, b, val: comps.append(Component(kind, name, a, b, float(val)))

    # helical resonator pair, coil 2 wound in the opposite sense
    add("L", "LF", "FEED", "0", v["L_f"])
    add("R", "R1", "0", "A1", v["R"])
    add("L", "L1", "A1", "N1", v["L"])
    add("R", "R2", "0", "A2", v["R"])
    add("L", "L2", "N2", "A2", v["L"])
    for i in (1, 2):
        add("C", f"CCOIL{i}", f"N{i}", "0", v["C_coil"])
        add("C", f"CSH{i}", f"N{i}", "0", v["C_shield"])
    add("C", "CC", "N1", "N2", v["C_c"])
    k_feed = v["M_f"] / math.sqrt(v["L_f"] * v["L"])
    couplings = [MutualCoupling("K1", "L1", "L2", v["k"]), MutualCoupling("KF", "LF", "L1", k_feed)]
    probes = ["N1", "N2"]

    if stage in ("biastee", "trap"):
        for i in (1, 2):
            add("L", f"LW{i}", f"N{i}", f"W{i}", v["L_w"])
            add("R", f"RW{i}", f"W{i}", f"B{i}", v["R_w"])
            add("C", f"CWG{i}", f"B{i}", "0", v["C_wg"])
            add("C", f"CPK{i}", f"B{i}", f"P{i}", v["C_pk"])
            add("R", f"RPK{i}", f"P{i}", "0", v["R_pk"])
        add("C", "CWW", "B1", "B2", v["C_ww"])
        # electrodes 1,3 carry phase N1; electrodes 2,4 carry phase N2
        for e in (1, 2, 3, 4):
            src = "B1" if e % 2 else "B2"
            add("C", f"CB{e}", src, f"T{e}", v["C_b"])
            add("C", f"CCG{e}", f"T{e}", "0", v["C_con_g"])
            add("R", f"RB{e}", f"T{e}", f"D{e}", v["R_b"])
            add("C", f"CF{e}", f"D{e}", "0", v["C_f"])
            add("R", f"RF{e}", f"D{e}", "0", v["R_f"])
    if stage == "trap":
        for e in (1, 2, 3, 4):
            add("L", f"LT{e}", f"T{e}", f"E{e}", v["L_t"])
            add("R", f"RT{e}", f"E{e}", f"V{e}", v["R_t"])
            add("C", f"CTC{e}", f"V{e}", "0", v["C_tc"])
        for a, b in ((1, 2), (2, 3), (3, 4), (4, 1)):
            add("C", f"CT{a}{b}", f"V{a}", f"V{b}", v["C_t"])
        probes += ["V1", "V2", "V3", "V4"]

    return Netlist(
        components=tuple(comps),
        couplings=tuple(couplings),
        sources=(AcSource("VS", "FEED", "0", 1.0, 0.0),),
        sweep=sweep,
        ports=(PortSpec("VS", v["R_s"]),),
        probes=tuple(probes),
        title=f"two-phase helical resonator, stage {stage}",
    )


def derive_circuit(
    inp: CircuitInputs = CircuitInputs(),
    *,
    stage: str = "trap",
    sweep: Optional[SweepSpec] = None,
) -> DerivedCircuit:
    """Full equivalent circuit (resonator, wires, bias tee, trap) from geometry.

    ``stage`` drops subcircuits: ``bare`` keeps only the feed and the coupled
    resonator, ``biastee`` adds the wires and bias tee, ``trap`` adds the
    electrodes. The feed coupling ``M_f`` has no geometric model and must be
    supplied as an override.
    """
    if "M_f" not in inp.overrides:
        raise KeyError("M_f (feed coupling) has no geometric model; supply it as an override")
    rec = derive_values(inp)
    values = {sym: r.value for sym, r in rec.items()}
    return DerivedCircuit(_netlist_from_values(values, stage, sweep), rec)


_TRAP_PARTS = re.compile(r"^(LT|RT|CTC)\d+$|^CT\d\d$")
_BIASTEE_PARTS = re.compile(r"^(LW|RW|CWG|CPK|RPK|CB|CCG|RB|CF|RF)\d+$|^CWW$")


def stage_netlist(n: Netlist, stage: str) -> Netlist:
    """Drop the subcircuits that a stage omits from a full derived netlist.

    Element names follow ``derive_circuit``: the trap stage keeps everything,
    ``biastee`` removes the electrodes, ``bare`` also removes the wires and
    bias tee. Nodes left without elements disappear with them.
    """
    if stage not in STAGES:
        raise ValueError(f"stage must be one of {STAGES}")
    drop = set()
    if stage in ("bare", "biastee"):
        drop |= {c.name for c in n.components if _TRAP_PARTS.match(c.name)}
    if stage == "bare":
        drop |= {c.name for c in n.components if _BIASTEE_PARTS.match(c.name)}
    return without(n, drop)


def optimize_feed_coupling(
    netlist: Netlist,
    *,
    coupling: str = "KF",
    k_bounds: tuple[float, float] = (1e-3, 0.3),
) -> tuple[float, float]:
    """Feed coupling coefficient minimising |S11| at the lower resonance.

    Returns ``(k, |S11|)``. Mirrors the bench procedure of reshaping the feed
    coil until the lower mode is matched.
    """
    import numpy as np
    from scipy.optimize import minimize_scalar

    from .analysis import lower_resonance

    def cost(logk: float) -> float:
        n = netlist.with_values({coupling: math.exp(logk)})
        try:
            return lower_resonance(n, threshold=1.0 + 1e-9).s11_magnitude
        except LookupError:
            return 1.0

    grid = np.linspace(math.log(k_bounds[0]), math.log(k_bounds[1]), 25)
    costs = [cost(x) for x in grid]
    i = int(np.argmin(costs))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    best = minimize_scalar(cost, bounds=(lo, hi), method="bounded", options={"xatol": 1e-6})
    return math.exp(best.x), float(best.fun)

"""Netlist dialect for lumped RLC circuits with mutual couplings.

Grammar (one element per line, ``*`` starts a comment, ``+`` continues the
previous line)::

    R<name> nA nB value
    L<name> nA nB value
    C<name> nA nB value
    K<name> Lx Ly k
    V<name> nA nB AC amplitude [phase_deg]
    .ac {lin|dec} N f_start f_stop
    .port Vname [Z0]
    .probe v(node) ...
    .title text
    .end

Values take the classic netlist suffixes f, p, n, u, m, k, meg, g
(case-insensitive). Note that ``m`` is milli and ``meg`` is mega.
Node ``0`` is ground; ``gnd`` is accepted as an alias.
"""

from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional

import numpy as np

GROUND = "0"
_GROUND_ALIASES = {"0", "gnd"}

SUFFIXES = {
    "f": 1e-15,
    "p": 1e-12,
    "n": 1e-9,
    "u": 1e-6,
    "m": 1e-3,
    "k": 1e3,
    "meg": 1e6,
    "g": 1e9,
}

_VALUE_RE = re.compile(
    r"^([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)([a-zA-Z]*)$"
)
_PROBE_RE = re.compile(r"^v\(([^()\s,]+)\)$", re.IGNORECASE)

KINDS = {"R": "resistor", "L": "inductor", "C": "capacitor"}


class NetlistError(ValueError):
    """Parse or validation failure, carrying the offending line when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str
    elements: tuple[str, ...] = ()
    line: Optional[int] = None

    def __str__(self) -> str:
        prefix = f"line {self.line}: " if self.line is not None else ""
        return f"{prefix}[{self.code}] {self.message}"


@dataclass(frozen=True)
class Component:
    kind: str  # "R", "L" or "C"
    name: str
    node_a: str
    node_b: str
    value: float


@dataclass(frozen=True)
class MutualCoupling:
    name: str
    inductor_a: str
    inductor_b: str
    k: float


@dataclass(frozen=True)
class AcSource:
    name: str
    node_a: str
    node_b: str
    amplitude: float
    phase_deg: float = 0.0

    @property
    def phasor(self) -> complex:
        return self.amplitude * complex(
            math.cos(math.radians(self.phase_deg)), math.sin(math.radians(self.phase_deg))
        )


@dataclass(frozen=True)
class SweepSpec:
    scale: str  # "lin" or "dec"
    points: int
    f_start: float
    f_stop: float

    def frequencies(self) -> np.ndarray:
        """Sweep grid. ``lin`` takes ``points`` in total, ``dec`` takes ``points`` per decade."""
        if self.scale == "lin":
            return np.linspace(self.f_start, self.f_stop, self.points)
        decades = math.log10(self.f_stop / self.f_start)
        n = max(2, int(round(decades * self.points)) + 1)
        f = np.logspace(math.log10(self.f_start), math.log10(self.f_stop), n)
        f[0], f[-1] = self.f_start, self.f_stop
        return f


@dataclass(frozen=True)
class PortSpec:
    source_name: str
    reference_impedance: float = 50.0


@dataclass(frozen=True)
class Netlist:
    components: tuple[Component, ...] = ()
    couplings: tuple[MutualCoupling, ...] = ()
    sources: tuple[AcSource, ...] = ()
    sweep: Optional[SweepSpec] = None
    ports: tuple[PortSpec, ...] = ()
    probes: tuple[str, ...] = ()
    title: str = ""
    # bookkeeping, not part of structural equality
    lines: dict = field(default_factory=dict, compare=False, repr=False, hash=False)
    warnings: tuple[str, ...] = field(default=(), compare=False, repr=False, hash=False)

    @property
    def nodes(self) -> list[str]:
        """Non-ground nodes in order of first appearance."""
        seen: dict[str, None] = {}
        for el in (*self.components, *self.sources):
            for node in (el.node_a, el.node_b):
                if node != GROUND:
                    seen.setdefault(node, None)
        return list(seen)

    @property
    def inductors(self) -> list[Component]:
        return [c for c in self.components if c.kind == "L"]

    def component(self, name: str) -> Component:
        for c in self.components:
            if c.name == name:
                return c
        raise KeyError(name)

    def source(self, name: str) -> AcSource:
        for s in self.sources:
            if s.name == name:
                return s
        raise KeyError(name)

    def values(self) -> dict[str, float]:
        """Every tunable value keyed by element name (R/L/C values and coupling k)."""
        out = {c.name: c.value for c in self.components}
        out.update({k.name: k.k for k in self.couplings})
        return out

    def with_values(self, values: dict[str, float]) -> "Netlist":
        comps = tuple(
            replace(c, value=float(values[c.name])) if c.name in values else c
            for c in self.components
        )
        cpls = tuple(
            replace(k, k=float(values[k.name])) if k.name in values else k
            for k in self.couplings
        )
        return replace(self, components=comps, couplings=cpls)

    def with_sweep(self, sweep: SweepSpec) -> "Netlist":
        return replace(self, sweep=sweep)


def parse_value(token: str) -> float:
    """Parse a number with an optional engineering suffix (``10meg`` -> 1e7)."""
    m = _VALUE_RE.match(token.strip())
    if not m:
        raise ValueError(f"malformed value {token!r}")
    number, suffix = m.groups()
    scale = 1.0
    if suffix:
        try:
            scale = SUFFIXES[suffix.lower()]
        except KeyError:
            raise ValueError(f"unknown suffix {suffix!r} in value {token!r}") from None
    return float(number) * scale


def _node(token: str) -> str:
    return GROUND if token.lower() in _GROUND_ALIASES else token


def _logical_lines(text: str):
    """Yield (first_line_number, tokens) with continuation lines joined."""
    current: Optional[list[str]] = None
    start = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("*"):
            continue
        if stripped.startswith("+"):
            if current is None:
                raise NetlistError("continuation line without a preceding element", lineno)
            current.extend(stripped[1:].split())
            continue
        if current is not None:
            yield start, current
        current, start = stripped.split(), lineno
    if current is not None:
        yield start, current


def parse(text: str, *, validate_result: bool = True, require_sweep: bool = False) -> Netlist:
    """Parse netlist text.

    Raises :class:`NetlistError` (with the line number) on malformed lines and,
    when ``validate_result`` is set, on the first invariant violation.
    """
    components: list[Component] = []
    couplings: list[MutualCoupling] = []
    sources: list[AcSource] = []
    ports: list[PortSpec] = []
    probes: list[str] = []
    warnings: list[str] = []
    lines: dict[str, int] = {}
    sweep: Optional[SweepSpec] = None
    title = ""

    def value(tok: str, lineno: int) -> float:
        try:
            return parse_value(tok)
        except ValueError as exc:
            raise NetlistError(str(exc), lineno) from None

    for lineno, tokens in _logical_lines(text):
        head = tokens[0]
        if head.startswith("."):
            directive = head.lower()
            args = tokens[1:]
            if directive == ".end":
                break
            if directive == ".title":
                title = " ".join(args)
            elif directive == ".ac":
                if len(args) != 4 or args[0].lower() not in ("lin", "dec"):
                    raise NetlistError(".ac expects: .ac {lin|dec} N f_start f_stop", lineno)
                try:
                    points = int(args[1])
                except ValueError:
                    raise NetlistError(f"sweep point count {args[1]!r} is not an integer", lineno) from None
                f0, f1 = value(args[2], lineno), value(args[3], lineno)
                if points < 2:
                    raise NetlistError("sweep needs at least 2 points", lineno)
                if not (0 < f0 < f1) or not math.isfinite(f1):
                    raise NetlistError("sweep needs 0 < f_start < f_stop", lineno)
                sweep = SweepSpec(args[0].lower(), points, f0, f1)
            elif directive == ".port":
                if len(args) not in (1, 2):
                    raise NetlistError(".port expects: .port Vname [Z0]", lineno)
                z0 = value(args[1], lineno) if len(args) == 2 else 50.0
                if not (z0 > 0 and math.isfinite(z0)):
                    raise NetlistError("port reference impedance must be positive", lineno)
                ports.append(PortSpec(args[0], z0))
            elif directive == ".probe":
                if not args:
                    raise NetlistError(".probe expects at least one v(node)", lineno)
                for arg in args:
                    m = _PROBE_RE.match(arg)
                    if not m:
                        raise NetlistError(f"malformed probe {arg!r}", lineno)
                    probes.append(_node(m.group(1)))
            else:
                warnings.append(f"line {lineno}: unknown directive {head} ignored")
            continue

        letter = head[0].upper()
        if head in lines:
            raise NetlistError(f"duplicate element name {head}", lineno)
        if letter in KINDS:
            if len(tokens) != 4:
                raise NetlistError(f"{KINDS[letter]} expects: name nA nB value", lineno)
            components.append(
                Component(letter, head, _node(tokens[1]), _node(tokens[2]), value(tokens[3], lineno))
            )
        elif letter == "K":
            if len(tokens) != 4:
                raise NetlistError("coupling expects: Kname Lx Ly k", lineno)
            couplings.append(MutualCoupling(head, tokens[1], tokens[2], value(tokens[3], lineno)))
        elif letter == "V":
            if len(tokens) not in (5, 6) or tokens[3].upper() != "AC":
                raise NetlistError("source expects: Vname nA nB AC amplitude [phase_deg]", lineno)
            phase = value(tokens[5], lineno) if len(tokens) == 6 else 0.0
            sources.append(
                AcSource(head, _node(tokens[1]), _node(tokens[2]), value(tokens[4], lineno), phase)
            )
        else:
            raise NetlistError(f"unknown element type {head!r}", lineno)
        lines[head] = lineno

    netlist = Netlist(
        components=tuple(components),
        couplings=tuple(couplings),
        sources=tuple(sources),
        sweep=sweep,
        ports=tuple(ports),
        probes=tuple(probes),
        title=title,
        lines=lines,
        warnings=tuple(warnings),
    )
    if require_sweep and sweep is None:
        raise NetlistError("missing .ac directive")
    if validate_result:
        diags = validate(netlist)
        if diags:
            raise NetlistError(diags[0].message, diags[0].line)
    return netlist


def validate(n: Netlist) -> list[Diagnostic]:
    """Check every netlist invariant; an empty list means the netlist is sound."""
    diags: list[Diagnostic] = []
    line = n.lines.get

    counts: dict[str, int] = defaultdict(int)
    for el in (*n.components, *n.couplings, *n.sources):
        counts[el.name] += 1
    for name, count in counts.items():
        if count > 1:
            diags.append(Diagnostic("duplicate-name", f"duplicate element name {name}", (name,), line(name)))

    for c in n.components:
        if not (math.isfinite(c.value) and c.value > 0):
            diags.append(Diagnostic("bad-value", f"{c.name} value must be positive and finite", (c.name,), line(c.name)))
        if c.node_a == c.node_b:
            diags.append(Diagnostic("self-loop", f"{c.name} connects node {c.node_a} to itself", (c.name,), line(c.name)))
    for s in n.sources:
        if s.node_a == s.node_b:
            diags.append(Diagnostic("self-loop", f"{s.name} connects node {s.node_a} to itself", (s.name,), line(s.name)))
        if not (math.isfinite(s.amplitude) and math.isfinite(s.phase_deg)):
            diags.append(Diagnostic("bad-value", f"{s.name} amplitude/phase must be finite", (s.name,), line(s.name)))

    inductors = {c.name for c in n.components if c.kind == "L"}
    pairs: set[frozenset] = set()
    for k in n.couplings:
        missing = [x for x in (k.inductor_a, k.inductor_b) if x not in inductors]
        if missing:
            diags.append(Diagnostic(
                "dangling-coupling",
                f"{k.name} references undeclared inductor(s) {', '.join(missing)}",
                (k.name, *missing), line(k.name),
            ))
        if k.inductor_a == k.inductor_b:
            diags.append(Diagnostic("dangling-coupling", f"{k.name} couples {k.inductor_a} to itself", (k.name,), line(k.name)))
        if not (math.isfinite(k.k) and -1.0 < k.k < 1.0):
            diags.append(Diagnostic("coupling-range", f"{k.name} coupling coefficient out of range (-1, 1): {k.k}", (k.name,), line(k.name)))
        pair = frozenset((k.inductor_a, k.inductor_b))
        if pair in pairs:
            diags.append(Diagnostic("duplicate-coupling", f"{k.name} repeats a coupling between {k.inductor_a} and {k.inductor_b}", (k.name,), line(k.name)))
        pairs.add(pair)

    for p in n.ports:
        if p.source_name not in {s.name for s in n.sources}:
            diags.append(Diagnostic("dangling-port", f".port references unknown source {p.source_name}", (p.source_name,)))
        if not p.reference_impedance > 0:
            diags.append(Diagnostic("bad-value", f"port {p.source_name} reference impedance must be positive", (p.source_name,)))
    all_nodes = set(n.nodes) | {GROUND}
    for probe in n.probes:
        if probe not in all_nodes:
            diags.append(Diagnostic("dangling-probe", f".probe references unknown node {probe}", (probe,)))

    island = _floating_nodes(n)
    if island:
        diags.append(Diagnostic(
            "disconnected",
            f"nodes disconnected from ground: {', '.join(island)}",
            tuple(island),
        ))
    return diags


def _floating_nodes(n: Netlist) -> list[str]:
    adj: dict[str, set[str]] = defaultdict(set)
    for el in (*n.components, *n.sources):
        adj[el.node_a].add(el.node_b)
        adj[el.node_b].add(el.node_a)
    reached = {GROUND}
    stack = [GROUND]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in reached:
                reached.add(nxt)
                stack.append(nxt)
    return [node for node in n.nodes if node not in reached]


def format_value(v: float) -> str:
    return repr(float(v))


def serialize(n: Netlist) -> str:
    """Render a netlist back into the dialect; ``parse(serialize(n)) == n``."""
    out: list[str] = []
    if n.title:
        out.append(f".title {n.title}")
    for c in n.components:
        out.append(f"{c.name} {c.node_a} {c.node_b} {format_value(c.value)}")
    for k in n.couplings:
        out.append(f"{k.name} {k.inductor_a} {k.inductor_b} {format_value(k.k)}")
    for s in n.sources:
        out.append(f"{s.name} {s.node_a} {s.node_b} AC {format_value(s.amplitude)} {format_value(s.phase_deg)}")
    if n.sweep is not None:
        sw = n.sweep
        out.append(f".ac {sw.scale} {sw.points} {format_value(sw.f_start)} {format_value(sw.f_stop)}")
    for p in n.ports:
        out.append(f".port {p.source_name} {format_value(p.reference_impedance)}")
    if n.probes:
        out.append(".probe " + " ".join(f"v({p})" for p in n.probes))
    out.append(".end")
    return "\n".join(out) + "\n"


def without(n: Netlist, names: Iterable[str]) -> Netlist:
    """Drop elements (and couplings touching dropped inductors) by name."""
    drop = set(names)
    comps = tuple(c for c in n.components if c.name not in drop)
    kept_l = {c.name for c in comps if c.kind == "L"}
    cpls = tuple(
        k for k in n.couplings
        if k.name not in drop and k.inductor_a in kept_l and k.inductor_b in kept_l
    )
    nodes = {GROUND}
    for c in comps:
        nodes.update((c.node_a, c.node_b))
    for s in n.sources:
        nodes.update((s.node_a, s.node_b))
    probes = tuple(p for p in n.probes if p in nodes)
    return replace(n, components=comps, couplings=cpls, probes=probes)

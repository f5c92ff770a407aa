"""Frequency-domain modified nodal analysis.

Unknowns are ordered as non-ground node voltages, then inductor branch
currents, then voltage-source currents. Every element stamps into a pair of
real matrices so that the system at angular frequency w is
``(G + j*w*B) x = b``; mutual couplings enter the inductor branch rows of ``B``.

Phasor convention: a source ``AC a phi`` is the phasor ``a*exp(j*phi)`` of the
physical signal ``a*cos(2*pi*f*t + phi)``. A sine-referenced drive only adds a
global -90 degree phase, which cancels in every phase difference.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .netlist import GROUND, Netlist, PortSpec


class SingularCircuitError(RuntimeError):
    def __init__(self, message: str, unknowns: Sequence[str] = (), frequency: Optional[float] = None):
        self.unknowns = tuple(unknowns)
        self.frequency = frequency
        where = f" at f={frequency!r} Hz" if frequency is not None else ""
        detail = f" (involves {', '.join(self.unknowns)})" if self.unknowns else ""
        super().__init__(f"{message}{where}{detail}")


@dataclass(frozen=True)
class Stamp:
    """Frequency-independent pieces of the MNA system of one netlist."""

    G: np.ndarray
    B: np.ndarray
    rhs: np.ndarray
    labels: tuple[str, ...]
    node_index: dict
    inductor_index: dict
    source_index: dict

    @property
    def size(self) -> int:
        return len(self.labels)

    def matrix(self, f: float) -> np.ndarray:
        return self.G + (2j * math.pi * f) * self.B

    def matrices(self, freqs: np.ndarray) -> np.ndarray:
        w = 2j * math.pi * np.asarray(freqs, dtype=float)
        return self.G[None, :, :] + w[:, None, None] * self.B[None, :, :]


@dataclass(frozen=True)
class PhasorSolution:
    frequency: float
    node_voltages: dict
    inductor_currents: dict
    source_currents: dict

    def voltage(self, node: str) -> complex:
        return 0j if node == GROUND else self.node_voltages[node]


@dataclass(frozen=True)
class SweepResult:
    frequencies: np.ndarray
    solutions: tuple[PhasorSolution, ...]
    port_input_impedance: np.ndarray  # shape (n_freq,) for the first port, complex
    port: Optional[PortSpec] = None

    def node_voltage(self, node: str) -> np.ndarray:
        return np.array([s.voltage(node) for s in self.solutions])


def build_stamp(n: Netlist, *, terminate_ports: bool = False) -> Stamp:
    """Stamp the netlist.

    With ``terminate_ports`` each port source row becomes ``V = -Z0*I``, i.e.
    the ideal source is replaced by its reference impedance (used for the
    natural-frequency analysis of the loaded circuit).
    """
    nodes = n.nodes
    inductors = n.inductors
    node_index = {name: i for i, name in enumerate(nodes)}
    nv, nl, ns = len(nodes), len(inductors), len(n.sources)
    size = nv + nl + ns
    ind_index = {c.name: nv + i for i, c in enumerate(inductors)}
    src_index = {s.name: nv + nl + i for i, s in enumerate(n.sources)}
    G = np.zeros((size, size))
    B = np.zeros((size, size))
    rhs = np.zeros(size, dtype=complex)

    def idx(node: str) -> Optional[int]:
        return None if node == GROUND else node_index[node]

    def stamp2(M: np.ndarray, a: Optional[int], b: Optional[int], y: float) -> None:
        if a is not None:
            M[a, a] += y
        if b is not None:
            M[b, b] += y
        if a is not None and b is not None:
            M[a, b] -= y
            M[b, a] -= y

    for c in n.components:
        a, b = idx(c.node_a), idx(c.node_b)
        if c.kind == "R":
            stamp2(G, a, b, 1.0 / c.value)
        elif c.kind == "C":
            stamp2(B, a, b, c.value)
        else:
            row = ind_index[c.name]
            # KCL: branch current leaves node a and enters node b
            if a is not None:
                G[a, row] += 1.0
                G[row, a] += 1.0
            if b is not None:
                G[b, row] -= 1.0
                G[row, b] -= 1.0
            # V_a - V_b - jw L I = 0
            B[row, row] -= c.value
    values = {c.name: c.value for c in inductors}
    for k in n.couplings:
        m = k.k * math.sqrt(values[k.inductor_a] * values[k.inductor_b])
        ra, rb = ind_index[k.inductor_a], ind_index[k.inductor_b]
        B[ra, rb] -= m
        B[rb, ra] -= m

    port_z0 = {p.source_name: p.reference_impedance for p in n.ports}
    for s in n.sources:
        a, b = idx(s.node_a), idx(s.node_b)
        row = src_index[s.name]
        # source current is delivered out of the + terminal into the network
        if a is not None:
            G[a, row] -= 1.0
            G[row, a] += 1.0
        if b is not None:
            G[b, row] += 1.0
            G[row, b] -= 1.0
        if terminate_ports and s.name in port_z0:
            G[row, row] += port_z0[s.name]
        else:
            rhs[row] = s.phasor

    labels = tuple(
        [f"v({x})" for x in nodes] + [f"i({c.name})" for c in inductors] + [f"i({s.name})" for s in n.sources]
    )
    return Stamp(G, B, rhs, labels, node_index, ind_index, src_index)


def assemble(n: Netlist, f: float) -> tuple[np.ndarray, np.ndarray]:
    """Complex system matrix and right-hand side at frequency ``f`` (Hz)."""
    if not (f > 0 and math.isfinite(f)):
        raise ValueError(f"frequency must be positive and finite, got {f!r}")
    st = build_stamp(n)
    return st.matrix(f), st.rhs.copy()


def _null_unknowns(A: np.ndarray, labels: Sequence[str]) -> list[str]:
    _, s, vh = np.linalg.svd(A)
    v = np.abs(vh[-1])
    return [labels[i] for i in np.flatnonzero(v > 1e-6 * v.max())]


def _check(A: np.ndarray, x: np.ndarray, b: np.ndarray, labels, f) -> None:
    bnorm = np.linalg.norm(b)
    if not np.all(np.isfinite(x)):
        raise SingularCircuitError("singular MNA matrix", _null_unknowns(A, labels), f)
    if bnorm > 0 and np.linalg.norm(A @ x - b) > 1e-10 * bnorm:
        raise SingularCircuitError("MNA residual too large, matrix numerically singular",
                                   _null_unknowns(A, labels), f)


def _solve_batch(A: np.ndarray, b: np.ndarray, labels, freqs) -> np.ndarray:
    # LAPACK gesv: LU with partial pivoting
    try:
        x = np.linalg.solve(A, np.broadcast_to(b, A.shape[:2])[..., None])[..., 0]
    except np.linalg.LinAlgError:
        for Ai, fi in zip(A, freqs):
            try:
                np.linalg.solve(Ai, b)
            except np.linalg.LinAlgError:
                raise SingularCircuitError("singular MNA matrix", _null_unknowns(Ai, labels), fi) from None
        raise
    r = np.einsum("fij,fj->fi", A, x) - b
    bad = np.linalg.norm(r, axis=1) > 1e-10 * max(np.linalg.norm(b), 1e-300)
    if np.any(bad) or not np.all(np.isfinite(x)):
        i = int(np.flatnonzero(bad | ~np.all(np.isfinite(x), axis=1))[0])
        _check(A[i], x[i], b, labels, float(freqs[i]))
    return x


def _to_solution(st: Stamp, n: Netlist, f: float, x: np.ndarray) -> PhasorSolution:
    return PhasorSolution(
        frequency=float(f),
        node_voltages={node: complex(x[i]) for node, i in st.node_index.items()},
        inductor_currents={name: complex(x[i]) for name, i in st.inductor_index.items()},
        source_currents={name: complex(x[i]) for name, i in st.source_index.items()},
    )


def solve(n: Netlist, f: float) -> PhasorSolution:
    """Solve the phasor system at one frequency."""
    if not (f > 0 and math.isfinite(f)):
        raise ValueError(f"frequency must be positive and finite, got {f!r}")
    st = build_stamp(n)
    x = _solve_batch(st.matrix(f)[None], st.rhs, st.labels, [f])[0]
    return _to_solution(st, n, f, x)


def solve_raw(st: Stamp, freqs: np.ndarray) -> np.ndarray:
    """Solution vectors for each frequency, shape (n_freq, n_unknowns)."""
    freqs = np.asarray(freqs, dtype=float)
    if freqs.size and (np.any(freqs <= 0) or not np.all(np.isfinite(freqs))):
        raise ValueError("frequencies must be positive and finite")
    chunks = _chunks(len(freqs))
    if len(chunks) == 1:
        return _solve_batch(st.matrices(freqs), st.rhs, st.labels, freqs)
    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        parts = list(pool.map(lambda sl: _solve_batch(st.matrices(freqs[sl]), st.rhs, st.labels, freqs[sl]), chunks))
    return np.concatenate(parts)


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get("RESODRIVE_THREADS", "1")))
    except ValueError:
        return 1


def _chunks(n: int, size: int = 2048) -> list[slice]:
    if thread_count() == 1 or n <= size:
        return [slice(0, n)]
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def port_impedance(st: Stamp, n: Netlist, x: np.ndarray, port: PortSpec) -> np.ndarray:
    src = n.source(port.source_name)
    i = x[..., st.source_index[src.name]]
    va = x[..., st.node_index[src.node_a]] if src.node_a != GROUND else 0.0
    vb = x[..., st.node_index[src.node_b]] if src.node_b != GROUND else 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        return (va - vb) / i


def sweep(n: Netlist, freqs: Optional[np.ndarray] = None) -> SweepResult:
    """Solve at every point of the ``.ac`` grid (or the given frequencies)."""
    if freqs is None:
        if n.sweep is None:
            raise ValueError("netlist has no .ac directive")
        freqs = n.sweep.frequencies()
    if not n.sources:
        raise ValueError("netlist has no AC source")
    freqs = np.asarray(freqs, dtype=float)
    st = build_stamp(n)
    x = solve_raw(st, freqs)
    port = n.ports[0] if n.ports else None
    zin = port_impedance(st, n, x, port) if port else np.full(len(freqs), np.nan + 0j)
    sols = tuple(_to_solution(st, n, f, xi) for f, xi in zip(freqs, x))
    return SweepResult(freqs, sols, zin, port)


def natural_frequencies(n: Netlist, f_ref: float = 1e8) -> np.ndarray:
    """Complex natural frequencies s/(2*pi) (Hz) of the port-terminated circuit.

    Roots of det(G + s B) = 0 from the generalized eigenproblem; only
    oscillatory roots with positive imaginary part are returned, sorted by
    frequency.
    """
    import scipy.linalg

    st = build_stamp(n, terminate_ports=True)
    w_ref = 2 * math.pi * f_ref
    G, B = st.G.copy(), st.B * w_ref
    # row/column equilibration keeps capacitor and inductor scales comparable
    scale_r = 1.0 / np.maximum(np.abs(G).max(axis=1), np.abs(B).max(axis=1))
    scale_c = 1.0 / np.maximum(np.abs(G * scale_r[:, None]).max(axis=0), np.abs(B * scale_r[:, None]).max(axis=0))
    G = G * scale_r[:, None] * scale_c[None, :]
    B = B * scale_r[:, None] * scale_c[None, :]
    ev = scipy.linalg.eigvals(G, -B)
    ev = ev[np.isfinite(ev)] * w_ref / (2 * math.pi)
    ev = ev[ev.imag > 0]
    return ev[np.argsort(ev.imag)]

"""Observables derived from sweeps: S11, resonances, Q factors, phase splits."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from . import mna
from .netlist import Netlist, PortSpec

OPEN_CIRCUIT_OHM = 1e12


class UnderResolvedError(ValueError):
    """Too few sweep points inside a resonance band to measure its width."""


class DegenerateVoltageError(ValueError):
    pass


@dataclass(frozen=True)
class Resonance:
    frequency: float
    s11_magnitude: float
    q_factor: float = math.nan
    kind_hint: str = "other"  # "lower", "upper" or "other"


@dataclass(frozen=True)
class QEstimate:
    q: float
    bandwidth: float
    points_in_band: int
    under_sampled: bool

    def __float__(self) -> float:
        return self.q


@dataclass(frozen=True)
class PhaseReport:
    frequency: float
    pair_phase_deg: dict = field(default_factory=dict)
    amplitude_ratio: dict = field(default_factory=dict)


def s11(z_in, z0: float):
    """Reflection coefficient (z_in - z0)/(z_in + z0); scalar or array."""
    if not z0 > 0:
        raise ValueError("reference impedance must be positive")
    z = np.asarray(z_in, dtype=complex)
    if np.any(z == -z0):
        raise ZeroDivisionError("z_in = -z0 is a pole of the reflection coefficient")
    with np.errstate(invalid="ignore", over="ignore"):
        g = (z - z0) / (z + z0)
    g = np.where(np.abs(z) > OPEN_CIRCUIT_OHM, 1.0 + 0j, g)
    return complex(g) if g.ndim == 0 else g


def wrap_deg(d):
    """Wrap degrees into (-180, 180]."""
    w = np.mod(np.asarray(d, dtype=float) + 180.0, 360.0) - 180.0
    w = np.where(w == -180.0, 180.0, w)
    return float(w) if w.ndim == 0 else w


def phase_between(solution: mna.PhasorSolution, a: str, b: str) -> float:
    """arg(V_a) - arg(V_b) in degrees, wrapped to (-180, 180]."""
    va, vb = solution.voltage(a), solution.voltage(b)
    if abs(va) <= 1e-15 or abs(vb) <= 1e-15:
        raise DegenerateVoltageError(f"voltage magnitude too small to define a phase at {a} or {b}")
    if a == b:
        return 0.0
    return wrap_deg(math.degrees(math.atan2((va / vb).imag, (va / vb).real)))


def phase_report(solution: mna.PhasorSolution, nodes: Sequence[str]) -> PhaseReport:
    phases, ratios = {}, {}
    for a, b in combinations(nodes, 2):
        try:
            phases[(a, b)] = phase_between(solution, a, b)
        except DegenerateVoltageError:
            continue
        ratios[(a, b)] = abs(solution.voltage(a)) / abs(solution.voltage(b))
    return PhaseReport(solution.frequency, phases, ratios)


def _s11_mag(sweep: mna.SweepResult, port: Optional[PortSpec]) -> np.ndarray:
    port = port or sweep.port
    if port is None:
        raise ValueError("sweep has no port to reference S11 against")
    return np.abs(s11(sweep.port_input_impedance, port.reference_impedance))


def _parabola_vertex(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Vertex of the parabola through three points (x need not be uniform)."""
    x0 = x[1]
    c = np.polyfit(x - x0, y, 2)
    if c[0] <= 0:
        return float(x[1]), float(y[1])
    xv = -c[1] / (2 * c[0])
    xv = min(max(xv, x[0] - x0), x[2] - x0)
    return float(x0 + xv), float(max(np.polyval(c, xv), 0.0))


def _dips(f: np.ndarray, mag: np.ndarray, threshold: float) -> list[tuple[float, float]]:
    out = []
    for i in range(1, len(f) - 1):
        if mag[i] < mag[i - 1] and mag[i] < mag[i + 1] and mag[i] < threshold:
            out.append(_parabola_vertex(f[i - 1:i + 2], mag[i - 1:i + 2]))
    return out


def find_resonances(
    sweep: mna.SweepResult,
    port: Optional[PortSpec] = None,
    *,
    threshold: float = 0.9,
    netlist: Optional[Netlist] = None,
    with_q: bool = True,
) -> list[Resonance]:
    """Isolated local minima of |S11| below ``threshold``, refined quadratically.

    Passing ``netlist`` switches on the high-accuracy mode, which re-solves
    the circuit on a fine local grid around every coarse dip.
    """
    f = np.asarray(sweep.frequencies, dtype=float)
    if len(f) < 5:
        raise ValueError("resonance search needs at least 5 sweep points")
    port = port or sweep.port
    mag = _s11_mag(sweep, port)
    found = _dips(f, mag, threshold)
    if netlist is not None:
        step = np.median(np.diff(f))
        refined = []
        for f0, m0 in found:
            local = np.linspace(max(f0 - 2 * step, f[0]), min(f0 + 2 * step, f[-1]), 81)
            sub = _dips(local, _s11_mag(mna.sweep(netlist, local), port), threshold)
            refined.append(min(sub, key=lambda d: d[1]) if sub else (f0, m0))
        found = refined
    res = []
    for i, (f0, m0) in enumerate(sorted(found)):
        hint = "lower" if i == 0 and len(found) >= 2 else "upper" if i == 1 else "other"
        q = math.nan
        if with_q:
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    q = q_factor(sweep, f0).q
            except (UnderResolvedError, ValueError):
                pass
        res.append(Resonance(f0, m0, q, hint))
    return res


def _resonant_part(f: np.ndarray, w: np.ndarray, i0: int, half_width: float) -> tuple[np.ndarray, slice]:
    """Subtract a linear background fixed at +-20 half-widths (clipped to the sweep)."""
    lo = int(np.searchsorted(f, f[i0] - 40 * half_width))
    hi = int(np.searchsorted(f, f[i0] + 40 * half_width, side="right")) - 1
    lo, hi = max(lo, 0), min(hi, len(f) - 1)
    sl = slice(lo, hi + 1)
    bg = w[lo] + (w[hi] - w[lo]) * (f[sl] - f[lo]) / (f[hi] - f[lo])
    return w[sl] - bg, sl


def _peak_halfwidth(f: np.ndarray, mag: np.ndarray, i0: int) -> float:
    level = mag[i0] / math.sqrt(2)
    left = i0
    while left > 0 and mag[left] > level:
        left -= 1
    right = i0
    while right < len(f) - 1 and mag[right] > level:
        right += 1
    return max(f[right] - f[left], f[min(i0 + 1, len(f) - 1)] - f[max(i0 - 1, 0)]) / 2


def _climb(mag: np.ndarray, i: int) -> int:
    """Index of the local maximum reached by walking uphill from ``i``."""
    while True:
        if i > 0 and mag[i - 1] > mag[i]:
            i -= 1
        elif i < len(mag) - 1 and mag[i + 1] > mag[i]:
            i += 1
        else:
            return i


def q_factor(sweep: mna.SweepResult, resonance, *, min_points: int = 5) -> QEstimate:
    """Quality factor f0/df of a resonance from the +-45 degree phase band.

    The band is measured on the resonant part of the port immittance: the
    admittance for a series-type resonance (|Y| peaks, so the band is where
    the port impedance phase crosses +-45 degrees) or the impedance for a
    parallel-type one, after removing a slowly varying linear background.
    """
    f0 = float(getattr(resonance, "frequency", resonance))
    f = np.asarray(sweep.frequencies, dtype=float)
    z = np.asarray(sweep.port_input_impedance, dtype=complex)
    if not (f[0] <= f0 <= f[-1]):
        raise ValueError("resonance lies outside the sweep range")
    i_near = int(np.argmin(np.abs(f - f0)))
    with np.errstate(divide="ignore", invalid="ignore"):
        y = 1.0 / z
    # the resonant immittance is the one with a local maximum nearest the dip
    cands = []
    for w in (y, z):
        i0 = _climb(np.abs(w), i_near)
        if 0 < i0 < len(f) - 1:
            cands.append((abs(i0 - i_near), w, i0))
    if not cands:
        raise UnderResolvedError("no immittance peak inside the sweep")
    _, w, i0 = min(cands, key=lambda c: c[0])
    hw = _peak_halfwidth(f, np.abs(w), i0)
    r, sl = _resonant_part(f, w, i0, hw)
    fr = f[sl]
    k0 = int(np.argmax(np.abs(r)))
    phase = np.unwrap(np.angle(r)) - np.angle(r[k0])
    phase = np.degrees(phase - 2 * np.pi * np.round(phase[k0] / (2 * np.pi)))
    in_band = np.abs(phase) < 45.0
    # contiguous band around the peak
    lo = k0
    while lo > 0 and in_band[lo - 1]:
        lo -= 1
    hi = k0
    while hi < len(fr) - 1 and in_band[hi + 1]:
        hi += 1
    npts = hi - lo + 1
    if npts < 3:
        raise UnderResolvedError(f"only {npts} sweep points inside the resonance band")
    if lo == 0 or hi == len(fr) - 1:
        raise UnderResolvedError("resonance band extends past the sweep window")

    def crossing(i_out: int, i_in: int) -> float:
        p_out, p_in = abs(phase[i_out]), abs(phase[i_in])
        t = (45.0 - p_in) / (p_out - p_in)
        return fr[i_in] + t * (fr[i_out] - fr[i_in])

    f_lo, f_hi = crossing(lo - 1, lo), crossing(hi + 1, hi)
    bw = f_hi - f_lo
    under = npts < min_points
    if under:
        warnings.warn(f"resonance band holds only {npts} points; Q estimate is coarse", RuntimeWarning)
    return QEstimate(0.5 * (f_lo + f_hi) / bw, bw, npts, under)


def lower_resonance(
    n: Netlist,
    port: Optional[PortSpec] = None,
    *,
    f_min: Optional[float] = None,
    f_max: Optional[float] = None,
    threshold: float = 0.9,
    points: int = 241,
    span_linewidths: float = 8.0,
    min_q: float = 3.0,
) -> Resonance:
    """Lowest |S11| dip, located from the circuit's natural frequencies.

    Natural frequencies of the port-terminated circuit seed narrow local
    sweeps; the first candidate (in frequency order) with a dip below
    ``threshold`` is refined quadratically and returned.
    """
    port = port or (n.ports[0] if n.ports else None)
    if port is None:
        raise ValueError("netlist has no port")
    if n.sweep is not None:
        f_min = n.sweep.f_start if f_min is None else f_min
        f_max = n.sweep.f_stop if f_max is None else f_max
    f_min = 0.0 if f_min is None else f_min
    f_max = math.inf if f_max is None else f_max
    poles = mna.natural_frequencies(n, f_ref=0.5 * (f_min + f_max) if math.isfinite(f_max) else 1e8)
    for p in poles:
        fp = p.imag
        q = abs(p) / max(-2 * p.real, 1e-300)
        if not (f_min <= fp <= f_max) or q < min_q:
            continue
        span = span_linewidths * fp / q
        local = np.linspace(fp - span, fp + span, points)
        local = local[local > 0]
        sw = mna.sweep(n, local)
        dips = _dips(local, _s11_mag(sw, port), threshold)
        if dips:
            f0, m0 = min(dips, key=lambda d: abs(d[0] - fp))
            if f_min <= f0 <= f_max:
                try:
                    with warnings.catch_warnings():
                        warnings.simplefilter("ignore")
                        qv = q_factor(sw, f0).q
                except (UnderResolvedError, ValueError):
                    qv = math.nan
                return Resonance(f0, m0, qv, "lower")
    raise LookupError(f"no |S11| dip below {threshold} between {f_min} and {f_max} Hz")

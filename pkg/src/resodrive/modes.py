"""Closed-form normal modes of two identical LCR tanks coupled by M and C_c.

Each arm is a coil L (series loss R) grounded at one end, with a capacitance
C from its open end to ground; the open ends are joined by C_c. With the
coils wound in opposite senses the out-of-phase (asymmetric) mode sees L+M
and C+2*C_c, the in-phase (symmetric) mode sees L-M and C:

    w_s = 1/sqrt((L-M) C)             Q_s = sqrt((L-M)/C) / R
    w_a = 1/sqrt((L+M)(C+2 C_c))      Q_a = sqrt((L+M)/(C+2 C_c)) / R

Mode currents: I_s = I_1 + I_2 (sum of the coil currents) and I_a, the
current circulating through the coupling capacitor C_c.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class CoupledLCRParams:
    L: float
    C: float
    M: float
    C_c: float
    R: float
    V0: float = 1.0

    def __post_init__(self):
        if not (self.L > 0 and self.C > 0 and self.R > 0 and self.V0 > 0):
            raise ValueError("L, C, R and V0 must be positive")
        if self.C_c < 0:
            raise ValueError("C_c must be non-negative")
        if not abs(self.M) < self.L:
            raise ValueError("|M| must be smaller than L")

    @classmethod
    def from_k(cls, L: float, C: float, k: float, C_c: float, R: float, V0: float = 1.0):
        return cls(L, C, k * L, C_c, R, V0)


@dataclass(frozen=True)
class ModePair:
    omega_a: float
    omega_s: float
    gamma_a: float
    gamma_s: float
    q_a: float
    q_s: float

    @property
    def f_a(self) -> float:
        return self.omega_a / (2 * math.pi)

    @property
    def f_s(self) -> float:
        return self.omega_s / (2 * math.pi)


def mode_frequencies(p: CoupledLCRParams) -> ModePair:
    la, ca = p.L + p.M, p.C + 2 * p.C_c
    ls, cs = p.L - p.M, p.C
    w_a = 1 / math.sqrt(la * ca)
    w_s = 1 / math.sqrt(ls * cs)
    q_a = math.sqrt(la / ca) / p.R
    q_s = math.sqrt(ls / cs) / p.R
    return ModePair(w_a, w_s, w_a / q_a, w_s / q_s, q_a, q_s)


def driven_mode_response(p: CoupledLCRParams, omega: float) -> tuple[complex, complex]:
    """Steady-state phasors (I_a, I_s) for a drive V0*exp(j*w*t) in series with coil 1.

    Each mode obeys I'' + Gamma*I' + w_i^2*I = F_i*dV/dt/V0, so
    ``I_i = F_i * j*w / (w_i^2 - w^2 + j*Gamma_i*w)`` with
    F_a = V0/((L+M)(2 + C/C_c)) and F_s = V0/(L-M). Phases are relative to
    the source voltage; at w = w_i the mode current is in phase with the
    source and lags the forcing term dV/dt by 90 degrees. For C_c = 0 the
    coupling-branch current vanishes identically and I_a = 0 is returned.
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    m = mode_frequencies(p)
    jw = 1j * omega
    if p.C_c == 0:
        f_a = 0.0
    else:
        f_a = p.V0 / ((p.L + p.M) * (2 + p.C / p.C_c))
    f_s = p.V0 / (p.L - p.M)
    i_a = f_a * jw / (m.omega_a**2 - omega**2 + 1j * m.gamma_a * omega)
    i_s = f_s * jw / (m.omega_s**2 - omega**2 + 1j * m.gamma_s * omega)
    return complex(i_a), complex(i_s)


def coil_currents(p: CoupledLCRParams, omega: float) -> tuple[complex, complex]:
    """Recombine the mode currents into the two coil currents (I_1, I_2)."""
    i_a, i_s = driven_mode_response(p, omega)
    if p.C_c == 0:
        # asymmetric mode then lives in the coil difference alone
        m = mode_frequencies(p)
        diff = (p.V0 / (p.L + p.M)) * 1j * omega / (m.omega_a**2 - omega**2 + 1j * m.gamma_a * omega)
    else:
        diff = i_a * (2 + p.C / p.C_c)
    return 0.5 * (i_s + diff), 0.5 * (i_s - diff)


def mode_split_k_sweep(p: CoupledLCRParams, k_values: Iterable[float]) -> list[tuple[float, float, float]]:
    """(k, f_a, f_s) rows with M = k*L for each coupling coefficient."""
    rows = []
    for k in k_values:
        if not 0 <= k < 1:
            raise ValueError("k must lie in [0, 1)")
        m = mode_frequencies(replace(p, M=k * p.L))
        rows.append((float(k), m.f_a, m.f_s))
    return rows


def split_is_monotone(rows: list[tuple[float, float, float]]) -> bool:
    f_a = np.array([r[1] for r in rows])
    f_s = np.array([r[2] for r in rows])
    return bool(np.all(np.diff(f_s) > 0) and np.all(np.diff(f_a) < 0))

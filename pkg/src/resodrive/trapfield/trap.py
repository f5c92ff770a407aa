"""RF fields, pseudopotentials, secular frequencies and Mathieu parameters of the trap.

Electrode order follows ``mesh``: rods on +x, +y, -x, -y, then the end caps
at +z and -z. The rods on the x axis form pair A, those on the y axis pair B.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.constants as sc

from . import bem
from .mesh import TrapGeometry, build_mesh, inside_conductor

ATOMIC_MASS = sc.physical_constants["atomic mass constant"][0]
MATHIEU_Q_LIMIT = 0.908  # first stability region edge at a = 0


class InsideConductorError(ValueError):
    pass


class NoMinimumError(RuntimeError):
    def __init__(self, message: str, unstable_axes: Sequence[int] = ()):
        self.unstable_axes = tuple(unstable_axes)
        super().__init__(message)


class PoorFitError(RuntimeError):
    pass


@dataclass(frozen=True)
class IonSpec:
    mass: float = 171 * ATOMIC_MASS
    charge: float = sc.elementary_charge

    def __post_init__(self):
        if not self.mass > 0 or self.charge == 0:
            raise ValueError("ion mass and |charge| must be positive")


@dataclass(frozen=True)
class DriveConfig:
    """RF drive and DC electrode settings.

    ``v_pp`` is the RF amplitude between the two rod pairs. Single-phase drive
    puts it all on pair A (pair B grounded); two-phase drive puts +v_pp/2 on
    pair A and -v_pp/2 on pair B. The end caps sit at RF ground unless
    ``endcap_rf_fraction`` adds an in-phase pickup (fraction of v_pp).
    """

    scheme: str = "two_phase"
    v_pp: float = 800.0
    omega: float = 2 * math.pi * 30e6
    endcap_dc: tuple[float, float] = (8.0, 8.0)
    electrode_dc_bias: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    endcap_rf_fraction: float = 0.0

    def __post_init__(self):
        if self.scheme not in ("single_phase", "two_phase"):
            raise ValueError("scheme must be 'single_phase' or 'two_phase'")
        if not (self.v_pp > 0 and self.omega > 0):
            raise ValueError("v_pp and omega must be positive")
        if isinstance(self.endcap_dc, (int, float)):
            object.__setattr__(self, "endcap_dc", (float(self.endcap_dc),) * 2)
        if len(self.endcap_dc) != 2 or len(self.electrode_dc_bias) != 4:
            raise ValueError("need 2 end-cap voltages and 4 electrode biases")

    def rf_phasors(self) -> np.ndarray:
        v = self.v_pp
        e = self.endcap_rf_fraction * v
        if self.scheme == "single_phase":
            return np.array([v, 0.0, v, 0.0, e, e], dtype=complex)
        return np.array([v / 2, -v / 2, v / 2, -v / 2, e, e], dtype=complex)

    def dc_voltages(self) -> np.ndarray:
        return np.array([*self.electrode_dc_bias, *self.endcap_dc], dtype=float)


@dataclass(frozen=True)
class TrapModel:
    geometry: TrapGeometry
    basis: bem.BemSolution

    @property
    def residual(self) -> float:
        return self.basis.residual


def build_trap_model(geometry: TrapGeometry = TrapGeometry(), *,
                     residual_tol: float = bem.RESIDUAL_TOL) -> TrapModel:
    return TrapModel(geometry, bem.solve(build_mesh(geometry), residual_tol=residual_tol))


def _points(model: TrapModel, points) -> tuple[np.ndarray, bool]:
    p = np.asarray(points, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if p.shape[1] != 3:
        raise ValueError("points must have 3 coordinates")
    if np.any(inside_conductor(model.geometry, p, tol=1e-9)):
        raise InsideConductorError("evaluation point lies inside or on an electrode")
    return p, single


def _out(a: np.ndarray, single: bool):
    return a[0] if single else a


def rf_field(model: TrapModel, drive: DriveConfig, points) -> np.ndarray:
    """Complex RF field phasor (V/m) at one point (3,) or many (M, 3)."""
    p, single = _points(model, points)
    return _out(model.basis.basis_field(p) @ drive.rf_phasors(), single)


def rf_potential(model: TrapModel, drive: DriveConfig, points) -> np.ndarray:
    p, single = _points(model, points)
    return _out(model.basis.basis_potential(p) @ drive.rf_phasors(), single)


def dc_potential(model: TrapModel, drive: DriveConfig, points) -> np.ndarray:
    p, single = _points(model, points)
    return _out(model.basis.basis_potential(p) @ drive.dc_voltages(), single)


def field_amplitude_sq(e: np.ndarray) -> np.ndarray:
    return np.sum(np.abs(e) ** 2, axis=-1)


def pseudopotential(model: TrapModel, drive: DriveConfig, ion: IonSpec, points) -> np.ndarray:
    """Ponderomotive energy q^2 |E|^2 / (4 m Omega^2) in joule."""
    e = rf_field(model, drive, points)
    return ion.charge**2 * field_amplitude_sq(e) / (4 * ion.mass * drive.omega**2)


def joule_to_ev(x):
    return np.asarray(x) / sc.electron_volt


def micromotion_amplitude(model: TrapModel, drive: DriveConfig, ion: IonSpec, points) -> np.ndarray:
    """Driven-oscillation amplitude phasor q E / (m Omega^2) per component (m)."""
    e = rf_field(model, drive, points)
    return ion.charge * e / (ion.mass * drive.omega**2)


def total_energy(model: TrapModel, drive: DriveConfig, ion: IonSpec, points) -> np.ndarray:
    """Pseudopotential plus DC electrostatic energy of the ion (J)."""
    p, single = _points(model, points)
    phi = model.basis.basis_potential(p)
    e = model.basis.basis_field(p) @ drive.rf_phasors()
    u = ion.charge**2 * field_amplitude_sq(e) / (4 * ion.mass * drive.omega**2)
    u = u + ion.charge * (phi @ drive.dc_voltages())
    return _out(u, single)


@dataclass(frozen=True)
class SecularResult:
    omega: np.ndarray  # (3,) rad/s assigned to x, y, z
    position: np.ndarray  # (3,) m
    hessian: np.ndarray  # (3, 3) J/m^2
    axes: np.ndarray  # (3, 3) eigenvectors as columns, ordered like omega
    iterations: int

    @property
    def frequencies_hz(self) -> np.ndarray:
        return self.omega / (2 * math.pi)


_UNIT = np.eye(3)
_PAIRS = [(i, j) for i in range(3) for j in range(i + 1, 3)]


def _stencil(x: np.ndarray, h: float) -> np.ndarray:
    pts = [x]
    for i in range(3):
        pts += [x + h * _UNIT[i], x - h * _UNIT[i]]
    for i, j in _PAIRS:
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            pts.append(x + h * (si * _UNIT[i] + sj * _UNIT[j]))
    return np.array(pts)


def _grad_hess(u: np.ndarray, h: float) -> tuple[np.ndarray, np.ndarray]:
    u0 = u[0]
    g = np.empty(3)
    H = np.empty((3, 3))
    for i in range(3):
        up, um = u[1 + 2 * i], u[2 + 2 * i]
        g[i] = (up - um) / (2 * h)
        H[i, i] = (up - 2 * u0 + um) / h**2
    for k, (i, j) in enumerate(_PAIRS):
        pp, pm, mp, mm = u[7 + 4 * k:11 + 4 * k]
        H[i, j] = H[j, i] = (pp - pm - mp + mm) / (4 * h**2)
    return g, H


def _assign_axes(lam: np.ndarray, vec: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Order eigenpairs as (x-like, y-like, z-like)."""
    left = list(range(3))
    order = [None, None, None]
    for axis in (2, 0, 1):
        k = max(left, key=lambda c: abs(vec[axis, c]))
        order[axis] = k
        left.remove(k)
    return lam[order], vec[:, order]


def secular_frequencies(model: TrapModel, drive: DriveConfig, ion: IonSpec = IonSpec(), *,
                        max_iter: int = 50, tol: float = 1e-10) -> SecularResult:
    """Harmonic frequencies about the total-potential minimum nearest the centre.

    Damped Newton search from the geometric centre; the gradient and Hessian
    come from central differences with step rho0/200.
    """
    rho0 = model.geometry.ion_rod_distance
    h = rho0 / 200
    x = np.zeros(3)
    energy = lambda pts: total_energy(model, drive, ion, pts)
    it = 0
    for it in range(1, max_iter + 1):
        u = energy(_stencil(x, h))
        g, H = _grad_hess(u, h)
        lam = np.linalg.eigvalsh(H)
        scale = max(abs(lam).max(), 1e-300) * rho0
        if np.linalg.norm(g) <= tol * scale:
            break
        if lam.min() <= 0:
            break
        step = -np.linalg.solve(H, g)
        t = 1.0
        while t > 1e-6 and energy(x + t * step) >= u[0]:
            t *= 0.5
        if t <= 1e-6:
            break
        x = x + t * step
        if np.linalg.norm(x) > 0.5 * rho0:
            raise NoMinimumError("minimum search left the trap centre region")
        if np.linalg.norm(t * step) < 1e-12 * rho0:
            u = energy(_stencil(x, h))
            g, H = _grad_hess(u, h)
            break
    lam, vec = np.linalg.eigh(H)
    lam, vec = _assign_axes(lam, vec)
    if np.any(lam <= 0):
        bad = [i for i in range(3) if lam[i] <= 0]
        names = ", ".join("xyz"[i] for i in bad)
        raise NoMinimumError(f"total potential is not confining along {names}", bad)
    return SecularResult(np.sqrt(lam / ion.mass), x, H, vec, it)


def _ball_points(radius: float, n: int = 7) -> np.ndarray:
    s = np.linspace(-radius, radius, n)
    g = np.stack(np.meshgrid(s, s, s, indexing="ij"), axis=-1).reshape(-1, 3)
    return g[np.linalg.norm(g, axis=1) <= radius * (1 + 1e-12)]


def _quadratic_design(p: np.ndarray) -> np.ndarray:
    x, y, z = p.T
    return np.stack([np.ones_like(x), x, y, z, x * x, y * y, z * z, x * y, x * z, y * z], axis=1)


def fit_quadratic(points: np.ndarray, values: np.ndarray) -> tuple[np.ndarray, float]:
    """Least-squares quadratic; returns (Hessian, relative rms residual)."""
    A = _quadratic_design(points)
    c, *_ = np.linalg.lstsq(A, values, rcond=None)
    H = np.array([[2 * c[4], c[7], c[8]], [c[7], 2 * c[5], c[9]], [c[8], c[9], 2 * c[6]]])
    span = float(values.max() - values.min())
    rms = float(np.sqrt(np.mean((A @ c - values) ** 2)))
    return H, (rms / span if span > 0 else 0.0)


def mathieu_stable(a: float, q: float) -> bool:
    """Inside the lowest stability region (series boundaries a0(q) < a < b1(q))."""
    q = abs(q)
    if q >= MATHIEU_Q_LIMIT:
        return False
    lower = -q**2 / 2 + 7 * q**4 / 128
    upper = 1 - q - q**2 / 8 + q**3 / 64 - q**4 / 1536
    return lower < a < upper


@dataclass(frozen=True)
class MathieuResult:
    q: np.ndarray  # (3,)
    a: np.ndarray  # (3,)
    stable: tuple[bool, bool, bool]
    rf_curvature: np.ndarray  # (3,) V/m^2
    dc_curvature: np.ndarray  # (3,) V/m^2
    laplace_ratio: float  # |trace| / max |eigenvalue| of the RF Hessian
    fit_residual: float


def mathieu_parameters(model: TrapModel, drive: DriveConfig, ion: IonSpec = IonSpec(), *,
                       max_residual: float = 0.01) -> MathieuResult:
    """Mathieu a and q per axis from quadratic fits over a ball of radius rho0/10."""
    pts = _ball_points(model.geometry.ion_rod_distance / 10)
    _points(model, pts)
    phi = model.basis.basis_potential(pts)
    ph = drive.rf_phasors()
    ref = ph[np.argmax(np.abs(ph))]
    rf = np.real(phi @ (ph * np.conj(ref) / abs(ref)))
    dc = phi @ drive.dc_voltages()
    H_rf, r_rf = fit_quadratic(pts, rf)
    H_dc, r_dc = fit_quadratic(pts, dc) if np.ptp(dc) > 0 else (np.zeros((3, 3)), 0.0)
    worst = max(r_rf, r_dc)
    if worst > max_residual:
        raise PoorFitError(f"quadratic fit residual {worst:.3g} exceeds {max_residual}")
    Q, A = np.diag(H_rf).copy(), np.diag(H_dc).copy()
    k = ion.charge / (ion.mass * drive.omega**2)
    q, a = 2 * k * Q, 4 * k * A
    lam = np.linalg.eigvalsh(H_rf)
    laplace = abs(np.trace(H_rf)) / max(abs(lam).max(), 1e-300)
    stable = tuple(mathieu_stable(a[i], q[i]) for i in range(3))
    return MathieuResult(q, a, stable, Q, A, float(laplace), worst)


def adiabatic_radial_estimate(m: MathieuResult, omega: float) -> np.ndarray:
    """Lowest-order secular frequencies (Omega/2) sqrt(a + q^2/2) per axis (nan if negative)."""
    arg = m.a + m.q**2 / 2
    return np.where(arg > 0, 0.5 * omega * np.sqrt(np.abs(arg)), np.nan)


def anisotropy(model: TrapModel, drive: DriveConfig, ion: IonSpec = IonSpec(),
               radius: Optional[float] = None) -> float:
    """|Phi_x - Phi_y| / (Phi_x + Phi_y) with Phi sampled on the x and y axes."""
    r = model.geometry.ion_rod_distance / 4 if radius is None else radius
    px, py = pseudopotential(model, drive, ion, np.array([[r, 0, 0], [0, r, 0]]))
    return float(abs(px - py) / (px + py))


def axial_field(model: TrapModel, drive: DriveConfig, z: Optional[float] = None) -> complex:
    """On-axis E_z phasor at (0, 0, z), default z = z0/2."""
    z = model.geometry.ion_endcap_distance / 2 if z is None else z
    return complex(rf_field(model, drive, np.array([0.0, 0.0, z]))[2])


MAP_HEADER = ("x_m", "y_m", "z_m", "pseudopotential_J", "pseudopotential_eV",
              "E_x_V_per_m", "E_y_V_per_m", "E_z_V_per_m", "E_abs_V_per_m")


def pseudopotential_map(model: TrapModel, drive: DriveConfig, ion: IonSpec = IonSpec(), *,
                        plane: str = "xy", points: int = 41,
                        extent: Optional[tuple[float, float]] = None) -> list[tuple[float, ...]]:
    """Regular grid of pseudopotential and RF field in the x-y (z=0) or z-r (x-z, y=0) plane.

    Field components are amplitudes projected on the drive's reference phase.
    """
    g = model.geometry
    if plane == "xy":
        ex = extent or (g.ion_rod_distance / 2, g.ion_rod_distance / 2)
        a, b = np.linspace(-ex[0], ex[0], points), np.linspace(-ex[1], ex[1], points)
        A, B = np.meshgrid(a, b, indexing="ij")
        pts = np.stack([A.ravel(), B.ravel(), np.zeros(A.size)], axis=1)
    elif plane == "zr":
        ex = extent or (g.ion_endcap_distance / 2, g.ion_rod_distance / 2)
        a, b = np.linspace(-ex[0], ex[0], points), np.linspace(-ex[1], ex[1], points)
        A, B = np.meshgrid(a, b, indexing="ij")
        pts = np.stack([B.ravel(), np.zeros(A.size), A.ravel()], axis=1)
    else:
        raise ValueError("plane must be 'xy' or 'zr'")
    e = rf_field(model, drive, pts)
    ph = drive.rf_phasors()
    ref = ph[np.argmax(np.abs(ph))]
    er = np.real(e * np.conj(ref) / abs(ref))
    u = ion.charge**2 * field_amplitude_sq(e) / (4 * ion.mass * drive.omega**2)
    ev = joule_to_ev(u)
    eabs = np.sqrt(field_amplitude_sq(e))
    return [(float(p[0]), float(p[1]), float(p[2]), float(u[i]), float(ev[i]),
             float(er[i, 0]), float(er[i, 1]), float(er[i, 2]), float(eabs[i]))
            for i, p in enumerate(pts)]


def map_csv(rows: Iterable[tuple[float, ...]]) -> str:
    out = [",".join(MAP_HEADER)]
    out += [",".join(repr(v) for v in r) for r in rows]
    return "\n".join(out) + "\n"


MODULATIONS = ("rf_amplitude", "endcap_voltage")


def interpret_parametric_scan(modulation: str, dip_frequency: float) -> float:
    """Trap frequency (Hz) implied by a parametric-excitation dip.

    RF-amplitude modulation drives even changes of the vibrational number, so the
    trap frequency is half the dip; end-cap modulation drives odd changes and
    the dip sits at the trap frequency itself.
    """
    if not dip_frequency > 0:
        raise ValueError("dip frequency must be positive")
    if modulation == "rf_amplitude":
        return dip_frequency / 2
    if modulation == "endcap_voltage":
        return float(dip_frequency)
    raise ValueError(f"modulation must be one of {MODULATIONS}")


@dataclass(frozen=True)
class ScanInterpretation:
    modulation: str
    dip_frequency: float
    trap_frequency: float
    coincides_with: tuple[int, ...] = field(default_factory=tuple)


def interpret_scans(scans: Sequence[tuple[str, float]], rel_tol: float = 1e-3) -> list[ScanInterpretation]:
    """Interpret several scans and flag those whose trap frequencies coincide."""
    freqs = [interpret_parametric_scan(m, f) for m, f in scans]
    out = []
    for i, ((m, f), t) in enumerate(zip(scans, freqs)):
        same = tuple(j for j, u in enumerate(freqs) if j != i and math.isclose(t, u, rel_tol=rel_tol))
        out.append(ScanInterpretation(m, float(f), t, same))
    return out

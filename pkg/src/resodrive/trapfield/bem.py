"""Electrostatic boundary-element solver (piecewise-constant charge, collocation).

Each panel's charge is spread over its integration elements (see ``mesh``).
The potential at a collocation point from a nearby element is integrated
analytically over the element's flat polygon (exact for a planar polygon at
any height above its plane); distant elements use a quadrupole expansion
about their centroid. Field evaluation in free space uses the
Gauss rules throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse
from scipy.spatial import cKDTree

from .mesh import PanelMesh

EPS0 = 8.8541878128e-12
COULOMB = 1 / (4 * math.pi * EPS0)
NEAR_FACTOR = 3.0  # elements closer than this many diameters are integrated exactly
RESIDUAL_TOL = 0.01  # volts, at unit electrode voltage


class BemError(RuntimeError):
    pass


def polygon_potential_integral(points: np.ndarray, polygons: np.ndarray) -> np.ndarray:
    """Integral of 1/|r - P| over flat polygons, one (point, polygon) pair per row.

    ``points`` is (K, 3) and ``polygons`` is (K, V, 3). Non-planar polygons are
    projected onto their best-fit plane (normal from Newell's method, which also
    fixes the counter-clockwise orientation). Degenerate (zero-length) edges
    contribute nothing.
    """
    P = np.asarray(points, dtype=float)
    V = np.asarray(polygons, dtype=float)
    nxt = np.roll(V, -1, axis=1)
    normal = np.cross(V, nxt).sum(axis=1)
    area2 = np.linalg.norm(normal, axis=1)
    n = normal / area2[:, None]
    c = V.mean(axis=1)
    Vp = V - np.einsum("kvi,ki->kv", V - c[:, None, :], n)[:, :, None] * n[:, None, :]
    z = np.einsum("ki,ki->k", P - c, n)
    P0 = P - z[:, None] * n
    A = Vp - P0[:, None, :]
    B = np.roll(Vp, -1, axis=1) - P0[:, None, :]
    e = B - A
    length = np.linalg.norm(e, axis=2)
    scale = np.sqrt(area2)[:, None]
    ok = length > 1e-12 * scale
    t = e / np.where(ok, length, 1.0)[:, :, None]
    m = np.cross(t, n[:, None, :])
    h = np.einsum("kvi,kvi->kv", A, m)
    s_a = np.einsum("kvi,kvi->kv", A, t)
    s_b = np.einsum("kvi,kvi->kv", B, t)
    az = np.abs(z)[:, None]
    r0sq = h**2 + az**2
    r0 = np.sqrt(r0sq)
    r_a = np.sqrt(s_a**2 + r0sq)
    r_b = np.sqrt(s_b**2 + r0sq)
    live = ok & (r0 > 1e-14 * scale)
    safe_r0 = np.where(live, r0, 1.0)
    log_term = h * (np.arcsinh(s_b / safe_r0) - np.arcsinh(s_a / safe_r0))
    den_a = r0sq + az * r_a
    den_b = r0sq + az * r_b
    ang = np.arctan2(h * s_b, np.where(live, den_b, 1.0)) - np.arctan2(h * s_a, np.where(live, den_a, 1.0))
    total = np.where(live, log_term - az * ang, 0.0).sum(axis=1)
    return np.abs(total)


def polygon_area(polygons: np.ndarray) -> np.ndarray:
    """Area of the best-fit plane projection of each polygon (Newell's method)."""
    V = np.asarray(polygons, dtype=float)
    return 0.5 * np.linalg.norm(np.cross(V, np.roll(V, -1, axis=-2)).sum(axis=-2), axis=-1)


def _near_pairs(mesh: PanelMesh, points: np.ndarray, factor: float) -> tuple[np.ndarray, np.ndarray]:
    """(point index, element index) pairs within ``factor`` element diameters."""
    tree = cKDTree(mesh.elem_centroids)
    radius = factor * float(mesh.elem_sizes.max())
    hits = tree.query_ball_point(points, radius)
    rows = np.repeat(np.arange(len(points)), [len(h) for h in hits])
    cols = np.fromiter((j for h in hits for j in h), dtype=int, count=len(rows))
    d = np.linalg.norm(points[rows] - mesh.elem_centroids[cols], axis=1)
    keep = d < factor * mesh.elem_sizes[cols]
    return rows[keep], cols[keep]


def _aggregator(mesh: PanelMesh) -> scipy.sparse.csr_matrix:
    E = len(mesh.elem_owner)
    return scipy.sparse.csr_matrix((mesh.elem_fraction, (np.arange(E), mesh.elem_owner)),
                                   shape=(E, mesh.size))


def _second_moments(mesh: PanelMesh) -> np.ndarray:
    """Charge-weighted central second moments (E, 6): xx, yy, zz, xy, xz, yz."""
    E = len(mesh.elem_owner)
    qp = mesh.quad_points.reshape(E, -1, 3)
    w = mesh.quad_fraction.reshape(E, -1)
    w = w / w.sum(axis=1, keepdims=True)
    d = qp - mesh.elem_centroids[:, None, :]
    idx = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))
    return np.stack([np.einsum("eg,eg->e", w, d[..., a] * d[..., b]) for a, b in idx], axis=1)


def potential_matrix(mesh: PanelMesh, points: np.ndarray, near_factor: float = NEAR_FACTOR,
                     chunk: int = 512) -> np.ndarray:
    """Potential at ``points`` per unit total charge on each panel (V/C).

    Elements beyond ``near_factor`` diameters are expanded to quadrupole order
    about their centroid; closer ones are integrated exactly.
    """
    pts = np.asarray(points, dtype=float)
    S = _second_moments(mesh)
    trace = S[:, 0] + S[:, 1] + S[:, 2]
    c = mesh.elem_centroids
    G = np.empty((len(pts), len(c)))
    for s in range(0, len(pts), chunk):
        p = pts[s:s + chunk]
        dx = p[:, 0:1] - c[None, :, 0]
        dy = p[:, 1:2] - c[None, :, 1]
        dz = p[:, 2:3] - c[None, :, 2]
        r2 = dx * dx + dy * dy + dz * dz
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / np.sqrt(r2)
            quad = (S[:, 0] * dx * dx + S[:, 1] * dy * dy + S[:, 2] * dz * dz
                    + 2 * (S[:, 3] * dx * dy + S[:, 4] * dx * dz + S[:, 5] * dy * dz))
            G[s:s + chunk] = inv + (3 * quad * inv**2 - trace) * 0.5 * inv**3
    rows, cols = _near_pairs(mesh, pts, near_factor)
    # flat stand-in carries the element's full charge
    poly_area = polygon_area(mesh.elem_polygons)
    step = 100_000
    for s in range(0, len(rows), step):
        r, cc = rows[s:s + step], cols[s:s + step]
        G[r, cc] = polygon_potential_integral(pts[r], mesh.elem_polygons[cc]) / poly_area[cc]
    return COULOMB * np.asarray((_aggregator(mesh).T @ G.T).T)


@dataclass(frozen=True)
class BemSolution:
    """Panel charges for unit voltage on each electrode in turn (others grounded).

    ``charges[e]`` holds the total charge of every panel when electrode ``e`` is
    at 1 V. The potential of any electrode voltage set is a linear combination.
    """

    mesh: PanelMesh
    charges: np.ndarray  # (n_electrodes, N) coulomb per volt
    residual: float  # max |phi - V| at off-collocation check points (V per V)
    condition_estimate: float

    @property
    def electrode_names(self) -> tuple[str, ...]:
        return self.mesh.electrode_names

    def capacitance_matrix(self) -> np.ndarray:
        """Maxwell capacitance matrix C[i, e] = charge on i with e at 1 V."""
        n_e = len(self.electrode_names)
        out = np.zeros((n_e, n_e))
        for i in range(n_e):
            out[i] = self.charges[:, self.mesh.electrode == i].sum(axis=1)
        return out

    def _sources(self) -> tuple[np.ndarray, np.ndarray]:
        m = self.mesh
        return m.quad_points, self.charges[:, m.quad_owner] * m.quad_fraction[None, :]

    def basis_potential(self, points: np.ndarray, chunk: int = 256) -> np.ndarray:
        """Potential (M, n_electrodes) at free-space points for each unit-voltage basis."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        src, q = self._source_cache()
        out = np.empty((len(pts), len(q)))
        for s in range(0, len(pts), chunk):
            d = pts[s:s + chunk, None, :] - src[None, :, :]
            inv = 1.0 / np.sqrt(np.einsum("ijk,ijk->ij", d, d))
            out[s:s + chunk] = COULOMB * inv @ q.T
        return out

    def basis_field(self, points: np.ndarray, chunk: int = 128) -> np.ndarray:
        """Electric field (M, 3, n_electrodes) at free-space points per basis."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        src, q = self._source_cache()
        out = np.empty((len(pts), 3, len(q)))
        for s in range(0, len(pts), chunk):
            d = pts[s:s + chunk, None, :] - src[None, :, :]
            r2 = np.einsum("ijk,ijk->ij", d, d)
            w = 1.0 / (r2 * np.sqrt(r2))
            out[s:s + chunk] = COULOMB * np.einsum("ijk,ij,ej->ike", d, w, q)
        return out

    def _source_cache(self):
        cache = self.__dict__.get("_cached_sources")
        if cache is None:
            cache = self._sources()
            object.__setattr__(self, "_cached_sources", cache)
        return cache


def solve(mesh: PanelMesh, *, residual_tol: float = RESIDUAL_TOL, check: bool = True) -> BemSolution:
    """Collocation solve for all unit-voltage electrode bases at once."""
    N = mesh.size
    A = potential_matrix(mesh, mesh.centroids)
    n_e = len(mesh.electrode_names)
    rhs = np.zeros((N, n_e))
    rhs[np.arange(N), mesh.electrode] = 1.0
    anorm = np.linalg.norm(A, 1)
    try:
        lu = scipy.linalg.lu_factor(A, check_finite=True)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise BemError(f"collocation matrix could not be factorised: {exc}") from exc
    rcond = scipy.linalg.lapack.dgecon(lu[0], anorm, norm="1")[0]
    cond = 1 / rcond if rcond > 0 else math.inf
    if not cond < 1e13:
        raise BemError(f"collocation matrix is ill-conditioned (cond ~ {cond:.3g}); check the mesh")
    charges = scipy.linalg.lu_solve(lu, rhs).T.copy()
    residual = math.nan
    if check:
        residual = check_residual(mesh, charges)
        if residual > residual_tol:
            raise BemError(f"off-collocation residual {residual:.3g} V exceeds {residual_tol} V")
    return BemSolution(mesh, charges, residual, cond)


def check_residual(mesh: PanelMesh, charges: np.ndarray) -> float:
    """Worst potential error at the quarter points of every panel (unit voltages)."""
    pts = mesh.check_points.reshape(-1, 3)
    owner = np.repeat(np.arange(mesh.size), mesh.check_points.shape[1])
    target = (mesh.electrode[owner][:, None] == np.arange(len(charges))[None, :]).astype(float)
    worst = 0.0
    for s in range(0, len(pts), 1024):
        G = potential_matrix(mesh, pts[s:s + 1024])
        phi = G @ charges.T
        worst = max(worst, float(np.abs(phi - target[s:s + 1024]).max()))
    return worst

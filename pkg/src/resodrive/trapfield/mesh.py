"""Surface panel meshes for the boundary-element trap model.

Panels are parametric patches of a surface (cylinder wall, flat disk, sphere).
Each panel is one unknown (its total charge) with a collocation point at its
parametric centre. A panel is integrated through one or more flat sub-elements,
each carrying a fixed fraction of the panel's charge: ordinary panels have a
single uniform element, while panels touching a free edge (open rod ends, disk
rims) are split into strips whose charge follows the d**-1/2 edge singularity
of a thin conductor. Every element has a boundary polygon for analytic
near-field integration and a Gauss rule for smooth far-field evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

GAUSS_ORDER = 4
EDGE_SEGMENTS = 3  # polygon vertices per parametric side
EDGE_STRIPS = 4  # sub-elements of a panel touching a free edge


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class TrapGeometry:
    """Linear trap: four rods parallel to z on the x and y axes, end caps on z.

    The rod radius and length are not published for the reference trap and
    directly set absolute secular frequencies; both are free parameters.
    """

    rod_radius: float = 200e-6
    rod_length: float = 4e-3
    ion_rod_distance: float = 400e-6
    ion_endcap_distance: float = 400e-6
    endcap_radius: float = 62.5e-6
    panels_per_electrode: int = 400

    def __post_init__(self):
        for name in ("rod_radius", "rod_length", "ion_rod_distance", "ion_endcap_distance", "endcap_radius"):
            if not getattr(self, name) > 0:
                raise MeshError(f"{name} must be positive")
        if self.panels_per_electrode < 16:
            raise MeshError("panels_per_electrode must be >= 16")
        if self.endcap_radius >= self.ion_rod_distance:
            raise MeshError("end-cap disks overlap the rods")
        if self.ion_endcap_distance >= self.rod_length / 2:
            raise MeshError("rods must extend past the end caps")


@dataclass(frozen=True)
class PanelMesh:
    # per panel (unknown)
    centroids: np.ndarray  # (N, 3) collocation points on the surface
    areas: np.ndarray  # (N,)
    check_points: np.ndarray  # (N, 4, 3) off-collocation surface points
    electrode: np.ndarray  # (N,) electrode index
    electrode_names: tuple[str, ...]
    # per integration element
    elem_owner: np.ndarray  # (E,) panel index
    elem_fraction: np.ndarray  # (E,) share of the owner's charge
    elem_polygons: np.ndarray  # (E, V, 3)
    elem_centroids: np.ndarray  # (E, 3)
    elem_areas: np.ndarray  # (E,)
    elem_sizes: np.ndarray  # (E,) diameter
    # flattened Gauss points for free-space evaluation
    quad_points: np.ndarray  # (Q, 3)
    quad_owner: np.ndarray  # (Q,)
    quad_fraction: np.ndarray  # (Q,) share of the owner's charge
    geometry: Optional[TrapGeometry] = None

    @property
    def size(self) -> int:
        return len(self.areas)

    def panels_of(self, name: str) -> np.ndarray:
        return np.flatnonzero(self.electrode == self.electrode_names.index(name))


Surface = Callable[[np.ndarray, np.ndarray], np.ndarray]
Jacobian = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _gauss_rule(surface: Surface, jac: Jacobian, u0, u1, v0, v1):
    x, w = np.polynomial.legendre.leggauss(GAUSS_ORDER)
    gu, gv = (a.ravel() for a in np.meshgrid(x, x, indexing="ij"))
    gw = np.outer(w, w).ravel()
    du, dv = (u1 - u0) / 2, (v1 - v0) / 2
    U = (u0 + u1)[:, None] / 2 + du[:, None] * gu[None, :]
    V = (v0 + v1)[:, None] / 2 + dv[:, None] * gv[None, :]
    return surface(U, V), jac(U, V) * (du * dv)[:, None] * gw[None, :]


def _polygons(surface: Surface, u0, u1, v0, v1) -> np.ndarray:
    # boundary walked counter-clockwise in (u, v)
    s = np.arange(EDGE_SEGMENTS) / EDGE_SEGMENTS
    bu = np.concatenate([s, np.ones_like(s), 1 - s, np.zeros_like(s)])
    bv = np.concatenate([np.zeros_like(s), s, np.ones_like(s), 1 - s])
    return surface(u0[:, None] + (u1 - u0)[:, None] * bu, v0[:, None] + (v1 - v0)[:, None] * bv)


def _patches(surface: Surface, jac: Jacobian, u_edges: np.ndarray, v_edges: np.ndarray,
             free: Optional[np.ndarray] = None) -> dict:
    """Panels for (u, v) cells of shape (P, 2) each.

    ``free`` is an optional (P, 4) boolean array flagging the sides
    (u0, u1, v0, v1) of each cell that lie on a free conductor edge.
    """
    u0, u1 = u_edges[:, 0].astype(float), u_edges[:, 1].astype(float)
    v0, v1 = v_edges[:, 0].astype(float), v_edges[:, 1].astype(float)
    P = len(u0)
    free = np.zeros((P, 4), dtype=bool) if free is None else np.asarray(free, dtype=bool)
    um, vm = 0.5 * (u0 + u1), 0.5 * (v0 + v1)
    du, dv = u1 - u0, v1 - v0

    # split edge panels into strips with equal charge under a d**-1/2 density
    cuts = (np.arange(EDGE_STRIPS + 1) / EDGE_STRIPS) ** 2
    eu0, eu1, ev0, ev1, owner, frac = [], [], [], [], [], []
    for i in range(P):
        side = np.flatnonzero(free[i])
        if len(side) == 0:
            eu0.append([u0[i]]); eu1.append([u1[i]]); ev0.append([v0[i]]); ev1.append([v1[i]])
            owner.append(np.full(1, i)); frac.append(np.ones(1))
            continue
        if len(side) > 1:
            raise MeshError("a panel may touch at most one free edge")
        s = side[0]
        lo, hi = (u0[i], u1[i]) if s < 2 else (v0[i], v1[i])
        pos = lo + (hi - lo) * cuts if s % 2 == 0 else hi - (hi - lo) * cuts
        a, b = np.minimum(pos[:-1], pos[1:]), np.maximum(pos[:-1], pos[1:])
        n = EDGE_STRIPS
        if s < 2:
            eu0.append(a); eu1.append(b); ev0.append(np.full(n, v0[i])); ev1.append(np.full(n, v1[i]))
        else:
            eu0.append(np.full(n, u0[i])); eu1.append(np.full(n, u1[i])); ev0.append(a); ev1.append(b)
        owner.append(np.full(n, i)); frac.append(np.full(n, 1.0 / n))
    eu0, eu1, ev0, ev1 = (np.concatenate(x) for x in (eu0, eu1, ev0, ev1))
    owner, frac = np.concatenate(owner), np.concatenate(frac)

    qp, qw = _gauss_rule(surface, jac, eu0, eu1, ev0, ev1)
    e_area = qw.sum(axis=1)
    areas = np.bincount(owner, weights=e_area, minlength=P)
    polys = _polygons(surface, eu0, eu1, ev0, ev1)
    e_cent = np.einsum("eg,egk->ek", qw, qp) / e_area[:, None]
    cu = np.stack([um - du / 4, um + du / 4, um + du / 4, um - du / 4], axis=1)
    cv = np.stack([vm - dv / 4, vm - dv / 4, vm + dv / 4, vm + dv / 4], axis=1)
    G = qp.shape[1]
    return {
        "centroids": surface(um, vm),
        "areas": areas,
        "check_points": surface(cu, cv),
        "elem_owner": owner,
        "elem_fraction": frac,
        "elem_polygons": polys,
        "elem_centroids": e_cent,
        "elem_areas": e_area,
        "quad_points": qp.reshape(-1, 3),
        "quad_owner": np.repeat(owner, G),
        "quad_fraction": (frac[:, None] * qw / e_area[:, None]).reshape(-1),
    }


def _grid_edges(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cartesian product of 1-D cell edge arrays -> per-cell (u0,u1), (v0,v1)."""
    ua = np.stack([a[:-1], a[1:]], axis=1)
    vb = np.stack([b[:-1], b[1:]], axis=1)
    iu, iv = np.meshgrid(np.arange(len(ua)), np.arange(len(vb)), indexing="ij")
    return ua[iu.ravel()], vb[iv.ravel()]


def cylinder_panels(center_xy: tuple[float, float], angle: float, radius: float,
                    z0: float, z1: float, n_theta: int, n_z: int) -> dict:
    """Open tube parallel to z; theta is measured from direction ``angle``."""
    cx, cy = center_xy

    def surface(t, z):
        return np.stack([cx + radius * np.cos(t + angle), cy + radius * np.sin(t + angle), z], axis=-1)

    th = np.linspace(-math.pi, math.pi, n_theta + 1)
    zz = np.linspace(z0, z1, n_z + 1)
    ue, ve = _grid_edges(th, zz)
    free = np.zeros((len(ue), 4), dtype=bool)
    free[:, 2] = ve[:, 0] == z0
    free[:, 3] = ve[:, 1] == z1
    return _patches(surface, lambda t, z: np.full(np.shape(t), radius), ue, ve, free)


def disk_ring_counts(panels: int) -> list[int]:
    """Sectors per ring; multiples of 4 keep the x/y mirror and x<->y symmetry."""
    n_rings = max(1, int(round(math.sqrt(panels / math.pi))))
    raw = np.array([(2 * i + 1) * panels / n_rings**2 for i in range(n_rings)])
    counts = np.maximum(4, 4 * np.round(raw / 4)).astype(int)
    counts[-1] += panels - counts.sum()
    if counts[-1] < 4:
        raise MeshError("cannot split disk into the requested panel count")
    return [int(c) for c in counts]


def disk_panels(z: float, radius: float, panels: int) -> dict:
    """Flat disk normal to z, split into rings of equal-area sectors."""
    counts = disk_ring_counts(panels)
    cum = np.concatenate([[0], np.cumsum(counts)]) / panels
    ue, ve, rim = [], [], []
    for i, n in enumerate(counts):
        # u = r^2 is uniform in area
        a, b = radius**2 * cum[i], radius**2 * cum[i + 1]
        th = np.linspace(-math.pi, math.pi, n + 1)
        for k in range(n):
            ue.append((a, b))
            ve.append((th[k], th[k + 1]))
            rim.append(i == len(counts) - 1)
    free = np.zeros((len(ue), 4), dtype=bool)
    free[:, 1] = rim

    def surface(u, t):
        r = np.sqrt(np.maximum(u, 0.0))
        return np.stack([r * np.cos(t), r * np.sin(t), np.full(np.shape(u), z)], axis=-1)

    return _patches(surface, lambda u, t: np.full(np.shape(u), 0.5), np.array(ue), np.array(ve), free)


def sphere_panels(radius: float, n_bands: int, n_phi: int, center=(0.0, 0.0, 0.0)) -> dict:
    """Equal-area bands in cos(theta), each split into ``n_phi`` sectors."""
    c = np.asarray(center, dtype=float)

    def surface(mu, ph):
        s = np.sqrt(np.clip(1 - mu**2, 0.0, None))
        return c + radius * np.stack([s * np.cos(ph), s * np.sin(ph), mu], axis=-1)

    mu = np.linspace(-1.0, 1.0, n_bands + 1)
    ph = np.linspace(-math.pi, math.pi, n_phi + 1)
    ue, ve = _grid_edges(mu, ph)
    return _patches(surface, lambda m, p: np.full(np.shape(m), radius**2), ue, ve)


def _assemble(parts: list[tuple[str, dict]], geometry: Optional[TrapGeometry]) -> PanelMesh:
    offsets = np.cumsum([0] + [len(p["areas"]) for _, p in parts])
    cat = lambda key: np.concatenate([p[key] for _, p in parts])
    shift = lambda key: np.concatenate([p[key] + offsets[i] for i, (_, p) in enumerate(parts)])
    polys = cat("elem_polygons")
    cents = cat("elem_centroids")
    return PanelMesh(
        centroids=cat("centroids"),
        areas=cat("areas"),
        check_points=cat("check_points"),
        electrode=np.concatenate([np.full(len(p["areas"]), i) for i, (_, p) in enumerate(parts)]),
        electrode_names=tuple(name for name, _ in parts),
        elem_owner=shift("elem_owner"),
        elem_fraction=cat("elem_fraction"),
        elem_polygons=polys,
        elem_centroids=cents,
        elem_areas=cat("elem_areas"),
        elem_sizes=2 * np.linalg.norm(polys - cents[:, None, :], axis=2).max(axis=1),
        quad_points=cat("quad_points"),
        quad_owner=shift("quad_owner"),
        quad_fraction=cat("quad_fraction"),
        geometry=geometry,
    )


ROD_NAMES = ("rod+x", "rod+y", "rod-x", "rod-y")
ENDCAP_NAMES = ("endcap+z", "endcap-z")


def _rod_split(panels: int, circumference: float, length: float) -> tuple[int, int]:
    ideal = math.sqrt(panels * circumference / length)
    divisors = [d for d in range(4, panels + 1) if panels % d == 0 and panels // d >= 2]
    if not divisors:
        raise MeshError(f"panels_per_electrode={panels} cannot tile a rod (needs a divisor >= 4)")
    n_theta = min(divisors, key=lambda d: (abs(math.log(d / ideal)), d))
    return n_theta, panels // n_theta


def build_mesh(g: TrapGeometry = TrapGeometry()) -> PanelMesh:
    """Four rods (on +x, +y, -x, -y) plus two end-cap disks at z = +-z0."""
    p = g.panels_per_electrode
    d = g.ion_rod_distance + g.rod_radius
    n_theta, n_z = _rod_split(p, 2 * math.pi * g.rod_radius, g.rod_length)
    parts = []
    for name, ang in zip(ROD_NAMES, (0.0, 0.5 * math.pi, math.pi, 1.5 * math.pi)):
        center = (d * round(math.cos(ang)), d * round(math.sin(ang)))
        parts.append((name, cylinder_panels(center, ang, g.rod_radius, -g.rod_length / 2,
                                            g.rod_length / 2, n_theta, n_z)))
    parts.append((ENDCAP_NAMES[0], disk_panels(g.ion_endcap_distance, g.endcap_radius, p)))
    parts.append((ENDCAP_NAMES[1], disk_panels(-g.ion_endcap_distance, g.endcap_radius, p)))
    return _assemble(parts, g)


def sphere_mesh(radius: float = 1.0, n_bands: int = 24, n_phi: int = 32) -> PanelMesh:
    return _assemble([("sphere", sphere_panels(radius, n_bands, n_phi))], None)


def two_sphere_mesh(radius: float, separation: float, n_bands: int = 12, n_phi: int = 16) -> PanelMesh:
    """Two spheres on the x axis at +-separation/2 (a mirror-symmetric fixture)."""
    a = sphere_panels(radius, n_bands, n_phi, center=(-separation / 2, 0.0, 0.0))
    b = sphere_panels(radius, n_bands, n_phi, center=(separation / 2, 0.0, 0.0))
    return _assemble([("left", a), ("right", b)], None)


def inside_conductor(g: TrapGeometry, points: np.ndarray, tol: float = 0.0) -> np.ndarray:
    """True where a point lies inside a rod or on an end-cap disk."""
    pts = np.atleast_2d(points)
    d = g.ion_rod_distance + g.rod_radius
    inside = np.zeros(len(pts), dtype=bool)
    for cx, cy in ((d, 0), (0, d), (-d, 0), (0, -d)):
        r = np.hypot(pts[:, 0] - cx, pts[:, 1] - cy)
        inside |= (r <= g.rod_radius + tol) & (np.abs(pts[:, 2]) <= g.rod_length / 2)
    rho = np.hypot(pts[:, 0], pts[:, 1])
    for z in (g.ion_endcap_distance, -g.ion_endcap_distance):
        inside |= (np.abs(pts[:, 2] - z) <= tol) & (rho <= g.endcap_radius)
    return inside

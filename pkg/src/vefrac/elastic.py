"""Elastic energy of the cracked membrane.

The displacement is scalar (antiplane shear); the energy at time t and
crack K is the Dirichlet minimum

    E(t, K) = min { 1/2 integral over Omega\\K of |grad u|^2 }

over P1 fields matching the boundary datum a(t)*G on the Dirichlet part
of the boundary not released by the crack. Cracks are mesh edges; the
field may jump across them, which we realize by duplicating vertex DOFs
per fan of triangles around each split vertex.

Also here: the power (time derivative of E along the loading), the a
priori constant bounding it, and two independent estimators of the
energy release rate at a crack tip (finite differences in crack length,
and the stress intensity factor from an annulus fit).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import CrackSet, Mesh, MeshError, connected_components

__all__ = [
    "ElasticError",
    "LinearAmplitude",
    "TableAmplitude",
    "BoundaryLoad",
    "CrackedSpace",
    "EnergySolution",
    "split_along_crack",
    "solve_energy",
    "power",
    "power_bound_constant",
    "energy_release",
    "fit_sif",
]

CG_RTOL = 1e-10


class ElasticError(Exception):
    """Raised for invalid loads/spaces and for solver non-convergence."""


@dataclass(frozen=True)
class LinearAmplitude:
    """a(t) = c0 + c1*t, with exact derivative."""

    c0: float
    c1: float
    approximate: bool = field(default=False, init=False)

    def __call__(self, t: float) -> float:
        return self.c0 + self.c1 * t

    def derivative(self, t: float) -> float:
        return self.c1

    def max_abs_derivative(self, horizon: float) -> float:
        return abs(self.c1)


class TableAmplitude:
    """Tabulated a(t): piecewise-linear values, piecewise-constant
    derivative (taken from the interval right of t, left at the end)."""

    approximate = True

    def __init__(self, times: Sequence[float], values: Sequence[float]):
        t = np.asarray(times, dtype=float)
        v = np.asarray(values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ElasticError("amplitude table needs matching times and values, at least two rows")
        if not np.all(np.diff(t) > 0):
            raise ElasticError("amplitude table times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ElasticError("amplitude table entries must be finite")
        self.times = t
        self.values = v
        self.slopes = np.diff(v) / np.diff(t)

    def __call__(self, t: float) -> float:
        return float(np.interp(t, self.times, self.values))

    def derivative(self, t: float) -> float:
        i = int(np.searchsorted(self.times, t, side="right")) - 1
        i = min(max(i, 0), len(self.slopes) - 1)
        return float(self.slopes[i])

    def max_abs_derivative(self, horizon: float) -> float:
        inside = self.times[:-1] < horizon
        slopes = self.slopes[inside] if inside.any() else self.slopes
        return float(np.max(np.abs(slopes)))


@dataclass(frozen=True)
class BoundaryLoad:
    """Loading datum: nodal profile G on every vertex (its restriction to
    the Dirichlet boundary is the datum, the rest is the extension used
    in the power formula), a scalar amplitude a(t), and the horizon T."""

    profile: np.ndarray
    amplitude: LinearAmplitude | TableAmplitude
    horizon: float

    def __post_init__(self):
        prof = np.asarray(self.profile, dtype=float)
        if prof.ndim != 1 or not np.all(np.isfinite(prof)):
            raise ElasticError("load profile must be a finite 1d nodal array")
        object.__setattr__(self, "profile", prof)
        if not (math.isfinite(self.horizon) and self.horizon > 0):
            raise ElasticError("load horizon must be positive")

    def check_mesh(self, mesh: Mesh) -> None:
        if self.profile.shape[0] != mesh.n_vertices:
            raise ElasticError(
                f"load profile has {self.profile.shape[0]} values for a mesh "
                f"with {mesh.n_vertices} vertices")


class CrackedSpace:
    """P1 space on the mesh cut along a crack set.

    Around every vertex the incident triangles are grouped into fans:
    two triangles are in the same fan when they share a non-crack edge
    through that vertex. Each fan carries one DOF, so a vertex whose
    star is disconnected by crack edges is duplicated, while a tip
    vertex (star still connected) keeps a single DOF.
    """

    def __init__(self, mesh: Mesh, crack: CrackSet):
        self.mesh = mesh
        self.crack = crack
        self._build_dofs()
        self._build_components()
        self._build_dirichlet()
        self._stiffness = None

    def _build_dofs(self):
        mesh = self.mesh
        crack_bits = self.crack.bits
        tri_dofs = np.full((mesh.n_triangles, 3), -1, dtype=int)
        dof_vertex = []
        n = 0
        for v in range(mesh.n_vertices):
            tris = mesh.vertex_triangles[v]
            local = {t: i for i, t in enumerate(tris)}
            parent = list(range(len(tris)))

            def find(i):
                while parent[i] != i:
                    parent[i] = parent[parent[i]]
                    i = parent[i]
                return i

            for e in mesh.vertex_edges[v]:
                if (crack_bits >> e) & 1:
                    continue
                owners = mesh.edge_triangles[e]
                if len(owners) == 2:
                    a, b = find(local[owners[0]]), find(local[owners[1]])
                    if a != b:
                        parent[a] = b
            fan_dof = {}
            for t in tris:
                root = find(local[t])
                if root not in fan_dof:
                    fan_dof[root] = n
                    dof_vertex.append(v)
                    n += 1
                slot = list(mesh.triangles[t]).index(v)
                tri_dofs[t, slot] = fan_dof[root]
        self.tri_dofs = tri_dofs
        self.dof_vertex = np.asarray(dof_vertex, dtype=int)
        self.n_dofs = n

    def _build_components(self):
        mesh = self.mesh
        crack_bits = self.crack.bits
        parent = list(range(mesh.n_triangles))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for e in range(mesh.n_edges):
            if (crack_bits >> e) & 1:
                continue
            owners = mesh.edge_triangles[e]
            if len(owners) == 2:
                a, b = find(owners[0]), find(owners[1])
                if a != b:
                    parent[a] = b
        labels = {}
        tri_component = np.empty(mesh.n_triangles, dtype=int)
        for t in range(mesh.n_triangles):
            root = find(t)
            if root not in labels:
                labels[root] = len(labels)
            tri_component[t] = labels[root]
        self.tri_component = tri_component
        self.n_components = len(labels)
        dof_component = np.full(self.n_dofs, -1, dtype=int)
        for t in range(mesh.n_triangles):
            dof_component[self.tri_dofs[t]] = tri_component[t]
        self.dof_component = dof_component

    def _build_dirichlet(self):
        mesh = self.mesh
        dirichlet = set()
        for e in mesh.dirichlet_edges():
            e = int(e)
            if e in self.crack:
                continue  # a cracked boundary edge releases its constraint
            (t,) = mesh.edge_triangles[e]
            va, vb = map(int, mesh.edges[e])
            tri = list(mesh.triangles[t])
            dirichlet.add(int(self.tri_dofs[t, tri.index(va)]))
            dirichlet.add(int(self.tri_dofs[t, tri.index(vb)]))
        self.dirichlet_dofs = np.array(sorted(dirichlet), dtype=int)
        # one pinned DOF per component that the Dirichlet data cannot see
        seen = set(self.dof_component[self.dirichlet_dofs])
        pinned = []
        for comp in range(self.n_components):
            if comp not in seen:
                pinned.append(int(np.flatnonzero(self.dof_component == comp)[0]))
        self.pinned_dofs = np.array(pinned, dtype=int)
        mask = np.zeros(self.n_dofs, dtype=bool)
        mask[self.dirichlet_dofs] = True
        mask[self.pinned_dofs] = True
        self.constrained_mask = mask

    def stiffness(self) -> sp.csr_matrix:
        if self._stiffness is None:
            self._stiffness = _assemble_stiffness(self)
        return self._stiffness

    def dof_positions(self) -> np.ndarray:
        return self.mesh.vertices[self.dof_vertex]

    def fan_centroid_offsets(self) -> np.ndarray:
        """Per DOF, the mean offset from its vertex to the centroids of
        the fan's triangles. Identifies which side of a crack a
        duplicated DOF lives on."""
        mesh = self.mesh
        centroids = mesh.vertices[mesh.triangles].mean(axis=1)
        acc = np.zeros((self.n_dofs, 2))
        cnt = np.zeros(self.n_dofs)
        for t in range(mesh.n_triangles):
            for slot in range(3):
                d = self.tri_dofs[t, slot]
                acc[d] += centroids[t]
                cnt[d] += 1
        return acc / cnt[:, None] - self.dof_positions()


def split_along_crack(mesh: Mesh, crack: CrackSet) -> CrackedSpace:
    if crack.mesh is not mesh:
        raise MeshError("crack set does not belong to this mesh")
    return CrackedSpace(mesh, crack)


def _p1_gradients(mesh: Mesh) -> np.ndarray:
    """Gradients of the three barycentric basis functions, (nt, 3, 2)."""
    pts = mesh.vertices[mesh.triangles]  # (nt, 3, 2)
    # gradients of the barycentric functions: rotate opposite edges
    e0 = pts[:, 2] - pts[:, 1]
    e1 = pts[:, 0] - pts[:, 2]
    e2 = pts[:, 1] - pts[:, 0]
    edges = np.stack([e0, e1, e2], axis=1)  # (nt, 3, 2)
    grads = np.empty_like(edges)
    grads[:, :, 0] = -edges[:, :, 1]
    grads[:, :, 1] = edges[:, :, 0]
    grads /= (2.0 * mesh.triangle_areas)[:, None, None]
    return grads


def energy_on_triangles(space: CrackedSpace, u: np.ndarray, tri_ids) -> float:
    """Dirichlet energy of the nodal field u restricted to a triangle
    subset. Used by the localized stability probes."""
    tri_ids = np.asarray(tri_ids, dtype=int)
    if tri_ids.size == 0:
        return 0.0
    grads = _p1_gradients(space.mesh)[tri_ids]
    uv = u[space.tri_dofs[tri_ids]]  # (m, 3)
    g = np.einsum("tid,ti->td", grads, uv)
    area = space.mesh.triangle_areas[tri_ids]
    return 0.5 * float(np.einsum("td,td,t->", g, g, area))


def _assemble_stiffness(space: CrackedSpace) -> sp.csr_matrix:
    mesh = space.mesh
    area = mesh.triangle_areas
    grads = _p1_gradients(mesh)
    local = np.einsum("tid,tjd->tij", grads, grads) * area[:, None, None]
    rows = np.repeat(space.tri_dofs, 3, axis=1).ravel()
    cols = np.tile(space.tri_dofs, (1, 3)).ravel()
    mat = sp.coo_matrix((local.ravel(), (rows, cols)),
                        shape=(space.n_dofs, space.n_dofs))
    return mat.tocsr()


@dataclass(frozen=True)
class EnergySolution:
    """Energy value, nodal field per DOF, solver residual, and the space
    the field lives on."""

    energy: float
    u: np.ndarray
    residual: float
    space: CrackedSpace


def _solve_constrained(space: CrackedSpace, values: np.ndarray,
                       rtol: float = CG_RTOL,
                       mask: np.ndarray | None = None) -> tuple[np.ndarray, float]:
    """Minimize the quadratic form subject to u = values on constrained
    DOFs (by default Dirichlet + pinned; probes pass their own mask).
    Returns the full field and the relative residual of the reduced
    system."""
    a = space.stiffness()
    if mask is None:
        mask = space.constrained_mask
    u = np.zeros(space.n_dofs)
    u[mask] = values[mask]
    free = np.flatnonzero(~mask)
    if free.size == 0:
        return u, 0.0
    aff = a[free][:, free]
    b = -(a[free][:, np.flatnonzero(mask)] @ u[mask])
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return u, 0.0
    diag = aff.diagonal()
    precond = spla.LinearOperator(aff.shape, matvec=lambda x: x / diag)
    x, info = spla.cg(aff, b, rtol=rtol, atol=0.0, M=precond,
                      maxiter=max(2000, 20 * free.size))
    residual = float(np.linalg.norm(aff @ x - b)) / bnorm
    if info != 0:
        raise ElasticError(f"CG failed to converge (info={info}, residual={residual:.3e})")
    u[free] = x
    return u, residual


def solve_energy(t: float, crack: CrackSet, load: BoundaryLoad) -> EnergySolution:
    """Minimum elastic energy at time t with the given crack.

    Dirichlet DOFs carry a(t)*G; components invisible to the data are
    pinned at zero (constants are minimizers there, so the energy does
    not depend on the choice).
    """
    mesh = crack.mesh
    load.check_mesh(mesh)
    space = split_along_crack(mesh, crack)
    return solve_on_space(t, space, load)


def solve_on_space(t: float, space: CrackedSpace, load: BoundaryLoad) -> EnergySolution:
    """Same as solve_energy, reusing an already-built space."""
    at = load.amplitude(t)
    values = np.zeros(space.n_dofs)
    values[space.dirichlet_dofs] = at * load.profile[space.dof_vertex[space.dirichlet_dofs]]
    u, residual = _solve_constrained(space, values)
    energy = 0.5 * float(u @ (space.stiffness() @ u))
    return EnergySolution(energy=energy, u=u, residual=residual, space=space)


def power(t: float, crack: CrackSet, load: BoundaryLoad,
          solution: EnergySolution | None = None) -> float:
    """Time derivative of E along the loading.

    At the minimizer the residual of the stiffness system vanishes on
    free DOFs, so (A u) pairs only against the Dirichlet trace of the
    variation; any extension of G gives the same value. We use the nodal
    profile itself.
    """
    if solution is None:
        solution = solve_energy(t, crack, load)
    space = solution.space
    g = load.profile[space.dof_vertex]
    return load.amplitude.derivative(t) * float(g @ (space.stiffness() @ solution.u))


def power_bound_constant(load: BoundaryLoad, mesh: Mesh) -> float:
    """The constant C_P with |dE/dt| <= C_P (E + 1): the largest load
    rate ||grad g_dot|| times max(area/2, 1)."""
    load.check_mesh(mesh)
    space = split_along_crack(mesh, CrackSet.empty(mesh))
    g = load.profile[space.dof_vertex]
    grad_norm = math.sqrt(max(float(g @ (space.stiffness() @ g)), 0.0))
    rate = load.amplitude.max_abs_derivative(load.horizon)
    return rate * grad_norm * max(0.5 * mesh.area, 1.0)


def _tip_vertices(crack: CrackSet) -> set[int]:
    """Vertices met by exactly one crack edge."""
    degree: dict[int, int] = {}
    for e in crack.edge_ids:
        for v in map(int, crack.mesh.edges[e]):
            degree[v] = degree.get(v, 0) + 1
    return {v for v, d in degree.items() if d == 1}


def energy_release(t: float, crack: CrackSet, load: BoundaryLoad,
                   tip_extension_edges: Sequence[int], h_steps: int = 3) -> float:
    """Energy release rate G = -dE/dsigma at a tip, by a least-squares
    slope through the energies of the first h_steps path extensions."""
    mesh = crack.mesh
    tips = _tip_vertices(crack)
    if not tips:
        raise ElasticError("crack has no tip to extend")
    if not tip_extension_edges:
        raise ElasticError("extension path is empty")
    if h_steps < 1 or h_steps > len(tip_extension_edges):
        raise ElasticError("h_steps must be between 1 and the path length")
    first = tip_extension_edges[0]
    ends = set(map(int, mesh.edges[first]))
    shared = ends & tips
    if not shared:
        raise ElasticError("extension path is not incident to a crack tip")
    current = (ends - shared).pop() if len(shared) == 1 else max(shared)
    for e in tip_extension_edges[1:h_steps]:
        ends = set(map(int, mesh.edges[e]))
        if current not in ends:
            raise ElasticError("extension edges do not form a path from the tip")
        current = (ends - {current}).pop()
    sigmas = [0.0]
    energies = [solve_energy(t, crack, load).energy]
    grown = crack
    total = 0.0
    for e in tip_extension_edges[:h_steps]:
        grown = grown.with_edges([e])
        total += float(mesh.edge_lengths[e])
        sigmas.append(total)
        energies.append(solve_energy(t, grown, load).energy)
    coeffs = np.polynomial.polynomial.polyfit(sigmas, energies, 1)
    return -float(coeffs[1])


def fit_sif(solution: EnergySolution, tip_point, tip_direction,
            r_inner: float | None = None, r_outer: float | None = None) -> float:
    """Stress intensity factor by annulus fitting.

    The nodal field near the tip is modelled as an affine part plus
    kappa * 2*sqrt(rho/pi) * sin(theta/2) in tip-local polar coordinates,
    theta measured from tip_direction (the propagation direction; the
    crack lies along theta = +-pi). DOFs duplicated across the crack get
    theta = +-pi by the side their fan lives on.
    """
    space = solution.space
    mesh = space.mesh
    tip = np.asarray(tip_point, dtype=float)
    tdir = np.asarray(tip_direction, dtype=float)
    norm = np.linalg.norm(tdir)
    if norm == 0:
        raise ElasticError("tip_direction must be nonzero")
    tdir = tdir / norm
    ndir = np.array([-tdir[1], tdir[0]])
    hbar = float(np.mean(mesh.edge_lengths))
    if r_inner is None:
        r_inner = 2.0 * hbar
    if r_outer is None:
        r_outer = 6.0 * hbar
    if not 0 < r_inner < r_outer:
        raise ElasticError("annulus radii must satisfy 0 < r_inner < r_outer")

    comps = connected_components(space.crack)
    own = [c for c in comps
           if min(np.linalg.norm(mesh.vertices[v] - tip) for v in c.vertex_ids()) < 1e-9]
    others = [c for c in comps if not any(c.bits == o.bits for o in own)]
    for c in others:
        a, b = mesh.segment_endpoints(c.edge_ids)
        from .geometry import dist_points_to_segments
        if float(dist_points_to_segments(tip[None, :], a, b).min()) <= r_outer:
            raise ElasticError("annulus intersects another crack branch")

    pos = space.dof_positions() - tip
    x = pos @ tdir
    y = pos @ ndir
    rho = np.hypot(x, y)
    theta = np.arctan2(y, x)
    dof_counts = np.bincount(space.dof_vertex, minlength=mesh.n_vertices)
    split = dof_counts[space.dof_vertex] > 1
    if split.any():
        side = space.fan_centroid_offsets() @ ndir
        theta = np.where(split, np.copysign(np.pi, side), theta)
    inside = (rho >= r_inner) & (rho <= r_outer)
    if int(inside.sum()) < 12:
        raise ElasticError(f"only {int(inside.sum())} DOFs in the annulus, need at least 12")
    basis = np.column_stack([
        np.ones(int(inside.sum())),
        x[inside],
        y[inside],
        2.0 * np.sqrt(rho[inside] / np.pi) * np.sin(0.5 * theta[inside]),
    ])
    coeffs, *_ = np.linalg.lstsq(basis, solution.u[inside], rcond=None)
    return float(coeffs[3])

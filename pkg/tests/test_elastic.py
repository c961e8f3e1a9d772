from __future__ import annotations

import math

import numpy as np
import pytest

from vefrac.benchmarks import (
    linear_y_profile,
    ramp_load,
    rect_grid_mesh,
    square_grid_mesh,
    unit_square_mesh,
)
from vefrac.elastic import (
    BoundaryLoad,
    ElasticError,
    LinearAmplitude,
    TableAmplitude,
    energy_release,
    fit_sif,
    power,
    power_bound_constant,
    solve_energy,
    split_along_crack,
)
from vefrac.geometry import CrackSet

import _oracles as oracle


def horizontal_mid_crack(mesh, n_cells, through=False):
    """Edges along y = 0.5 starting at x = 0; all of them when through."""
    pairs = []
    row = (n_cells // 2) * (n_cells + 1)
    span = n_cells if through else n_cells // 2
    for i in range(span):
        pairs.append((row + i, row + i + 1))
    return CrackSet.of_vertex_pairs(mesh, pairs)


# ---------------------------------------------------------------------------
# split_along_crack
# ---------------------------------------------------------------------------

def test_split_no_crack_identity(grid3):
    space = split_along_crack(grid3, CrackSet.empty(grid3))
    assert space.n_dofs == grid3.n_vertices
    assert np.array_equal(space.dof_vertex, np.arange(grid3.n_vertices))
    assert np.array_equal(space.tri_dofs, grid3.triangles)
    assert space.n_components == 1


def test_split_interior_two_edge_crack(grid4_tb):
    # interior horizontal crack of 2 edges: middle vertex duplicated,
    # both tips keep one DOF
    k = CrackSet.of_vertex_pairs(grid4_tb, [(11, 12), (12, 13)])
    space = split_along_crack(grid4_tb, k)
    assert space.n_dofs == grid4_tb.n_vertices + 1
    counts = np.bincount(space.dof_vertex, minlength=grid4_tb.n_vertices)
    assert counts[12] == 2
    assert counts[11] == 1 and counts[13] == 1
    assert space.n_components == 1  # not disconnected by an interior slit


def test_split_through_cut_disconnects(grid4_tb):
    k = horizontal_mid_crack(grid4_tb, 4, through=True)
    space = split_along_crack(grid4_tb, k)
    # every vertex on the cut line is duplicated, including boundary ones
    counts = np.bincount(space.dof_vertex, minlength=grid4_tb.n_vertices)
    for v in range(10, 15):
        assert counts[v] == 2
    assert space.n_components == 2


def test_split_matches_fan_oracle(grid4_tb):
    rng = np.random.default_rng(41)
    for _ in range(8):
        bits = int(rng.integers(0, 2**grid4_tb.n_edges))
        k = CrackSet(grid4_tb, bits)
        space = split_along_crack(grid4_tb, k)
        total, per_vertex = oracle.oracle_fan_dofs(grid4_tb, k.edge_ids)
        assert space.n_dofs == total
        counts = np.bincount(space.dof_vertex, minlength=grid4_tb.n_vertices)
        assert list(counts) == per_vertex


def test_dirichlet_release_on_cracked_boundary_edge(grid4_tb):
    # crack one bottom boundary edge: its DOFs facing the crack lose the
    # constraint that edge carried
    k = CrackSet.of_vertex_pairs(grid4_tb, [(0, 1)])
    space = split_along_crack(grid4_tb, k)
    free_space = split_along_crack(grid4_tb, CrackSet.empty(grid4_tb))
    assert len(space.dirichlet_dofs) == len(free_space.dirichlet_dofs) - 1
    # vertex 0 only touches Dirichlet edge (0,1); cracked -> unconstrained
    dofs_of_v0 = np.flatnonzero(space.dof_vertex == 0)
    assert not any(d in space.dirichlet_dofs for d in dofs_of_v0)


# ---------------------------------------------------------------------------
# solve_energy
# ---------------------------------------------------------------------------

def test_constant_datum_zero_energy(grid3):
    load = BoundaryLoad(profile=np.ones(grid3.n_vertices),
                        amplitude=LinearAmplitude(1.0, 0.0), horizon=1.0)
    for k in (CrackSet.empty(grid3), CrackSet.of_edges(grid3, [4, 5])):
        sol = solve_energy(0.7, k, load)
        assert abs(sol.energy) < 1e-12
        assert np.allclose(sol.u, 1.0)


def test_linear_field_reproduced_exactly():
    mesh = unit_square_mesh()
    load = ramp_load(mesh)
    sol = solve_energy(1.0, CrackSet.empty(mesh), load)
    assert math.isclose(sol.energy, 0.5, rel_tol=1e-12)
    assert np.allclose(sol.u, mesh.vertices[:, 1], atol=1e-10)
    # same on a fine grid: P1 reproduces u = y at every resolution
    fine = square_grid_mesh(8)
    sol8 = solve_energy(1.0, CrackSet.empty(fine), ramp_load(fine))
    assert math.isclose(sol8.energy, 0.5, rel_tol=1e-10)


def test_through_cut_kills_energy(grid4_tb):
    k = horizontal_mid_crack(grid4_tb, 4, through=True)
    sol = solve_energy(1.0, k, ramp_load(grid4_tb))
    assert abs(sol.energy) < 1e-15
    # piecewise constant: 0 below the cut, 1 above
    ys = grid4_tb.vertices[sol.space.dof_vertex, 1]
    centro = sol.space.fan_centroid_offsets()[:, 1]
    side = ys + 1e-6 * np.sign(centro)
    assert np.allclose(sol.u[side > 0.5], 1.0, atol=1e-7)
    assert np.allclose(sol.u[side < 0.5], 0.0, atol=1e-7)


def test_floating_component_pinned(grid4_tb):
    # cut out the interior square around vertex 12: it floats
    loop = [(6, 7), (7, 8), (8, 13), (13, 18), (18, 17), (17, 16), (16, 11), (11, 6)]
    k = CrackSet.of_vertex_pairs(grid4_tb, loop)
    space = split_along_crack(grid4_tb, k)
    assert space.n_components == 2
    assert len(space.pinned_dofs) == 1
    sol = solve_energy(1.0, k, ramp_load(grid4_tb))
    inner = space.dof_component == space.dof_component[space.pinned_dofs[0]]
    assert np.allclose(sol.u[inner], 0.0, atol=1e-9)
    assert sol.energy >= 0.0


def test_energy_monotone_in_crack(grid4_tb):
    load = ramp_load(grid4_tb)
    rng = np.random.default_rng(13)
    for _ in range(6):
        h_bits = int(rng.integers(0, 2**grid4_tb.n_edges))
        k_bits = h_bits | int(rng.integers(0, 2**grid4_tb.n_edges))
        eh = solve_energy(1.0, CrackSet(grid4_tb, h_bits), load).energy
        ek = solve_energy(1.0, CrackSet(grid4_tb, k_bits), load).energy
        assert ek <= eh + 1e-10 * (1.0 + eh)


def test_quadratic_amplitude_scaling(grid4_tb):
    k = horizontal_mid_crack(grid4_tb, 4)
    e1 = solve_energy(1.0, k, ramp_load(grid4_tb, c1=1.0)).energy
    e3 = solve_energy(1.0, k, ramp_load(grid4_tb, c1=3.0)).energy
    assert math.isclose(e3, 9.0 * e1, rel_tol=1e-8)


def test_load_mesh_mismatch_rejected(grid3, grid4_tb):
    with pytest.raises(ElasticError, match="values for a mesh"):
        solve_energy(0.0, CrackSet.empty(grid3), ramp_load(grid4_tb))


# ---------------------------------------------------------------------------
# power
# ---------------------------------------------------------------------------

def test_power_zero_when_amplitude_frozen(grid3):
    load = BoundaryLoad(profile=linear_y_profile(grid3),
                        amplitude=LinearAmplitude(2.0, 0.0), horizon=1.0)
    assert power(0.5, CrackSet.empty(grid3), load) == 0.0


def test_power_analytic_square():
    mesh = unit_square_mesh()
    load = ramp_load(mesh)
    for t in (0.25, 1.0, 2.0):
        assert math.isclose(power(t, CrackSet.empty(mesh), load), t, rel_tol=1e-12)


def test_power_matches_finite_difference(grid4_tb):
    load = ramp_load(grid4_tb, horizon=2.0, c0=0.1, c1=0.7)
    k = horizontal_mid_crack(grid4_tb, 4)
    h = 1e-4
    for t in (0.3, 1.2):
        fd = (solve_energy(t + h, k, load).energy
              - solve_energy(t - h, k, load).energy) / (2 * h)
        assert math.isclose(power(t, k, load), fd, rel_tol=1e-5)


def test_table_amplitude_power(grid3):
    amp = TableAmplitude([0.0, 0.5, 1.0], [0.0, 1.0, 1.5])
    load = BoundaryLoad(profile=linear_y_profile(grid3), amplitude=amp, horizon=1.0)
    assert amp.approximate
    p_left = power(0.25, CrackSet.empty(grid3), load)
    p_right = power(0.75, CrackSet.empty(grid3), load)
    # du/dt halves after t = 0.5 while a itself keeps growing
    a_quarter, a_three = amp(0.25), amp(0.75)
    assert math.isclose(p_left, 2.0 * a_quarter * 1.0, rel_tol=1e-10)
    assert math.isclose(p_right, 1.0 * a_three * 1.0, rel_tol=1e-10)


# ---------------------------------------------------------------------------
# the constant C_P
# ---------------------------------------------------------------------------

def test_power_constant_zero_rate(grid3):
    load = BoundaryLoad(profile=linear_y_profile(grid3),
                        amplitude=LinearAmplitude(5.0, 0.0), horizon=1.0)
    assert power_bound_constant(load, grid3) == 0.0


def test_power_constant_unit_square_ramp():
    mesh = unit_square_mesh()
    assert math.isclose(power_bound_constant(ramp_load(mesh), mesh), 1.0,
                        rel_tol=1e-12)


def test_power_constant_table_matches_dense_grid(grid3):
    times = [0.0, 0.3, 0.7, 1.0]
    values = [0.0, 0.6, 0.7, 1.4]
    amp = TableAmplitude(times, values)
    load = BoundaryLoad(profile=linear_y_profile(grid3), amplitude=amp, horizon=1.0)
    dense = max(abs(amp.derivative(t)) for t in np.linspace(1e-6, 1 - 1e-6, 2001))
    got = power_bound_constant(load, grid3)
    grad = math.sqrt(sum(
        grid3.triangle_areas))  # |grad y| = 1 on every triangle
    assert math.isclose(got, dense * grad * max(0.5 * grid3.area, 1.0), rel_tol=1e-10)


def test_power_bound_inequality_holds(grid4_tb):
    load = ramp_load(grid4_tb, horizon=2.0, c1=1.3)
    cp = power_bound_constant(load, grid4_tb)
    rng = np.random.default_rng(17)
    for _ in range(5):
        k = CrackSet(grid4_tb, int(rng.integers(0, 2**grid4_tb.n_edges)))
        for t in (0.0, 0.4, 1.1, 2.0):
            sol = solve_energy(t, k, load)
            assert abs(power(t, k, load, sol)) <= cp * (sol.energy + 1.0) + 1e-12


# ---------------------------------------------------------------------------
# energy release and SIF
# ---------------------------------------------------------------------------

def test_energy_release_zero_load(grid4_tb):
    k = horizontal_mid_crack(grid4_tb, 4)
    load = ramp_load(grid4_tb)
    path = [grid4_tb.edge_index[(12, 13)], grid4_tb.edge_index[(13, 14)]]
    g = energy_release(0.0, k, load, path, h_steps=2)
    assert abs(g) < 1e-14


def test_energy_release_nonnegative_and_tip_checked(grid4_tb):
    k = horizontal_mid_crack(grid4_tb, 4)  # tips at vertices 10 and 12
    load = ramp_load(grid4_tb)
    path = [grid4_tb.edge_index[(12, 13)], grid4_tb.edge_index[(13, 14)]]
    g = energy_release(1.0, k, load, path, h_steps=2)
    assert g >= -1e-12
    far = [grid4_tb.edge_index[(0, 1)]]
    with pytest.raises(ElasticError, match="not incident to a crack tip"):
        energy_release(1.0, k, load, far, h_steps=1)
    broken = [grid4_tb.edge_index[(12, 13)], grid4_tb.edge_index[(0, 1)]]
    with pytest.raises(ElasticError, match="do not form a path"):
        energy_release(1.0, k, load, broken, h_steps=2)
    with pytest.raises(ElasticError, match="no tip"):
        energy_release(1.0, CrackSet.empty(grid4_tb), load, path)


def test_fit_sif_zero_field():
    mesh = square_grid_mesh(8, dirichlet="topbottom")
    k = horizontal_mid_crack(mesh, 8)
    sol = solve_energy(0.0, k, ramp_load(mesh))
    kappa = fit_sif(sol, tip_point=(0.5, 0.5), tip_direction=(1.0, 0.0))
    assert abs(kappa) < 1e-12


def test_fit_sif_recovers_injected_mode():
    from dataclasses import replace

    mesh = square_grid_mesh(8, dirichlet="topbottom")
    k = horizontal_mid_crack(mesh, 8)
    sol = solve_energy(0.0, k, ramp_load(mesh))
    space = sol.space
    tip = np.array([0.5, 0.5])
    tdir = np.array([1.0, 0.0])
    ndir = np.array([0.0, 1.0])
    pos = space.dof_positions() - tip
    x, y = pos @ tdir, pos @ ndir
    rho = np.hypot(x, y)
    theta = np.arctan2(y, x)
    counts = np.bincount(space.dof_vertex, minlength=mesh.n_vertices)
    split = counts[space.dof_vertex] > 1
    side = space.fan_centroid_offsets() @ ndir
    theta = np.where(split, np.copysign(np.pi, side), theta)
    kappa0 = 0.8
    u = kappa0 * 2.0 * np.sqrt(rho / np.pi) * np.sin(0.5 * theta)
    u += 0.3 - 0.2 * x + 0.05 * y  # affine slab the fit must absorb
    injected = replace(sol, u=u)
    kappa = fit_sif(injected, tip, tdir)
    assert math.isclose(kappa, kappa0, rel_tol=1e-6)


def test_fit_sif_guard_rails(grid4_tb):
    k = horizontal_mid_crack(grid4_tb, 4)
    sol = solve_energy(1.0, k, ramp_load(grid4_tb))
    with pytest.raises(ElasticError, match="DOFs in the annulus"):
        fit_sif(sol, (0.5, 0.5), (1.0, 0.0), r_inner=0.01, r_outer=0.02)
    far = CrackSet.of_vertex_pairs(grid4_tb, [(3, 4)])  # second branch
    sol2 = solve_energy(1.0, k.union(far), ramp_load(grid4_tb))
    with pytest.raises(ElasticError, match="another crack branch"):
        fit_sif(sol2, (0.5, 0.5), (1.0, 0.0), r_inner=0.2, r_outer=0.9)

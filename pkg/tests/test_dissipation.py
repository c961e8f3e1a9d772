from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vefrac.benchmarks import rect_grid_mesh
from vefrac.dissipation import (
    CostValue,
    DissipationParams,
    MonotoneChain,
    alpha,
    atw_integral,
    big_d,
    delta_atw,
    dist_d,
    var_along,
)
from vefrac.geometry import CrackSet, MeshError, h1_diff, h1_measure, hausdorff

import _oracles as oracle

PARAMS = DissipationParams(lam=0.1, mu=0.1)


# ---------------------------------------------------------------------------
# CostValue and params
# ---------------------------------------------------------------------------

def test_params_validation():
    with pytest.raises(ValueError, match="lambda must be positive"):
        DissipationParams(lam=0.0, mu=1.0)
    with pytest.raises(ValueError, match="mu must be positive"):
        DissipationParams(lam=1.0, mu=-2.0)
    with pytest.raises(ValueError, match="quadrature_order"):
        DissipationParams(lam=1.0, mu=1.0, quadrature_order=0)


def test_cost_value_arithmetic():
    a = CostValue.finite(0.25)
    b = CostValue.finite(0.5)
    inf = CostValue.infinity()
    assert (a + b).value == 0.75
    assert (a + inf).infinite
    assert (inf + inf).infinite
    assert a.scaled(4.0).value == 1.0
    assert inf.scaled(2.0).infinite
    assert a < b < inf
    assert inf.as_float() == math.inf
    assert (a + 0.75).value == 1.0
    with pytest.raises(ValueError):
        CostValue.finite(-1e-3)
    with pytest.raises(ValueError):
        CostValue.finite(math.nan)


# ---------------------------------------------------------------------------
# alpha
# ---------------------------------------------------------------------------

def test_alpha_of_self_is_zero(grid3):
    k = CrackSet.of_edges(grid3, [0, 4, 9])
    assert alpha(k, k) == CostValue.finite(0.0)


def test_alpha_from_empty_counts_components(grid3):
    # three pairwise vertex-disjoint edges
    k = CrackSet.of_vertex_pairs(grid3, [(0, 1), (2, 3), (8, 9)])
    assert alpha(CrackSet.empty(grid3), k).value == 3.0


def test_alpha_infinite_without_inclusion(grid3):
    h = CrackSet.of_edges(grid3, [0])
    k = CrackSet.of_edges(grid3, [1, 2])
    assert alpha(h, k).infinite


def test_alpha_counts_only_detached_components(grid3):
    h = CrackSet.of_vertex_pairs(grid3, [(0, 1)])
    # one component touching h at vertex 1, one detached
    k = h.union(CrackSet.of_vertex_pairs(grid3, [(1, 2), (8, 9)]))
    assert alpha(h, k).value == 1.0


@given(h_sel=st.integers(0, 2**9 - 1), extra=st.integers(0, 2**9 - 1))
@settings(max_examples=150, deadline=None)
def test_alpha_matches_component_scan_oracle(rect9, h_sel, extra):
    h = CrackSet(rect9, h_sel)
    k = CrackSet(rect9, h_sel | extra)
    got = alpha(h, k)
    expected = oracle.oracle_alpha(rect9, h.edge_ids, k.edge_ids)
    assert got.value == float(expected)


@given(h_bits=st.integers(0, 2**9 - 1), k_extra=st.integers(0, 2**9 - 1),
       l_extra=st.integers(0, 2**9 - 1))
@settings(max_examples=150, deadline=None)
def test_alpha_triangle_inequality(rect9, h_bits, k_extra, l_extra):
    k_bits = h_bits | k_extra
    l_bits = k_bits | l_extra
    h, k, l = (CrackSet(rect9, b) for b in (h_bits, k_bits, l_bits))
    assert alpha(h, l).value <= alpha(h, k).value + alpha(k, l).value


# ---------------------------------------------------------------------------
# dist_d
# ---------------------------------------------------------------------------

def test_d_of_self_is_zero(grid3):
    k = CrackSet.of_edges(grid3, [2, 3])
    assert dist_d(k, k, PARAMS) == CostValue.finite(0.0)


def test_d_far_edge_example():
    # vertical edges have length 0.4; the new one shares no vertex with h
    mesh = rect_grid_mesh(5, 1, width=2.0, height=0.4)
    h = CrackSet.of_vertex_pairs(mesh, [(0, 6)])    # x = 0 side
    k = h.union(CrackSet.of_vertex_pairs(mesh, [(5, 11)]))  # x = 2 side
    got = dist_d(h, k, PARAMS)
    assert math.isclose(got.value, 0.4 + 0.1 * 1, rel_tol=1e-15)


def test_d_separates_points(grid3):
    rng = np.random.default_rng(5)
    for _ in range(40):
        h_bits = int(rng.integers(0, 2**33))
        k_bits = h_bits | int(rng.integers(1, 2**33))
        h, k = CrackSet(grid3, h_bits), CrackSet(grid3, k_bits)
        if h.bits == k.bits:
            continue
        assert dist_d(h, k, PARAMS).value > 0.0
    assert dist_d(CrackSet.of_edges(grid3, [1]),
                  CrackSet.of_edges(grid3, [2]), PARAMS).infinite


@given(h_bits=st.integers(0, 2**9 - 1), k_extra=st.integers(0, 2**9 - 1),
       l_extra=st.integers(0, 2**9 - 1))
@settings(max_examples=120, deadline=None)
def test_d_triangle_inequality(rect9, h_bits, k_extra, l_extra):
    k_bits = h_bits | k_extra
    l_bits = k_bits | l_extra
    h, k, l = (CrackSet(rect9, b) for b in (h_bits, k_bits, l_bits))
    lhs = dist_d(h, l, PARAMS).value
    rhs = dist_d(h, k, PARAMS).value + dist_d(k, l, PARAMS).value
    assert lhs <= rhs + 1e-12 * (1.0 + rhs)


# ---------------------------------------------------------------------------
# delta and the ATW integral
# ---------------------------------------------------------------------------

def test_delta_of_self_is_zero(grid3):
    k = CrackSet.of_edges(grid3, [7])
    assert delta_atw(k, k, PARAMS) == CostValue.finite(0.0)


def test_delta_collinear_extension_is_half_square(rect9):
    # bottom edges of the 2x1 rectangle: (0,0)-(1,0) then (1,0)-(2,0)
    h = CrackSet.of_vertex_pairs(rect9, [(0, 1)])
    k = h.union(CrackSet.of_vertex_pairs(rect9, [(1, 2)]))
    ell = 1.0
    for order in (1, 2, 3, 5):
        p = DissipationParams(lam=0.1, mu=0.1, quadrature_order=order)
        got = atw_integral(h, k, p)
        assert math.isclose(got.value, ell * ell / 2.0, rel_tol=1e-14)
    # alpha = 0, so delta is the pure integral
    assert math.isclose(delta_atw(h, k, PARAMS).value, 0.5, rel_tol=1e-14)


def test_delta_from_empty_uses_diameter(rect9):
    k = CrackSet.of_edges(rect9, [0, 1])
    expected = rect9.domain_diameter * h1_measure(k)
    assert math.isclose(atw_integral(CrackSet.empty(rect9), k, PARAMS).value,
                        expected, rel_tol=1e-15)


def test_delta_infinite_without_inclusion(rect9):
    h = CrackSet.of_edges(rect9, [0])
    k = CrackSet.of_edges(rect9, [1])
    assert delta_atw(h, k, PARAMS).infinite
    assert atw_integral(h, k, PARAMS).infinite


def test_atw_matches_dense_sampling_oracle(grid3):
    rng = np.random.default_rng(19)
    for _ in range(12):
        h_bits = int(rng.integers(1, 2**33))
        k_bits = h_bits | int(rng.integers(0, 2**33))
        h, k = CrackSet(grid3, h_bits), CrackSet(grid3, k_bits)
        if h.bits == k.bits:
            continue
        dense = oracle.dense_atw_integral(grid3, h.edge_ids, k.edge_ids,
                                          n_per_edge=1000)
        got = atw_integral(h, k, PARAMS).value
        assert math.isclose(got, dense, rel_tol=1e-3, abs_tol=1e-12)


@given(h_sel=st.integers(1, 2**9 - 1), extra=st.integers(0, 2**9 - 1))
@settings(max_examples=100, deadline=None)
def test_higher_order_bound(rect9, h_sel, extra):
    h = CrackSet(rect9, h_sel)
    k = CrackSet(rect9, h_sel | extra)
    delta = atw_integral(h, k, PARAMS).value
    haus = hausdorff(h, k)
    growth = h1_diff(h, k)
    eps = rect9.hausdorff_resolution
    assert delta <= (haus + eps) * growth + 1e-12


def test_ratio_delta_over_d_bounded_by_hausdorff(grid3):
    # nested sets growing along the bottom row toward the full row
    bottom = [(0, 1), (1, 2), (2, 3)]
    full = CrackSet.of_vertex_pairs(grid3, bottom)
    eps = grid3.hausdorff_resolution
    for n in (1, 2):
        kn = CrackSet.of_vertex_pairs(grid3, bottom[:n])
        assert alpha(kn, full).value == 0.0
        num = delta_atw(kn, full, PARAMS).value
        den = dist_d(kn, full, PARAMS).value
        assert num / den <= hausdorff(kn, full) + eps


# ---------------------------------------------------------------------------
# big D
# ---------------------------------------------------------------------------

def test_big_d_closed_form(grid3):
    rng = np.random.default_rng(23)
    for _ in range(20):
        h_bits = int(rng.integers(0, 2**33))
        k_bits = h_bits | int(rng.integers(0, 2**33))
        h, k = CrackSet(grid3, h_bits), CrackSet(grid3, k_bits)
        d = dist_d(h, k, PARAMS)
        de = delta_atw(h, k, PARAMS)
        total = big_d(h, k, PARAMS)
        assert math.isclose(total.value, d.value + de.value,
                            rel_tol=1e-14, abs_tol=1e-15)
        closed = (h1_diff(h, k) + atw_integral(h, k, PARAMS).value
                  + (PARAMS.lam + PARAMS.mu) * alpha(h, k).value)
        assert math.isclose(total.value, closed, rel_tol=1e-14, abs_tol=1e-15)


def test_big_d_collinear_example(rect9):
    h = CrackSet.of_vertex_pairs(rect9, [(0, 1)])
    k = h.union(CrackSet.of_vertex_pairs(rect9, [(1, 2)]))
    got = big_d(h, k, PARAMS)
    assert math.isclose(got.value, 1.0 + 0.5, rel_tol=1e-14)


def test_big_d_far_component_example():
    mesh = rect_grid_mesh(5, 1, width=2.0, height=0.4)
    h = CrackSet.of_vertex_pairs(mesh, [(0, 6)])
    k = h.union(CrackSet.of_vertex_pairs(mesh, [(5, 11)]))
    dense = oracle.dense_atw_integral(mesh, h.edge_ids, k.edge_ids,
                                      n_per_edge=2000)
    got = big_d(h, k, PARAMS)
    assert math.isclose(got.value, 0.4 + dense + 0.2, rel_tol=1e-4)


# ---------------------------------------------------------------------------
# chains and variations
# ---------------------------------------------------------------------------

def test_chain_validation(square2, rect9):
    with pytest.raises(ValueError):
        MonotoneChain([])
    with pytest.raises(MeshError, match="different meshes"):
        MonotoneChain([CrackSet.empty(square2), CrackSet.empty(rect9)])
    ch = MonotoneChain([CrackSet.empty(rect9), CrackSet.of_edges(rect9, [0])])
    assert ch.is_monotone
    bad = MonotoneChain([CrackSet.of_edges(rect9, [0]), CrackSet.of_edges(rect9, [1])])
    assert not bad.is_monotone


def test_var_singleton_is_zero(rect9):
    ch = MonotoneChain([CrackSet.of_edges(rect9, [0, 3])])
    assert var_along(ch, "d", PARAMS) == 0.0
    assert var_along(ch, "alpha") == 0.0
    assert var_along(ch, "h1") == 0.0


def test_var_alpha_two_nucleations(grid3):
    e1 = CrackSet.of_vertex_pairs(grid3, [(0, 1)])
    e2 = CrackSet.of_vertex_pairs(grid3, [(8, 9)])  # vertex-disjoint from e1
    ch = MonotoneChain([CrackSet.empty(grid3), e1, e1.union(e2)])
    assert var_along(ch, "alpha") == 2.0


def test_var_d_matches_explicit_reconstruction(grid3):
    rng = np.random.default_rng(31)
    for _ in range(15):
        bits = int(rng.integers(0, 2**33))
        chain_bits = [bits]
        for _ in range(3):
            bits = bits | int(rng.integers(0, 2**33))
            chain_bits.append(bits)
        states = [CrackSet(grid3, b) for b in chain_bits]
        ch = MonotoneChain(states)
        got = var_along(ch, "d", PARAMS)
        jumps = math.fsum(alpha(a, b).value
                          for a, b in zip(states, states[1:]))
        expected = h1_diff(states[0], states[-1]) + PARAMS.lam * jumps
        assert math.isclose(got, expected, rel_tol=1e-13, abs_tol=1e-15)
        assert var_along(ch, "alpha") == jumps
        assert math.isclose(var_along(ch, "h1"),
                            h1_diff(states[0], states[-1]),
                            rel_tol=1e-13, abs_tol=1e-15)


def test_var_infinite_on_broken_chain(rect9):
    ch = MonotoneChain([CrackSet.of_edges(rect9, [0]), CrackSet.of_edges(rect9, [1])])
    assert var_along(ch, "d", PARAMS) == math.inf
    assert var_along(ch, "alpha") == math.inf
    assert var_along(ch, "h1") == math.inf


def test_var_rejects_unknown_kind(rect9):
    ch = MonotoneChain([CrackSet.empty(rect9)])
    with pytest.raises(ValueError, match="unknown variation"):
        var_along(ch, "momentum")
    with pytest.raises(ValueError, match="needs DissipationParams"):
        var_along(ch, "d")

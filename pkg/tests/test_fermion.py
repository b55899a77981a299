"""Fermion observable assembly, the primitive H, and stopping invariance."""

import cmath
import math
from fractions import Fraction

import numpy as np
import pytest

from fklab.config import BondState, decompose
from fklab.exact import Cyclo16, IUNIT, SQRT2, enumerate_states, exact_F, spin_exponent
from fklab.fermion import (FermionField, build_H, conditional_F_restricted,
                           corner_norm, edge_from_corners, geo_key,
                           interface_prefixes, martingale_residual,
                           one_step_extensions, prefix_passages, slit_domain,
                           weight_W)
from fklab.lattice import KIND_CORNER, build_rect_domain

# frozen H values on rect(2,2), per face id (s2h = sqrt(2) - 1/2)
_S2H = 0.914213562373095
H22_FROZEN = {0: 0.0, 1: 1.0, 2: 0.0, 3: 1.0, 4: _S2H, 5: 1.0, 6: 0.0,
              7: 0.5, 8: 0.5, 9: 1.0, 10: 0.0, 11: 1.0, 12: _S2H, 13: 1.0,
              14: 1.0, 15: 1.0}


def python_F(domain, q=2.0):
    """Independent assembly route: explicit passage sums over all states."""
    sig = spin_exponent(q)
    vals = np.zeros(domain.n_points, dtype=complex)
    z = 0.0
    for idx in range(2 ** domain.n_bits):
        dec = decompose(BondState.from_index(domain, idx))
        w = math.sqrt(q) ** dec.n_loops
        z += w
        for p in dec.passages:
            m_rel = p.m - 2 * dec.tb
            vals[p.point] += w * cmath.exp(-1j * sig * m_rel * math.pi / 4.0)
    vals /= z
    vals[np.asarray(domain.point_kind) == KIND_CORNER] *= corner_norm(q)
    for v in range(domain.n_vertices):
        cps = [domain.corner_pid(v, qd) for qd in range(4)]
        vals[domain.vertex_pid(v)] = 0.5 * sum(vals[cp] for cp in cps)
    return vals


def test_winding_weight():
    assert weight_W(0) == Cyclo16.one()
    assert weight_W(1) == Cyclo16.zeta_pow(2)
    assert weight_W(4) == -Cyclo16.one()          # full half-turn at sigma=1/2
    assert weight_W(8) == Cyclo16.one()
    w = weight_W(1, q=3.0)
    assert w == pytest.approx(cmath.exp(-1j * spin_exponent(3.0) * math.pi / 2))


def test_corner_norm():
    assert corner_norm(2.0) == pytest.approx(2.0 * math.cos(math.pi / 8.0))
    assert corner_norm(4.0) == pytest.approx(2.0 * math.cos(math.pi / 4.0))


def test_marks_are_unit(F22, F32):
    for F in (F22, F32):
        d = F.domain
        for e in (d.a_edge, d.b_edge):
            assert F.exact[int(d.tables.epid[e])] == Cyclo16.one()
            assert F.values[int(d.tables.epid[e])] == pytest.approx(1.0)


def test_center_edge_values_frozen(F22, F32):
    # rect(2,2): F(center) = i / sqrt(2); rect(3,2): exactly 0 by symmetry
    v = F22.exact[F22.domain.center_edge()]
    assert v == IUNIT * SQRT2 * Fraction(1, 2)
    assert F22.values[F22.domain.center_edge()] == pytest.approx(
        0.7071067811865475j)
    assert F32.exact[F32.domain.center_edge()].is_zero()


def test_assembly_against_independent_route(d22, d32, F22, F32):
    for d, F in ((d22, F22), (d32, F32)):
        ref = python_F(d, 2.0)
        assert np.max(np.abs(F.values - ref)) < 5e-15
    d = d22
    F = exact_F(d, 1.5)
    assert F.exact is None
    assert np.max(np.abs(F.values - python_F(d, 1.5))) < 5e-15


def test_vertex_is_half_corner_sum(d32, F32):
    for v in range(d32.n_vertices):
        acc = Cyclo16.zero()
        for qd in range(4):
            acc = acc + F32.exact[d32.corner_pid(v, qd)]
        assert (F32.exact[d32.vertex_pid(v)] - acc * Fractionish(1, 2)).is_zero()


def Fractionish(a, b):
    from fractions import Fraction

    return Cyclo16.from_rational(Fraction(a, b))


def test_edge_from_corners_exact(F32):
    d = F32.domain
    n_checked = 0
    for e in range(d.n_full):
        for v in (int(d.tail[e]), int(d.head[e])):
            if d.degree[v] != 4:
                continue
            rec = edge_from_corners(F32, e, v)
            assert (rec - F32.exact[e]).is_zero()
            n_checked += 1
    assert n_checked > 20
    # float path agrees too
    Ff = FermionField(d, 2.0, F32.values.copy())
    for e in (0, d.center_edge()):
        v = int(d.head[e]) if d.degree[int(d.head[e])] == 4 else int(d.tail[e])
        if d.degree[v] != 4:
            continue
        assert edge_from_corners(Ff, e, v) == pytest.approx(
            complex(F32.values[e]), abs=1e-14)


def test_normalization_manifest(F22):
    info = F22.normalization
    assert info["edge"] == 1.0
    assert info["corner"] == pytest.approx(corner_norm(2.0))


def test_build_H_exact(d22, H22):
    assert H22.residual == 0.0
    assert H22.anchor == 0
    assert H22.values[H22.anchor] == 0.0
    for f, want in H22_FROZEN.items():
        assert H22.values[f] == pytest.approx(want, abs=1e-15)
    wired, dual = d22.boundary_arcs()
    assert len(wired) == 8 and len(dual) == 4
    assert all(H22.values[f] == 1.0 for f in wired)
    assert all(H22.values[f] == 0.0 for f in dual)
    # exact copies carry real cyclotomics
    assert all(x.is_real() for x in H22.exact)
    s2 = SQRT2 - Fractionish(1, 2)
    assert H22.exact[4] == s2 and H22.exact[12] == s2


def test_build_H_float_path(d22):
    F = exact_F(d22, 1.0)
    H = build_H(F)
    assert H.exact is None
    assert 0.0 < H.residual < 0.1          # q != 2: closure genuinely fails


def test_build_H_rejects_broken_exact_field(d22):
    F = exact_F(d22, 2.0)
    F.exact[d22.center_edge()] = F.exact[d22.center_edge()] + Cyclo16.one()
    with pytest.raises(ValueError, match="do not close"):
        build_H(F)


def test_prefix_census(d22, d32):
    pref = interface_prefixes(d22, 4)
    assert [len(pref[s]) for s in range(5)] == [1, 1, 2, 3, 4]
    pref = interface_prefixes(d32, 4)
    assert [len(pref[s]) for s in range(5)] == [1, 1, 2, 4, 6]
    # extensions of level s together give level s+1
    lvl1 = pref[1]
    ext = [p for base in lvl1 for p in one_step_extensions(d32, base)]
    keyed = {(p.transits, p.decided) for p in ext}
    assert keyed == {(p.transits, p.decided) for p in pref[2]}


def test_prefix_passages_start_at_source(d32):
    pref = interface_prefixes(d32, 2)[2][0]
    pas = prefix_passages(d32, pref)
    assert pas[0] == (int(d32.tables.epid[d32.a_edge]), 0)
    assert len(pas) >= 3


def test_slit_domain_geometry(d32):
    pref = interface_prefixes(d32, 2)[2][0]
    sd = slit_domain(d32, pref)
    assert sd.delta == d32.delta
    assert sd.parity == d32.parity
    assert sd.content_hash() != d32.content_hash()
    assert sd.n_bits < d32.n_bits
    # geometry keys of surviving points all exist in the parent registry
    parent = {geo_key(d32, p) for p in range(d32.n_points)}
    kept = sum(1 for p in range(sd.n_points) if geo_key(sd, p) in parent)
    assert kept > sd.n_points // 2


def test_conditional_matches_slit(d22, d32):
    """Two-route identity: conditional sums equal the slit-domain field."""
    jobs = [(d22, 1, 1, 40), (d22, 2, 2, 70), (d32, 1, 1, 58)]
    for d, t, n_pref, n_cmp_want in jobs:
        prefixes = [p for p in interface_prefixes(d, t)[t]
                    if p.cur_edge != d.b_edge]
        assert len(prefixes) == n_pref
        n_cmp = 0
        for pref in prefixes:
            cond = conditional_F_restricted(d, pref)
            sd = slit_domain(d, pref)
            Fs = exact_F(sd, 2.0)
            skeys = {geo_key(sd, p): p for p in range(sd.n_points)}
            for key, val in cond.items():
                p = skeys.get(key)
                if p is None:
                    continue
                assert (val - Fs.exact[p]).is_zero()
                n_cmp += 1
        assert n_cmp == n_cmp_want


def test_martingale_exact(d22, d32):
    worst, n_cmp, n_skip = martingale_residual(d32, 2.0, t=1, details=True)
    assert (worst, n_cmp, n_skip) == (0.0, 120, 0)
    worst, n_cmp, n_skip = martingale_residual(d32, 2.0, t=2, details=True)
    assert (worst, n_cmp, n_skip) == (0.0, 235, 0)
    worst, n_cmp, n_skip = martingale_residual(d22, 2.0, t=3, details=True)
    assert (worst, n_cmp, n_skip) == (0.0, 310, 0)


def test_martingale_float_q(d22):
    worst, n_cmp, _ = martingale_residual(d22, 1.0, t=2, details=True)
    assert n_cmp == 159
    assert worst < 1e-12
    worst = martingale_residual(d22, 3.0, t=2)
    assert worst < 1e-12


def test_martingale_size_guard():
    d = build_rect_domain(5, 4)            # 20 bonds: too big to condition on
    with pytest.raises(ValueError, match="too large"):
        martingale_residual(d, 2.0, t=1)

"""Medial domain geometry: construction, tables, arcs, serialization."""

import json
import math

import numpy as np
import pytest

from fklab.lattice import (KIND_CORNER, KIND_EDGE, KIND_VERTEX, Line,
                           MedialDomain, build_rect_domain, project)

# full-edge counts for the rectangle family (frozen)
N_FULL = {(1, 1): 7, (2, 2): 17, (3, 2): 25, (4, 2): 29, (3, 3): 31,
          (4, 3): 39}


def test_full_edge_counts():
    for (m, n), want in N_FULL.items():
        d = build_rect_domain(m, n)
        assert d.n_full == want
        assert d.n_edges == want + 2          # plus the two mark half-edges
        assert d.n_bits == m * n              # one bond per inner vertex


def test_degrees_and_flippable():
    d = build_rect_domain(3, 2)
    assert set(int(x) for x in d.degree) <= {2, 4}
    assert len(d.flippable) == d.n_bits
    assert all(d.degree[v] == 4 for v in d.flippable)


def test_half_edges_are_terminal():
    d = build_rect_domain(2, 2)
    assert d.tail[d.a_edge] == -1 and d.head[d.a_edge] >= 0   # source enters
    assert d.head[d.b_edge] == -1 and d.tail[d.b_edge] >= 0   # sink leaves
    full = [e for e in range(d.n_full)]
    assert all(d.head[e] >= 0 and d.tail[e] >= 0 for e in full)


def test_closed_face_euler_count():
    """#closed faces == #independent cycles (connected: E - V + 1)."""
    for m, n in ((1, 1), (2, 2), (3, 2), (4, 3)):
        d = build_rect_domain(m, n)
        closed = sum(1 for f in range(d.n_faces)
                     if all(e is not None for e in d.face_edges(f)))
        assert closed == d.n_full - d.n_vertices + 1


def test_point_registry_layout():
    d = build_rect_domain(2, 2)
    kinds = np.asarray(d.point_kind)
    assert (kinds[:d.n_edges] == KIND_EDGE).all()
    assert set(kinds.tolist()) == {KIND_EDGE, KIND_CORNER, KIND_VERTEX}
    # edge pids are the edge ids themselves
    for e in range(d.n_edges):
        assert int(d.tables.epid[e]) == e


def test_point_positions():
    d = build_rect_domain(3, 2, delta=0.5)
    # edge midpoints sit between their endpoints
    for e in range(d.n_full):
        t, h = int(d.tail[e]), int(d.head[e])
        mid = 0.5 * (complex(d.vx[t], d.vy[t]) + complex(d.vx[h], d.vy[h]))
        assert d.point_pos(int(d.tables.epid[e])) == pytest.approx(mid * d.delta)
    # the marks live at their doubled midpoints
    ae = int(d.tables.epid[d.a_edge])
    assert d.point_pos(ae) == pytest.approx(
        complex(d.mx2[d.a_edge], d.my2[d.a_edge]) / 2.0 * d.delta)
    # corner points sit a diagonal quarter-step from their vertex
    for v in range(d.n_vertices):
        if d.degree[v] != 4:
            continue
        zv = complex(d.vx[v], d.vy[v]) * d.delta
        for q in range(4):
            pid = d.corner_pid(v, q)
            off = d.point_pos(pid) - zv
            assert abs(off) == pytest.approx(d.delta * math.sqrt(2) / 4.0)


def test_face_positions_and_colors():
    d = build_rect_domain(2, 2)
    for f in range(d.n_faces):
        pos = d.face_pos(f)
        assert pos.real == pytest.approx((d.ffi[f] + 0.5) * d.delta)
        assert pos.imag == pytest.approx((d.ffj[f] + 0.5) * d.delta)
        assert d.fblack[f] == d.is_black(int(d.ffi[f]), int(d.ffj[f]))


def test_boundary_arcs_partition_open_faces():
    for m, n in ((1, 1), (3, 2), (3, 3)):
        d = build_rect_domain(m, n)
        wired, dual = d.boundary_arcs()
        assert set(wired) | set(dual) == set(d.open_faces)
        assert not set(wired) & set(dual)
        assert all(d.fblack[f] for f in wired)
        assert all(not d.fblack[f] for f in dual)
        # the anchor face (white, below the sink) starts the dual arc side
        assert d.anchor_face in dual


def test_center_edge_frozen():
    assert build_rect_domain(2, 2).center_edge() == 5
    assert build_rect_domain(3, 2).center_edge() == 12
    d = build_rect_domain(3, 3)
    e = d.center_edge()
    cx2 = float(d.vx.min() + d.vx.max())
    cy2 = float(d.vy.min() + d.vy.max())
    best = min(
        (d.mx2[k] - cx2) ** 2 + (d.my2[k] - cy2) ** 2 for k in range(d.n_full))
    assert (d.mx2[e] - cx2) ** 2 + (d.my2[e] - cy2) ** 2 == best


def test_lines_and_projection():
    d = build_rect_domain(2, 2)
    for e in range(d.n_edges):
        ln = d.line_of(e)
        assert isinstance(ln, Line)
        assert abs(ln.unit - ln.unit_exact().embed()) < 1e-14
        w = 0.3 - 1.7j
        p = project(w, ln)
        assert project(p, ln) == pytest.approx(p)      # idempotent
        # projection lies on the line: p / unit is real
        assert (p / ln.unit).imag == pytest.approx(0.0, abs=1e-15)


def test_corner_lines_bracket_edges():
    """Corner lines sit one eighth-turn on either side of their edge lines."""
    d = build_rect_domain(2, 2)
    for v in range(d.n_vertices):
        if d.degree[v] != 4:
            continue
        for q in range(4):
            jc = int(d.line_j[d.corner_pid(v, q)] % 16)
            near = []
            for s in range(4):
                e = int(d.vstrand[v, s])
                if e >= 0:
                    je = int(d.line_j[e])
                    near.extend(((je + 1) % 16, (je - 1) % 16))
            assert jc in near


def test_serialization_roundtrip(tmp_path):
    d = build_rect_domain(3, 2, delta=0.25)
    payload = d.to_dict()
    d2 = MedialDomain.from_dict(payload)
    assert d2.content_hash() == d.content_hash()
    assert d2.n_full == d.n_full and d2.delta == d.delta
    assert d2.parity == d.parity
    path = tmp_path / "dom.json"
    d.save(path)
    d3 = MedialDomain.load(path)
    assert d3.content_hash() == d.content_hash()
    # the payload is pure integers except the mesh
    for x1, y1, x2, y2 in payload["medial_edges"]:
        assert all(isinstance(v, int) for v in (x1, y1, x2, y2))


def test_content_hash_distinguishes():
    h22 = build_rect_domain(2, 2).content_hash()
    h32 = build_rect_domain(3, 2).content_hash()
    assert h22 != h32
    assert h22 == build_rect_domain(2, 2).content_hash()


def test_from_dict_validation():
    d = build_rect_domain(1, 1)
    good = d.to_dict()
    bad = dict(good, format="something-else")
    with pytest.raises(ValueError, match="format"):
        MedialDomain.from_dict(bad)
    bad = dict(good, medial_edges=good["medial_edges"] + [[0, 1, 0, 3]])
    with pytest.raises(ValueError, match="even"):
        MedialDomain.from_dict(bad)
    bad = dict(good, b=[4, 0])                      # not an edge midpoint
    with pytest.raises(ValueError):
        MedialDomain.from_dict(bad)


def test_builder_validation():
    with pytest.raises(ValueError, match="m, n >= 1"):
        build_rect_domain(0, 2)
    with pytest.raises(ValueError, match="boundary position"):
        build_rect_domain(2, 2, a_loc="nowhere")


def test_disconnected_component_rejected():
    d = build_rect_domain(1, 1)
    far = [[20, 0, 22, 0], [22, 0, 22, 2], [20, 2, 22, 2], [20, 0, 20, 2]]
    payload = d.to_dict()
    payload["medial_edges"] = payload["medial_edges"] + far
    with pytest.raises(ValueError, match="not connected"):
        MedialDomain.from_dict(payload)


def test_stray_mark_leaves_odd_vertex():
    """Moving one mark to a detached copy breaks the degree parity there."""
    a_part = build_rect_domain(1, 1).to_dict()
    b_part = build_rect_domain(1, 1).to_dict()
    shift = [[x1 + 20, y1, x2 + 20, y2] for x1, y1, x2, y2
             in b_part["medial_edges"]]
    payload = dict(a_part,
                   medial_edges=a_part["medial_edges"] + shift,
                   b=[b_part["b"][0] + 20, b_part["b"][1]])
    with pytest.raises(ValueError, match="must be 2 or 4"):
        MedialDomain.from_dict(payload)


def _constructor_args(d):
    edges = [((int(x1 // 2), int(y1 // 2)), (int(x2 // 2), int(y2 // 2)))
             for x1, y1, x2, y2 in d.to_dict()["medial_edges"]]
    a_at = (int(d.vx[d.head[d.a_edge]]), int(d.vy[d.head[d.a_edge]]))
    b_at = (int(d.vx[d.tail[d.b_edge]]), int(d.vy[d.tail[d.b_edge]]))
    a_m2 = (int(d.mx2[d.a_edge]), int(d.my2[d.a_edge]))
    b_m2 = (int(d.mx2[d.b_edge]), int(d.my2[d.b_edge]))
    return edges, a_at, a_m2, b_at, b_m2


def test_pockets_allowed_only_when_requested():
    """A detached 4-cycle is a legal pocket; a hole is never legal."""
    d = build_rect_domain(2, 2)
    edges, a_at, a_m2, b_at, b_m2 = _constructor_args(d)
    pocket = [((20, 0), (21, 0)), ((21, 0), (21, 1)),
              ((20, 1), (21, 1)), ((20, 0), (20, 1))]
    dd = MedialDomain(edges + pocket, a_at, a_m2, b_at, b_m2, d.parity,
                      allow_pockets=True)
    assert dd.n_full == d.n_full + 4
    with pytest.raises(ValueError, match="not connected"):
        MedialDomain(edges + pocket, a_at, a_m2, b_at, b_m2, d.parity)
    # a 6-cycle ring encloses open faces: rejected even as a pocket
    ring = [((20, 0), (21, 0)), ((21, 0), (22, 0)), ((22, 0), (22, 1)),
            ((21, 1), (22, 1)), ((20, 1), (21, 1)), ((20, 0), (20, 1))]
    with pytest.raises(ValueError, match="simply connected"):
        MedialDomain(edges + ring, a_at, a_m2, b_at, b_m2, d.parity,
                     allow_pockets=True)


def test_mark_placement_options():
    """Marks can go on any side, with parity-checked explicit slots."""
    for a_loc, b_loc in (("left", "right"), ("bottom", "top"),
                         ("top", "bottom")):
        d = build_rect_domain(2, 2, a_loc=a_loc, b_loc=b_loc)
        assert d.n_bits == 4
    sides = ["top", "bottom", "left", "right"]
    ok = bad = 0
    for idx in range(3):
        try:
            build_rect_domain(2, 2, a_loc=("top", idx), b_loc="bottom")
            ok += 1
        except ValueError:
            bad += 1
    assert ok >= 1 and bad >= 1     # parity admits some slots, rejects others


def test_tables_walk_consistency():
    """out/turn tables: next edge leaves the head vertex, turns are +-1/0."""
    d = build_rect_domain(2, 2)
    t = d.tables
    for e in range(d.n_edges):
        h = int(d.head[e])
        if h < 0:
            continue
        for out, turn in ((t.out0, t.turn0), (t.out1, t.turn1)):
            oe = int(out[e])
            assert oe >= 0 and oe != e
            assert int(d.tail[oe]) == h or oe == d.b_edge and int(d.tail[oe]) == h
            assert int(turn[e]) in (-1, 0, 1)

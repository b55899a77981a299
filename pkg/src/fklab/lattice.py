"""Medial square-lattice domains with two boundary marks.

A domain is a finite set of unit medial edges (plus two half-edges whose
free endpoints are the marks a and b) such that every vertex meets 2 or 4
strands.  Faces are 2-colored; black faces are the primal spin sites.
Every edge carries a canonical travel direction with black on the left,
and each curve of a bond configuration traverses edges canonically, so
loop decompositions are orbits of a successor permutation.

Conventions (fixed once, verified by the exact identity suite):
  * directions E,N,W,S counterclockwise; CCW turns count +1;
  * a horizontal edge with the black face above points east and carries
    projection line number 0 (line j spans exp(i*j*pi/8)); vertical with
    black east points south, line 2; the eight lines around a vertex
    advance counterclockwise by one step per eighth-turn;
  * the domain is canonically rotated so the half-edge into b points
    east and the face north of b is black (the wired side).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# travel directions, counterclockwise order
E, N, W, S = 0, 1, 2, 3
DX = (1, 0, -1, 0)
DY = (0, 1, 0, -1)
OPP = (2, 3, 0, 1)

# corner quadrants, counterclockwise from east
NE, NW, SW, SE = 0, 1, 2, 3
QUAD_NAMES = ("NE", "NW", "SW", "SE")
# quadrant between two adjacent vertex sides (the rounded turn of a passage)
_QUAD_BETWEEN = {(E, N): NE, (N, E): NE, (N, W): NW, (W, N): NW,
                 (W, S): SW, (S, W): SW, (S, E): SE, (E, S): SE}
# line-index step of each corner relative to the east edge of its vertex
_QUAD_STEP = (1, 3, 5, 7)
# line index by canonical edge direction (= sqrt of conjugate tangent)
_LINE_BY_DIR = (0, 6, 4, 2)

# point kinds in the observable registry
KIND_EDGE, KIND_CORNER, KIND_VERTEX = 0, 1, 2


@dataclass(frozen=True)
class Line:
    """Projection line through the origin spanned by exp(i*j*pi/8)."""

    j: int

    @property
    def unit(self) -> complex:
        return complex(math.cos(self.j * math.pi / 8), math.sin(self.j * math.pi / 8))

    def unit_exact(self):
        from .exact import line_unit

        return line_unit(self.j)

    def alpha2_exact(self):
        from .exact import Cyclo16

        return Cyclo16.zeta_pow(-2 * self.j)


def project(value, line: Line):
    """Orthogonal projection of a complex value onto `line`.

    Works on floats and on exact Cyclo16 values: proj(v) = (v + a^2 conj v)/2
    with a the line's unit vector.
    """
    if isinstance(value, complex):
        a2 = line.unit ** 2
        return (value + a2 * value.conjugate()) / 2.0
    return (value + line.alpha2_exact() * value.conj()) / 2


@dataclass
class DomainTables:
    """Flat arrays driving every curve walk (python and numba alike).

    For edge id e entering its head vertex, outX/turnX/cpidX give the next
    edge, the quarter-turn sign, and the corner point id of the transit when
    the head's bond bit is X.  vbit maps e to the flippable-bit index of its
    head (-1 when forced).  fin1/fin2 list the two incoming edges of each
    flippable vertex (used by the toggle walk).
    """

    out0: np.ndarray
    out1: np.ndarray
    turn0: np.ndarray
    turn1: np.ndarray
    cpid0: np.ndarray
    cpid1: np.ndarray
    vbit: np.ndarray
    epid: np.ndarray
    fin1: np.ndarray
    fin2: np.ndarray


class MedialDomain:
    """Immutable medial domain with marks a, b and packed walk tables."""

    def __init__(self, full_edges, a_attach, a_mid2, b_attach, b_mid2,
                 parity, delta=1.0, canonical=False, name="",
                 allow_pockets=False):
        self.parity = int(parity) & 1
        self.delta = float(delta)
        self.canonical = bool(canonical)
        self.name = name

        full_edges = sorted({self._norm_edge(p, q) for p, q in full_edges})
        verts = sorted({v for e in full_edges for v in e} | {tuple(a_attach), tuple(b_attach)},
                       key=lambda v: (v[1], v[0]))
        self.vx = np.array([v[0] for v in verts], dtype=np.int64)
        self.vy = np.array([v[1] for v in verts], dtype=np.int64)
        self.vid = {v: i for i, v in enumerate(verts)}
        nV = len(verts)

        # edge arrays; the two half-edges take the last two slots
        self.n_full = len(full_edges)
        self.n_edges = self.n_full + 2
        self.a_edge = self.n_full
        self.b_edge = self.n_full + 1
        nE = self.n_edges
        self.tail = np.full(nE, -1, dtype=np.int64)
        self.head = np.full(nE, -1, dtype=np.int64)
        self.edir = np.zeros(nE, dtype=np.int64)
        self.mx2 = np.zeros(nE, dtype=np.int64)  # doubled midpoint coords
        self.my2 = np.zeros(nE, dtype=np.int64)

        self._faces = {}
        self.eblack = np.zeros(nE, dtype=np.int64)  # face id on the black side
        self.ewhite = np.zeros(nE, dtype=np.int64)

        for e, (p, q) in enumerate(full_edges):
            self._init_edge(e, p, q)
        self._init_half(self.a_edge, tuple(a_attach), tuple(a_mid2), is_sink=False)
        self._init_half(self.b_edge, tuple(b_attach), tuple(b_mid2), is_sink=True)

        # vertex strand table: edge id per side, -1 if absent
        self.vstrand = np.full((nV, 4), -1, dtype=np.int64)
        for e in range(nE):
            for v, mult in ((self.tail[e], 1), (self.head[e], -1)):
                if v < 0:
                    continue
                side = self._side_of(e, v)
                if self.vstrand[v, side] >= 0:
                    raise ValueError(f"two strands on side {side} of vertex "
                                     f"({self.vx[v]},{self.vy[v]})")
                self.vstrand[v, side] = e

        self.degree = (self.vstrand >= 0).sum(axis=1)
        bad = np.nonzero((self.degree != 2) & (self.degree != 4))[0]
        if bad.size:
            v = bad[0]
            raise ValueError(f"vertex ({self.vx[v]},{self.vy[v]}) has degree "
                             f"{self.degree[v]}; must be 2 or 4")

        self.flippable = np.nonzero(self.degree == 4)[0]
        self.n_bits = len(self.flippable)
        self.bit_of_vertex = np.full(nV, -1, dtype=np.int64)
        self.bit_of_vertex[self.flippable] = np.arange(self.n_bits)

        # face arrays (ids already assigned in registration order; re-sort)
        order = sorted(self._faces, key=lambda f: (f[1], f[0]))
        remap = {self._faces[f]: i for i, f in enumerate(order)}
        self.ffi = np.array([f[0] for f in order], dtype=np.int64)
        self.ffj = np.array([f[1] for f in order], dtype=np.int64)
        self.face_id = {f: i for i, f in enumerate(order)}
        self.eblack = np.array([remap[i] for i in self.eblack], dtype=np.int64)
        self.ewhite = np.array([remap[i] for i in self.ewhite], dtype=np.int64)
        self.n_faces = len(order)
        self.fblack = (self.ffi + self.ffj + self.parity) % 2 == 0

        self._init_points()
        self._validate_connectivity(allow_pockets)
        if canonical:
            self._validate_canonical()

    # -- construction helpers ------------------------------------------

    @staticmethod
    def _norm_edge(p, q):
        p, q = tuple(p), tuple(q)
        if abs(p[0] - q[0]) + abs(p[1] - q[1]) != 1:
            raise ValueError(f"edge {p}-{q} is not a unit segment")
        return (p, q) if p <= q else (q, p)

    def is_black(self, fi, fj) -> bool:
        return (fi + fj + self.parity) % 2 == 0

    def _register_face(self, fi, fj):
        key = (fi, fj)
        if key not in self._faces:
            self._faces[key] = len(self._faces)
        return self._faces[key]

    def _flanks(self, x, y, horizontal):
        """(black face, white face) of the unit edge with min corner (x, y)."""
        if horizontal:
            f_north, f_south = (x, y), (x, y - 1)
            return (f_north, f_south) if self.is_black(*f_north) else (f_south, f_north)
        f_east, f_west = (x, y), (x - 1, y)
        return (f_east, f_west) if self.is_black(*f_east) else (f_west, f_east)

    def _canon_dir(self, x, y, horizontal):
        """Canonical (black-left) travel direction of the unit edge at (x, y)."""
        if horizontal:
            return E if self.is_black(x, y) else W
        return S if self.is_black(x, y) else N

    def _init_edge(self, e, p, q):
        horizontal = p[1] == q[1]
        d = self._canon_dir(p[0], p[1], horizontal)
        tail, headv = (p, q) if (DX[d], DY[d]) == (q[0] - p[0], q[1] - p[1]) else (q, p)
        self.tail[e] = self.vid[tail]
        self.head[e] = self.vid[headv]
        self.edir[e] = d
        self.mx2[e] = p[0] + q[0]
        self.my2[e] = p[1] + q[1]
        bf, wf = self._flanks(p[0], p[1], horizontal)
        self.eblack[e] = self._register_face(*bf)
        self.ewhite[e] = self._register_face(*wf)

    def _init_half(self, e, attach, mid2, is_sink):
        ax2, ay2 = 2 * attach[0], 2 * attach[1]
        dx2, dy2 = mid2[0] - ax2, mid2[1] - ay2
        if abs(dx2) + abs(dy2) != 1:
            raise ValueError(f"mark at {mid2} (doubled) is not a midpoint of an "
                             f"edge at vertex {attach}")
        horizontal = dy2 == 0
        corner = (min(attach[0], attach[0] + dx2), min(attach[1], attach[1] + dy2))
        d = self._canon_dir(corner[0], corner[1], horizontal)
        self.edir[e] = d
        self.mx2[e] = mid2[0]
        self.my2[e] = mid2[1]
        bf, wf = self._flanks(corner[0], corner[1], horizontal)
        self.eblack[e] = self._register_face(*bf)
        self.ewhite[e] = self._register_face(*wf)
        # the canonical direction must run out of a (source) and into b (sink)
        toward_mark = (dx2, dy2) == (DX[d], DY[d])
        if is_sink:
            if not toward_mark:
                raise ValueError("mark b is not a sink under the black-left "
                                 "orientation (swap marks or fix parity)")
            self.tail[e] = self.vid[attach]
        else:
            if toward_mark:
                raise ValueError("mark a is not a source under the black-left "
                                 "orientation (swap marks or fix parity)")
            self.head[e] = self.vid[attach]

    def _side_of(self, e, v):
        """Side of vertex v on which edge e lies (via doubled midpoints)."""
        dx2 = self.mx2[e] - 2 * self.vx[v]
        dy2 = self.my2[e] - 2 * self.vy[v]
        for d in range(4):
            if (dx2, dy2) == (DX[d], DY[d]):
                return d
        raise AssertionError("edge midpoint not adjacent to vertex")

    def _init_points(self):
        nE, nV = self.n_edges, len(self.vx)
        self.n_corner0 = nE
        self.n_vertex0 = nE + 4 * nV
        self.n_points = nE + 5 * nV
        kind = np.empty(self.n_points, dtype=np.int8)
        px4 = np.empty(self.n_points, dtype=np.int64)
        py4 = np.empty(self.n_points, dtype=np.int64)
        line_j = np.full(self.n_points, -1, dtype=np.int64)
        kind[:nE] = KIND_EDGE
        px4[:nE] = 2 * self.mx2
        py4[:nE] = 2 * self.my2
        line_j[:nE] = _LINE_BY_DIR[0]
        for e in range(nE):
            line_j[e] = _LINE_BY_DIR[self.edir[e]]
        qoff = ((1, 1), (-1, 1), (-1, -1), (1, -1))
        for v in range(nV):
            j_east = 0 if self.is_black(self.vx[v], self.vy[v]) else 4
            for qd in range(4):
                p = nE + 4 * v + qd
                kind[p] = KIND_CORNER
                px4[p] = 4 * self.vx[v] + qoff[qd][0]
                py4[p] = 4 * self.vy[v] + qoff[qd][1]
                line_j[p] = (j_east + _QUAD_STEP[qd]) % 8
            p = self.n_vertex0 + v
            kind[p] = KIND_VERTEX
            px4[p] = 4 * self.vx[v]
            py4[p] = 4 * self.vy[v]
        self.point_kind = kind
        self.px4 = px4
        self.py4 = py4
        self.line_j = line_j

    def _validate_connectivity(self, allow_pockets):
        nV = len(self.vx)
        if nV == 0:
            raise ValueError("empty domain")
        adj = [[] for _ in range(nV)]
        for e in range(self.n_edges):
            t, h = self.tail[e], self.head[e]
            if t >= 0 and h >= 0:
                adj[t].append(h)
                adj[h].append(t)
        comp = np.full(nV, -1, dtype=np.int64)
        ncomp = 0
        for start in range(nV):
            if comp[start] >= 0:
                continue
            comp[start] = ncomp
            stack = [start]
            while stack:
                v = stack.pop()
                for w in adj[v]:
                    if comp[w] < 0:
                        comp[w] = ncomp
                        stack.append(w)
            ncomp += 1
        att_a = max(self.head[self.a_edge], self.tail[self.a_edge])
        att_b = max(self.head[self.b_edge], self.tail[self.b_edge])
        if comp[att_a] != comp[att_b]:
            raise ValueError("source and sink are not connected to each other")
        if ncomp > 1 and not allow_pockets:
            raise ValueError("domain is not connected")
        closed = sum(1 for f in range(self.n_faces) if self._face_closed(f))
        if closed != self.n_full - nV + ncomp:
            raise ValueError("domain is not simply connected "
                             f"(closed faces {closed} != cycles {self.n_full - nV + ncomp})")

    def _face_closed(self, f) -> bool:
        return all(e is not None and e < self.n_full for e in self.face_edges(f))

    def face_edges(self, f):
        """The 4 bounding edge ids of face f (None where absent), order S,E,N,W."""
        fi, fj = int(self.ffi[f]), int(self.ffj[f])
        segs = (((fi, fj), (fi + 1, fj)), ((fi + 1, fj), (fi + 1, fj + 1)),
                ((fi, fj + 1), (fi + 1, fj + 1)), ((fi, fj), (fi, fj + 1)))
        out = []
        for p, q in segs:
            out.append(self._edge_lookup.get((p[0] + q[0], p[1] + q[1])))
        return out

    @cached_property
    def _edge_lookup(self):
        lut = {}
        for e in range(self.n_full):
            lut[(self.mx2[e], self.my2[e])] = e
        return lut

    def _validate_canonical(self):
        e = self.b_edge
        if self.edir[e] != E:
            raise ValueError("canonical domain must have the edge into b "
                             "pointing east")
        bf = self.eblack[e]
        if not (self.ffj[bf] * 2 + 1 > self.my2[e]):
            raise ValueError("canonical domain must have the black face north of b")

    # -- public surface -------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vx)

    def vertex_at(self, x, y) -> int:
        return self.vid[(x, y)]

    def edge_at(self, x2, y2) -> int:
        """Edge id by doubled midpoint coordinates (full edges and marks)."""
        if (x2, y2) == (self.mx2[self.a_edge], self.my2[self.a_edge]):
            return self.a_edge
        if (x2, y2) == (self.mx2[self.b_edge], self.my2[self.b_edge]):
            return self.b_edge
        return self._edge_lookup[(x2, y2)]

    def face_at(self, fi, fj):
        return self.face_id.get((fi, fj))

    def corner_pid(self, v, quad) -> int:
        return self.n_corner0 + 4 * v + quad

    def vertex_pid(self, v) -> int:
        return self.n_vertex0 + v

    def line_of(self, e) -> Line:
        return Line(int(self.line_j[e]))

    def point_line(self, pid) -> Line:
        j = int(self.line_j[pid])
        if j < 0:
            raise ValueError("vertices carry no projection line")
        return Line(j)

    def point_pos(self, pid):
        """Physical position of a registry point (complex)."""
        return complex(self.px4[pid], self.py4[pid]) * (self.delta / 4.0)

    def face_pos(self, f):
        return complex(self.ffi[f] + 0.5, self.ffj[f] + 0.5) * self.delta

    @cached_property
    def open_faces(self):
        """Faces missing at least one bounding full edge (boundary faces)."""
        return [f for f in range(self.n_faces) if not self._face_closed(f)]

    @cached_property
    def anchor_face(self) -> int:
        """White face across the half-edge into b; H is pinned to 0 there."""
        return int(self.ewhite[self.b_edge])

    def boundary_arcs(self):
        """(wired arc b->a, dual arc a->b) as ordered open-face id lists.

        The wired arc is the set of open black faces, the dual arc the open
        white ones; each is ordered counterclockwise around the domain
        starting from b.
        """
        cx = float(self.vx.mean())
        cy = float(self.vy.mean())
        bx, by = self.mx2[self.b_edge] / 2.0, self.my2[self.b_edge] / 2.0
        ang_b = math.atan2(by - cy, bx - cx)

        def keyfun(f):
            a = math.atan2(self.ffj[f] + 0.5 - cy, self.ffi[f] + 0.5 - cx)
            return (a - ang_b) % (2.0 * math.pi)

        ba = sorted((f for f in self.open_faces if self.fblack[f]), key=keyfun)
        ab = sorted((f for f in self.open_faces if not self.fblack[f]), key=keyfun)
        return ba, ab

    def center_edge(self) -> int:
        """Full edge whose midpoint is nearest the domain's bounding-box
        center (deterministic tie break)."""
        cx2 = float(self.vx.min() + self.vx.max())
        cy2 = float(self.vy.min() + self.vy.max())
        best, best_key = -1, None
        for e in range(self.n_full):
            d2 = (self.mx2[e] - cx2) ** 2 + (self.my2[e] - cy2) ** 2
            key = (d2, int(self.my2[e]), int(self.mx2[e]))
            if best_key is None or key < best_key:
                best, best_key = e, key
        return best

    @cached_property
    def primal_adjacency(self):
        """Cluster bonds between black faces.

        Returns (pb1, pb2, sb1, sb2): pb1[k]/pb2[k] is the black diagonal
        pair across flippable vertex k, a bond that is open exactly when
        bit k is 1.  sb1/sb2 list bonds across degree-2 vertices whose
        forced strand pairing turns away from a black diagonal; those are
        structurally open in every configuration.
        """
        qoff = ((0, 0), (-1, 0), (-1, -1), (0, -1))  # NE, NW, SW, SE
        pb1 = np.zeros(self.n_bits, dtype=np.int64)
        pb2 = np.zeros(self.n_bits, dtype=np.int64)
        for k, v in enumerate(self.flippable):
            x, y = int(self.vx[v]), int(self.vy[v])
            q = NE if self.is_black(x, y) else NW
            f1 = self.face_at(x + qoff[q][0], y + qoff[q][1])
            f2 = self.face_at(x + qoff[q + 2][0], y + qoff[q + 2][1])
            assert f1 is not None and f2 is not None
            pb1[k], pb2[k] = f1, f2
        sb1, sb2 = [], []
        for v in range(self.n_vertices):
            if self.degree[v] != 2:
                continue
            sides = [s for s in range(4) if self.vstrand[v, s] >= 0]
            e_in = next(e for e in (self.vstrand[v, s] for s in sides)
                        if self.head[e] == v)
            in_side = self._side_of(e_in, v)
            out_side = sides[0] if sides[1] == in_side else sides[1]
            if ((out_side - OPP[in_side] + 2) % 4) - 2 == 0:
                continue  # straight passage cuts both diagonals
            q = _QUAD_BETWEEN[(in_side, out_side)]
            x, y = int(self.vx[v]), int(self.vy[v])
            qa, qb = (q + 1) % 4, (q + 3) % 4
            if not self.is_black(x + qoff[qa][0], y + qoff[qa][1]):
                continue  # the untouched diagonal is white
            f1 = self.face_at(x + qoff[qa][0], y + qoff[qa][1])
            f2 = self.face_at(x + qoff[qb][0], y + qoff[qb][1])
            assert f1 is not None and f2 is not None
            sb1.append(f1)
            sb2.append(f2)
        return (pb1, pb2, np.asarray(sb1, dtype=np.int64),
                np.asarray(sb2, dtype=np.int64))

    @cached_property
    def tables(self) -> DomainTables:
        nE = self.n_edges
        out = np.full((2, nE), -1, dtype=np.int64)
        turn = np.zeros((2, nE), dtype=np.int64)
        cpid = np.full((2, nE), -1, dtype=np.int64)
        vbit = np.full(nE, -1, dtype=np.int64)
        partner = ({N: W, W: N, S: E, E: S}, {N: E, E: N, S: W, W: S})
        for e in range(nE):
            h = self.head[e]
            if h < 0:  # half-edge into b: terminal
                continue
            in_side = self._side_of(e, h)
            d_in = self.edir[e]
            assert d_in == OPP[in_side]
            vbit[e] = self.bit_of_vertex[h]
            for bit in (0, 1):
                if self.degree[h] == 2:
                    sides = np.nonzero(self.vstrand[h] >= 0)[0]
                    out_side = int(sides[0] if sides[1] == in_side else sides[1])
                else:
                    ne_black = self.is_black(self.vx[h], self.vy[h])
                    out_side = partner[(bit ^ int(ne_black)) & 1][in_side]
                oe = self.vstrand[h, out_side]
                assert oe >= 0 and oe != e
                t = ((out_side - d_in + 2) % 4) - 2
                assert t in (-1, 0, 1)
                out[bit, e] = oe
                turn[bit, e] = t
                if t != 0:
                    cpid[bit, e] = self.corner_pid(h, _QUAD_BETWEEN[(in_side, out_side)])
        fin1 = np.full(self.n_bits, -1, dtype=np.int64)
        fin2 = np.full(self.n_bits, -1, dtype=np.int64)
        for k, v in enumerate(self.flippable):
            ins = [int(self.vstrand[v, s]) for s in range(4)
                   if self.vstrand[v, s] >= 0 and self._is_in_strand(self.vstrand[v, s], v)]
            assert len(ins) == 2
            fin1[k], fin2[k] = ins
        return DomainTables(out0=out[0], out1=out[1], turn0=turn[0], turn1=turn[1],
                            cpid0=cpid[0], cpid1=cpid[1], vbit=vbit,
                            epid=np.arange(nE, dtype=np.int64), fin1=fin1, fin2=fin2)

    def _is_in_strand(self, e, v) -> bool:
        return self.head[e] == v

    # -- serialization ---------------------------------------------------

    def content_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def to_dict(self) -> dict:
        """Portable form: doubled medial coordinates, so every entry is an
        integer -- edge endpoints (vertices) are even, the marks a, b odd."""
        edges = sorted(sorted([(int(2 * self.vx[v]), int(2 * self.vy[v]))
                               for v in (self.tail[e], self.head[e])])
                       for e in range(self.n_full))
        return {
            "format": "fklab-domain-1",
            "mesh": self.delta,
            "medial_edges": [[p[0], p[1], q[0], q[1]] for p, q in edges],
            "a": [int(self.mx2[self.a_edge]), int(self.my2[self.a_edge])],
            "b": [int(self.mx2[self.b_edge]), int(self.my2[self.b_edge])],
        }

    @staticmethod
    def from_dict(d, canonical=True) -> "MedialDomain":
        if d.get("format") != "fklab-domain-1":
            raise ValueError("not a domain file (format tag missing)")
        for x1, y1, x2, y2 in d["medial_edges"]:
            if x1 % 2 or y1 % 2 or x2 % 2 or y2 % 2:
                raise ValueError("edge endpoints must be vertices "
                                 "(even doubled coordinates)")
        edges = [((x1 // 2, y1 // 2), (x2 // 2, y2 // 2))
                 for x1, y1, x2, y2 in d["medial_edges"]]
        ax, ay = d["a"]
        bx, by = d["b"]
        for x, y in ((ax, ay), (bx, by)):
            if (x + y) % 2 != 1:
                raise ValueError("marks must be edge midpoints "
                                 "(odd doubled coordinate sum)")
        # the mark's attachment vertex is the endpoint of its cut edge with
        # odd full-degree; the parity follows from b's black face lying north
        degree = {}
        for p, q in edges:
            degree[p] = degree.get(p, 0) + 1
            degree[q] = degree.get(q, 0) + 1

        def attach_of(mx2, my2):
            dx, dy = (1, 0) if mx2 % 2 else (0, 1)
            p = ((mx2 - dx) // 2, (my2 - dy) // 2)
            q = ((mx2 + dx) // 2, (my2 + dy) // 2)
            podd, qodd = degree.get(p, 0) % 2, degree.get(q, 0) % 2
            if podd == qodd:
                raise ValueError(f"cannot infer the attachment vertex of the "
                                 f"mark at doubled ({mx2},{my2})")
            return p if podd else q

        if by % 2:
            raise ValueError("mark b must sit on a horizontal edge "
                             "(canonical orientation)")
        par = ((bx - 1) // 2 + by // 2) % 2  # face north of b is black
        return MedialDomain(edges, attach_of(ax, ay), (ax, ay),
                            attach_of(bx, by), (bx, by),
                            parity=par, delta=d.get("mesh", 1.0),
                            canonical=canonical)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @staticmethod
    def load(path) -> "MedialDomain":
        with open(path) as fh:
            return MedialDomain.from_dict(json.load(fh))

    def __repr__(self):
        return (f"MedialDomain({self.name or 'custom'}: {self.n_vertices} vertices, "
                f"{self.n_full}+2 edges, {self.n_bits} bonds, delta={self.delta})")


def _rot90(k, x, y):
    for _ in range(k % 4):
        x, y = -y, x
    return x, y


def build_rect_domain(m, n, a_loc="top", b_loc="bottom", delta=1.0) -> MedialDomain:
    """Rectangular domain with m*n flippable bonds and marks on the boundary.

    a_loc/b_loc name boundary ring slots: a side name ('top', 'bottom',
    'left', 'right' -- middle of the side), a side-corner combination
    ('top-left', ...), an explicit (side, k) pair, or a raw counterclockwise
    ring-slot index.  Named positions are shifted by the minimal amount to
    satisfy the color parity constraint (the ring edge cut by b closes a
    black face, the one cut by a a white face); explicit positions raise
    ValueError when the parity is wrong.  The result is canonically rotated.
    """
    if m < 1 or n < 1:
        raise ValueError("need m, n >= 1")
    slots = []
    for i in range(m + 1):
        slots.append(((i, 0), (i + 1, 0), (i, 0)))
    for j in range(n + 1):
        slots.append(((m + 1, j), (m + 1, j + 1), (m, j)))
    for i in range(m, -1, -1):
        slots.append(((i + 1, n + 1), (i, n + 1), (i, n)))
    for j in range(n, -1, -1):
        slots.append(((0, j + 1), (0, j), (0, j)))
    L = len(slots)
    sides = {
        "bottom": list(range(0, m + 1)),
        "right": list(range(m + 1, m + n + 2)),
        "top": list(range(m + n + 2, 2 * m + n + 3)),
        "left": list(range(2 * m + n + 3, 2 * m + 2 * n + 4)),
    }

    def base_slot(loc):
        if isinstance(loc, int):
            return loc % L, False
        if isinstance(loc, tuple):
            side, k = loc
            return sides[side][k], False
        if loc in sides:
            lst = sides[loc]
            return lst[len(lst) // 2], True
        side, _, corner = loc.partition("-")
        if side in ("bottom", "top", "left", "right") and corner:
            lst = sides[side]
            first = {"bottom": "left", "top": "right", "right": "bottom", "left": "top"}
            return (lst[0], True) if corner == first[side] else (lst[-1], True)
        raise ValueError(f"unknown boundary position {loc!r}")

    b_slot, _ = base_slot(b_loc)
    fb = slots[b_slot][2]
    par = (fb[0] + fb[1]) % 2  # black face north of the cut at b

    a_base, a_named = base_slot(a_loc)
    side_of = {s: name for name, lst in sides.items() for s in lst}

    def a_ok(s):
        f = slots[s][2]
        return s != b_slot and (f[0] + f[1] + par) % 2 == 1

    a_slot = None
    if a_named:
        lst = sides[side_of[a_base]]
        i0 = lst.index(a_base)
        for off in sorted(range(-len(lst), len(lst)), key=lambda o: (abs(o), -o)):
            i = i0 + off
            if 0 <= i < len(lst) and a_ok(lst[i]):
                a_slot = lst[i]
                break
        if a_slot is None:
            raise ValueError("no parity-compatible slot for a on that side")
    else:
        if not a_ok(a_base):
            raise ValueError("position of a violates the color parity constraint "
                             "(its ring edge must close a white face)")
        a_slot = a_base

    in_ba = [False] * L
    s = (b_slot + 1) % L
    while s != a_slot:
        in_ba[s] = True
        s = (s + 1) % L

    edges = set()
    for x in range(1, m + 1):
        for y in range(1, n + 1):
            for d in range(4):
                edges.add(MedialDomain._norm_edge((x, y), (x + DX[d], y + DY[d])))
    for si, (t, h, f) in enumerate(slots):
        if si in (a_slot, b_slot):
            continue
        white = (f[0] + f[1] + par) % 2 == 1
        if in_ba[si] == white:  # wired arc keeps white-closing edges, dual arc black
            edges.add(MedialDomain._norm_edge(t, h))

    bt, bh, _ = slots[b_slot]
    at, ah, _ = slots[a_slot]
    b_attach, b_mid2 = bt, (bt[0] + bh[0], bt[1] + bh[1])
    a_attach, a_mid2 = at, (at[0] + ah[0], at[1] + ah[1])

    # canonical rotation: the travel direction into b must be east
    bdir = (b_mid2[0] - 2 * bt[0], b_mid2[1] - 2 * bt[1])
    k = 0
    while _rot90(k, *bdir) != (1, 0):
        k += 1

    def rot_pt(p):
        return _rot90(k, p[0], p[1])

    edges = [(rot_pt(p), rot_pt(q)) for p, q in edges]
    a_attach, b_attach = rot_pt(a_attach), rot_pt(b_attach)
    a_mid2, b_mid2 = rot_pt(a_mid2), rot_pt(b_mid2)
    xs = [p[0] for e in edges for p in e]
    ys = [p[1] for e in edges for p in e]
    tx, ty = -min(xs), -min(ys)
    edges = [((p[0] + tx, p[1] + ty), (q[0] + tx, q[1] + ty)) for p, q in edges]
    a_attach = (a_attach[0] + tx, a_attach[1] + ty)
    b_attach = (b_attach[0] + tx, b_attach[1] + ty)
    a_mid2 = (a_mid2[0] + 2 * tx, a_mid2[1] + 2 * ty)
    b_mid2 = (b_mid2[0] + 2 * tx, b_mid2[1] + 2 * ty)
    # parity after the coordinate change, from the face north of b being black
    par = (b_mid2[0] // 2 + b_mid2[1] // 2) % 2 if (b_mid2[1] % 2 == 0) else None
    if par is None:
        raise AssertionError("b mark must sit on a horizontal edge after rotation")

    dom = MedialDomain(edges, a_attach, a_mid2, b_attach, b_mid2,
                       parity=par, delta=delta, canonical=True,
                       name=f"rect({m},{n})")
    if dom.n_bits != m * n:
        raise AssertionError(f"rect({m},{n}) built {dom.n_bits} bonds, wanted {m * n}")
    return dom

"""Verification suite for the discrete-analysis identities and the
harmonic-estimate toolkit.

The first half checks, in exact cyclotomic arithmetic whenever the field
carries exact values, every local identity the observable satisfies:
projection agreement across edges, the square Cauchy-Riemann relation,
the antipodal projection sums, sub/super-harmonicity of the primitive,
its boundary values, and the increment identity tying H to Im(F^2 dz).

The second half is plain discrete potential theory on the square grid:
a Dirichlet solver, box Green functions with a gradient-sum estimate,
the full-plane potential kernel with its logarithmic fit, a gradient
bound for harmonic functions with random boundary data, a random-walk
hitting probe, and the L^2 bound used by the compactness argument.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
import math

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exact import Cyclo16, line_unit, spin_exponent
from .fermion import FermionField, build_H
from .lattice import KIND_CORNER, KIND_VERTEX

_HALF = Cyclo16.from_rational(Fraction(1, 2))
_TWO = Cyclo16.from_rational(Fraction(2))
_IUNIT = Cyclo16.zeta_pow(-4)
#: face offset of the quadrant-q neighbor face of a vertex
_QOFF = ((0, 0), (-1, 0), (-1, -1), (0, -1))


# ---------------------------------------------------------------------------
# residual reports
# ---------------------------------------------------------------------------

@dataclass
class ResidualReport:
    """Outcome of one identity check over many sites."""

    name: str
    n: int
    max_residual: float
    mean_residual: float
    worst: list = field(default_factory=list)  # [(site label, residual)]
    exact: bool = False
    tol: float = 0.0

    @property
    def passed(self) -> bool:
        return self.max_residual <= self.tol

    def as_dict(self):
        return {
            "check-name": self.name,
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "n": self.n,
            "pass": bool(self.passed),
        }

    def __str__(self):
        tag = "exact" if self.exact else f"tol={self.tol:g}"
        verdict = "PASS" if self.passed else "FAIL"
        return (f"{self.name}: {verdict} ({tag}, n={self.n}, "
                f"max={self.max_residual:.3e}, mean={self.mean_residual:.3e})")


def _make_report(name, rows, exact, tol=0.0, keep=5):
    """Assemble a ResidualReport from (label, residual) rows."""
    if not rows:
        return ResidualReport(name, 0, 0.0, 0.0, [], exact, tol)
    vals = np.array([r for _, r in rows], dtype=float)
    order = np.argsort(-vals)[:keep]
    worst = [(rows[i][0], float(vals[i])) for i in order]
    return ResidualReport(name, len(rows), float(vals.max()),
                          float(vals.mean()), worst, exact, tol)


# ---------------------------------------------------------------------------
# projections and vertex values
# ---------------------------------------------------------------------------

def _unit_f(j):
    return complex(np.exp(1j * np.pi * (j % 8) / 8.0))


def _proj_exact(w, j):
    u = line_unit(j)
    return (w + u * u * w.conj()) * _HALF


def _proj_float(w, j):
    u = _unit_f(j)
    return (w + u * u * np.conj(w)) / 2.0


def vertex_values(d, F):
    """Values of F at every medial vertex.

    Degree-4 vertices carry stored values.  A degree-2 boundary vertex has
    only two incident edges; its value is the unique complex number whose
    orthogonal projections onto the two edge lines equal the edge values.
    Returns (float array, exact list or None).
    """
    use_exact = F.exact is not None
    vals = np.zeros(d.n_vertices, dtype=np.complex128)
    ex = [None] * d.n_vertices if use_exact else None
    for v in range(d.n_vertices):
        if d.degree[v] == 4:
            pid = d.vertex_pid(v)
            vals[v] = F.values[pid]
            if use_exact:
                ex[v] = F.exact[pid]
            continue
        e1, e2 = (int(e) for e in d.vstrand[v] if e >= 0)
        j1, j2 = int(d.line_j[e1]), int(d.line_j[e2])
        if use_exact:
            a, b = line_unit(j1), line_unit(j2)
            f1, f2 = F.exact[e1], F.exact[e2]
            zbar = (f1 - f2) * _TWO * (a * a - b * b).inverse()
            z = f1 + f1 - a * a * zbar
            ex[v] = z
            vals[v] = z.embed()
        else:
            a, b = _unit_f(j1), _unit_f(j2)
            f1, f2 = F.values[e1], F.values[e2]
            zbar = 2.0 * (f1 - f2) / (a * a - b * b)
            vals[v] = 2.0 * f1 - a * a * zbar
    return vals, ex


def _square_vertices(d, f):
    """Vertex ids (SW, SE, NE, NW) of face f, or None if any is absent."""
    fi, fj = int(d.ffi[f]), int(d.ffj[f])
    try:
        return (d.vertex_at(fi, fj), d.vertex_at(fi + 1, fj),
                d.vertex_at(fi + 1, fj + 1), d.vertex_at(fi, fj + 1))
    except KeyError:
        return None


# ---------------------------------------------------------------------------
# exact identity checks
# ---------------------------------------------------------------------------

def check_preholomorphic(d, F, tol=1e-9) -> ResidualReport:
    """Projections of the endpoint values onto the edge line must agree.

    Checked on every full edge; boundary vertex values are reconstructed
    from their two incident edges (see vertex_values).  Exact fields are
    checked in cyclotomic arithmetic and must vanish literally.
    """
    vals, ex = vertex_values(d, F)
    use_exact = ex is not None
    rows = []
    for e in range(d.n_full):
        j = int(d.line_j[e])
        t, h = int(d.tail[e]), int(d.head[e])
        if use_exact:
            g = _proj_exact(ex[t], j) - _proj_exact(ex[h], j)
            r = 0.0 if g.is_zero() else abs(g.embed())
        else:
            r = abs(_proj_float(vals[t], j) - _proj_float(vals[h], j))
        rows.append((f"edge mid2=({d.mx2[e]},{d.my2[e]})", r))
    return _make_report("preholomorphic", rows, use_exact,
                        0.0 if use_exact else tol)


def check_cr(d, F, tol=1e-9) -> ResidualReport:
    """Square Cauchy-Riemann relation F(NW)-F(SE) = i(F(NE)-F(SW)).

    Holds on every closed lattice square (all four bounding edges present)
    whenever the field is preholomorphic; open boundary squares leave the
    combination under-determined and are skipped.
    """
    vals, ex = vertex_values(d, F)
    use_exact = ex is not None
    rows = []
    for f in range(d.n_faces):
        if not d._face_closed(f):
            continue
        vs = _square_vertices(d, f)
        if vs is None:
            continue
        sw, se, ne, nw = vs
        if use_exact:
            g = (ex[nw] - ex[se]) - _IUNIT * (ex[ne] - ex[sw])
            r = 0.0 if g.is_zero() else abs(g.embed())
        else:
            r = abs((vals[nw] - vals[se]) - 1j * (vals[ne] - vals[sw]))
        rows.append((f"square ({d.ffi[f]},{d.ffj[f]})", r))
    return _make_report("cauchy-riemann", rows, use_exact,
                        0.0 if use_exact else tol)


def check_projection_sums(d, F, tol=1e-9) -> ResidualReport:
    """At interior vertices the four antipodal neighbor pairs sum to F(v).

    The eight neighbors of a degree-4 vertex are its four corners and four
    edge midpoints; antipodal pairs lie on orthogonal lines, and each pair
    sums to the vertex value.  Orthogonality is checked alongside.
    """
    use_exact = F.exact is not None
    rows = []
    for v in range(d.n_vertices):
        if d.degree[v] != 4:
            continue
        vp = d.vertex_pid(v)
        cids = [d.corner_pid(v, q) for q in range(4)]     # NE, NW, SW, SE
        eids = [int(d.vstrand[v, s]) for s in range(4)]   # E, N, W, S
        pairs = [(cids[1], cids[3]), (cids[0], cids[2]),
                 (eids[2], eids[0]), (eids[1], eids[3])]
        r = 0.0
        if use_exact:
            fv = F.exact[vp]
            for p1, p2 in pairs:
                g = F.exact[p1] + F.exact[p2] - fv
                if not g.is_zero():
                    r = max(r, abs(g.embed()))
                w = F.exact[p1] * F.exact[p2].conj()
                w = w + w.conj()
                if not w.is_zero():
                    r = max(r, abs(w.embed()))
        else:
            fv = F.values[vp]
            for p1, p2 in pairs:
                r = max(r, abs(F.values[p1] + F.values[p2] - fv))
                r = max(r, abs((F.values[p1] * np.conj(F.values[p2])).real))
        rows.append((f"vertex ({d.vx[v]},{d.vy[v]})", r))
    return _make_report("projection-sums", rows, use_exact,
                        0.0 if use_exact else tol)


def _interior_squares(d):
    """Faces whose four corner vertices all have degree 4."""
    out = []
    for f in range(d.n_faces):
        vs = _square_vertices(d, f)
        if vs is not None and all(d.degree[v] == 4 for v in vs):
            out.append((f, vs))
    return out


def check_sub_super(H, F, tol=1e-9) -> ResidualReport:
    """Laplacian of H over same-color diagonal neighbors vs corner values.

    On an interior black square the Laplacian equals |F(NE)-F(SW)|^2 (and
    equally |F(NW)-F(SE)|^2), hence is >= 0; on white squares the negated
    identity holds, hence <= 0.  The residual combines both equalities and
    any sign violation.
    """
    d = H.domain
    vals, ex = vertex_values(d, F)
    use_exact = ex is not None and H.exact is not None
    rows = []
    for f, vs in _interior_squares(d):
        fi, fj = int(d.ffi[f]), int(d.ffj[f])
        diag = [d.face_at(fi + s, fj + t) for s in (-1, 1) for t in (-1, 1)]
        if any(g is None for g in diag):
            continue
        sw, se, ne, nw = vs
        sign = 1.0 if d.fblack[f] else -1.0
        if use_exact:
            lap = Cyclo16.zero()
            for g in diag:
                lap = lap + H.exact[g] - H.exact[f]
            t1 = (ex[ne] - ex[sw]).abs2()
            t2 = (ex[nw] - ex[se]).abs2()
            g1 = lap - t1 if sign > 0 else lap + t1
            g2 = t1 - t2
            r = 0.0
            if not g1.is_zero():
                r = max(r, abs(g1.embed()))
            if not g2.is_zero():
                r = max(r, abs(g2.embed()))
            r = max(r, max(0.0, -sign * lap.embed().real))
        else:
            lap = sum(H.values[g] - H.values[f] for g in diag)
            t1 = abs(vals[ne] - vals[sw]) ** 2
            t2 = abs(vals[nw] - vals[se]) ** 2
            r = max(abs(lap - sign * t1), abs(t1 - t2), max(0.0, -sign * lap))
        rows.append((f"square ({fi},{fj})", r))
    return _make_report("sub-super-harmonic", rows, use_exact,
                        0.0 if use_exact else tol)


def check_boundary_H(H, tol=1e-9) -> ResidualReport:
    """H must equal 0 on the source-to-sink arc and 1 on the return arc."""
    d = H.domain
    arc_wired, arc_dual = d.boundary_arcs()
    use_exact = H.exact is not None
    one = Cyclo16.one()
    rows = []
    for faces, target, texact, label in ((arc_dual, 0.0, None, "dual-arc"),
                                         (arc_wired, 1.0, one, "wired-arc")):
        for f in faces:
            if use_exact:
                g = H.exact[f] if texact is None else H.exact[f] - texact
                r = 0.0 if g.is_zero() else abs(g.embed())
            else:
                r = abs(H.values[f] - target)
            rows.append((f"{label} ({d.ffi[f]},{d.ffj[f]})", r))
    return _make_report("boundary-values", rows, use_exact,
                        0.0 if use_exact else tol)


def check_hintf(H, F, tol=1e-9) -> ResidualReport:
    """Increment identity 2(H(v)-H(u)) = Im(F(z)^2 (v-u)) across corners.

    u, v are the centers of two same-color squares sharing the corner z,
    taken on opposite sides of a quadrant of z whose both bounding strands
    exist; that route is what makes the increments along it well defined.
    Both sides are homogeneous of degree one in the mesh, so the check is
    run in lattice units.
    """
    d = H.domain
    vals, ex = vertex_values(d, F)
    use_exact = ex is not None and H.exact is not None
    rows = []
    for v in range(d.n_vertices):
        vx, vy = int(d.vx[v]), int(d.vy[v])
        for q in range(4):
            if d.vstrand[v, q] < 0 or d.vstrand[v, (q + 1) % 4] < 0:
                continue
            qa, qb = (q + 1) % 4, (q + 3) % 4
            fa = d.face_at(vx + _QOFF[qa][0], vy + _QOFF[qa][1])
            fb = d.face_at(vx + _QOFF[qb][0], vy + _QOFF[qb][1])
            if fa is None or fb is None:
                continue
            dx = int(d.ffi[fa]) - int(d.ffi[fb])
            dy = int(d.ffj[fa]) - int(d.ffj[fb])
            if use_exact:
                f2 = ex[v] * ex[v]
                w = f2 * Cyclo16.from_rational(Fraction(dx))
                w = w + f2 * _IUNIT * Cyclo16.from_rational(Fraction(dy))
                im = (w - w.conj()) * _IUNIT.conj() * _HALF
                lhs = (H.exact[fa] - H.exact[fb]) + (H.exact[fa] - H.exact[fb])
                g = lhs - im
                r = 0.0 if g.is_zero() else abs(g.embed())
            else:
                f2 = vals[v] * vals[v]
                rhs = (f2 * (dx + 1j * dy)).imag
                r = abs(2.0 * (H.values[fa] - H.values[fb]) - rhs)
            rows.append((f"corner ({vx},{vy}) quad {q}", r))
    return _make_report("h-increment", rows, use_exact,
                        0.0 if use_exact else tol)


def check_passage_bound(d, q=2.0, dist=None, tol=1e-12) -> ResidualReport:
    """Modulus bound |F(p)| <= P(curve passes p) at every registry point.

    The observable at a point averages unit phases over the states whose
    curve passes that point, so its modulus can never exceed the passage
    probability -- times the fixed corner normalization 2cos(pi/8 sigma')
    at corner points.  Both sides come from the exact ensemble; the
    comparison itself is in floats.
    """
    from .exact import enumerate_states
    from .fermion import assemble_from_counts, corner_norm

    if dist is None:
        dist = enumerate_states(d, q)
    F = assemble_from_counts(d, dist)
    wk = math.sqrt(q) ** np.arange(dist.counters.shape[2], dtype=float)
    hits = dist.counters.sum(axis=1).astype(float) @ wk
    probs = hits / dist.partition
    kappa = corner_norm(q)
    rows = []
    for p in range(d.n_points):
        kind = int(d.point_kind[p])
        if kind == KIND_VERTEX:
            continue  # vertex values are corner averages, not passages
        bound = probs[p] * (kappa if kind == KIND_CORNER else 1.0)
        r = abs(F.values[p]) - bound
        rows.append((f"point {p}", r if r > 0.0 else 0.0))
    return _make_report("passage-bound", rows, False, tol)


def run_exact_suite(d, F=None, H=None, q=2.0):
    """All local identity checks on one domain, as a list of reports."""
    if F is None:
        from .exact import exact_F
        F = exact_F(d, q)
    if H is None:
        H = build_H(F)
    return [
        check_preholomorphic(d, F),
        check_cr(d, F),
        check_projection_sums(d, F),
        check_sub_super(H, F),
        check_boundary_H(H),
        check_hintf(H, F),
    ]


# ---------------------------------------------------------------------------
# synthetic preholomorphic fields
# ---------------------------------------------------------------------------

def random_preholomorphic(d, seed=0, scale=1.0) -> FermionField:
    """A random field satisfying the projection agreement on every edge.

    The agreement constraints are one real equation per full edge, linear
    in the vertex values; a basis of the solution space is extracted and a
    Gaussian combination drawn.  Corner and edge values are then defined
    as the orthogonal projections of the vertex values, which makes every
    local identity of the observable hold for reasons independent of the
    underlying model.
    """
    rng = np.random.default_rng(seed)
    nv = d.n_vertices
    rows = []
    for e in range(d.n_full):
        u = _unit_f(int(d.line_j[e]))
        t, h = int(d.tail[e]), int(d.head[e])
        row = np.zeros(2 * nv)
        row[2 * t], row[2 * t + 1] = u.real, u.imag
        row[2 * h], row[2 * h + 1] = -u.real, -u.imag
        rows.append(row)
    A = np.array(rows)
    _, s, vt = np.linalg.svd(A)
    rank = int((s > 1e-10 * s[0]).sum()) if s.size else 0
    null = vt[rank:]
    coeff = rng.standard_normal(null.shape[0]) * scale
    x = null.T @ coeff
    vvals = x[0::2] + 1j * x[1::2]

    values = np.zeros(d.n_points, dtype=np.complex128)
    for v in range(nv):
        values[d.vertex_pid(v)] = vvals[v]
        for quad in range(4):
            pid = d.corner_pid(v, quad)
            values[pid] = _proj_float(vvals[v], int(d.line_j[pid]))
    for e in range(d.n_edges):
        att = max(int(d.tail[e]), int(d.head[e])) if e >= d.n_full else int(d.tail[e])
        values[e] = _proj_float(vvals[att], int(d.line_j[e]))
    return FermionField(domain=d, q=2.0, values=values, exact=None,
                        source="synthetic")


# ---------------------------------------------------------------------------
# harmonic grids and the Dirichlet solver
# ---------------------------------------------------------------------------

AXIS_OFFSETS = ((1, 0), (-1, 0), (0, 1), (0, -1))
DIAG_OFFSETS = ((1, 1), (-1, 1), (-1, -1), (1, -1))


class HarmonicGrid:
    """A finite graph of integer sites with a four-neighbor Laplacian.

    The Laplacian is the plain sum of differences over the given neighbor
    offsets.  Axis offsets give the ordinary grid; diagonal offsets give
    the single-color square sublattice, which is the same graph rotated.
    """

    def __init__(self, sites, is_boundary, offsets=AXIS_OFFSETS):
        self.sites = np.asarray(sites, dtype=np.int64)
        self.is_boundary = np.asarray(is_boundary, dtype=bool)
        self.offsets = tuple(offsets)
        self.index = {(int(x), int(y)): i for i, (x, y) in enumerate(self.sites)}
        self.interior = np.nonzero(~self.is_boundary)[0]
        self._int_pos = np.full(len(self.sites), -1, dtype=np.int64)
        self._int_pos[self.interior] = np.arange(len(self.interior))
        self._build_matrix()

    @classmethod
    def box(cls, n, offsets=AXIS_OFFSETS):
        """All integer sites of [0,n]^2; the frame is the boundary."""
        xs, ys = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        sites = np.column_stack([xs.ravel(), ys.ravel()])
        onb = ((sites[:, 0] == 0) | (sites[:, 0] == n) |
               (sites[:, 1] == 0) | (sites[:, 1] == n))
        return cls(sites, onb, offsets)

    @classmethod
    def from_faces(cls, domain, color="black"):
        """The same-color face sublattice of a domain, diagonal adjacency.

        Faces on the boundary arcs, open faces, and faces missing one of
        their four diagonal neighbors are flagged as boundary.
        """
        want = 1 if color == "black" else 0
        keep = [f for f in range(domain.n_faces) if int(domain.fblack[f]) == want]
        coords = {(int(domain.ffi[f]), int(domain.ffj[f])) for f in keep}
        open_faces = set(int(f) for f in domain.open_faces)
        sites, onb = [], []
        for f in keep:
            fi, fj = int(domain.ffi[f]), int(domain.ffj[f])
            ringed = all((fi + dx, fj + dy) in coords for dx, dy in DIAG_OFFSETS)
            sites.append((fi, fj))
            onb.append((f in open_faces) or not ringed)
        return cls(np.array(sites), np.array(onb), DIAG_OFFSETS)

    def _build_matrix(self):
        n_int = len(self.interior)
        rows, cols, data = [], [], []
        brows, bcols, bdata = [], [], []
        nb = int(self.is_boundary.sum())
        bpos = np.full(len(self.sites), -1, dtype=np.int64)
        bpos[np.nonzero(self.is_boundary)[0]] = np.arange(nb)
        self._bnd_pos = bpos
        for k, i in enumerate(self.interior):
            x, y = int(self.sites[i, 0]), int(self.sites[i, 1])
            deg = 0
            for dx, dy in self.offsets:
                j = self.index.get((x + dx, y + dy))
                if j is None:
                    continue
                deg += 1
                if self.is_boundary[j]:
                    brows.append(k); bcols.append(bpos[j]); bdata.append(1.0)
                else:
                    rows.append(k); cols.append(self._int_pos[j]); data.append(1.0)
            rows.append(k); cols.append(k); data.append(-float(deg))
        self.lap_ii = sp.csr_matrix((data, (rows, cols)), shape=(n_int, n_int))
        self.lap_ib = sp.csr_matrix((bdata, (brows, bcols)), shape=(n_int, nb))

    def laplacian(self, values):
        """Sum-of-differences Laplacian at every interior site."""
        vals = np.asarray(values, dtype=float)
        vint = vals[self.interior]
        vbnd = vals[self.is_boundary]
        return self.lap_ii @ vint + self.lap_ib @ vbnd


def dirichlet_solve(grid, boundary_values, tol=1e-10, maxiter=100_000):
    """Solve the discrete Dirichlet problem on a HarmonicGrid.

    boundary_values: array over all sites (only boundary entries are read)
    or a dict {(x, y): value}.  Conjugate gradients with Jacobi scaling;
    raises RuntimeError if the iteration cap is hit.
    """
    nb = int(grid.is_boundary.sum())
    g = np.zeros(nb)
    if isinstance(boundary_values, dict):
        for xy, val in boundary_values.items():
            i = grid.index[xy]
            if not grid.is_boundary[i]:
                raise ValueError(f"site {xy} is not on the boundary")
            g[grid._bnd_pos[i]] = val
    else:
        bv = np.asarray(boundary_values, dtype=float)
        g = bv[grid.is_boundary]
    rhs = grid.lap_ib @ g
    A = -grid.lap_ii
    M = sp.diags(1.0 / A.diagonal())
    x, info = spla.cg(A, rhs, rtol=tol, atol=0.0, maxiter=maxiter, M=M)
    if info != 0:
        raise RuntimeError(f"Dirichlet solve did not converge (info={info})")
    out = np.zeros(len(grid.sites))
    out[grid.is_boundary] = g
    out[grid.interior] = x
    return out


# ---------------------------------------------------------------------------
# box Green functions
# ---------------------------------------------------------------------------

@dataclass
class GreenTable:
    """Green function of a concentric-squares box, plus full-plane values.

    The box is the square of side 9L with zero boundary values; columns
    G(., y) solve (sum-of-differences Laplacian) G = delta_y and are
    negative inside.  The central square Q has side L.  Full-plane values
    G_C(x, y) = a(x - y)/2 come from the exact potential kernel a and are
    normalized to vanish at coincidence.
    """

    L: int
    grid: HarmonicGrid
    _lu: object
    q_lo: int
    q_hi: int

    def column(self, y):
        """G(., y) over interior sites, as an array indexed like interior."""
        i = self.grid.index[(int(y[0]), int(y[1]))]
        k = self.grid._int_pos[i]
        if k < 0:
            raise ValueError("pole must be an interior site")
        e = np.zeros(len(self.grid.interior))
        e[k] = 1.0
        return self._lu.solve(e)

    def g(self, x, y):
        col = self.column(y)
        i = self.grid.index[(int(x[0]), int(x[1]))]
        k = self.grid._int_pos[i]
        return 0.0 if k < 0 else float(col[k])

    def g_plane(self, x, y):
        tab = potential_kernel(9 * self.L)
        return 0.5 * tab[abs(int(x[0]) - int(y[0])), abs(int(x[1]) - int(y[1]))]


def green_table(L) -> GreenTable:
    """Factorized Green solver for the side-9L box with central square L."""
    grid = HarmonicGrid.box(9 * L)
    A = grid.lap_ii.tocsc()
    lu = spla.splu(A)
    return GreenTable(L=L, grid=grid, _lu=lu, q_lo=4 * L, q_hi=5 * L)


def check_green_lemma(table: GreenTable):
    """Gradient-sum ratio of the box Green function, over every pole.

    For each interior pole y the ratio L * sum_Q |grad G(., y)| over
    sum_Q |G(., y)| is formed, where both sums run over the central square
    Q and the gradient is the pair of forward differences.  Symmetry of G
    turns the numerator into differences of columns with poles in Q, so
    the whole field of ratios costs about |Q| factorized solves.
    Returns (ratios over interior sites, stats dict).
    """
    grid, lu, L = table.grid, table._lu, table.L
    lo, hi = table.q_lo, table.q_hi
    n_int = len(grid.interior)

    def col(x, y):
        e = np.zeros(n_int)
        e[grid._int_pos[grid.index[(x, y)]]] = 1.0
        return lu.solve(e)

    # denominator: one symmetric solve against the indicator of Q
    ind = np.zeros(n_int)
    for x in range(lo, hi + 1):
        for y in range(lo, hi + 1):
            ind[grid._int_pos[grid.index[(x, y)]]] = 1.0
    s2 = -lu.solve(ind)

    # numerator: stream columns row by row, forward differences in x and y
    s1 = np.zeros(n_int)
    prev = None
    for j in range(lo, hi + 2):
        row = [col(i, j) for i in range(lo, hi + 2)]
        for i in range(lo, hi + 1):
            s1 += np.abs(row[i + 1 - lo] - row[i - lo])
        if prev is not None:
            for i in range(lo, hi + 1):
                s1 += np.abs(row[i - lo] - prev[i - lo])
        prev = row
    # drop the extra x-differences contributed by the top guard row
    for i in range(lo, hi + 1):
        s1 -= np.abs(prev[i + 1 - lo] - prev[i - lo])

    ratios = L * s1 / s2
    stats = {
        "L": L,
        "ratio_max": float(ratios.max()),
        "ratio_mean": float(ratios.mean()),
        "s2_min": float(s2.min()),
    }
    return ratios, stats


# ---------------------------------------------------------------------------
# full-plane potential kernel and the logarithmic fit
# ---------------------------------------------------------------------------

def _pi_fraction(digits=420):
    """pi as an exact rational, via Machin's arctangent formula."""
    def atan_inv(k):
        x = Fraction(1, k)
        term = x
        total = Fraction(0)
        n = 0
        while term.numerator != 0 and term > Fraction(1, 10 ** (digits + 20)):
            total += term if n % 2 == 0 else -term
            n += 1
            term = x ** (2 * n + 1) / (2 * n + 1)
        return total
    return 16 * atan_inv(5) - 4 * atan_inv(239)


@lru_cache(maxsize=4)
def potential_kernel_exact(n):
    """Exact potential kernel a(x) on the octant 0 <= y <= x <= n.

    Values are pairs (P, Q) of integers over the common denominator D,
    a(x) = (P + Q * 4/pi) / D, with a(0,0) = 0, a(1,0) = 1 and the
    averaged four-neighbor Laplacian of a equal to the delta at 0.  The
    octant is filled by the defining harmonicity away from the origin,
    with the diagonal supplied by the classical closed form
    a(k,k) = (4/pi) * sum_{j<=k} 1/(2j-1).
    Returns (P, Q, D) with P, Q dicts keyed by (x, y).
    """
    D = 1
    for odd in range(1, 2 * n, 2):
        D = D * odd // math.gcd(D, odd)
    P = {(0, 0): 0, (1, 0): D, (1, 1): 0}
    Q = {(0, 0): 0, (1, 0): 0, (1, 1): D}

    def get(x, y):
        x, y = abs(x), abs(y)
        if y > x:
            x, y = y, x
        return P[(x, y)], Q[(x, y)]

    diag_q = D  # D * sum 1/(2j-1) so far (j = 1)
    for m in range(1, n):
        # axis: harmonicity at (m, 0) with symmetry a(m,-1) = a(m,1)
        pm, qm = get(m, 0)
        pw, qw = get(m - 1, 0)
        pn, qn = get(m, 1)
        P[(m + 1, 0)] = 4 * pm - pw - 2 * pn
        Q[(m + 1, 0)] = 4 * qm - qw - 2 * qn
        # next diagonal from the closed form
        diag_q += D // (2 * m + 1)
        P[(m + 1, m + 1)] = 0
        Q[(m + 1, m + 1)] = diag_q
        # sub-diagonal: harmonicity at (m, m) with octant symmetry
        pd, qd = get(m, m)
        ps, qs = get(m, m - 1)
        P[(m + 1, m)] = 2 * pd - ps
        Q[(m + 1, m)] = 2 * qd - qs
        # interior of the octant column
        for y in range(1, m):
            pc, qc = get(m, y)
            pw, qw = get(m - 1, y)
            ps, qs = get(m, y - 1)
            pn, qn = get(m, y + 1)
            P[(m + 1, y)] = 4 * pc - pw - ps - pn
            Q[(m + 1, y)] = 4 * qc - qw - qs - qn
    return P, Q, D


@lru_cache(maxsize=4)
def potential_kernel(n):
    """Float potential kernel a(x, y) on the quadrant [0, n]^2.

    Evaluated from the exact integer pairs with a high-precision rational
    pi, because the pairs grow exponentially and cancel catastrophically
    in double precision.
    """
    P, Q, D = potential_kernel_exact(n)
    four_over_pi = 4 / _pi_fraction()
    out = np.zeros((n + 1, n + 1))
    for (x, y), p in P.items():
        val = float(Fraction(p, D) + Q[(x, y)] * four_over_pi / D)
        out[x, y] = val
        if y <= n and x <= n:
            out[y, x] = val
    return out


def fit_glog(box=512, window=(50, 200)):
    """Least-squares fit of the full-plane values against (1/pi) log |x|.

    G_C(x, 0) = a(x)/2 is fitted as slope * log|x| + constant over all
    lattice points with |x| inside the window; box/2 bounds the table
    radius.  Returns (slope, constant, max_abs_fit_residual, n_points).
    """
    n = box // 2
    if n < window[1] + 1:
        raise ValueError("box too small for the fit window")
    tab = potential_kernel(n)
    lo, hi = window
    xs, ys = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
    rr = np.hypot(xs, ys)
    mask = (rr >= lo) & (rr <= hi)
    logs = np.log(rr[mask])
    vals = 0.5 * tab[mask]
    A = np.column_stack([logs, np.ones_like(logs)])
    coef, *_ = np.linalg.lstsq(A, vals, rcond=None)
    resid = float(np.abs(A @ coef - vals).max())
    return float(coef[0]), float(coef[1]), resid, int(mask.sum())


# ---------------------------------------------------------------------------
# gradient bound for harmonic functions
# ---------------------------------------------------------------------------

def _boundary_loop(n):
    """Boundary sites of the [0,n]^2 box in perimeter order."""
    out = []
    out += [(x, 0) for x in range(0, n)]
    out += [(n, y) for y in range(0, n)]
    out += [(x, n) for x in range(n, 0, -1)]
    out += [(0, y) for y in range(n, 0, -1)]
    return out


def check_verblunsky(L, samples=100, modes=8, seed=0):
    """Gradient of harmonic extensions on the central square, normalized.

    For each sample, smooth random boundary data (a band of low Fourier
    modes along the perimeter, Gaussian coefficients) is extended
    harmonically into the side-9L box; the ratio
    L * sup_Q |grad h| / sup_boundary |h| is recorded.  Returns the array
    of ratios; their maximum should stay of one size across L.
    """
    rng = np.random.default_rng(seed)
    n = 9 * L
    grid = HarmonicGrid.box(n)
    loop = _boundary_loop(n)
    M = len(loop)
    k = np.arange(M)
    lo, hi = 4 * L, 5 * L
    # factorize once; dirichlet_solve's CG would redo work per sample
    A = (-grid.lap_ii).tocsc()
    lu = spla.splu(A)
    idx = np.array([[grid._int_pos[grid.index[(x, y)]] for y in range(lo, hi + 2)]
                    for x in range(lo, hi + 2)])
    ratios = np.zeros(samples)
    for smp in range(samples):
        g = np.zeros(M)
        for m in range(1, modes + 1):
            a, b = rng.standard_normal(2)
            g += a * np.cos(2 * np.pi * m * k / M) + b * np.sin(2 * np.pi * m * k / M)
        bvals = np.zeros(len(grid.sites))
        for (x, y), val in zip(loop, g):
            bvals[grid.index[(x, y)]] = val
        rhs = grid.lap_ib @ bvals[grid.is_boundary]
        h = lu.solve(rhs)      # equals the CG solution of dirichlet_solve
        hq = h[idx]
        grad = max(np.abs(np.diff(hq, axis=0))[:, :-1].max(),
                   np.abs(np.diff(hq, axis=1))[:-1, :].max())
        ratios[smp] = L * grad / np.abs(g).max()
    return ratios


# ---------------------------------------------------------------------------
# random-walk hitting probe
# ---------------------------------------------------------------------------

@dataclass
class BeurlingProbe:
    delta_over_r: float
    value_solve: float
    value_mc: float
    se: float


def beurling_probe(n, dist, r, walks=20000, seed=0) -> BeurlingProbe:
    """Harmonic measure near a flat boundary stretch where it vanishes.

    On the [0,n]^2 box the boundary data is 0 within distance r of the
    point z = (n/2, dist) and 1 elsewhere; the solved value at z is the
    chance a walk from z first exits away from the nearby stretch, and it
    shrinks as dist/r does.  A direct simple-random-walk estimate with
    standard error is returned alongside.
    """
    if not 0 < dist < r < n // 2:
        raise ValueError("need 0 < dist < r < n/2")
    grid = HarmonicGrid.box(n)
    zx, zy = n // 2, dist
    bvals = np.zeros(len(grid.sites))
    onb = np.nonzero(grid.is_boundary)[0]
    for i in onb:
        x, y = int(grid.sites[i, 0]), int(grid.sites[i, 1])
        far = (x - zx) ** 2 + (y - zy) ** 2 > r * r
        bvals[i] = 1.0 if far else 0.0
    sol = dirichlet_solve(grid, bvals)
    value_solve = float(sol[grid.index[(zx, zy)]])

    rng = np.random.default_rng(seed)
    pos = np.tile(np.array([zx, zy]), (walks, 1))
    hit = np.zeros(walks)
    act = np.arange(walks)
    steps = np.array(AXIS_OFFSETS)
    while act.size:
        pos[act] += steps[rng.integers(0, 4, size=act.size)]
        x, y = pos[act, 0], pos[act, 1]
        onb = (x == 0) | (x == n) | (y == 0) | (y == n)
        if onb.any():
            done = act[onb]
            dx, dy = pos[done, 0] - zx, pos[done, 1] - zy
            hit[done] = (dx * dx + dy * dy > r * r).astype(float)
            act = act[~onb]
    value_mc = float(hit.mean())
    se = float(hit.std(ddof=1) / np.sqrt(walks))
    return BeurlingProbe(dist / r, value_solve, value_mc, se)


# ---------------------------------------------------------------------------
# L^2 bound of the observable
# ---------------------------------------------------------------------------

def l2_on_subdomain(F, box=(0.25, 0.75)) -> float:
    """mesh * sum of |mesh^{-sigma} F(e)|^2 over edges with midpoint in box.

    The box is in coordinates relative to the domain's bounding square;
    the sum runs over full-edge midpoints.  For the critical observable
    this stays of one size as the mesh is refined.
    """
    d = F.domain
    lo, hi = box
    width = max(float(d.vx.max()), float(d.vy.max()))
    sig = spin_exponent(F.q)
    total = 0.0
    for e in range(d.n_full):
        x = d.mx2[e] / 2.0 / width
        y = d.my2[e] / 2.0 / width
        if lo <= x <= hi and lo <= y <= hi:
            total += abs(F.values[e]) ** 2
    return float(d.delta ** (1.0 - 2.0 * sig) * total)


def check_l2_bound(family, meshes, box=(0.25, 0.75), q=2.0, sweeps=20000,
                   seed=0, chains=4, threads=None):
    """Table of the L^2 sums across meshes; exact when enumerable."""
    from . import sampler
    from .exact import MAX_ENUM_BITS, exact_F
    from .fermion import assemble_from_accumulator
    rows = []
    for N in meshes:
        d = family(N)
        if d.n_bits <= min(MAX_ENUM_BITS, 20):
            F = exact_F(d, q)
        else:
            acc = sampler.run_chains(d, q=q, sweeps=sweeps, seed=seed,
                                     chains=chains, threads=threads,
                                     observables=("fermion",))
            F = assemble_from_accumulator(d, acc)
        rows.append((N, l2_on_subdomain(F, box)))
    return rows

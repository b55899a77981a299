"""Assembly of the interface observable F, its primitive H, and the
martingale check.

F lives on the point registry of a domain: edge centers, corner points and
medial vertices.  Each passage of the interface through a point contributes
the winding weight; the per-kind normalizations are

  * edges: factor 1,
  * corners: factor 2 cos(pi/8)  (2 cos(sigma pi/4) away from q = 2),
  * vertices: half the sum of the four corner values.

At q = 2 every quantity is assembled in Q(zeta_16) and identities are exact
equalities; otherwise a float path with weight exp(-i sigma w) is used and
only residuals are reported.

H is the primitive of |F|^2: a real function on faces, anchored to 0 on the
white face just below the sink mark, with increment H(black) - H(white) =
|F(e)|^2 across every edge.  Well-definedness (loop sums vanishing) is a
theorem at q = 2 and a measured residual otherwise.

The martingale check re-roots the observable in slit domains: consuming an
initial interface segment yields a smaller domain whose source sits on the
consumed edge's midpoint, and the observable must equal the Z-weighted
average of its one-step extensions.  At q = 2 the weights live in Q(sqrt 2)
and the residual is computed exactly.
"""

import cmath
import csv
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .exact import (Cyclo16, LAM, LAM_BAR, TWO_COS_PI8, enumerate_states,
                    spin_exponent)
from .lattice import KIND_CORNER, KIND_EDGE, KIND_VERTEX, MedialDomain

_HALF = Cyclo16.from_rational(Fraction(1, 2))
_KIND_NAMES = {KIND_EDGE: "edge", KIND_CORNER: "corner", KIND_VERTEX: "vertex"}


def corner_norm(q=2.0):
    """Corner normalization 2 cos(sigma pi/4), as a float (= 2cos(pi/8) at q=2)."""
    return 2.0 * math.cos(spin_exponent(q) * math.pi / 4.0)


def weight_W(n, q=2.0):
    """Winding weight for n quarter-turns from the sink: exp(-i sigma n pi/2).

    At q = 2 this is lambda^{2n} with lambda = exp(-i pi/8), returned as an
    exact cyclotomic; otherwise a complex float.
    """
    if q == 2.0:
        return Cyclo16.zeta_pow(2 * n)
    return cmath.exp(-1j * spin_exponent(q) * n * math.pi / 2.0)


def geo_key(domain, pid):
    """Geometry key of a registry point, stable across slit domains."""
    return (int(domain.point_kind[pid]), int(domain.px4[pid]),
            int(domain.py4[pid]))


@dataclass
class FermionField:
    """The observable on every registry point of one domain."""

    domain: object
    q: float
    values: np.ndarray            # complex, per registry point
    exact: list = None            # Cyclo16 per point at q = 2, else None
    se_re: np.ndarray = None      # standard errors for sampled fields
    se_im: np.ndarray = None
    source: str = "enumeration"

    @property
    def mesh(self):
        return self.domain.delta

    @property
    def normalization(self):
        return {"edge": 1.0, "corner": corner_norm(self.q),
                "vertex": "half corner sum",
                "mesh_power": "none (delta^{-sigma} applied downstream only)"}

    def value(self, pid):
        return complex(self.values[pid])

    def exact_value(self, pid):
        if self.exact is None:
            raise ValueError("field was not assembled exactly")
        return self.exact[pid]

    def to_csv(self, path):
        d = self.domain
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["point-id", "x", "y", "kind", "re", "im"])
            for p in range(d.n_points):
                pos = d.point_pos(p)
                w.writerow([p, repr(pos.real), repr(pos.imag),
                            _KIND_NAMES[int(d.point_kind[p])],
                            repr(float(self.values[p].real)),
                            repr(float(self.values[p].imag))])


def _vertex_corner_pids(domain, v):
    return [domain.corner_pid(v, qd) for qd in range(4)]


def assemble_from_counts(domain, dist) -> FermionField:
    """FermionField from enumeration counters (exact at q = 2)."""
    n = domain.n_points
    q = dist.q
    tb = dist.tb
    if q == 2.0:
        zinv = dist.partition_exact.inverse()
        raw = [Cyclo16.zero() for _ in range(n)]
        pids, mis, ks = np.nonzero(dist.counters)
        for pid, mi, k in zip(pids, mis, ks):
            cnt = int(dist.counters[pid, mi, k])
            m_rel = int(mi) - dist.m_off - 2 * tb
            raw[pid] = raw[pid] + Cyclo16.zeta_pow(m_rel) * \
                Cyclo16.sqrt2_pow(int(k)) * cnt
        exact = []
        for pid in range(n):
            val = raw[pid] * zinv
            if domain.point_kind[pid] == KIND_CORNER:
                val = val * TWO_COS_PI8
            exact.append(val)
        for v in range(domain.n_vertices):
            acc = Cyclo16.zero()
            for cp in _vertex_corner_pids(domain, v):
                acc = acc + exact[cp]
            exact[domain.vertex_pid(v)] = acc * _HALF
        values = np.array([e.embed() for e in exact], dtype=np.complex128)
        return FermionField(domain, q, values, exact=exact)
    sig = spin_exponent(q)
    raw = np.zeros(n, dtype=np.complex128)
    pids, mis, ks = np.nonzero(dist.counters)
    sq = math.sqrt(q)
    for pid, mi, k in zip(pids, mis, ks):
        cnt = int(dist.counters[pid, mi, k])
        m_rel = int(mi) - dist.m_off - 2 * tb
        raw[pid] += cnt * sq**int(k) * \
            cmath.exp(-1j * sig * m_rel * math.pi / 4.0)
    values = raw / dist.partition
    corner_factor = corner_norm(q)
    mask = domain.point_kind == KIND_CORNER
    values[mask] *= corner_factor
    for v in range(domain.n_vertices):
        cps = _vertex_corner_pids(domain, v)
        values[domain.vertex_pid(v)] = 0.5 * sum(values[cp] for cp in cps)
    return FermionField(domain, q, values)


def _batch_field_matrix(domain, acc):
    """Per-batch normalized field values: rows are batches, cols points."""
    nn = acc.batch_n[:, None].astype(float)
    twist = complex(math.cos(math.pi * acc.tb / 4.0),
                    math.sin(math.pi * acc.tb / 4.0))
    bm = (acc.batch_cos + 1j * acc.batch_sin) / nn * twist
    corner_factor = corner_norm(acc.q)
    bm[:, domain.point_kind == KIND_CORNER] *= corner_factor
    for v in range(domain.n_vertices):
        cps = _vertex_corner_pids(domain, v)
        bm[:, domain.vertex_pid(v)] = 0.5 * sum(bm[:, cp] for cp in cps)
    return bm


def assemble_from_accumulator(domain, acc) -> FermionField:
    """FermionField with standard errors from a sampling Accumulator."""
    if acc.domain_hash != domain.content_hash():
        raise ValueError("accumulator belongs to a different domain")
    bm = _batch_field_matrix(domain, acc)
    wts = acc.batch_n / acc.batch_n.sum()
    values = (bm * wts[:, None]).sum(axis=0)
    nb = bm.shape[0]
    se_re = bm.real.std(axis=0, ddof=1) / math.sqrt(nb)
    se_im = bm.imag.std(axis=0, ddof=1) / math.sqrt(nb)
    return FermionField(domain, acc.q, values, se_re=se_re, se_im=se_im,
                        source="mcmc")


def assemble_F(domain, source) -> FermionField:
    """Dispatch: enumeration distribution or sampler accumulator."""
    if hasattr(source, "counters"):
        return assemble_from_counts(domain, source)
    if hasattr(source, "batch_cos"):
        return assemble_from_accumulator(domain, source)
    raise TypeError("source must be an ExactDistribution or Accumulator")


def edge_from_corners(field, e, v):
    """Edge value reconstructed from its two flanking corners at vertex v:

        F(e) = (conj(lambda) F(c) + lambda F(c')) / (2 cos(pi/8)),

    where c, c' are the corners at v adjacent to e whose lines are the edge
    line rotated by -pi/8 and +pi/8.  Exact when the field is exact.
    Valid at endpoints the curve never crosses straight (always true at
    degree-4 vertices).
    """
    d = field.domain
    side = d._side_of(e, v)
    flank = {0: (0, 3), 1: (0, 1), 2: (1, 2), 3: (2, 3)}[side]  # E,N,W,S
    je = int(d.line_j[e])
    cm = cp = None
    for qd in flank:
        pid = d.corner_pid(v, qd)
        jc = int(d.line_j[pid])
        if jc == (je - 1) % 8:
            cm = pid
        elif jc == (je + 1) % 8:
            cp = pid
    if cm is None or cp is None:
        raise AssertionError("flanking corner lines do not bracket the edge")
    if field.exact is not None:
        num = LAM_BAR * field.exact[cm] + LAM * field.exact[cp]
        return num * TWO_COS_PI8.inverse()
    lam = cmath.exp(-1j * math.pi / 8.0)
    return (lam.conjugate() * field.values[cm] + lam * field.values[cp]) \
        / (2.0 * math.cos(math.pi / 8.0))


# -- the primitive H ---------------------------------------------------------


@dataclass
class HField:
    """Primitive of |F|^2 on faces, anchored 0 below the sink mark."""

    domain: object
    values: np.ndarray           # float, per face
    exact: list = None           # Cyclo16 (real) per face when exact
    residual: float = 0.0        # max loop-closure violation
    anchor: int = -1

    def value(self, f):
        return float(self.values[f])

    def to_csv(self, path):
        d = self.domain
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["face-x", "face-y", "color", "value"])
            for f in range(d.n_faces):
                pos = d.face_pos(f)
                w.writerow([repr(pos.real), repr(pos.imag),
                            "black" if d.fblack[f] else "white",
                            repr(float(self.values[f]))])


def build_H(field, tol=1e-12) -> HField:
    """Integrate H(black) - H(white) = |F(e)|^2 over the face graph.

    Exact fields are propagated along a spanning tree and every non-tree
    edge is checked for exact closure (failure raises).  Sampled fields are
    fitted by least squares over all increments with the anchor pinned; the
    returned residual is the worst increment violation.
    """
    d = field.domain
    nf = d.n_faces
    anchor = d.anchor_face
    if field.exact is not None:
        inc = [field.exact[e].abs2() for e in range(d.n_edges)]
        vals = [None] * nf
        vals[anchor] = Cyclo16.zero()
        queue = [anchor]
        adj = [[] for _ in range(nf)]
        for e in range(d.n_edges):
            b, w = int(d.eblack[e]), int(d.ewhite[e])
            adj[b].append((w, e))
            adj[w].append((b, e))
        tree_used = set()
        while queue:
            f = queue.pop()
            for g, e in adj[f]:
                if vals[g] is None:
                    if d.fblack[g]:
                        vals[g] = vals[f] + inc[e]
                    else:
                        vals[g] = vals[f] - inc[e]
                    tree_used.add(e)
                    queue.append(g)
        if any(v is None for v in vals):
            raise RuntimeError("face graph is not connected")
        worst = 0.0
        for e in range(d.n_edges):
            if e in tree_used:
                continue
            gap = vals[int(d.eblack[e])] - vals[int(d.ewhite[e])] - inc[e]
            if not gap.is_zero():
                worst = max(worst, abs(gap.real_float()))
        if worst > tol:
            raise ValueError(
                f"exact H increments do not close: residual {worst}")
        fv = np.array([v.real_float() for v in vals])
        return HField(d, fv, exact=vals, residual=worst, anchor=anchor)
    # float / sampled path: anchored least squares over all increments
    from scipy.sparse import lil_matrix
    from scipy.sparse.linalg import lsqr
    inc = np.abs(field.values[:d.n_edges]) ** 2
    cols = {f: i for i, f in enumerate(f for f in range(nf) if f != anchor)}
    A = lil_matrix((d.n_edges, nf - 1))
    b = np.zeros(d.n_edges)
    for e in range(d.n_edges):
        fb, fw = int(d.eblack[e]), int(d.ewhite[e])
        if fb != anchor:
            A[e, cols[fb]] = 1.0
        if fw != anchor:
            A[e, cols[fw]] = -1.0
        b[e] = inc[e]
    sol = lsqr(A.tocsr(), b, atol=1e-14, btol=1e-14)[0]
    vals = np.zeros(nf)
    for f, i in cols.items():
        vals[f] = sol[i]
    resid = 0.0
    for e in range(d.n_edges):
        gap = vals[int(d.eblack[e])] - vals[int(d.ewhite[e])] - inc[e]
        resid = max(resid, abs(float(gap)))
    return HField(d, vals, residual=resid, anchor=anchor)


# -- martingale of the observable under interface growth ---------------------


@dataclass(frozen=True)
class Prefix:
    """A realizable initial interface segment.

    `transits` are the vertices passed, `decided` the (bit, value) choices
    made at fresh flippable vertices, `consumed` the full edges the segment
    has exited onto (the last one only up to its midpoint), and `cur_edge`
    the edge the tip currently occupies (the source half-edge initially).
    """

    transits: tuple
    decided: tuple
    consumed: tuple
    cur_edge: int

    @property
    def steps(self):
        return len(self.transits)

    def decided_map(self):
        return dict(self.decided)


def one_step_extensions(domain, prefix):
    """All realizable one-transit extensions of a prefix.

    Returns [] if the tip already sits on the sink half-edge.  Each
    extension ends on the strand leaving the next vertex; an extension may
    end on the sink half-edge, which terminates the interface.
    """
    if prefix.cur_edge == domain.b_edge:
        return []
    t = domain.tables
    e = prefix.cur_edge
    v = int(domain.head[e])
    k = int(t.vbit[e])
    decided = prefix.decided_map()
    if k >= 0 and k not in decided:
        options = [(k, 0), (k, 1)]
    elif k >= 0:
        options = [(k, decided[k])]
    else:
        options = [(None, 0)]
    out = []
    for kk, bit in options:
        oe = int((t.out1 if bit else t.out0)[e])
        nd = dict(decided)
        if kk is not None:
            nd[kk] = bit
        out.append(Prefix(prefix.transits + (v,),
                          tuple(sorted(nd.items())),
                          prefix.consumed + (oe,), oe))
    return out


def interface_prefixes(domain, t):
    """Realizable prefixes by transit count: {s: [Prefix...]} for s <= t."""
    levels = {0: [Prefix((), (), (), domain.a_edge)]}
    for s in range(1, t + 1):
        nxt = []
        for p in levels[s - 1]:
            nxt.extend(one_step_extensions(domain, p))
        levels[s] = nxt
    return levels


def prefix_passages(domain, prefix):
    """(point-id, winding) passages made by the prefix, source included."""
    t = domain.tables
    out = [(int(t.epid[domain.a_edge]), 0)]
    e = domain.a_edge
    tq = 0
    decided = prefix.decided_map()
    for v in prefix.transits:
        assert int(domain.head[e]) == v
        k = int(t.vbit[e])
        bit = decided[k] if k >= 0 else 0
        nxt = int((t.out1 if bit else t.out0)[e])
        turn = int((t.turn1 if bit else t.turn0)[e])
        if turn != 0:
            cp = int((t.cpid1 if bit else t.cpid0)[e])
            out.append((cp, 2 * tq + turn))
            tq += turn
        e = nxt
        out.append((int(t.epid[e]), 2 * tq))
    assert e == prefix.cur_edge
    return out


def slit_domain(domain, prefix) -> MedialDomain:
    """Domain left after the interface has traversed `prefix`.

    The consumed full edges are removed; the new source half-edge runs from
    the midpoint of the last one to its head.  Face colors, the sink and
    the mesh are unchanged.

    A deep slit can pinch off a pocket: a cycle of leftover edges with no
    marks, cut loose from the component that carries the source and sink.
    Such pockets are kept.  Every configuration of the slit ensemble closes
    them into the same frozen loops, so they scale the partition function
    and every observable sum by one common factor that cancels in all
    ratios the averaging checks compare.
    """
    if not prefix.consumed:
        return domain
    if prefix.cur_edge == domain.b_edge:
        raise ValueError("interface already terminated; no domain remains")
    gone = set(prefix.consumed)
    fulls = [((int(domain.vx[domain.tail[e]]), int(domain.vy[domain.tail[e]])),
              (int(domain.vx[domain.head[e]]), int(domain.vy[domain.head[e]])))
             for e in range(domain.n_full) if e not in gone]
    e = prefix.cur_edge
    a_attach = (int(domain.vx[domain.head[e]]), int(domain.vy[domain.head[e]]))
    a_mid2 = (int(domain.mx2[e]), int(domain.my2[e]))
    bt = domain.tail[domain.b_edge]
    b_attach = (int(domain.vx[bt]), int(domain.vy[bt]))
    b_mid2 = (int(domain.mx2[domain.b_edge]), int(domain.my2[domain.b_edge]))
    name = f"{domain.name}/slit{len(prefix.consumed)}" if domain.name else ""
    return MedialDomain(fulls, a_attach, a_mid2, b_attach, b_mid2,
                        parity=domain.parity, delta=domain.delta,
                        canonical=False, name=name, allow_pockets=True)


class _SlitCache:
    """Enumerations of slit domains, keyed by content hash."""

    def __init__(self, q):
        self.q = q
        self.store = {}

    def get(self, dom):
        h = dom.content_hash()
        if h not in self.store:
            dist = enumerate_states(dom, self.q)
            self.store[h] = (dom, dist, assemble_from_counts(dom, dist))
        return self.store[h]


def martingale_residual(d, q=2.0, t=1, details=False):
    """Worst violation of the one-step averaging property up to t transits.

    For every realizable prefix with fewer than t transits whose one-step
    extensions all stay clear of the sink: the observable of the slit
    domain must equal the partition-weighted average of the extensions'
    observables at every geometrically shared point.  Exact in Q(zeta_16)
    at q = 2 (the returned residual is then literally 0.0 or not); float
    elsewhere.  Points and prefixes that do not survive all extensions are
    skipped, matching the lemma's precondition.
    """
    if d.n_bits > 16:
        raise ValueError("domain too large to enumerate slit ensembles")
    cache = _SlitCache(q)
    exact = q == 2.0
    worst = 0.0
    n_cmp = n_skip = 0
    levels = interface_prefixes(d, max(0, t - 1))
    for s in range(t):
        for prefix in levels[s]:
            exts = one_step_extensions(d, prefix)
            if not exts or any(x.cur_edge == d.b_edge for x in exts):
                n_skip += 1
                continue
            dom0, dist0, f0 = cache.get(slit_domain(d, prefix))
            branches = [cache.get(slit_domain(d, x)) for x in exts]
            if exact:
                zsum = branches[0][1].partition_exact
                for br in branches[1:]:
                    zsum = zsum + br[1].partition_exact
                if not (zsum - dist0.partition_exact).is_zero():
                    raise AssertionError(
                        "branch partition sums do not add to the base")
                z0inv = dist0.partition_exact.inverse()
                wts = [br[1].partition_exact * z0inv for br in branches]
            else:
                ztot = sum(br[1].partition for br in branches)
                if not math.isclose(ztot, dist0.partition, rel_tol=1e-9):
                    raise AssertionError(
                        "branch partition sums do not add to the base")
                wts = [br[1].partition / dist0.partition for br in branches]
            # the averaging step itself sweeps points: the strand it consumes,
            # the corner it turns at (branch-dependent), and the transit
            # vertex whose corner set changes -- all fail the "remains in the
            # domain for every realization" precondition and are skipped
            base_len = len(prefix_passages(d, prefix))
            banned = set()
            for x in exts:
                for pid, _ in prefix_passages(d, x)[base_len:]:
                    banned.add(geo_key(d, pid))
                banned.add(geo_key(d, d.vertex_pid(int(x.transits[-1]))))
            keys = {geo_key(dom0, p): p for p in range(dom0.n_points)}
            maps = []
            for br_dom, _, _ in branches:
                maps.append({geo_key(br_dom, p): p
                             for p in range(br_dom.n_points)})
            for key, p0 in keys.items():
                if key in banned:
                    continue
                pids = [mp.get(key) for mp in maps]
                if any(p is None for p in pids):
                    continue
                n_cmp += 1
                if exact:
                    avg = Cyclo16.zero()
                    for w, (_, _, fb), pb in zip(wts, branches, pids):
                        avg = avg + w * fb.exact[pb]
                    gap = f0.exact[p0] - avg
                    if not gap.is_zero():
                        worst = max(worst, abs(gap.embed()))
                else:
                    avg = sum(w * fb.values[pb]
                              for w, (_, _, fb), pb in zip(wts, branches, pids))
                    worst = max(worst, abs(f0.values[p0] - avg))
    if details:
        return worst, n_cmp, n_skip
    return worst


def conditional_F_restricted(d, prefix, q=2.0):
    """Observable conditional on a prefix, computed in the full domain.

    Sums passage weights over the full-domain states compatible with the
    prefix's decided bits, at every point the prefix did not touch; the
    winding is measured from the sink so no re-basing is needed.  Returns
    {geometry key: value} with exact cyclotomic values at q = 2.  This is
    the independent route against which the slit-domain observable is
    tested.
    """
    from . import config
    decided = prefix.decided_map()
    touched = {pid for pid, _ in prefix_passages(d, prefix)}
    exact = q == 2.0
    sq = math.sqrt(q)
    num = {}
    den = Cyclo16.zero() if exact else 0.0
    for idx in range(1 << d.n_bits):
        if any((idx >> k) & 1 != bit for k, bit in decided.items()):
            continue
        st = config.BondState.from_index(d, idx)
        dec = config.decompose(st)
        w = Cyclo16.sqrt2_pow(dec.n_loops) if exact else sq**dec.n_loops
        den = den + w
        for p in dec.passages:
            if p.point in touched:
                continue
            m_rel = p.m - 2 * dec.tb
            contrib = (Cyclo16.zeta_pow(m_rel) * w if exact
                       else w * cmath.exp(-1j * spin_exponent(q) * m_rel
                                          * math.pi / 4.0))
            key = geo_key(d, p.point)
            num[key] = num.get(key, Cyclo16.zero() if exact else 0.0) + contrib
    inv = den.inverse() if exact else 1.0 / den
    out = {}
    sig_factor = TWO_COS_PI8 if exact else corner_norm(q)
    for key, s in num.items():
        val = s * inv
        if key[0] == KIND_CORNER:
            val = val * sig_factor
        out[key] = val
    return out

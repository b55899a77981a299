"""Metropolis Monte Carlo over bond configurations, plus the exhaustive
state scan used by exact enumeration.

The target measure is (sqrt q)^{#loops} at the self-dual point.  A proposal
toggles one flippable vertex; the loop-count change is found by a lockstep
walk along the two affected strands (no global connectivity query), and the
move is accepted with probability min(1, sqrt(q)^delta).

All hot paths are numba kernels over the flat successor tables produced by
``MedialDomain.tables``; the python-level ``metropolis_sweep`` mirrors the
kernel draw-for-draw so both paths generate identical chains from the same
seed.  Randomness comes from a hand-rolled xoshiro256++ seeded through
splitmix64, so streams are reproducible across platforms; per-chain streams
are derived as seed + chain index.

Interface measurements accumulate, per registry point, the running sums of
cos and sin of the winding phase (the fermion numerator), the passage
counts, and optionally the wired-arc connectivity of the center black face
(a union-find over the open cluster bonds).
"""

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import config
from .config import BondState

_U64 = np.uint64
_INV53 = 1.0 / 9007199254740992.0  # 2^-53

# -- reproducible RNG: splitmix64 seeding, xoshiro256++ stream -------------


@njit(cache=True, nogil=True)
def rng_seed(rng, seed):
    """Fill a 4-word xoshiro256++ state from a 64-bit seed via splitmix64."""
    s = _U64(seed)
    for i in range(4):
        s = s + _U64(0x9E3779B97F4A7C15)
        z = s
        z = (z ^ (z >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> _U64(27))) * _U64(0x94D049BB133111EB)
        rng[i] = z ^ (z >> _U64(31))


@njit(cache=True, nogil=True)
def rng_next(rng):
    """Advance the xoshiro256++ state and return the next 64-bit word."""
    s0, s1, s2, s3 = rng[0], rng[1], rng[2], rng[3]
    tmp = s0 + s3
    out = ((tmp << _U64(23)) | (tmp >> _U64(41))) + s0
    t = s1 << _U64(17)
    s2 = s2 ^ s0
    s3 = s3 ^ s1
    s1 = s1 ^ s2
    s0 = s0 ^ s3
    s2 = s2 ^ t
    s3 = (s3 << _U64(45)) | (s3 >> _U64(19))
    rng[0], rng[1], rng[2], rng[3] = s0, s1, s2, s3
    return out


@njit(cache=True, nogil=True)
def init_bits(bits, rng):
    for k in range(bits.shape[0]):
        bits[k] = np.uint8(rng_next(rng) & _U64(1))


# -- loop-count delta by lockstep walk --------------------------------------


@njit(cache=True, nogil=True)
def toggle_delta_kernel(out0, out1, vbit, fin1, fin2, bits, k, b_id, n_edges):
    """Loop-count change if bit k were flipped; 0 signals a broken walk.

    Two walkers start on the successors of k's in-strands under the current
    pairing and advance in lockstep.  The first arrival back at an in-strand
    decides: own strand means the toggle merges two curves (-1), the other
    strand means it splits one (+1).  A walker that reaches the sink mark
    drops out; the surviving walker always decides.
    """
    i1 = fin1[k]
    i2 = fin2[k]
    if bits[k] == 1:
        c0 = out1[i1]
        c1 = out1[i2]
    else:
        c0 = out0[i1]
        c1 = out0[i2]
    alive0 = True
    alive1 = True
    for _ in range(2 * n_edges + 8):
        if alive0:
            e = c0
            if e == b_id:
                alive0 = False
            else:
                vb = vbit[e]
                if vb >= 0 and bits[vb] == 1:
                    nxt = out1[e]
                else:
                    nxt = out0[e]
                if nxt == i1:
                    return -1
                if nxt == i2:
                    return 1
                c0 = nxt
        if alive1:
            e = c1
            if e == b_id:
                alive1 = False
            else:
                vb = vbit[e]
                if vb >= 0 and bits[vb] == 1:
                    nxt = out1[e]
                else:
                    nxt = out0[e]
                if nxt == i2:
                    return -1
                if nxt == i1:
                    return 1
                c1 = nxt
        if not (alive0 or alive1):
            return 0
    return 0


# -- union-find (cluster connectivity for the magnetization observable) -----


@njit(cache=True, nogil=True)
def _uf_find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True, nogil=True)
def _uf_union(parent, x, y):
    rx = _uf_find(parent, x)
    ry = _uf_find(parent, y)
    if rx != ry:
        parent[rx] = ry


# -- the Markov chain kernel -------------------------------------------------


@njit(cache=True, nogil=True)
def mc_run(out0, out1, turn0, turn1, cpid0, cpid1, vbit, epid, fin1, fin2,
           b_id, a_id, n_edges, sqrt_q, bits, rng, perm, sweeps,
           measure_every, cos_tab, sin_tab, acc_cos, acc_sin, acc_hits,
           mag_on, pb1, pb2, sb1, sb2, wired, center_face, parent, mag_out):
    """Run `sweeps` Metropolis sweeps, measuring every `measure_every`-th.

    Returns (status, n_measurements, tb): status 0 is success, 1 a failed
    lockstep walk, 2 a runaway interface trace, 3 a drifting winding at the
    sink (all of which indicate corrupt tables and are raised by callers).
    """
    n_bits = bits.shape[0]
    inv_sq = 1.0 / sqrt_q
    n_meas = 0
    tb_seen = -(1 << 30)
    for sweep in range(sweeps):
        for i in range(n_bits):
            perm[i] = i
        for i in range(n_bits - 1, 0, -1):
            j = int(rng_next(rng) % _U64(i + 1))
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp
        for idx in range(n_bits):
            k = perm[idx]
            d = toggle_delta_kernel(out0, out1, vbit, fin1, fin2, bits, k,
                                    b_id, n_edges)
            if d == 0:
                return 1, n_meas, tb_seen
            if d > 0:
                accept = True if sqrt_q >= 1.0 else (
                    (rng_next(rng) >> _U64(11)) * _INV53 < sqrt_q)
            else:
                accept = True if sqrt_q <= 1.0 else (
                    (rng_next(rng) >> _U64(11)) * _INV53 < inv_sq)
            if accept:
                bits[k] ^= np.uint8(1)
        if measure_every <= 0 or (sweep + 1) % measure_every != 0:
            continue
        # retrace the interface, accumulating the winding phase per point
        e = a_id
        tq = 0
        p = epid[e]
        acc_cos[p] += cos_tab[0]
        acc_sin[p] += sin_tab[0]
        acc_hits[p] += 1
        guard = 0
        while e != b_id:
            vb = vbit[e]
            if vb >= 0 and bits[vb] == 1:
                nxt = out1[e]
                t = turn1[e]
                cp = cpid1[e]
            else:
                nxt = out0[e]
                t = turn0[e]
                cp = cpid0[e]
            if t != 0:
                mm = (2 * tq + t) % 16
                acc_cos[cp] += cos_tab[mm]
                acc_sin[cp] += sin_tab[mm]
                acc_hits[cp] += 1
                tq += t
            e = nxt
            mm = (2 * tq) % 16
            p = epid[e]
            acc_cos[p] += cos_tab[mm]
            acc_sin[p] += sin_tab[mm]
            acc_hits[p] += 1
            guard += 1
            if guard > 2 * n_edges + 4:
                return 2, n_meas, tb_seen
        if tb_seen < -(1 << 29):
            tb_seen = tq
        elif tb_seen != tq:
            return 3, n_meas, tb_seen
        if mag_on == 1:
            nfp = parent.shape[0]
            for i in range(nfp):
                parent[i] = i
            ghost = nfp - 1
            for i in range(wired.shape[0]):
                _uf_union(parent, wired[i], ghost)
            for i in range(sb1.shape[0]):
                _uf_union(parent, sb1[i], sb2[i])
            for k in range(n_bits):
                if bits[k] == 1:
                    _uf_union(parent, pb1[k], pb2[k])
            if _uf_find(parent, center_face) == _uf_find(parent, ghost):
                mag_out[0] += 1
        n_meas += 1
    return 0, n_meas, tb_seen


# -- exhaustive scan (the enumeration backend) -------------------------------


@njit(cache=True, nogil=True)
def scan_all_states(out0, out1, turn0, turn1, cpid0, cpid1, vbit, epid,
                    n_bits, n_edges, a_id, b_id, n_points, m_size, m_off,
                    kmax):
    """Visit every bond configuration once, in plain integer order.

    For each state: trace the interface recording (point, winding) passages,
    count the closed loops, and bin every passage into
    ``counters[point, winding + m_off, loops]``.  Also returns the loop-count
    histogram, the loop count per state, and the sink winding per state.
    """
    n_states = 1 << n_bits
    counters = np.zeros((n_points, m_size, kmax), dtype=np.int64)
    z_by_loops = np.zeros(kmax, dtype=np.int64)
    loops = np.zeros(n_states, dtype=np.int8)
    tbs = np.zeros(n_states, dtype=np.int16)
    stamp = np.full(n_edges, -1, dtype=np.int64)
    pbuf_pid = np.empty(2 * n_edges + 4, dtype=np.int64)
    pbuf_m = np.empty(2 * n_edges + 4, dtype=np.int64)
    for s in range(n_states):
        e = a_id
        tq = 0
        npass = 0
        pbuf_pid[npass] = epid[e]
        pbuf_m[npass] = 0
        npass += 1
        stamp[e] = s
        guard = 0
        while e != b_id:
            vb = vbit[e]
            if vb >= 0 and ((s >> vb) & 1) == 1:
                nxt = out1[e]
                t = turn1[e]
                cp = cpid1[e]
            else:
                nxt = out0[e]
                t = turn0[e]
                cp = cpid0[e]
            if t != 0:
                pbuf_pid[npass] = cp
                pbuf_m[npass] = 2 * tq + t
                npass += 1
                tq += t
            e = nxt
            stamp[e] = s
            pbuf_pid[npass] = epid[e]
            pbuf_m[npass] = 2 * tq
            npass += 1
            guard += 1
            if guard > 2 * n_edges + 4:
                raise RuntimeError("interface trace did not terminate")
        tbs[s] = np.int16(tq)
        k = 0
        for e0 in range(n_edges):
            if stamp[e0] == s:
                continue
            k += 1
            e = e0
            guard = 0
            while True:
                stamp[e] = s
                vb = vbit[e]
                if vb >= 0 and ((s >> vb) & 1) == 1:
                    e = out1[e]
                else:
                    e = out0[e]
                if e == e0:
                    break
                guard += 1
                if guard > 2 * n_edges:
                    raise RuntimeError("loop trace did not terminate")
        if k >= kmax:
            raise ValueError("loop count exceeded the counter capacity")
        loops[s] = np.int8(k)
        z_by_loops[k] += 1
        for i in range(npass):
            counters[pbuf_pid[i], pbuf_m[i] + m_off, k] += 1
    return counters, z_by_loops, loops, tbs


# -- python-level chain API ---------------------------------------------------


def _trig_tables():
    m = np.arange(16)
    return np.cos(np.pi * m / 8.0), -np.sin(np.pi * m / 8.0)


def thread_count(explicit=None):
    """Worker count: explicit arg, else FKLAB_THREADS (or the legacy
    FERMILAB_THREADS spelling), else cpu count."""
    if explicit:
        return max(1, int(explicit))
    env = os.environ.get("FKLAB_THREADS") or os.environ.get("FERMILAB_THREADS")
    if env:
        return max(1, int(env))
    return max(1, min(8, os.cpu_count() or 1))


@dataclass
class ChainState:
    """One Markov chain: bond state, its loop decomposition, RNG, clock."""

    state: BondState
    decomposition: object
    rng: np.ndarray
    sweeps_done: int = 0

    @staticmethod
    def fresh(domain, seed):
        rng = np.zeros(4, dtype=np.uint64)
        rng_seed(rng, _U64(int(seed) & 0xFFFFFFFFFFFFFFFF))
        state = BondState.all_closed(domain)
        if domain.n_bits:
            init_bits(state.bits, rng)
        return ChainState(state, config.decompose(state), rng, 0)


def metropolis_sweep(d, c, q):
    """One sweep: propose a toggle at every flippable vertex in random order.

    Pure-python reference path; draw-for-draw identical to the compiled
    kernel, so both produce the same chain from the same seed.  The cached
    decomposition is refreshed after every accepted move.
    """
    if not 0.0 < q <= 4.0:
        raise ValueError("q must lie in (0, 4]")
    sq = math.sqrt(q)
    n = d.n_bits
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng_next(c.rng) % _U64(i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    for k in perm:
        delta = config.toggle_delta(c.state, k)  # flips bit k
        if delta > 0:
            accept = True if sq >= 1.0 else (
                (int(rng_next(c.rng)) >> 11) * _INV53 < sq)
        else:
            accept = True if sq <= 1.0 else (
                (int(rng_next(c.rng)) >> 11) * _INV53 < 1.0 / sq)
        if accept:
            c.decomposition = config.decompose(c.state)
        else:
            c.state.flip(k)  # revert
    c.sweeps_done += 1
    return c


@dataclass
class Accumulator:
    """Batched per-point sums of interface measurements.

    Holds one row per batch so merging is plain concatenation: associative,
    commutative up to row order, and order-independent in every estimate.
    """

    domain_hash: str
    q: float
    tb: int
    batch_n: np.ndarray        # measurements per batch
    batch_cos: np.ndarray      # [batch, point] winding-phase cosine sums
    batch_sin: np.ndarray
    batch_hits: np.ndarray     # [batch, point] passage counts
    batch_mag: np.ndarray = field(default=None)  # [batch] wired-connectivity

    @property
    def n(self):
        return int(self.batch_n.sum())

    @property
    def n_batches(self):
        return len(self.batch_n)

    def merge(self, other):
        if (self.domain_hash != other.domain_hash or self.q != other.q
                or self.tb != other.tb):
            raise ValueError("accumulators come from different runs")
        mag = None
        if self.batch_mag is not None and other.batch_mag is not None:
            mag = np.concatenate([self.batch_mag, other.batch_mag])
        return Accumulator(self.domain_hash, self.q, self.tb,
                           np.concatenate([self.batch_n, other.batch_n]),
                           np.vstack([self.batch_cos, other.batch_cos]),
                           np.vstack([self.batch_sin, other.batch_sin]),
                           np.vstack([self.batch_hits, other.batch_hits]),
                           mag)

    def point_estimates(self):
        """(F_hat, se_re, se_im) per registry point.

        The estimate is the mean winding phase rotated by the constant sink
        twist, so it matches the exact observable point for point.  Errors
        are batch-mean standard errors (requires >= 2 batches).
        """
        nb = self.n_batches
        nn = self.batch_n[:, None].astype(float)
        twist = complex(math.cos(math.pi * self.tb / 4.0),
                        math.sin(math.pi * self.tb / 4.0))
        bm = (self.batch_cos + 1j * self.batch_sin) / nn * twist
        f_hat = (self.batch_cos.sum(0) + 1j * self.batch_sin.sum(0)) \
            / self.batch_n.sum() * twist
        se_re = bm.real.std(axis=0, ddof=1) / math.sqrt(nb)
        se_im = bm.imag.std(axis=0, ddof=1) / math.sqrt(nb)
        return f_hat, se_re, se_im

    def hit_prob(self):
        """(p, se) per registry point: probability the curve passes it."""
        rates = self.batch_hits / self.batch_n[:, None].astype(float)
        p = self.batch_hits.sum(0) / self.batch_n.sum()
        se = rates.std(axis=0, ddof=1) / math.sqrt(self.n_batches)
        return p, se

    def mag_prob(self):
        """(p, se): probability the center black face joins the wired arc."""
        if self.batch_mag is None:
            raise ValueError("magnetization was not recorded")
        rates = self.batch_mag / self.batch_n.astype(float)
        p = float(self.batch_mag.sum()) / self.batch_n.sum()
        se = float(rates.std(ddof=1)) / math.sqrt(self.n_batches)
        return p, se


def center_black_face(domain):
    """Black face nearest the bounding-box center (deterministic)."""
    cx2 = float(domain.vx.min() + domain.vx.max())
    cy2 = float(domain.vy.min() + domain.vy.max())
    best, best_key = -1, None
    for f in range(domain.n_faces):
        if not domain.fblack[f]:
            continue
        d2 = (2 * domain.ffi[f] + 1 - cx2) ** 2 + \
             (2 * domain.ffj[f] + 1 - cy2) ** 2
        key = (d2, int(domain.ffj[f]), int(domain.ffi[f]))
        if best_key is None or key < best_key:
            best, best_key = f, key
    return best


_DUMMY = np.zeros(1, dtype=np.int64)


def _mag_arrays(domain, enabled):
    if not enabled:
        return 0, _DUMMY, _DUMMY, _DUMMY, _DUMMY, _DUMMY, 0, \
            np.zeros(2, dtype=np.int64)
    pb1, pb2, sb1, sb2 = domain.primal_adjacency
    wired = np.asarray(domain.boundary_arcs()[0], dtype=np.int64)
    center = center_black_face(domain)
    parent = np.empty(domain.n_faces + 1, dtype=np.int64)
    return 1, pb1, pb2, sb1, sb2, wired, center, parent


_MC_STATUS = {1: "lockstep toggle walk failed",
              2: "interface trace did not terminate",
              3: "sink winding changed between measurements"}


def run_chain(d, q=2.0, sweeps=20000, burnin=None, seed=0,
              observables=("fermion", "hits"), measure_every=1,
              n_batches=32):
    """Run one chain and return its measurement Accumulator.

    Deterministic given the seed.  Burn-in defaults to 10% of sweeps; the
    post-burn-in sweeps are split into equal batches (default 32) for error
    bars, with any remainder dropped.
    """
    if not 0.0 < q <= 4.0:
        raise ValueError("q must lie in (0, 4]")
    if burnin is None:
        burnin = sweeps // 10
    if not sweeps > burnin >= 0:
        raise ValueError("need sweeps > burnin >= 0")
    t = d.tables
    arrs = (t.out0, t.out1, t.turn0, t.turn1, t.cpid0, t.cpid1, t.vbit,
            t.epid, t.fin1, t.fin2)
    mag_requested = "magnetization" in observables
    mag_on, pb1, pb2, sb1, sb2, wired, center, parent = \
        _mag_arrays(d, mag_requested)
    cos_tab, sin_tab = _trig_tables()
    rng = np.zeros(4, dtype=np.uint64)
    rng_seed(rng, _U64(int(seed) & 0xFFFFFFFFFFFFFFFF))
    bits = np.zeros(d.n_bits, dtype=np.uint8)
    init_bits(bits, rng)
    perm = np.arange(d.n_bits, dtype=np.int64)
    sq = math.sqrt(q)

    batch_sweeps = (sweeps - burnin) // n_batches
    if batch_sweeps < measure_every:
        raise ValueError("not enough sweeps for the requested batch count")

    acc_cos = np.zeros(d.n_points)
    acc_sin = np.zeros(d.n_points)
    acc_hits = np.zeros(d.n_points, dtype=np.int64)
    mag_out = np.zeros(1, dtype=np.int64)

    def call(nsweeps, every):
        return mc_run(*arrs, d.b_edge, d.a_edge, d.n_edges, sq, bits, rng,
                      perm, nsweeps, every, cos_tab, sin_tab, acc_cos,
                      acc_sin, acc_hits, mag_on, pb1, pb2, sb1, sb2, wired,
                      center, parent, mag_out)

    if burnin:
        status, _, _ = call(burnin, 0)
        if status:
            raise RuntimeError(_MC_STATUS[status])

    bn = np.zeros(n_batches, dtype=np.int64)
    bcos = np.zeros((n_batches, d.n_points))
    bsin = np.zeros((n_batches, d.n_points))
    bhits = np.zeros((n_batches, d.n_points), dtype=np.int64)
    bmag = np.zeros(n_batches, dtype=np.int64) if mag_requested else None
    tb = None
    for ib in range(n_batches):
        acc_cos[:] = 0.0
        acc_sin[:] = 0.0
        acc_hits[:] = 0
        mag_out[0] = 0
        status, n_meas, tb_b = call(batch_sweeps, measure_every)
        if status:
            raise RuntimeError(_MC_STATUS[status])
        if tb is None:
            tb = int(tb_b)
        elif tb != int(tb_b):
            raise RuntimeError(_MC_STATUS[3])
        bn[ib] = n_meas
        bcos[ib] = acc_cos
        bsin[ib] = acc_sin
        bhits[ib] = acc_hits
        if mag_requested:
            bmag[ib] = mag_out[0]
    acc = Accumulator(d.content_hash(), float(q), tb, bn, bcos, bsin, bhits,
                      bmag)
    _warn_if_unconverged(acc)
    return acc


def _warn_if_unconverged(acc):
    """Batch-mean disagreement heuristic; warns, never fails."""
    nb = acc.n_batches
    if nb < 4 or acc.n == 0:
        return
    half = nb // 2
    a = acc.batch_hits[:half].sum(0) / max(1, acc.batch_n[:half].sum())
    b = acc.batch_hits[half:].sum(0) / max(1, acc.batch_n[half:].sum())
    _, se = acc.hit_prob()
    z = np.abs(a - b) / np.maximum(se, 1e-12)
    bad = int((z > 8.0).sum())
    if bad > max(2, acc.batch_hits.shape[1] // 20):
        warnings.warn(
            f"batch means disagree at {bad} points; the chain may not have "
            f"equilibrated", RuntimeWarning)


def run_chains(d, q=2.0, sweeps=20000, burnin=None, seed=0, chains=4,
               threads=None, observables=("fermion", "hits"),
               measure_every=1, n_batches=32):
    """Independent chains in parallel, merged in chain order.

    Chain i uses stream seed + i; merging is deterministic regardless of
    completion order, so results are reproducible for fixed arguments.
    """
    if chains < 1:
        raise ValueError("need at least one chain")
    nb = max(2, n_batches // chains)
    args = [(d, q, sweeps, burnin, seed + i, observables, measure_every, nb)
            for i in range(chains)]
    if chains == 1:
        accs = [run_chain(*args[0])]
    else:
        with ThreadPoolExecutor(max_workers=thread_count(threads)) as pool:
            accs = list(pool.map(lambda a: run_chain(*a), args))
    out = accs[0]
    for a in accs[1:]:
        out = out.merge(a)
    return out


# -- mesh-family observables --------------------------------------------------


def _loglog_fit(xs, ys):
    lx = np.log(np.asarray(xs, dtype=float))
    ly = np.log(np.asarray(ys, dtype=float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, res, _, _ = np.linalg.lstsq(A, ly, rcond=None)
    dof = max(1, len(xs) - 2)
    rss = float(res[0]) if len(res) else float(((A @ coef - ly) ** 2).sum())
    var = rss / dof / float(((lx - lx.mean()) ** 2).sum())
    return float(coef[0]), math.sqrt(var), float(coef[1])


@dataclass
class MeshCurve:
    """Per-mesh probability estimates with a log-log slope fit."""

    rows: list
    slope: float
    slope_se: float
    intercept: float

    def table(self):
        return [(r["mesh"], r["prob"], r["se"]) for r in self.rows]


def square_family(a_loc="top", b_loc="bottom"):
    """Unit-square domain family: mesh N -> N x N faces, delta = 1/N."""
    from .lattice import build_rect_domain

    def make(n):
        return build_rect_domain(n, n, a_loc, b_loc, delta=1.0 / n)

    return make


def estimate_edge_prob_curve(family, meshes, q=2.0, sweeps=10**5, seed=0,
                             chains=4, threads=None):
    """P(center edge on the interface) per mesh, with a log-log slope fit.

    `family` maps a mesh size to a domain (see ``square_family``); `meshes`
    must be increasing.
    """
    if list(meshes) != sorted(set(meshes)):
        raise ValueError("meshes must be strictly increasing")
    rows = []
    for n in meshes:
        dom = family(n)
        acc = run_chains(dom, q=q, sweeps=sweeps, seed=seed, chains=chains,
                         threads=threads)
        p, se = acc.hit_prob()
        e = dom.center_edge()
        rows.append({"mesh": int(n), "delta": float(dom.delta),
                     "prob": float(p[e]), "se": float(se[e]), "n": acc.n})
    slope, slope_se, icept = _loglog_fit([r["mesh"] for r in rows],
                                         [max(r["prob"], 1e-300) for r in rows])
    return MeshCurve(rows, slope, slope_se, icept)


def estimate_magnetization_curve(family, meshes, q=2.0, sweeps=10**5, seed=0,
                                 chains=4, threads=None):
    """P(center black face joins the wired arc) per mesh, with slope fit."""
    if list(meshes) != sorted(set(meshes)):
        raise ValueError("meshes must be strictly increasing")
    rows = []
    for n in meshes:
        dom = family(n)
        acc = run_chains(dom, q=q, sweeps=sweeps, seed=seed, chains=chains,
                         threads=threads,
                         observables=("fermion", "hits", "magnetization"))
        p, se = acc.mag_prob()
        rows.append({"mesh": int(n), "delta": float(dom.delta),
                     "prob": float(p), "se": float(se), "n": acc.n})
    slope, slope_se, icept = _loglog_fit([r["mesh"] for r in rows],
                                         [max(r["prob"], 1e-300) for r in rows])
    return MeshCurve(rows, slope, slope_se, icept)

"""Bond states, curve decompositions and winding bookkeeping.

A bond state assigns one bit to every flippable (degree-4) vertex: 1 opens
the primal chord between the two black faces, 0 the dual chord.  The strands
then concatenate into one interface from a to b plus disjoint loops, all
traversed with black on the left.  This module holds the readable reference
walks; sampler.py carries numba twins of each, and the tests assert they
agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class BondState:
    """Mutable assignment of one bond bit per flippable vertex."""

    __slots__ = ("domain", "bits")

    def __init__(self, domain, bits):
        bits = np.ascontiguousarray(bits, dtype=np.uint8)
        if bits.shape != (domain.n_bits,):
            raise ValueError("bit vector length mismatch")
        self.domain = domain
        self.bits = bits

    @staticmethod
    def all_closed(domain) -> "BondState":
        return BondState(domain, np.zeros(domain.n_bits, dtype=np.uint8))

    @staticmethod
    def all_open(domain) -> "BondState":
        return BondState(domain, np.ones(domain.n_bits, dtype=np.uint8))

    @staticmethod
    def random(domain, rng) -> "BondState":
        return BondState(domain, rng.integers(0, 2, size=domain.n_bits).astype(np.uint8))

    @staticmethod
    def from_index(domain, idx: int) -> "BondState":
        bits = np.array([(idx >> k) & 1 for k in range(domain.n_bits)], dtype=np.uint8)
        return BondState(domain, bits)

    def index(self) -> int:
        return int(sum(int(b) << k for k, b in enumerate(self.bits)))

    def copy(self) -> "BondState":
        return BondState(self.domain, self.bits.copy())

    def flip(self, k: int):
        self.bits[k] ^= 1

    def open_fraction(self) -> float:
        return float(self.bits.mean()) if self.bits.size else 0.0

    def to_token(self) -> str:
        """Portable text form, prefixed by the domain's content hash."""
        return f"{self.domain.content_hash()}:{self.domain.n_bits}:{self.index():x}"

    @staticmethod
    def from_token(domain, token: str) -> "BondState":
        h, nb, ix = token.split(":")
        if h != domain.content_hash():
            raise ValueError("state token belongs to a different domain")
        if int(nb) != domain.n_bits:
            raise ValueError("state token has the wrong bond count")
        return BondState.from_index(domain, int(ix, 16))

    def __eq__(self, other):
        return (isinstance(other, BondState) and self.domain is other.domain
                and np.array_equal(self.bits, other.bits))

    def __repr__(self):
        return f"BondState({''.join(str(int(b)) for b in self.bits)})"


@dataclass(frozen=True)
class Passage:
    """One interface passage: a registry point and its winding index m
    (eighth-turns accumulated since a, which starts at m = 0)."""

    point: int
    m: int


@dataclass
class LoopDecomposition:
    """Interface walk plus the loop partition of one bond state."""

    n_loops: int
    interface_edges: list
    transits: list
    passages: list
    tb: int
    loop_edges: list
    loop_turns: list


def _succ(domain, bits, e):
    """(next edge, quarter-turn, corner point) after transiting head(e)."""
    t = domain.tables
    vb = t.vbit[e]
    if vb >= 0 and bits[vb]:
        return int(t.out1[e]), int(t.turn1[e]), int(t.cpid1[e])
    return int(t.out0[e]), int(t.turn0[e]), int(t.cpid0[e])


def decompose(state: BondState) -> LoopDecomposition:
    """Trace the interface a->b and the loops of a bond state.

    Every edge is traversed exactly once across the interface and the loops
    (asserted); each loop's net turning is +-4 quarter turns.
    """
    dom = state.domain
    bits = state.bits
    n_edges = dom.n_edges
    seen = np.zeros(n_edges, dtype=bool)

    e = dom.a_edge
    seen[e] = True
    tq = 0
    passages = [Passage(int(dom.tables.epid[e]), 0)]
    interface = [e]
    transits = []
    for _ in range(2 * n_edges + 4):
        if e == dom.b_edge:
            break
        transits.append(int(dom.head[e]))
        nxt, t, cp = _succ(dom, bits, e)
        if t:
            passages.append(Passage(cp, 2 * tq + t))
        tq += t
        e = nxt
        if seen[e]:
            raise AssertionError("interface revisited an edge")
        seen[e] = True
        interface.append(e)
        passages.append(Passage(int(dom.tables.epid[e]), 2 * tq))
    else:
        raise AssertionError("interface walk did not reach b")
    tb = tq

    loop_edges, loop_turns = [], []
    for e0 in range(n_edges):
        if seen[e0]:
            continue
        cyc = [e0]
        seen[e0] = True
        tq = 0
        e = e0
        for _ in range(2 * n_edges + 4):
            nxt, t, _ = _succ(dom, bits, e)
            tq += t
            if nxt == e0:
                break
            if seen[nxt]:
                raise AssertionError("loop walk collided with another curve")
            seen[nxt] = True
            cyc.append(nxt)
            e = nxt
        else:
            raise AssertionError("loop walk did not close")
        if tq not in (4, -4):
            raise AssertionError(f"loop has net turning {tq}, expected +-4")
        loop_edges.append(cyc)
        loop_turns.append(tq)

    return LoopDecomposition(n_loops=len(loop_edges), interface_edges=interface,
                             transits=transits, passages=passages, tb=tb,
                             loop_edges=loop_edges, loop_turns=loop_turns)


@dataclass(frozen=True)
class WindingEntry:
    """Interface passage with both the raw winding m and the value m_rel
    = m - m(b) that the observable weights; m_rel is 0 at b."""

    point: int
    m: int
    m_rel: int


def winding(domain, state: BondState) -> list:
    """Passage-by-passage winding table of the interface of `state`."""
    dec = decompose(state)
    return [WindingEntry(p.point, p.m, p.m - 2 * dec.tb) for p in dec.passages]


def loop_weight(state: BondState, q: float = 2.0, exact: bool = False):
    """(sqrt q)^(number of loops); exact Cyclo16 when exact=True (q=2 only)."""
    k = decompose(state).n_loops
    if exact:
        if q != 2.0:
            raise ValueError("exact weights only at q = 2")
        from .exact import Cyclo16

        return Cyclo16.sqrt2_pow(k)
    import math

    return math.sqrt(q) ** k


def toggle_delta(state: BondState, k: int) -> int:
    """Flip bond k in place and return the loop-count change (always +-1).

    Decided by a lockstep walk: the two strand pairs at the vertex are cut
    open and both outgoing strands are followed forward; whichever first
    returns to an incoming strand of the vertex tells whether the toggle
    merges two curves (-1) or splits one (+1).  A walk that runs into b
    goes dead and leaves the decision to the other.
    """
    dom = state.domain
    t = dom.tables
    bits = state.bits
    i1, i2 = int(t.fin1[k]), int(t.fin2[k])
    out = t.out1 if bits[k] else t.out0
    cur = [int(out[i1]), int(out[i2])]
    alive = [True, True]

    delta = 0
    for _ in range(2 * dom.n_edges + 8):
        if delta:
            break
        if not (alive[0] or alive[1]):
            raise AssertionError("both toggle walks ended undecided")
        for w in (0, 1):
            if not alive[w]:
                continue
            e = cur[w]
            if e == dom.b_edge:
                alive[w] = False
                continue
            nxt, _, _ = _succ(dom, bits, e)
            if nxt == i1:
                delta = -1 if w == 0 else 1
                break
            if nxt == i2:
                delta = 1 if w == 0 else -1
                break
            cur[w] = nxt
    if delta == 0:
        raise AssertionError("toggle walk exceeded its step bound")
    bits[k] ^= 1
    return delta

"""Exact arithmetic in Q(zeta_16) and exact loop-ensemble enumeration.

The primitive root used everywhere is zeta = exp(-i*pi/8), so that the
half-winding passage weight of the interface observable is a plain power
of zeta and every quantity the identity suite touches (sqrt(2),
2*cos(pi/8), the projection lines exp(i*k*pi/8)) lives in Z[zeta]/(zeta^8+1)
with rational coefficients.  Equality checks on this field are literal,
not toleranced.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

_ZERO8 = (Fraction(0),) * 8


class Cyclo16:
    """Element of Q(zeta_16) with zeta = exp(-i*pi/8), basis 1..zeta^7."""

    __slots__ = ("c",)

    def __init__(self, coeffs: Sequence[Fraction | int] = _ZERO8):
        if len(coeffs) != 8:
            raise ValueError("Cyclo16 needs exactly 8 coefficients")
        self.c = tuple(Fraction(x) for x in coeffs)

    # -- constructors -------------------------------------------------

    @staticmethod
    def zero() -> "Cyclo16":
        return _C_ZERO

    @staticmethod
    def one() -> "Cyclo16":
        return _C_ONE

    @staticmethod
    def from_rational(x) -> "Cyclo16":
        return Cyclo16((Fraction(x), 0, 0, 0, 0, 0, 0, 0))

    @staticmethod
    def zeta_pow(m: int) -> "Cyclo16":
        """zeta^m for any integer m (zeta^8 = -1, zeta^16 = 1)."""
        m %= 16
        sign = 1 if m < 8 else -1
        coeffs = [Fraction(0)] * 8
        coeffs[m % 8] = Fraction(sign)
        return Cyclo16(coeffs)

    @staticmethod
    def sqrt2_pow(k: int) -> "Cyclo16":
        """sqrt(2)**k, exact (k >= 0)."""
        if k < 0:
            raise ValueError("negative power")
        half, odd = divmod(k, 2)
        out = Cyclo16.from_rational(Fraction(2) ** half)
        return out * SQRT2 if odd else out

    # -- ring operations ----------------------------------------------

    def __add__(self, other: "Cyclo16") -> "Cyclo16":
        return Cyclo16(tuple(a + b for a, b in zip(self.c, other.c)))

    def __sub__(self, other: "Cyclo16") -> "Cyclo16":
        return Cyclo16(tuple(a - b for a, b in zip(self.c, other.c)))

    def __neg__(self) -> "Cyclo16":
        return Cyclo16(tuple(-a for a in self.c))

    def __mul__(self, other) -> "Cyclo16":
        if isinstance(other, (int, Fraction)):
            q = Fraction(other)
            return Cyclo16(tuple(a * q for a in self.c))
        out = [Fraction(0)] * 8
        for i, a in enumerate(self.c):
            if not a:
                continue
            for j, b in enumerate(other.c):
                if not b:
                    continue
                k = i + j
                if k < 8:
                    out[k] += a * b
                else:
                    out[k - 8] -= a * b
        return Cyclo16(out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Cyclo16":
        if n < 0:
            return (self ** (-n)).inverse()
        out, base = _C_ONE, self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    def __truediv__(self, other) -> "Cyclo16":
        if isinstance(other, (int, Fraction)):
            q = Fraction(other)
            return Cyclo16(tuple(a / q for a in self.c))
        return self * other.inverse()

    def galois(self, k: int) -> "Cyclo16":
        """Field automorphism zeta -> zeta^k (k odd)."""
        out = [Fraction(0)] * 8
        for j, a in enumerate(self.c):
            if not a:
                continue
            m = (j * k) % 16
            if m < 8:
                out[m] += a
            else:
                out[m - 8] -= a
        return Cyclo16(out)

    def inverse(self) -> "Cyclo16":
        if self == _C_ZERO:
            raise ZeroDivisionError("inverse of zero in Q(zeta_16)")
        prod = _C_ONE
        for k in (3, 5, 7, 9, 11, 13, 15):
            prod = prod * self.galois(k)
        norm = self * prod
        if any(norm.c[i] for i in range(1, 8)):
            raise ArithmeticError("field norm is not rational")
        return prod / norm.c[0]

    def conj(self) -> "Cyclo16":
        """Complex conjugate (zeta -> zeta^15 = conj(zeta))."""
        return self.galois(15)

    def abs2(self) -> "Cyclo16":
        """Squared modulus, an exact real element."""
        return self * self.conj()

    # -- predicates / export ------------------------------------------

    def is_real(self) -> bool:
        return self == self.conj()

    def is_zero(self) -> bool:
        return not any(self.c)

    def embed(self) -> complex:
        """Numerical embedding with zeta = exp(-i*pi/8)."""
        return sum(float(a) * _EMBED[j] for j, a in enumerate(self.c) if a)

    def real_float(self) -> float:
        """Float value of a real element (raises if not real)."""
        if not self.is_real():
            raise ValueError("element is not real")
        return self.embed().real

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = Cyclo16.from_rational(other)
        return isinstance(other, Cyclo16) and self.c == other.c

    def __hash__(self):
        return hash(self.c)

    def __repr__(self):
        terms = [f"{a}*z^{j}" if j else f"{a}" for j, a in enumerate(self.c) if a]
        return "Cyclo16(" + (" + ".join(terms) if terms else "0") + ")"


_C_ZERO = Cyclo16()
_C_ONE = Cyclo16((1, 0, 0, 0, 0, 0, 0, 0))
_EMBED = [complex(math.cos(-math.pi * j / 8), math.sin(-math.pi * j / 8)) for j in range(8)]

#: passage-weight root: LAM = zeta = exp(-i*pi/8)
LAM = Cyclo16.zeta_pow(1)
LAM_BAR = Cyclo16.zeta_pow(-1)
#: imaginary unit  i = exp(i*pi/2) = zeta^{-4}
IUNIT = Cyclo16.zeta_pow(-4)
#: sqrt(2) = 2 cos(pi/4) = zeta^2 + zeta^{-2}
SQRT2 = Cyclo16.zeta_pow(2) + Cyclo16.zeta_pow(-2)
#: 2 cos(pi/8) = zeta + zeta^{-1}, the corner normalization at q = 2
TWO_COS_PI8 = LAM + LAM_BAR


def line_unit(j: int) -> Cyclo16:
    """Unit vector exp(i*j*pi/8) spanning projection line number j."""
    return Cyclo16.zeta_pow(-j)


def spin_exponent(q: float) -> float:
    """sigma(q) = 1 - (2/pi) * arccos(sqrt(q)/2); equals 1/2 at q = 2."""
    if not 0 < q <= 4:
        raise ValueError("q must lie in (0, 4]")
    return 1.0 - (2.0 / math.pi) * math.acos(math.sqrt(q) / 2.0)


# ---------------------------------------------------------------------------
# exact enumeration of the loop ensemble
# ---------------------------------------------------------------------------

MAX_ENUM_BITS = 24


@dataclass
class ExactDistribution:
    """Full loop-representation ensemble of one domain.

    states[i] is a bond bitmask (bit v set = primal bond open at flippable
    vertex v), loops[i] the loop count of its decomposition, tb the common
    winding count of the interface at b (asserted configuration-independent).
    weights are (sqrt q)^loops, exact Cyclo16 at q = 2 and floats otherwise.
    counters[p, m, k] counts interface passages through point p with absolute
    winding index m - m_off (in eighth-turn units) in states with k loops;
    z_by_loops[k] counts states with k loops.
    """

    q: float
    states: np.ndarray
    loops: np.ndarray
    tb: int
    counters: np.ndarray
    m_off: int
    z_by_loops: np.ndarray
    weights_exact: list | None = None
    weights: np.ndarray | None = None
    partition_exact: Cyclo16 | None = None
    partition: float = 0.0

    def state_prob(self, i: int) -> float:
        if self.weights is not None:
            return float(self.weights[i]) / self.partition
        return (self.weights_exact[i] / self.partition_exact).real_float()


def _numba_scan(arr, n_bits, n_edges, a_id, b_id, n_points, m_size, m_off, kmax):
    from .sampler import scan_all_states  # numba kernel lives with the others

    return scan_all_states(
        arr.out0, arr.out1, arr.turn0, arr.turn1, arr.cpid0, arr.cpid1,
        arr.vbit, arr.epid, n_bits, n_edges, a_id, b_id,
        n_points, m_size, m_off, kmax,
    )


def enumerate_states(domain, q: float = 2.0) -> ExactDistribution:
    """Enumerate all bond states of `domain` with their exact weights.

    Iterates in Gray-code order so consecutive states differ by a single
    bond toggle (loop counts are maintained incrementally with the same
    +-1 bookkeeping the sampler uses); a numba scan recomputes every
    decomposition from scratch and fills the winding counter tables, and
    the two routes are asserted to agree.
    """
    from . import config

    n_bits = len(domain.flippable)
    if n_bits > MAX_ENUM_BITS:
        raise ValueError(
            f"domain has {n_bits} flippable bonds; exact enumeration is "
            f"capped at {MAX_ENUM_BITS} (2^{n_bits} states)"
        )
    arr = domain.tables
    n_states = 1 << n_bits
    n_edges = domain.n_edges
    kmax = n_edges // 3 + 2
    m_off = 2 * n_edges + 8
    m_size = 2 * m_off

    counters, z_by_loops, loops, tbs = _numba_scan(
        arr, n_bits, n_edges, domain.a_edge, domain.b_edge,
        domain.n_points, m_size, m_off, kmax)
    tb = int(tbs[0])
    if (tbs != tb).any():
        raise AssertionError("interface winding at b varies across states")

    # Gray-order incremental cross-check of the loop counts.
    state = config.BondState.all_closed(domain)
    gray_prev = 0
    k_inc = config.decompose(state).n_loops
    for i in range(n_states):
        g = i ^ (i >> 1)
        flip = g ^ gray_prev
        if flip:
            k_inc += config.toggle_delta(state, flip.bit_length() - 1)
            gray_prev = g
        if k_inc != loops[g]:
            raise AssertionError(f"incremental loop count mismatch at state {g:x}")

    states = np.arange(n_states, dtype=np.int64)
    dist = ExactDistribution(q=q, states=states, loops=loops, tb=tb,
                             counters=counters, m_off=m_off, z_by_loops=z_by_loops)
    if q == 2.0:
        dist.weights_exact = [Cyclo16.sqrt2_pow(int(k)) for k in loops]
        z = Cyclo16.zero()
        for k, n in enumerate(z_by_loops):
            if n:
                z = z + Cyclo16.sqrt2_pow(k) * int(n)
        dist.partition_exact = z
        dist.partition = z.real_float()
    else:
        w = np.sqrt(q) ** loops.astype(np.float64)
        dist.weights = w
        dist.partition = float(w.sum())
    return dist


def exact_F(domain, q: float = 2.0) -> "FermionField":
    """Interface observable on every edge, corner and vertex of `domain`.

    Exact in Q(zeta_16) at q = 2; float path with weight exp(-i sigma w)
    otherwise.  See fermion.assemble_from_counts for normalizations.
    """
    from . import fermion

    dist = enumerate_states(domain, q)
    return fermion.assemble_from_counts(domain, dist)


def exact_edge_prob(domain, q: float, edge_id: int, exact: bool = False):
    """P(edge on the interface) from the exact ensemble.

    With exact=True (q = 2 only) returns the probability as a Cyclo16.
    """
    dist = enumerate_states(domain, q)
    hits = dist.counters[domain.tables.epid[edge_id]].sum(axis=0)  # by loop count
    if exact:
        if q != 2.0:
            raise ValueError("exact probabilities only at q = 2")
        num = Cyclo16.zero()
        for k, n in enumerate(hits):
            if n:
                num = num + Cyclo16.sqrt2_pow(k) * int(n)
        return num / dist.partition_exact
    sq = math.sqrt(q)
    num = sum(int(n) * sq**k for k, n in enumerate(hits))
    return num / dist.partition

"""Exact arithmetic in Q(zeta_16): constants, field axioms, embeddings."""

import cmath
import math
from fractions import Fraction

import pytest

from fklab.exact import (Cyclo16, IUNIT, LAM, LAM_BAR, MAX_ENUM_BITS, SQRT2,
                         TWO_COS_PI8, line_unit, spin_exponent)


def test_zeta_periodicity():
    z = Cyclo16.zeta_pow(1)
    assert Cyclo16.zeta_pow(16) == 1
    assert Cyclo16.zeta_pow(8) == -1
    assert Cyclo16.zeta_pow(0) == 1
    # powers reduce mod 16
    for k in range(-20, 21):
        assert Cyclo16.zeta_pow(k) == Cyclo16.zeta_pow(k % 16)
    assert z * Cyclo16.zeta_pow(-1) == 1


def test_zeta_embedding():
    """zeta embeds as exp(-i pi/8); all powers land on the unit circle."""
    for k in range(-16, 17):
        want = cmath.exp(-1j * math.pi * k / 8.0)
        assert abs(Cyclo16.zeta_pow(k).embed() - want) < 1e-14


def test_line_unit_matches_float_twin():
    for j in range(-8, 17):
        want = cmath.exp(1j * math.pi * j / 8.0)
        assert abs(line_unit(j).embed() - want) < 1e-14


def test_named_constants():
    assert SQRT2 * SQRT2 == 2
    assert SQRT2 == Cyclo16.sqrt2_pow(1)
    assert Cyclo16.sqrt2_pow(0) == 1
    assert Cyclo16.sqrt2_pow(4) == 4
    assert IUNIT * IUNIT == -1
    assert abs(IUNIT.embed() - 1j) < 1e-15
    assert LAM == Cyclo16.zeta_pow(1)
    assert LAM_BAR == Cyclo16.zeta_pow(-1)
    assert TWO_COS_PI8 == LAM + LAM_BAR
    assert abs(TWO_COS_PI8.embed() - 2.0 * math.cos(math.pi / 8.0)) < 1e-15


def test_rational_subfield():
    a = Cyclo16.from_rational(Fraction(1, 3))
    b = Cyclo16.from_rational(Fraction(1, 6))
    assert a + b == Fraction(1, 2)
    assert a * Cyclo16.from_rational(3) == 1
    assert Cyclo16.zero() + Cyclo16.one() == 1
    assert (a - a).is_zero()


def _samples():
    """A few generic field elements for property checks."""
    out = [
        Cyclo16.one() + Cyclo16.zeta_pow(3),
        SQRT2 + Cyclo16.zeta_pow(5) * 2,
        Cyclo16.from_rational(Fraction(-7, 4)) + LAM,
        TWO_COS_PI8 * IUNIT - Cyclo16.zeta_pow(6),
    ]
    return out


def test_inverse_is_exact():
    for x in _samples():
        assert x * x.inverse() == 1
        # and via division
        assert (x / x) == 1
    with pytest.raises(ZeroDivisionError):
        Cyclo16.zero().inverse()


def test_conjugation_and_modulus():
    for k in range(16):
        assert Cyclo16.zeta_pow(k).conj() == Cyclo16.zeta_pow(-k)
    for x in _samples():
        m2 = x.abs2()
        assert m2.is_real()
        assert abs(m2.real_float() - abs(x.embed()) ** 2) < 1e-12
        assert abs(x.conj().embed() - x.embed().conjugate()) < 1e-13


def test_galois_automorphisms():
    """sigma_k(zeta) = zeta^k is multiplicative and fixes the rationals."""
    x, y = _samples()[0], _samples()[1]
    for k in (3, 5, 7, 9, 15):
        assert (x * y).galois(k) == x.galois(k) * y.galois(k)
        assert (x + y).galois(k) == x.galois(k) + y.galois(k)
        assert Cyclo16.from_rational(Fraction(5, 7)).galois(k) == Fraction(5, 7)
    assert x.galois(15) == x.conj()


def test_equality_and_hash():
    assert Cyclo16.zeta_pow(4) == Cyclo16.zeta_pow(20)
    assert hash(Cyclo16.zeta_pow(4)) == hash(Cyclo16.zeta_pow(20))
    d = {Cyclo16.sqrt2_pow(2): "two"}
    assert d[Cyclo16.from_rational(2)] == "two"
    assert Cyclo16.one() != Cyclo16.zeta_pow(1)


def test_real_float_rejects_complex_values():
    assert SQRT2.real_float() == pytest.approx(math.sqrt(2.0), abs=1e-15)
    with pytest.raises(ValueError):
        Cyclo16.zeta_pow(1).real_float()


def test_spin_exponent():
    # sigma(q) = 1 - (2/pi) arccos(sqrt(q)/2)
    assert spin_exponent(2.0) == 0.5
    assert spin_exponent(1.0) == pytest.approx(1.0 / 3.0, abs=1e-15)
    assert spin_exponent(4.0) == pytest.approx(1.0, abs=1e-15)
    qs = [0.5, 1.0, 2.0, 3.0, 4.0]
    sig = [spin_exponent(q) for q in qs]
    assert all(a < b for a, b in zip(sig, sig[1:]))


def test_enumeration_cap_constant():
    assert MAX_ENUM_BITS == 24

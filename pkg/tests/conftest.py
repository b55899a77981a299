"""Shared fixtures: small domains and their exact fields, built once."""

import pytest

from fklab.lattice import build_rect_domain


@pytest.fixture(scope="session")
def d11():
    return build_rect_domain(1, 1)


@pytest.fixture(scope="session")
def d22():
    return build_rect_domain(2, 2)


@pytest.fixture(scope="session")
def d32():
    return build_rect_domain(3, 2)


@pytest.fixture(scope="session")
def F22(d22):
    from fklab.exact import exact_F

    return exact_F(d22, 2.0)


@pytest.fixture(scope="session")
def F32(d32):
    from fklab.exact import exact_F

    return exact_F(d32, 2.0)


@pytest.fixture(scope="session")
def H22(F22):
    from fklab.fermion import build_H

    return build_H(F22)

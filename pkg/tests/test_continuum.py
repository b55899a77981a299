"""Continuum reference solution and mesh-refinement comparison."""

import math

import numpy as np
import pytest

from fklab.continuum import (ContinuumReference, boundary_alignment,
                             compare_convergence, fjord_probe,
                             path_integral_check, reference_h)
from fklab.exact import exact_F
from fklab.fermion import build_H
from fklab.sampler import square_family


@pytest.fixture(scope="module")
def ref64():
    return reference_h(resolution=64)


def test_reference_invariants(ref64):
    assert ref64.resolution == 64
    assert ref64.h.min() >= 0.0 and ref64.h.max() <= 1.0
    assert ref64.h_at(0.5, 0.5) == pytest.approx(0.4999999999521525, abs=1e-12)
    assert ref64.h_at(0.25, 0.5) == pytest.approx(0.2225572547766031, rel=1e-9)
    assert ref64.err_interior == pytest.approx(0.00015878931855306533,
                                               rel=1e-6)
    assert ref64.min_abs_phi_prime == pytest.approx(1.5882084192377786,
                                                    rel=1e-9)
    # the wired arc runs b -> a counterclockwise (right half): h grows in x
    assert ref64.h_at(0.75, 0.5) > 0.7 > 0.3 > ref64.h_at(0.25, 0.5)
    assert ref64.h_at(0.5, 0.25) == pytest.approx(0.5, abs=1e-9)


def test_reference_resolution_validation():
    with pytest.raises(ValueError, match="multiple of 4"):
        reference_h(resolution=66)
    with pytest.raises(ValueError, match="at least 8"):
        reference_h(resolution=4)


def test_f_is_sqrt_phi_prime(ref64):
    for x, y in ((0.4, 0.45), (0.7, 0.3), (0.5, 0.62)):
        fv = ref64.f(x, y)
        assert fv ** 2 == pytest.approx(ref64.phi_prime(x, y))
        assert fv.real >= 0.0                     # principal branch
    with pytest.raises(ValueError, match="vanishes"):
        ref64.f(0.0, 0.0)                         # corner: Phi' has a zero


def test_path_integral(ref64):
    im_int, dh2, resid = path_integral_check(ref64, (0.3, 0.3), (0.7, 0.6))
    assert resid < 1e-3
    assert im_int == pytest.approx(dh2, abs=1e-3)
    assert ref64.h_at(0.7, 0.6) > ref64.h_at(0.3, 0.3)


def test_boundary_alignment_improves_with_inset(ref64):
    vals = [boundary_alignment(ref64, inset=e) for e in
            (8 / 64, 4 / 64, 2 / 64)]
    assert vals[0] > vals[1] > vals[2] > 0.0
    assert vals[2] < 0.3


def test_fjord_probe_shrinks():
    rows = fjord_probe(resolution=64)
    extents = [e for e, _ in rows]
    diffs = [d for _, d in rows]
    assert extents == sorted(extents, reverse=True)
    assert diffs[0] > diffs[1] > diffs[2]
    assert diffs[0] == pytest.approx(0.098539, abs=1e-4)
    assert diffs[1] == pytest.approx(0.026445, abs=1e-4)
    assert diffs[2] == pytest.approx(0.007167, abs=1e-4)
    assert diffs[-1] < 0.01


def test_compare_convergence_exact_meshes(ref64, tmp_path):
    fam = square_family()
    entries = []
    for N in (2, 4):
        d = fam(N)
        F = exact_F(d, 2.0)
        entries.append((d, F, build_H(F)))
    table = compare_convergence(entries, ref64, r=0.25)
    r2, r4 = table.rows
    assert (r2["mesh"], r4["mesh"]) == (2, 4)
    assert (r2["delta"], r4["delta"]) == (0.5, 0.25)
    assert r2["n_faces"] == 1 and r4["n_faces"] == 9
    assert r2["n_vertices"] == 4 and r4["n_vertices"] == 4
    assert r2["sup_H_err"] < 1e-9           # central face is exactly 1/2
    assert r4["sup_H_err"] == pytest.approx(0.230574, abs=1e-5)
    assert r2["fitted_c"] == pytest.approx(0.809236, abs=1e-5)
    assert r4["fitted_c"] == pytest.approx(0.860798, abs=1e-5)
    assert r2["sup_F_resid"] == pytest.approx(0.369349, abs=1e-5)
    assert r4["sup_F_resid"] == pytest.approx(0.090752, abs=1e-5)
    assert table.h_decreasing is False      # 0 -> 0.23: the fluke mesh wins
    assert table.f_decreasing is True
    assert table.c_stable is True
    path = tmp_path / "conv.csv"
    table.to_csv(path)
    text = path.read_text().splitlines()
    assert text[0].startswith("mesh,") and len(text) == 3


def test_reference_to_csv(ref64, tmp_path):
    path = tmp_path / "ref.csv"
    ref64.to_csv(path, stride=16)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,h,f_re,f_im"
    assert len(lines) == 1 + 5 * 5

"""MCMC sampler: kernel/reference lockstep, exactness checks, reproducibility."""

import math

import numpy as np
import pytest

from fklab.config import BondState
from fklab.exact import enumerate_states, exact_F, exact_edge_prob
from fklab.lattice import build_rect_domain
from fklab.sampler import (Accumulator, ChainState, center_black_face,
                           estimate_edge_prob_curve, metropolis_sweep,
                           mc_run, run_chain, run_chains, square_family,
                           thread_count, _mag_arrays, _trig_tables, init_bits,
                           rng_seed)

MAG_ORACLE = {(2, 2): 1.0, (3, 2): 0.7071067811865476,
              (3, 3): 0.7573593128807146}


def kernel_bits(d, q, seed, nsweeps):
    """Drive the compiled kernel exactly as run_chain does; return the bits."""
    t = d.tables
    arrs = (t.out0, t.out1, t.turn0, t.turn1, t.cpid0, t.cpid1, t.vbit,
            t.epid, t.fin1, t.fin2)
    mag = _mag_arrays(d, False)
    cos_tab, sin_tab = _trig_tables()
    rng = np.zeros(4, dtype=np.uint64)
    rng_seed(rng, np.uint64(seed))
    bits = np.zeros(d.n_bits, dtype=np.uint8)
    init_bits(bits, rng)
    perm = np.arange(d.n_bits, dtype=np.int64)
    acc_cos = np.zeros(d.n_points)
    acc_sin = np.zeros(d.n_points)
    acc_hits = np.zeros(d.n_points, dtype=np.int64)
    mag_out = np.zeros(1, dtype=np.int64)
    status, _, _ = mc_run(*arrs, d.b_edge, d.a_edge, d.n_edges, math.sqrt(q),
                          bits, rng, perm, nsweeps, 0, cos_tab, sin_tab,
                          acc_cos, acc_sin, acc_hits, *mag, mag_out)
    assert status == 0
    return bits


@pytest.mark.parametrize("mn,q,seed,nsweeps", [
    ((3, 2), 2.0, 7, 40),
    ((2, 2), 1.5, 3, 60),
    ((3, 3), 2.0, 11, 25),
])
def test_kernel_lockstep_with_reference(mn, q, seed, nsweeps):
    """Compiled kernel and pure-python sweep consume randomness identically."""
    d = build_rect_domain(*mn)
    c = ChainState.fresh(d, seed)
    for _ in range(nsweeps):
        metropolis_sweep(d, c, q)
    kb = kernel_bits(d, q, seed, nsweeps)
    assert np.array_equal(np.asarray(c.state.bits), kb)


def test_chain_visits_match_exact_distribution():
    """Total-variation distance to the exact 2-bond ensemble stays small."""
    d = build_rect_domain(2, 1)
    dist = enumerate_states(d, 2.0)
    c = ChainState.fresh(d, 123)
    counts = np.zeros(2 ** d.n_bits)
    n_sweeps = 40000
    for _ in range(n_sweeps):
        metropolis_sweep(d, c, 2.0)
        counts[c.state.index()] += 1
    emp = counts / counts.sum()
    tv = 0.5 * sum(abs(emp[i] - dist.state_prob(i)) for i in range(len(emp)))
    assert tv < 0.02


def test_mc_fermion_matches_exact(d32):
    from fklab.fermion import assemble_from_accumulator

    acc = run_chain(d32, sweeps=20000, seed=1)
    F = exact_F(d32, 2.0)
    Fm = assemble_from_accumulator(d32, acc)
    ok = total = 0
    for p in range(d32.n_points):
        for part, se in ((Fm.values[p].real - F.values[p].real, Fm.se_re[p]),
                         (Fm.values[p].imag - F.values[p].imag, Fm.se_im[p])):
            total += 1
            ok += abs(part) <= 3.0 * se + 1e-12
    assert total == 2 * d32.n_points
    assert ok / total >= 0.95


def test_mc_hits_match_exact(d22):
    acc = run_chain(d22, sweeps=20000, seed=4)
    p, se = acc.hit_prob()
    e = d22.center_edge()
    exact_p = exact_edge_prob(d22, 2.0, e)
    assert abs(p[e] - exact_p) <= 3.0 * se[e]
    a_pid = int(d22.tables.epid[d22.a_edge])
    assert p[a_pid] == 1.0 and se[a_pid] == 0.0


@pytest.mark.parametrize("mn", sorted(MAG_ORACLE))
def test_magnetization_matches_exact(mn):
    d = build_rect_domain(*mn)
    acc = run_chains(d, sweeps=20000, seed=2, chains=2,
                     observables=("fermion", "hits", "magnetization"))
    p, se = acc.mag_prob()
    assert abs(p - MAG_ORACLE[mn]) <= 3.0 * se + 1e-12


def test_mag_requires_request(d22):
    acc = run_chain(d22, sweeps=2000, seed=0)
    with pytest.raises(ValueError, match="magnetization"):
        acc.mag_prob()


def test_center_black_face_frozen():
    want = {(1, 1): 2, (2, 1): 3, (2, 2): 3, (3, 2): 10}
    for mn, f in want.items():
        d = build_rect_domain(*mn)
        assert center_black_face(d) == f
        assert d.fblack[f]


def test_run_chains_deterministic(d22):
    a = run_chains(d22, sweeps=4000, seed=9, chains=2, threads=1)
    b = run_chains(d22, sweeps=4000, seed=9, chains=2, threads=4)
    assert a.tb == b.tb
    assert np.array_equal(a.batch_n, b.batch_n)
    assert np.array_equal(a.batch_cos, b.batch_cos)
    assert np.array_equal(a.batch_sin, b.batch_sin)
    assert np.array_equal(a.batch_hits, b.batch_hits)
    c = run_chains(d22, sweeps=4000, seed=10, chains=2, threads=1)
    assert not np.array_equal(a.batch_cos, c.batch_cos)


def test_merge_rejects_mismatches(d22, d32):
    a = run_chain(d22, sweeps=2000, seed=0)
    b = run_chain(d32, sweeps=2000, seed=0)
    with pytest.raises(ValueError, match="different runs"):
        a.merge(b)
    c = run_chain(d22, sweeps=2000, seed=0, n_batches=8)
    bad = Accumulator(c.domain_hash, 3.0, c.tb, c.batch_n, c.batch_cos,
                      c.batch_sin, c.batch_hits)
    with pytest.raises(ValueError, match="different runs"):
        c.merge(bad)


def test_merge_is_order_independent(d22):
    a = run_chain(d22, sweeps=2000, seed=0, n_batches=4)
    b = run_chain(d22, sweeps=2000, seed=1, n_batches=4)
    ab, _, _ = a.merge(b).point_estimates()
    ba, _, _ = b.merge(a).point_estimates()
    assert np.allclose(ab, ba, atol=1e-15)
    assert a.merge(b).n == a.n + b.n


def test_run_chain_validation(d22):
    with pytest.raises(ValueError, match=r"q must lie"):
        run_chain(d22, q=5.0)
    with pytest.raises(ValueError, match="sweeps > burnin"):
        run_chain(d22, sweeps=100, burnin=100)
    with pytest.raises(ValueError, match="batch count"):
        run_chain(d22, sweeps=40, burnin=0, n_batches=64)
    with pytest.raises(ValueError, match="at least one chain"):
        run_chains(d22, chains=0)


def test_curve_input_validation():
    fam = square_family()
    with pytest.raises(ValueError, match="increasing"):
        estimate_edge_prob_curve(fam, [8, 4])
    with pytest.raises(ValueError, match="increasing"):
        estimate_edge_prob_curve(fam, [4, 4, 8])


def test_square_family_geometry():
    fam = square_family()
    d = fam(4)
    assert d.n_bits == 16
    assert d.delta == pytest.approx(0.25)
    assert float(d.vx.max() - d.vx.min()) * d.delta == pytest.approx(1.0 + d.delta)


def test_thread_count(monkeypatch):
    assert thread_count(3) == 3
    monkeypatch.setenv("FKLAB_THREADS", "5")
    assert thread_count() == 5
    monkeypatch.delenv("FKLAB_THREADS")
    monkeypatch.setenv("FERMILAB_THREADS", "2")     # legacy spelling
    assert thread_count() == 2
    monkeypatch.delenv("FERMILAB_THREADS")
    assert thread_count() >= 1

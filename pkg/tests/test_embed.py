import csv
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sl2lab import core
from sl2lab.embed import (EnergyFamily, build_markov_system, decompose, embedded_product,
                          embedding_family, family_measure, markov_system, schrodinger_matrix,
                          schrodinger_product, write_decomposition_csv)
from sl2lab.tridiag import shift_lyapunov
from sl2lab.walk import FiniteMeasure, WordSampler, log_norms, lyapunov_mc, trial_rng

from oracles import exceptional_factors, mp_schrodinger_lognorm, smat

ts = st.floats(-5.0, 5.0)


def random_measure(rng, kappa=3, scale=1.0):
    atoms = [core.random_sl2(rng, scale) for _ in range(kappa)]
    p = rng.uniform(0.2, 1.0, kappa)
    return FiniteMeasure(atoms, p / p.sum())


def test_schrodinger_matrix_examples():
    np.testing.assert_array_equal(schrodinger_matrix(0.0), core.J)
    assert core.classify(schrodinger_matrix(2.0)) == "parabolic"
    S3 = schrodinger_matrix(3.0)
    assert core.classify(S3) == "hyperbolic"
    assert core.unstable_eigenvalue(S3) == pytest.approx((3 + math.sqrt(5)) / 2)


def test_decompose_identity_tie_break():
    d = decompose(np.eye(2))
    assert d.t == (1.0, 0.0, -1.0, 0.0)
    assert d.residual == 0.0 and d.warning is None
    # multiply back by hand: S(0) S(-1) S(0) S(1) = I
    np.testing.assert_array_equal(smat(0) @ smat(-1) @ smat(0) @ smat(1), np.eye(2))


@given(ts)
def test_decompose_single_factor(t):
    assert decompose(smat(t)).residual < 1e-12


def test_decompose_diagonal_and_exceptional_cross_check():
    lam = math.e
    d = decompose(np.diag([lam, 1 / lam]))
    assert d.residual < 1e-9
    # an independent factorization of [[1/lam, 0], [a, lam]] in closed form
    for lam, a in ((math.e, 0.0), (2.0, 0.7), (0.3, -1.5)):
        t1, t2, t3, t4 = exceptional_factors(lam, a)
        target = np.array([[1 / lam, 0.0], [a, lam]])
        np.testing.assert_allclose(smat(t1) @ smat(t2) @ smat(t3) @ smat(t4), target,
                                   atol=1e-12)
        assert decompose(target).residual < 1e-9
        np.testing.assert_allclose(decompose(target).product(), target, atol=1e-9)


def test_decompose_warns_on_small_pivot():
    d = decompose(np.diag([1e7, 1e-7]))
    assert d.warning is not None and "pivot" in d.warning


@given(st.lists(ts, min_size=1, max_size=8))
def test_decompose_round_trip(factors):
    B = schrodinger_product(factors)
    d = decompose(B)
    assert np.max(np.abs(d.product() - B)) <= 1e-9 * (1 + np.linalg.norm(B, 2))


def test_markov_system_examples():
    one = build_markov_system(FiniteMeasure([np.diag([2.0, 0.5])], [1.0]))
    assert one.kernel.shape == (4, 4)
    np.testing.assert_allclose(one.nu, 0.25)
    rng = np.random.default_rng(0)
    two = build_markov_system(FiniteMeasure.uniform([core.random_sl2(rng) for _ in range(2)]))
    np.testing.assert_allclose(two.nu, 1 / 8)
    sys3 = markov_system(np.zeros((2, 4)), np.array([0.3, 0.7]))
    np.testing.assert_allclose(sys3.nu, [0.075] * 4 + [0.175] * 4)
    # explicit kernel application
    nu_next = np.zeros(8)
    for s in range(8):
        nu_next += sys3.nu[s] * sys3.kernel[s]
    assert np.max(np.abs(nu_next - sys3.nu)) < 1e-15
    assert sys3.stationarity_residual() < 1e-15


def test_markov_kernel_structure():
    K = markov_system(np.zeros((3, 4)), np.array([0.2, 0.3, 0.5])).kernel
    for i in range(3):
        for j in range(3):
            assert K[4 * i + j, 4 * i + j + 1] == 1.0
        np.testing.assert_array_equal(K[4 * i + 3, [0, 4, 8]], [0.2, 0.3, 0.5])
    np.testing.assert_allclose(K.sum(axis=1), 1.0)


def test_embedded_product_recovers_atoms_at_zero():
    rng = np.random.default_rng(1)
    mu = random_measure(rng)
    fam = embedding_family(mu)
    for i in range(mu.kappa):
        np.testing.assert_allclose(embedded_product(fam, 0.0, [i]).full(), mu.atoms[i], atol=1e-9)
    got = embedded_product(fam, 0.0, [0, 2]).full()
    np.testing.assert_allclose(got, mu.atoms[2] @ mu.atoms[0], atol=1e-8 * np.linalg.norm(got))


def test_embedded_product_matches_extended_precision():
    rng = np.random.default_rng(2)
    fam = embedding_family(random_measure(rng))
    word = rng.integers(0, 3, 50)
    ref = mp_schrodinger_lognorm(fam.expand(word), 0.1)
    assert embedded_product(fam, 0.1, word).lognorm == pytest.approx(ref, abs=1e-6)


def test_embedded_log_norms_identical_to_base_at_zero():
    rng = np.random.default_rng(3)
    fam = embedding_family(random_measure(rng))
    mu0 = family_measure(fam, 0.0)
    words = WordSampler(fam.probs, 9).words(60, 20)
    direct = log_norms(mu0.atoms, words)
    again = log_norms(family_measure(fam, 0.0).atoms, words)
    assert np.array_equal(direct, again)
    for w, ref in zip(words[:5], direct):
        P, ell = core.chain_product(mu0.atoms[w])
        assert embedded_product(fam, 0.0, w).lognorm == ell


def test_family_measure_at_zero_is_base():
    mu = random_measure(np.random.default_rng(4), kappa=4, scale=2.0)
    mu0 = family_measure(embedding_family(mu), 0.0)
    np.testing.assert_allclose(mu0.atoms, mu.atoms, atol=1e-9)
    np.testing.assert_array_equal(mu0.probs, mu.probs)


def test_atom_entries_are_quartic_in_energy():
    fam = embedding_family(random_measure(np.random.default_rng(5)))
    h = 0.37
    Es = 0.2 + h * np.arange(6)
    vals = np.array([fam.atoms(E) for E in Es])
    fifth = np.diff(vals, n=5, axis=0)[0]
    assert np.max(np.abs(fifth)) <= 1e-6 * np.max(np.abs(vals))


def test_single_atom_family_is_continuous():
    fam = embedding_family(FiniteMeasure([np.diag([2.0, 0.5])], [1.0]))
    a, b = fam.atoms(1e-3)[0], fam.atoms(0.0)[0]
    assert np.max(np.abs(a - b)) < 1e-1
    assert family_measure(fam, 1e-3).kappa == 1


def test_sample_states_follow_the_blocks():
    fam = embedding_family(random_measure(np.random.default_rng(6)))
    pot, states = fam.sample(trial_rng(0, 0), 37)
    assert len(pot) == len(states) == 37
    np.testing.assert_array_equal(pot, fam.table[states // 4, states % 4])
    # phase advances deterministically inside blocks
    step = np.diff(states % 4)
    assert np.all((step == 1) | (step == -3))


def test_embedded_exponent_is_four_times_shift_exponent():
    fam = embedding_family(random_measure(np.random.default_rng(7), scale=1.5))
    E = 0.2
    big = lyapunov_mc(family_measure(fam, E), 200, 100, 11)
    small = shift_lyapunov(fam, E, 800, 100, 12)
    pooled = math.hypot(big.stderr, 4 * small.stderr)
    assert abs(big.estimate - 4 * small.estimate) <= 3 * pooled


def test_decomposition_csv(tmp_path):
    fam = embedding_family(FiniteMeasure.uniform([np.eye(2), np.diag([2.0, 0.5])]))
    path = tmp_path / "dec.csv"
    write_decomposition_csv(fam, path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["atom_index", "t0", "t1", "t2", "t3", "residual"]
    assert len(rows) == 3
    assert all(float(r[5]) < 1e-12 for r in rows[1:])


def test_from_potentials_is_block_length_one():
    fam = EnergyFamily.from_potentials([0.0, 4.0])
    assert fam.block_len == 1 and fam.kappa == 2
    np.testing.assert_array_equal(fam.atoms(0.0)[1], smat(4.0))
    with pytest.raises(ValueError):
        EnergyFamily(np.zeros((2, 4)), [1.0])

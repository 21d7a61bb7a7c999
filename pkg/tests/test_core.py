import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import eval_genlaguerre

from optomech_tomo.core import (LOG_SPACE_THRESHOLD, fidelity_density, fidelity_distribution,
                                fock_density, franck_condon, franck_condon_matrix, laguerre,
                                laguerre_table, maximally_mixed, superposed_fock_density,
                                thermal_distribution)
from optomech_tomo.errors import InvalidInputError

from conftest import APPENDIX_P, APPENDIX_P_EXACT


def laguerre_series(n, a, x):
    # exact rational arithmetic; the alternating sum cancels badly in floats
    x = Fraction(x)
    return float(sum((-1) ** k * math.comb(n + a, n - k) * x ** k / math.factorial(k)
                     for k in range(n + 1)))


def displacement(beta, dim):
    b = np.diag(np.sqrt(np.arange(1, dim)), 1)
    return scipy.linalg.expm(beta * (b.T - b))


@pytest.mark.parametrize("n,a,x", [(0, 0, 1.3), (1, 2, 0.5), (5, 0, 4.0), (7, 3, 4.0),
                                   (12, 1, 0.25), (20, 5, 9.0)])
def test_laguerre_matches_power_series(n, a, x):
    assert laguerre(n, a, x) == pytest.approx(laguerre_series(n, a, x), rel=1e-11, abs=1e-12)


def test_laguerre_vectorized_and_table():
    x = np.linspace(0, 10, 7)
    np.testing.assert_allclose(laguerre(9, 4, x), eval_genlaguerre(9, 4, x), rtol=1e-11)
    np.testing.assert_allclose(laguerre_table(15, 2, 3.7),
                               [eval_genlaguerre(k, 2, 3.7) for k in range(16)], rtol=1e-10)


def test_laguerre_rejects_negative_order():
    with pytest.raises(InvalidInputError):
        laguerre(-1, 0, 1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 40), st.integers(0, 20), st.floats(0, 30))
def test_laguerre_property(n, a, x):
    ref = eval_genlaguerre(n, a, x)
    assert laguerre(n, a, x) == pytest.approx(ref, rel=1e-8, abs=1e-8 * max(1.0, abs(ref)))


@pytest.mark.parametrize("beta", [0.3, 1.0, 2.0, -2.0, 3.5])
def test_franck_condon_against_matrix_exponential(beta):
    dim = 160
    d = displacement(beta, dim)
    size = 60
    fc = franck_condon_matrix(size, beta)
    np.testing.assert_allclose(fc, d[:size, :size], atol=1e-10)


def test_scalar_and_matrix_agree_across_log_switch():
    beta = 1.7
    fc = franck_condon_matrix(60, beta)
    for m, n in [(19, 20), (20, 20), (20, 21), (21, 21), (30, 25), (45, 50), (59, 58)]:
        assert franck_condon(m, n, beta) == pytest.approx(fc[m, n], rel=1e-12, abs=1e-300)
    around = [m + n for m, n in [(19, 20), (20, 20), (20, 21)]]
    assert min(around) < LOG_SPACE_THRESHOLD < max(around) + 1


def test_franck_condon_known_values():
    beta = 0.8
    assert franck_condon(0, 0, beta) == pytest.approx(math.exp(-beta ** 2 / 2))
    # <1|D|0> = beta e^{-beta^2/2}
    assert franck_condon(1, 0, beta) == pytest.approx(beta * math.exp(-beta ** 2 / 2))
    assert franck_condon(0, 1, beta) == pytest.approx(-beta * math.exp(-beta ** 2 / 2))
    np.testing.assert_array_equal(franck_condon_matrix(6, 0.0), np.eye(6))


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 50), st.integers(0, 50), st.floats(-4, 4))
def test_franck_condon_symmetries(m, n, beta):
    f = franck_condon(m, n, beta)
    assert franck_condon(n, m, -beta) == pytest.approx(f, rel=1e-12, abs=1e-300)
    assert franck_condon(m, n, -beta) == pytest.approx((-1) ** (m - n) * f, rel=1e-12, abs=1e-300)


@settings(max_examples=20, deadline=None)
@given(st.floats(-3, 3), st.integers(0, 25))
def test_franck_condon_columns_are_normalized(beta, n):
    col = franck_condon_matrix(140, beta)[:, n]
    assert np.sum(col ** 2) == pytest.approx(1.0, abs=1e-10)


def test_franck_condon_unitary_block():
    fc = franck_condon_matrix(150, 2.0)
    block = fc[:, :60]
    np.testing.assert_allclose(block.T @ block, np.eye(60), atol=1e-10)


def test_franck_condon_large_indices_stay_finite():
    assert math.isfinite(franck_condon(170, 160, 2.0))
    assert math.isfinite(franck_condon(300, 0, 6.0))
    assert franck_condon(300, 0, 0.1) == pytest.approx(0.0, abs=1e-300)


def test_thermal_distribution():
    p = thermal_distribution(1.0, 8)
    np.testing.assert_allclose(p, APPENDIX_P_EXACT)
    assert thermal_distribution(0.0, 4).tolist() == [1.0, 0.0, 0.0, 0.0]
    big = thermal_distribution(3.0, 2000)
    assert np.all(np.isfinite(big)) and big.sum() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(InvalidInputError):
        thermal_distribution(-0.1, 4)


def test_state_constructors():
    np.testing.assert_allclose(maximally_mixed(5, 8), [0.2] * 5 + [0] * 3)
    rho = fock_density(2, 4)
    assert rho[2, 2] == 1 and np.trace(rho) == 1
    psi = superposed_fock_density([1, 1j, -1])
    np.testing.assert_allclose(psi, np.array([[1, -1j, -1], [1j, 1, -1j], [-1, 1j, 1]]) / 3)
    with pytest.raises(InvalidInputError):
        superposed_fock_density([0, 0])
    with pytest.raises(InvalidInputError):
        maximally_mixed(6, 5)


def test_fidelity_of_printed_solution():
    assert fidelity_distribution(APPENDIX_P, APPENDIX_P_EXACT) == pytest.approx(0.995, abs=1e-3)


def test_fidelity_distribution_basics():
    p = np.array([0.5, 0.5, 0.0])
    assert fidelity_distribution(p, p) == pytest.approx(1.0)
    assert fidelity_distribution([1, 0], [0, 1]) == 0.0
    # negatives are clipped
    assert fidelity_distribution([1.0, -0.1], [1.0, 0.0]) == pytest.approx(1.0)
    with pytest.raises(InvalidInputError):
        fidelity_distribution([1.0], [1.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.01, 1), min_size=2, max_size=8),
       st.lists(st.floats(0.01, 1), min_size=2, max_size=8))
def test_fidelity_distribution_bounds(a, b):
    k = min(len(a), len(b))
    p = np.array(a[:k]) / sum(a[:k])
    q = np.array(b[:k]) / sum(b[:k])
    f = fidelity_distribution(p, q)
    assert -1e-12 <= f <= 1 + 1e-12
    assert f == pytest.approx(fidelity_distribution(q, p))


def _random_pure(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return v / np.linalg.norm(v)


def test_uhlmann_pure_states():
    rng = np.random.default_rng(3)
    for _ in range(10):
        a, b = _random_pure(rng, 4), _random_pure(rng, 4)
        f = fidelity_density(np.outer(a, a.conj()), np.outer(b, b.conj()))
        assert f == pytest.approx(abs(np.vdot(a, b)) ** 2, abs=1e-10)


def test_uhlmann_reduces_to_classical_for_diagonal():
    p = np.array([0.6, 0.3, 0.1])
    q = np.array([0.2, 0.5, 0.3])
    assert fidelity_density(np.diag(p), np.diag(q)) == pytest.approx(fidelity_distribution(p, q))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_uhlmann_symmetric_and_bounded(seed):
    rng = np.random.default_rng(seed)
    mats = []
    for _ in range(2):
        g = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        r = g @ g.conj().T
        mats.append(r / np.trace(r))
    f = fidelity_density(*mats)
    assert -1e-10 <= f <= 1 + 1e-10
    assert f == pytest.approx(fidelity_density(mats[1], mats[0]), abs=1e-8)


def test_uhlmann_shape_errors():
    with pytest.raises(InvalidInputError):
        fidelity_density(np.eye(2), np.eye(3))

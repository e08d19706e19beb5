import numpy as np
import pytest
import scipy.special
from hypothesis import given, settings, strategies as st

from squidsim.circuits import CircuitParams, transmon_hamiltonian
from squidsim.errors import InvalidDimension, NotHermitian, ShapeError
from squidsim.hilbert import (Basis, Operator, cosine_of, eigh, embed, identity,
                              make_charge_basis, make_ladder, make_phase_charge_fock,
                              sine_of, tensor)


def test_operator_is_frozen_copy():
    m = np.eye(3)
    op = Operator(m)
    m[0, 0] = 5.0
    assert op.matrix[0, 0] == 1.0
    with pytest.raises(ValueError):
        op.matrix[0, 0] = 2.0


def test_operator_keeps_real_dtype():
    assert Operator(np.eye(2)).matrix.dtype == float
    assert Operator(np.eye(2, dtype=int)).matrix.dtype == float


def test_operator_rejects_non_square():
    with pytest.raises(ShapeError):
        Operator(np.zeros((2, 3)))


def test_ladder_commutator_away_from_edge():
    a = make_ladder(12).matrix
    comm = a @ a.T - a.T @ a
    np.testing.assert_allclose(np.diag(comm)[:-1], 1.0, atol=1e-14)
    assert comm[-1, -1] == pytest.approx(-11.0)


def test_ladder_needs_two_levels():
    with pytest.raises(InvalidDimension):
        make_ladder(1)


@given(st.floats(0.05, 2.0))
def test_phase_charge_commutator(z):
    phi, n = make_phase_charge_fock(20, z)
    comm = phi.matrix @ n.matrix - n.matrix @ phi.matrix
    # [phi, n] = i except in the last row/column
    np.testing.assert_allclose(comm[:-1, :-1], 1j * np.eye(19), atol=1e-12)


def test_charge_basis_cos_is_half_hopping():
    n, cos = make_charge_basis(3)
    assert n.dim == 7 and n.basis is Basis.CHARGE
    np.testing.assert_allclose(np.diag(n.matrix), np.arange(-3, 4))
    assert cos.matrix[0, 1] == 0.5 and cos.matrix[0, 0] == 0.0


def test_cos_sin_identity():
    phi, _ = make_phase_charge_fock(15, 0.4)
    c, s = cosine_of(phi, 0.3).matrix, sine_of(phi, 0.3).matrix
    np.testing.assert_allclose(c @ c + s @ s, np.eye(15), atol=1e-12)


def test_function_requires_hermitian():
    with pytest.raises(NotHermitian):
        cosine_of(Operator(np.array([[0.0, 1.0], [0.0, 0.0]])))


def test_tensor_and_embed_agree():
    a = make_ladder(3)
    got = embed(a, 1, (2, 3, 4)).matrix
    ref = tensor([identity(2), a, identity(4)]).matrix
    np.testing.assert_array_equal(got, ref)


def test_embed_checks_slot():
    with pytest.raises(ShapeError):
        embed(make_ladder(3), 0, (4, 2))


@settings(max_examples=30)
@given(st.integers(2, 30), st.integers(0, 2 ** 32 - 1))
def test_eigh_random_hermitian(n, seed):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    h = m + m.conj().T
    res = eigh(Operator(h))
    assert np.all(np.diff(res.eigenvalues) >= 0)
    np.testing.assert_allclose(h @ res.eigenvectors, res.eigenvectors * res.eigenvalues,
                               atol=1e-9 * np.linalg.norm(h))


def test_eigh_subset_and_errors():
    h = np.diag([3.0, 1.0, 2.0])
    res = eigh(Operator(h), 2)
    np.testing.assert_allclose(res.eigenvalues, [1.0, 2.0])
    with pytest.raises(InvalidDimension):
        eigh(Operator(h), 4)
    with pytest.raises(NotHermitian):
        eigh(Operator(np.array([[0.0, 1.0], [2.0, 0.0]])))


def test_transmon_matches_mathieu():
    # at zero offset charge E_m = E_C * {a_0, b_2, a_2, b_4}(-E_J / 2E_C)
    ec, ej = 0.2, 10.0
    q = -ej / (2 * ec)
    ref = ec * np.array([scipy.special.mathieu_a(0, q), scipy.special.mathieu_b(2, q),
                         scipy.special.mathieu_a(2, q), scipy.special.mathieu_b(4, q)])
    got = eigh(transmon_hamiltonian(CircuitParams.transmon(ec, ej), 30), 4).eigenvalues
    np.testing.assert_allclose(got, ref, rtol=1e-10)

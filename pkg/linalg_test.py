import math

import numpy as np
import pytest

from linalg import (
    CapacityError,
    HermitianOperator,
    MultipartiteShape,
    NotHermitianError,
    PureState,
    as_shape,
    eigh,
    hs_inner,
    partial_trace,
    partial_transpose,
    random_density,
    random_hermitian,
    random_psd,
    spectral_norm,
    tensor,
    tensor_all,
    trace_norm,
)
from separable import bell_state, example_accept_operator

C = example_accept_operator()


def ket_bra(dims, i, j):
    shape = as_shape(dims)
    m = np.zeros((shape.total, shape.total))
    m[i, j] = 1
    return m


def projector(dims, i):
    return HermitianOperator(ket_bra(dims, i, i), dims)


def test_shape():
    s = MultipartiteShape((2, 3, 2))
    assert s.total == 12
    assert s.num_parties == 3
    assert (s + MultipartiteShape((5,))).dims == (2, 3, 2, 5)
    with pytest.raises(ValueError):
        MultipartiteShape((2, 0))
    with pytest.raises(IndexError):
        s.check_subsystem(3)


def test_tensor_identity():
    out = tensor(HermitianOperator.identity(2), HermitianOperator.identity(2))
    assert out.dims == (2, 2)
    assert np.array_equal(out.matrix, np.eye(4))


def test_tensor_basis_projector():
    out = tensor(projector(2, 0), projector(2, 0))
    expected = np.zeros((4, 4))
    expected[0, 0] = 1
    assert np.array_equal(out.matrix, expected)


def test_kronecker_convention():
    # |a b⟩ lives at index a * dims[1] + b: subsystem 0 is most significant.
    out = tensor(projector(2, 1), projector(3, 2))
    assert out.matrix[1 * 3 + 2, 1 * 3 + 2] == 1
    assert out.trace() == 1


def test_tensor_trace_multiplies():
    rng = np.random.default_rng(1)
    a = random_hermitian(2, rng)
    b = random_hermitian(3, rng)
    assert tensor(a, b).trace() == pytest.approx(a.trace() * b.trace(), abs=1e-12)


def test_tensor_capacity():
    with pytest.raises(CapacityError):
        tensor(HermitianOperator.identity(128), HermitianOperator.identity(256))


def test_hermitian_construction():
    with pytest.raises(NotHermitianError):
        HermitianOperator([[0, 1], [0, 0]])

    # Float noise below the tolerance is symmetrized away.
    m = np.array([[1, 0.5 + 1e-14], [0.5, 2]])
    op = HermitianOperator(m)
    assert op.max_asymmetry() == 0
    assert op.matrix[0, 1] == pytest.approx(0.5)

    # The tolerance is absolute, even for large entries.
    with pytest.raises(NotHermitianError):
        HermitianOperator([[100, 50 + 1e-11], [50, 100]])
    assert HermitianOperator([[100, 50 + 5e-13], [50, 100]]).max_asymmetry() == 0

    with pytest.raises(ValueError):
        HermitianOperator(np.eye(4), (2, 3))


def test_operator_is_immutable():
    op = HermitianOperator.identity(2)
    with pytest.raises(AttributeError):
        op.matrix = np.zeros((2, 2))
    with pytest.raises(ValueError):
        op.matrix[0, 0] = 5


def test_pure_state_norm():
    with pytest.raises(ValueError):
        PureState(2, [1, 1])
    psi = PureState.normalized([1, 1j])
    assert np.linalg.norm(psi.amplitudes) == pytest.approx(1, abs=1e-15)


def test_partial_trace_product():
    rho = partial_trace(projector((2, 2), 0), [0])
    assert rho.dims == (2,)
    assert np.allclose(rho.matrix, [[1, 0], [0, 0]])


def test_partial_trace_bell():
    rho = partial_trace(bell_state().projector(), [0])
    assert np.allclose(rho.matrix, np.eye(2) / 2, atol=1e-15)


def test_partial_trace_keeps_order():
    rng = np.random.default_rng(2)
    a = random_density(2, rng)
    b = random_density(3, rng)
    c = random_density(2, rng)
    abc = tensor_all(a, b, c)
    ac = partial_trace(abc, [2, 0])
    assert ac.dims == (2, 2)
    assert np.allclose(ac.matrix, tensor(a, c).matrix, atol=1e-12)
    assert np.allclose(partial_trace(abc, [1]).matrix, b.matrix, atol=1e-12)


def test_partial_trace_psd_and_trace():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = random_psd((2, 2, 2), rng)
        out = partial_trace(a, {0, 2})
        assert out.dims == (2, 2)
        assert out.trace() == pytest.approx(a.trace(), abs=1e-10)
        assert out.min_eigenvalue() >= -1e-12
        assert out.max_asymmetry() <= 1e-12


def test_partial_trace_errors():
    with pytest.raises(IndexError):
        partial_trace(C, [2])
    with pytest.raises(ValueError):
        partial_trace(C, [])


def test_partial_transpose():
    assert np.array_equal(partial_transpose(HermitianOperator.identity((2, 2)), 1).matrix, np.eye(4))

    # |a b⟩⟨c d| -> |a d⟩⟨c b|
    m = ket_bra((2, 2), 0b01, 0b10) + ket_bra((2, 2), 0b10, 0b01)
    pt = partial_transpose(HermitianOperator(m, (2, 2)), 1)
    assert pt.matrix[0b00, 0b11] == 1
    assert pt.matrix[0b11, 0b00] == 1

    assert partial_transpose(C, 1).min_eigenvalue() == pytest.approx(
        (1 - math.sqrt(2)) / 4, abs=1e-12
    )
    with pytest.raises(IndexError):
        partial_transpose(C, 2)


def test_partial_transpose_involution():
    rng = np.random.default_rng(4)
    a = random_hermitian((2, 3, 2), rng)
    for i in range(3):
        twice = partial_transpose(partial_transpose(a, i), i)
        assert np.array_equal(twice.matrix, a.matrix)


def test_partial_transpose_product_stays_psd():
    rng = np.random.default_rng(5)
    for _ in range(50):
        rho = tensor(random_density(2, rng), random_density(3, rng))
        for i in range(2):
            assert partial_transpose(rho, i).min_eigenvalue() >= -1e-12


def test_eigh_example():
    values = eigh(C).eigenvalues
    assert np.allclose(values, [0.5, 0.5, 0, 0], atol=1e-10)
    assert np.allclose(eigh(HermitianOperator.identity(5)).eigenvalues, np.ones(5))


def test_eigh_invariants():
    rng = np.random.default_rng(6)
    for d in (1, 2, 5, 12):
        a = random_hermitian(d, rng)
        e = eigh(a)
        assert np.all(np.diff(e.eigenvalues) <= 0)
        assert e.eigenvalues.sum() == pytest.approx(a.trace(), abs=1e-9)
        err = np.linalg.norm(a.matrix - e.reconstruct(), 2)
        assert err <= 1e-9 * max(1, spectral_norm(a))
        v = e.eigenvectors
        assert np.allclose(v.conj().T @ v, np.eye(d), atol=1e-10)


def test_trace_norm():
    diff = projector(2, 0) - projector(2, 1)
    assert trace_norm(diff) == pytest.approx(2)
    rng = np.random.default_rng(7)
    assert trace_norm(random_density(3, rng)) == pytest.approx(1, abs=1e-12)


def test_trace_norm_of_tensor_difference():
    # ‖ρ1⊗…⊗ρk − σ1⊗…⊗σk‖_tr ≤ Σ ‖ρi − σi‖_tr for density operators.
    rng = np.random.default_rng(8)
    for _ in range(1000):
        k = int(rng.integers(2, 4))
        dims = [int(rng.choice([2, 3])) for _ in range(k)]
        rhos = [random_density(d, rng) for d in dims]
        sigmas = [random_density(d, rng) for d in dims]
        lhs = trace_norm(tensor_all(*rhos) - tensor_all(*sigmas))
        rhs = sum(trace_norm(r - s) for r, s in zip(rhos, sigmas))
        assert rhs - lhs >= -1e-9


def test_norm_relations():
    rng = np.random.default_rng(9)
    for _ in range(20):
        a = random_hermitian(2, rng)
        b = random_hermitian(3, rng)
        assert trace_norm(a) >= spectral_norm(a) - 1e-12
        assert trace_norm(tensor(a, b)) == pytest.approx(trace_norm(a) * trace_norm(b))
        p, q = random_psd(2, rng), random_psd(3, rng)
        assert spectral_norm(tensor(p, q)) == pytest.approx(spectral_norm(p) * spectral_norm(q))


def test_spectral_norm():
    assert spectral_norm(C) == pytest.approx(0.5)
    assert spectral_norm(HermitianOperator.identity(3)) == pytest.approx(1)
    assert spectral_norm(tensor(C, C)) == pytest.approx(0.25)


def test_hs_inner_example():
    # The entries C cannot have if it were separable.
    assert hs_inner(C, projector((2, 2), 0b11)) == 0
    assert hs_inner(C, ket_bra((2, 2), 0b01, 0b10)) == pytest.approx(0.25)


def test_hs_inner():
    rng = np.random.default_rng(10)
    rho = random_density(3, rng)
    assert hs_inner(HermitianOperator.identity(3), rho) == pytest.approx(1)
    a = random_hermitian(4, rng)
    b = random_hermitian(4, rng)
    direct = np.sum(np.conj(a.matrix) * b.matrix)
    assert hs_inner(a, b) == pytest.approx(direct.real)
    assert hs_inner(a, b) == pytest.approx(hs_inner(b, a))
    with pytest.raises(ValueError):
        hs_inner(a, rho)


def test_operations_stay_hermitian():
    rng = np.random.default_rng(11)
    a = random_hermitian((2, 3), rng)
    b = random_hermitian(2, rng)
    for out in (tensor(a, b), partial_trace(a, [1]), partial_transpose(a, 0)):
        assert out.max_asymmetry() <= 1e-12


def test_json():
    rng = np.random.default_rng(12)
    a = random_hermitian((2, 2), rng)
    b = HermitianOperator.from_json(a.to_json())
    assert b.dims == (2, 2)
    assert np.array_equal(a.matrix, b.matrix)
    with pytest.raises(NotHermitianError):
        HermitianOperator.from_json({'dims': [2], 're': [[0, 1], [0, 0]]})

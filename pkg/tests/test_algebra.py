import numpy as np
import pytest

import corpus
from commoneig import algebra as alg
from commoneig import linalg as la

X, Y, Z = corpus.PAULI["X"], corpus.PAULI["Y"], corpus.PAULI["Z"]
I2 = corpus.I2


def _closed(A, tol=1e-8):
    for a in A.basis:
        if not A.contains(la.dagger(a)):
            return False
        for b in A.basis:
            if not A.contains(a @ b):
                return False
    return A.contains(np.eye(A.ambient_dim))


def test_generate_diagonal():
    A = alg.generate_algebra([Z], 2)
    assert A.dim == 2 and _closed(A)


def test_generate_full():
    A = alg.generate_algebra([Z, X], 2)
    assert A.dim == 4 and _closed(A)


def test_generate_without_generators():
    assert alg.generate_algebra([], 3).dim == 1


def test_bicommutant():
    rng = np.random.default_rng(0)
    for _ in range(8):
        D = int(rng.integers(2, 5))
        gens = [la.random_hermitian(D, rng) * (rng.random() < 0.5) + np.diag(rng.integers(0, 2, D)) for _ in range(2)]
        A = alg.generate_algebra(gens, D)
        assert alg.commutant(alg.commutant(A)).dim == A.dim


def test_center_examples():
    assert alg.center(alg.full_algebra(2)).dim == 1
    diag = alg.generate_algebra([np.diag([1.0, 2.0, 3.0])], 3)
    assert diag.dim == 3 and alg.center(diag).dim == 3


def _block_algebra(rng, spec):
    """⊕ L(C^{d1}) ⊗ I_{d2} hidden by a random unitary; returns generators and D."""
    D = sum(d1 * d2 for d1, d2 in spec)
    gens = []
    for _ in range(3):
        M = np.zeros((D, D), dtype=complex)
        off = 0
        for d1, d2 in spec:
            M[off:off + d1 * d2, off:off + d1 * d2] = np.kron(la.random_hermitian(d1, rng), np.eye(d2))
            off += d1 * d2
        gens.append(M)
    # block indicators keep blocks with identical d1 apart
    off = 0
    for k, (d1, d2) in enumerate(spec):
        P = np.zeros((D, D), dtype=complex)
        P[off:off + d1 * d2, off:off + d1 * d2] = np.eye(d1 * d2) * (k + 1)
        gens.append(P)
        off += d1 * d2
    U = la.random_unitary(D, rng)
    return [U @ g @ U.conj().T for g in gens], D


@pytest.mark.parametrize("spec", [[(2, 1)], [(2, 2)], [(2, 1), (1, 2)], [(1, 1), (1, 1), (1, 1)], [(2, 2), (1, 3), (3, 1)]])
def test_block_decompose_recovers_dims(spec):
    rng = np.random.default_rng(len(spec))
    gens, D = _block_algebra(rng, spec)
    A = alg.generate_algebra(gens, D)
    assert alg.center(A).dim == len(spec)
    bd = alg.block_decompose(A, check_ops=gens)
    assert sorted((b.d1, b.d2) for b in bd.blocks) == sorted(spec)
    total = sum(b.projector for b in bd.blocks)
    assert np.allclose(total, np.eye(D), atol=1e-8)
    for g in gens:
        assert np.allclose(bd.reassemble(g), g, atol=1e-7)
        for b in bd.blocks:
            assert b.residual(g) < 1e-7


def test_fact1_archetype():
    A = alg.generate_algebra([np.kron(X, I2), np.kron(Z, I2)], 4)
    U, d1, d2 = alg.fact1(A)
    assert (d1, d2) == (2, 2)
    for a in A.basis:
        M = U.conj().T @ a @ U
        m = np.einsum("ikjk->ij", M.reshape(2, 2, 2, 2)) / 2
        assert np.allclose(M, np.kron(m, I2), atol=1e-8)


def test_commutant_extremes():
    assert alg.commutant(alg.full_algebra(3)).dim == 1
    assert alg.commutant(alg.scalars(3)).dim == 9


def test_commutant_dimension_inequality():
    rng = np.random.default_rng(5)
    for spec in ([(2, 2)], [(2, 1), (1, 2)], [(3, 1)], [(1, 2), (1, 2)], [(2, 1), (2, 2)]):
        gens, D = _block_algebra(rng, spec)
        A = alg.generate_algebra(gens, D)
        Ac = alg.commutant(A)
        assert A.dim == sum(d1 * d1 for d1, _ in spec)
        assert Ac.dim == sum(d2 * d2 for _, d2 in spec)
        assert A.dim * Ac.dim >= D * D
        # Cauchy-Schwarz: equality iff d1/d2 is the same in every block
        ratios = {d1 / d2 for d1, d2 in spec}
        assert (A.dim * Ac.dim == D * D) == (len(ratios) == 1)

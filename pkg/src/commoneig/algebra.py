"""Finite-dimensional C*-algebras given by matrix generators.

An algebra is stored as a Hilbert-Schmidt orthonormal basis.  The module
computes closures, centers and commutants, and splits an algebra into
blocks ``⊕_α L(C^{d1}) ⊗ I_{d2}`` with an explicit basis change per block.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import linalg as la
from .errors import DecompositionFailed
from .linalg import DEFAULT_TOL, ToleranceContext

MAX_RESEEDS = 8


@dataclass(frozen=True, eq=False)
class AlgebraBasis:
    ambient_dim: int
    basis: tuple[np.ndarray, ...]
    contains_identity: bool = True

    @property
    def dim(self) -> int:
        return len(self.basis)

    def as_columns(self) -> np.ndarray:
        """Basis as columns of a D²×dim matrix (row-major vectorization)."""
        if not self.basis:
            return np.zeros((self.ambient_dim ** 2, 0), dtype=complex)
        return np.stack([b.ravel() for b in self.basis], axis=1)

    def contains(self, M: np.ndarray, tol: ToleranceContext = DEFAULT_TOL) -> bool:
        Q = self.as_columns()
        v = np.asarray(M, dtype=complex).ravel()
        res = v - Q @ (la.dagger(Q) @ v)
        return bool(np.linalg.norm(res) <= tol.eps_eq * max(1.0, np.linalg.norm(v)))

    def hermitian_elements(self) -> list[np.ndarray]:
        out = []
        for b in self.basis:
            out.append((b + la.dagger(b)) / 2)
            out.append((b - la.dagger(b)) / 2j)
        return out

    def random_hermitian(self, rng: np.random.Generator) -> np.ndarray:
        H = self.hermitian_elements()
        c = rng.standard_normal(len(H))
        return sum(ci * h for ci, h in zip(c, H))


def _extend_orthonormal(Q: np.ndarray, C: np.ndarray, tol: ToleranceContext) -> np.ndarray:
    """Append to ``Q`` an orthonormal basis of span(C) modulo span(Q)."""
    if C.shape[1] == 0:
        return Q
    scale = max(1.0, float(np.max(np.linalg.norm(C, axis=0))))
    R = C - Q @ (la.dagger(Q) @ C)
    R = R - Q @ (la.dagger(Q) @ R)
    U, s, _ = np.linalg.svd(R, full_matrices=False)
    k = int(np.sum(s > 1e3 * tol.eps_rank * scale))
    if k == 0:
        return Q
    return np.hstack([Q, U[:, :k]])


def _from_columns(Q: np.ndarray, D: int) -> AlgebraBasis:
    basis = tuple(Q[:, i].reshape(D, D) for i in range(Q.shape[1]))
    return AlgebraBasis(D, basis, True)


def generate_algebra(
    generators: Sequence[np.ndarray], ambient_dim: int, tol: ToleranceContext = DEFAULT_TOL
) -> AlgebraBasis:
    """Smallest †-closed unital algebra containing ``generators``.

    Starts from span{I, g, g†} and multiplies by the generators until the
    dimension stops growing (at most ambient_dim² elements).
    """
    D = int(ambient_dim)
    gens = []
    for g in generators:
        g = np.asarray(g, dtype=complex)
        if g.shape != (D, D):
            raise ValueError(f"generator of shape {g.shape}, expected {(D, D)}")
        gens.append(g)
        gens.append(la.dagger(g))
    I = np.eye(D, dtype=complex) / np.sqrt(D)
    Q = np.zeros((D * D, 0), dtype=complex)
    Q = _extend_orthonormal(Q, np.stack([I.ravel()] + [g.ravel() for g in gens], axis=1), tol)
    frontier = Q if gens else Q[:, :0]
    while frontier.shape[1] and Q.shape[1] < D * D:
        cand = []
        for i in range(frontier.shape[1]):
            b = frontier[:, i].reshape(D, D)
            for g in gens:
                cand.append((g @ b).ravel())
        old = Q.shape[1]
        Q = _extend_orthonormal(Q, np.stack(cand, axis=1), tol)
        frontier = Q[:, old:]
    return _from_columns(Q, D)


def full_algebra(D: int) -> AlgebraBasis:
    basis = []
    for i in range(D):
        for j in range(D):
            E = np.zeros((D, D), dtype=complex)
            E[i, j] = 1
            basis.append(E)
    return AlgebraBasis(D, tuple(basis), True)


def scalars(D: int) -> AlgebraBasis:
    return AlgebraBasis(D, (np.eye(D, dtype=complex) / np.sqrt(D),), True)


def _null_hermitian(N: np.ndarray, tol: ToleranceContext) -> np.ndarray:
    """Null space of a PSD normal matrix N (columns orthonormal)."""
    w, V = np.linalg.eigh((N + la.dagger(N)) / 2)
    scale = max(1.0, float(w[-1]) if w.size else 1.0)
    return V[:, w <= 1e2 * tol.eps_rank * scale]


def commutant_of(ops: Sequence[np.ndarray], D: int, tol: ToleranceContext = DEFAULT_TOL) -> AlgebraBasis:
    """All X with [X, b] = 0 for every b in ``ops``."""
    I = np.eye(D, dtype=complex)
    N = np.zeros((D * D, D * D), dtype=complex)
    for b in ops:
        # row-major vec: vec(Xb) = (I ⊗ bᵀ) vec X, vec(bX) = (b ⊗ I) vec X
        M = np.kron(I, b.T) - np.kron(b, I)
        N += la.dagger(M) @ M
    K = _null_hermitian(N, tol) if ops else np.eye(D * D, dtype=complex)
    return _from_columns(K, D)


def commutant(A: AlgebraBasis, tol: ToleranceContext = DEFAULT_TOL) -> AlgebraBasis:
    return commutant_of(A.basis, A.ambient_dim, tol)


def center(A: AlgebraBasis, tol: ToleranceContext = DEFAULT_TOL) -> AlgebraBasis:
    """Z(A) = {X ∈ A : XY = YX for all Y ∈ A}."""
    k = A.dim
    if k == 0:
        return A
    D = A.ambient_dim
    # coefficients c with Σ c_i [b_i, b_j] = 0 for all j
    N = np.zeros((k, k), dtype=complex)
    for bj in A.basis:
        M = np.stack([(bi @ bj - bj @ bi).ravel() for bi in A.basis], axis=1)
        N += la.dagger(M) @ M
    C = _null_hermitian(N, tol)
    Q = A.as_columns() @ C
    Q, _ = np.linalg.qr(Q)
    return _from_columns(Q, D)


def has_trivial_center(A: AlgebraBasis, tol: ToleranceContext = DEFAULT_TOL) -> bool:
    return center(A, tol).dim == 1


def restrict(A: AlgebraBasis, W: np.ndarray, tol: ToleranceContext = DEFAULT_TOL) -> AlgebraBasis:
    """Compress A to the range of isometry W (assumed A-invariant)."""
    m = W.shape[1]
    cols = np.stack([(la.dagger(W) @ b @ W).ravel() for b in A.basis], axis=1)
    Q = _extend_orthonormal(np.zeros((m * m, 0), dtype=complex), cols, tol)
    return _from_columns(Q, m)


@dataclass(frozen=True, eq=False)
class Block:
    """One summand H^(α) = C^{d1} ⊗ C^{d2} of a block decomposition.

    ``isometry`` maps C^{d1·d2} into the ambient space and ``unitary`` is
    the basis change with U† (W† a W) U = m ⊗ I_{d2} for every a ∈ A.
    """

    isometry: np.ndarray
    d1: int
    d2: int
    unitary: np.ndarray

    @property
    def frame(self) -> np.ndarray:
        """Ambient-space isometry W·U whose columns are ordered (i, k)."""
        return self.isometry @ self.unitary

    @property
    def projector(self) -> np.ndarray:
        return self.isometry @ la.dagger(self.isometry)

    def left_factor(self, a: np.ndarray) -> np.ndarray:
        """m with frame† a frame = m ⊗ I_{d2} (partial trace form)."""
        F = self.frame
        M = (la.dagger(F) @ a @ F).reshape(self.d1, self.d2, self.d1, self.d2)
        return np.einsum("ikjk->ij", M) / self.d2

    def residual(self, a: np.ndarray) -> float:
        F = self.frame
        M = la.dagger(F) @ a @ F
        m = self.left_factor(a)
        return float(np.max(np.abs(M - np.kron(m, np.eye(self.d2))), initial=0.0))


@dataclass(frozen=True, eq=False)
class BlockDecomposition:
    ambient_dim: int
    blocks: tuple[Block, ...]

    def reassemble(self, a: np.ndarray) -> np.ndarray:
        out = np.zeros((self.ambient_dim, self.ambient_dim), dtype=complex)
        for b in self.blocks:
            m = b.left_factor(a)
            F = b.frame
            out += F @ np.kron(m, np.eye(b.d2)) @ la.dagger(F)
        return out


def _fingerprint(P: np.ndarray) -> tuple:
    return tuple(np.round(np.abs(P).ravel(), 6))


def fact1(
    A: AlgebraBasis, tol: ToleranceContext = DEFAULT_TOL, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, int, int]:
    """Tensor factorization of an algebra with trivial center.

    Returns a unitary U and dimensions (d1, d2) with U† a U = m ⊗ I_{d2}
    for all a ∈ A.  A generic Hermitian element of the commutant splits
    the space into d2 copies of the irreducible module; intertwiners drawn
    from the commutant align the copies.
    """
    rng = rng or tol.rng()
    n = A.ambient_dim
    Ac = commutant(A, tol)
    d2 = int(round(np.sqrt(Ac.dim)))
    d1 = int(round(np.sqrt(A.dim)))
    if d1 * d1 != A.dim or d2 * d2 != Ac.dim or d1 * d2 != n:
        raise DecompositionFailed(f"algebra of dim {A.dim} with commutant {Ac.dim} is not a factor on C^{n}")
    if d2 == 1:
        return np.eye(n, dtype=complex), d1, 1
    Y = Ac.random_hermitian(rng)
    w, V = np.linalg.eigh(Y)
    gap = 1e3 * tol.eps_eq * max(1.0, float(np.max(np.abs(w))))
    groups = la.cluster_values(w, gap)
    if len(groups) != d2 or any(len(g) != d1 for g in groups):
        raise DecompositionFailed("commutant element is not generic")
    F = [V[:, g] for g in groups]
    X = sum(c * b for c, b in zip(rng.standard_normal(Ac.dim) + 1j * rng.standard_normal(Ac.dim), Ac.basis))
    cols = np.zeros((n, d1, d2), dtype=complex)
    cols[:, :, 0] = F[0]
    for k in range(1, d2):
        T = la.dagger(F[k]) @ X @ F[0]
        c = np.sqrt(np.real(np.trace(la.dagger(T) @ T)) / d1)
        if c < 1e2 * tol.eps_eq:
            raise DecompositionFailed("degenerate intertwiner")
        cols[:, :, k] = F[k] @ (T / c)
    U = cols.reshape(n, d1 * d2)
    if not la.is_unitary(U, ToleranceContext(eps_eq=max(tol.eps_eq, 1e-7))):
        raise DecompositionFailed("assembled basis change is not unitary")
    return U, d1, d2


def block_decompose(
    A: AlgebraBasis, tol: ToleranceContext = DEFAULT_TOL, check_ops: Sequence[np.ndarray] | None = None
) -> BlockDecomposition:
    """Split A into ⊕_α L(C^{d1}) ⊗ I_{d2}.

    Blocks come from the eigenspaces of a random Hermitian central element;
    each block is factorized with :func:`fact1`.  Up to ``MAX_RESEEDS``
    attempts are made before :class:`DecompositionFailed` is raised.
    Blocks are ordered by descending d1, then d2, then a projector
    fingerprint.
    """
    D = A.ambient_dim
    Z = center(A, tol)
    ops = list(check_ops) if check_ops is not None else list(A.basis)
    last_err: Exception | None = None
    for attempt in range(MAX_RESEEDS):
        rng = tol.rng(1000 * attempt + 17)
        try:
            C = Z.random_hermitian(rng)
            w, V = np.linalg.eigh(C)
            gap = 1e3 * tol.eps_eq * max(1.0, float(np.max(np.abs(w))))
            groups = la.cluster_values(w, gap)
            if len(groups) != Z.dim:
                raise DecompositionFailed("central element is not generic")
            blocks = []
            for g in groups:
                W = V[:, g]
                Ab = restrict(A, W, tol)
                U, d1, d2 = fact1(Ab, tol, rng)
                blk = Block(W, d1, d2, U)
                for a in ops:
                    scale = max(1.0, float(np.max(np.abs(a))))
                    if blk.residual(a) > 1e2 * tol.eps_eq * scale:
                        raise DecompositionFailed("factorization residual too large")
                blocks.append(blk)
            blocks.sort(key=lambda b: (-b.d1, -b.d2, _fingerprint(b.projector)))
            return BlockDecomposition(D, tuple(blocks))
        except DecompositionFailed as exc:
            last_err = exc
            continue
    raise DecompositionFailed(f"block decomposition failed after {MAX_RESEEDS} attempts: {last_err}")

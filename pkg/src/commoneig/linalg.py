"""Dense complex linear algebra with centralized tolerance decisions.

All rank and equality decisions in the package go through a
:class:`ToleranceContext`.  Tensor products use the big-endian convention:
the first factor (particle 0) is the most significant index.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np

from .errors import NotHermitian, SupportMismatch

Matrix = np.ndarray


@dataclass(frozen=True)
class ToleranceContext:
    """Numerical thresholds plus the seed for generic-element sampling.

    Attributes
    ----------
    eps_rank : float
        Singular values at or below ``eps_rank * max(sigma_max, 1)`` count as zero.
    eps_eq : float
        Entrywise tolerance for matrix equality.
    eps_herm : float
        Tolerance for the Hermiticity test.
    seed : int
        Seed for reproducible random combinations.
    """

    eps_rank: float = 1e-9
    eps_eq: float = 1e-8
    eps_herm: float = 1e-9
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("eps_rank", "eps_eq", "eps_herm"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ValueError(f"{name} must lie in (0, 1), got {v}")

    def rng(self, offset: int = 0) -> np.random.Generator:
        return np.random.default_rng(self.seed + offset)

    def with_seed(self, seed: int) -> "ToleranceContext":
        return ToleranceContext(self.eps_rank, self.eps_eq, self.eps_herm, seed)


DEFAULT_TOL = ToleranceContext()


def as_matrix(M, square: bool = False) -> Matrix:
    """Coerce ``M`` to a finite 2-D complex array."""
    A = np.asarray(M, dtype=complex)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {A.shape}")
    if square and A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


def dagger(M: Matrix) -> Matrix:
    return np.conj(M).T


def is_hermitian(M: Matrix, tol: ToleranceContext = DEFAULT_TOL) -> bool:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    return bool(np.max(np.abs(M - dagger(M)), initial=0.0) <= tol.eps_herm * scale)


def allclose(A: Matrix, B: Matrix, tol: ToleranceContext = DEFAULT_TOL) -> bool:
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        return False
    return bool(np.max(np.abs(A - B), initial=0.0) <= tol.eps_eq)


def hermitian_eigendecomposition(M, tol: ToleranceContext = DEFAULT_TOL):
    """Eigenvalues (ascending) and orthonormal eigenvector columns of ``M``."""
    A = as_matrix(M, square=True)
    if not is_hermitian(A, tol):
        raise NotHermitian("matrix is not Hermitian within tolerance")
    w, V = np.linalg.eigh((A + dagger(A)) / 2)
    return w, V


def singular_values(M) -> np.ndarray:
    A = np.asarray(M, dtype=complex)
    if A.size == 0:
        return np.zeros(0)
    return np.linalg.svd(A, compute_uv=False)


def _cutoff(s: np.ndarray, tol: ToleranceContext) -> float:
    smax = float(s[0]) if s.size else 0.0
    return tol.eps_rank * max(smax, 1.0)


def rank(M, tol: ToleranceContext = DEFAULT_TOL) -> int:
    s = singular_values(M)
    return int(np.sum(s > _cutoff(s, tol)))


def image_basis(M, tol: ToleranceContext = DEFAULT_TOL) -> Matrix:
    """Orthonormal basis (as columns) of the column space of ``M``."""
    A = np.asarray(M, dtype=complex)
    if A.size == 0:
        return np.zeros((A.shape[0], 0), dtype=complex)
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    k = int(np.sum(s > _cutoff(s, tol)))
    return U[:, :k]


def kernel_basis(M, tol: ToleranceContext = DEFAULT_TOL) -> Matrix:
    """Orthonormal basis (as columns) of the null space of ``M``."""
    A = np.asarray(M, dtype=complex)
    n = A.shape[1]
    if A.shape[0] == 0 or A.size == 0:
        return np.eye(n, dtype=complex)
    _, s, Vh = np.linalg.svd(A, full_matrices=True)
    k = int(np.sum(s > _cutoff(s, tol)))
    return dagger(Vh[k:, :])


def projector_onto(B: Matrix) -> Matrix:
    """Orthogonal projector onto the span of orthonormal columns ``B``."""
    return B @ dagger(B)


def eigenspace_basis(M, value: float, tol: ToleranceContext = DEFAULT_TOL) -> Matrix:
    """Orthonormal basis of Ker(M - value*I) for Hermitian ``M``."""
    A = as_matrix(M, square=True)
    w, V = np.linalg.eigh((A + dagger(A)) / 2)
    scale = max(1.0, float(np.max(np.abs(w), initial=0.0)), abs(value))
    return V[:, np.abs(w - value) <= spectral_tol(scale, tol)]


def spectral_tol(scale: float, tol: ToleranceContext = DEFAULT_TOL) -> float:
    """Eigenvalue matching window for an operator of norm ``scale``."""
    return max(1e-7 * scale, 10 * tol.eps_eq)


def cluster_values(values: Sequence[float], gap: float) -> list[list[int]]:
    """Group indices of sorted ``values`` into runs whose consecutive gaps are <= gap."""
    order = np.argsort(values, kind="stable")
    groups: list[list[int]] = []
    prev = None
    for i in order:
        v = values[i]
        if prev is None or v - prev > gap:
            groups.append([int(i)])
        else:
            groups[-1].append(int(i))
        prev = v
    return groups


def tensor(*mats) -> Matrix:
    """Kronecker product, first factor most significant."""
    if len(mats) == 1 and isinstance(mats[0], (list, tuple)):
        mats = tuple(mats[0])
    if not mats:
        return np.ones((1, 1), dtype=complex)
    return reduce(np.kron, [np.asarray(m, dtype=complex) for m in mats])


def _check_support(support: Sequence[int], dims: Sequence[int]) -> None:
    if len(set(support)) != len(support):
        raise SupportMismatch(f"repeated particle in support {tuple(support)}")
    for p in support:
        if not (0 <= p < len(dims)):
            raise SupportMismatch(f"particle {p} outside 0..{len(dims) - 1}")


def embed_local(h, support: Sequence[int], dims: Sequence[int]) -> Matrix:
    """The operator h[S]: ``h`` on ``support`` tensored with identity elsewhere.

    The factor order of ``h`` follows the order of ``support``.
    """
    support = list(support)
    dims = [int(d) for d in dims]
    _check_support(support, dims)
    h = np.asarray(h, dtype=complex)
    dS = int(np.prod([dims[p] for p in support], dtype=np.int64))
    if h.shape != (dS, dS):
        raise SupportMismatch(f"matrix of shape {h.shape} does not match support dimension {dS}")
    comp = [p for p in range(len(dims)) if p not in support]
    dC = int(np.prod([dims[p] for p in comp], dtype=np.int64))
    full = np.kron(h, np.eye(dC, dtype=complex))
    order = support + comp
    n = len(dims)
    shape = [dims[p] for p in order]
    T = full.reshape(shape + shape)
    inv = np.argsort(order)
    T = T.transpose(list(inv) + [n + i for i in inv])
    D = int(np.prod(dims, dtype=np.int64))
    return T.reshape(D, D)


def apply_local(h, support: Sequence[int], dims: Sequence[int], B: Matrix) -> Matrix:
    """Compute h[S] @ B without forming the full operator."""
    support = list(support)
    dims = [int(d) for d in dims]
    n = len(dims)
    B = np.asarray(B, dtype=complex)
    m = B.shape[1]
    k = len(support)
    T = B.reshape(dims + [m])
    hT = np.asarray(h, dtype=complex).reshape([dims[p] for p in support] * 2)
    out = np.tensordot(hT, T, axes=(list(range(k, 2 * k)), support))
    # tensordot puts the new axes first; move them back to their slots
    rest = [p for p in range(n) if p not in support]
    cur = support + rest + [n]
    out = out.transpose(np.argsort(cur))
    return out.reshape(B.shape[0], m)


def apply_factors(factors: Sequence[Matrix], B: Matrix) -> Matrix:
    """Compute (F_0 ⊗ F_1 ⊗ ...) @ B one site at a time."""
    dims = [np.asarray(f).shape[0] for f in factors]
    out = np.asarray(B, dtype=complex)
    for j, f in enumerate(factors):
        f = np.asarray(f)
        if f.shape == (dims[j], dims[j]) and np.array_equal(f, np.eye(dims[j])):
            continue
        out = apply_local(f, [j], dims, out)
    return out


def operator_schmidt(h, dim_left: int, dim_right: int, tol: ToleranceContext = DEFAULT_TOL):
    """Operator Schmidt decomposition h = sum_a A_a ⊗ B_a.

    Returns two lists of equal length (the Schmidt rank).  Both families
    are linearly independent; the singular value is split evenly between
    the two factors.
    """
    h = np.asarray(h, dtype=complex)
    if h.shape != (dim_left * dim_right, dim_left * dim_right):
        raise SupportMismatch(f"shape {h.shape} is not ({dim_left}*{dim_right})^2")
    R = h.reshape(dim_left, dim_right, dim_left, dim_right).transpose(0, 2, 1, 3)
    R = R.reshape(dim_left * dim_left, dim_right * dim_right)
    U, s, Vh = np.linalg.svd(R, full_matrices=False)
    k = int(np.sum(s > _cutoff(s, tol)))
    A = [np.sqrt(s[a]) * U[:, a].reshape(dim_left, dim_left) for a in range(k)]
    B = [np.sqrt(s[a]) * Vh[a, :].reshape(dim_right, dim_right) for a in range(k)]
    return A, B


def bipartite_split(h, support: Sequence[int], dims: Sequence[int], left: Sequence[int]):
    """Reorder a multi-site operator so ``left`` sites come first; return (h', dl, dr)."""
    support = list(support)
    left = list(left)
    right = [p for p in support if p not in left]
    order = [support.index(p) for p in left + right]
    sd = [dims[p] for p in support]
    k = len(support)
    T = np.asarray(h, dtype=complex).reshape(sd + sd)
    T = T.transpose(order + [k + i for i in order])
    dl = int(np.prod([dims[p] for p in left], dtype=np.int64))
    dr = int(np.prod([dims[p] for p in right], dtype=np.int64))
    return T.reshape(dl * dr, dl * dr), dl, dr


def random_unitary(d: int, rng: np.random.Generator) -> Matrix:
    """Haar-distributed unitary via QR with phase fix."""
    Z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    Q, R = np.linalg.qr(Z)
    ph = np.diag(R) / np.abs(np.diag(R))
    return Q * ph


def random_hermitian(d: int, rng: np.random.Generator) -> Matrix:
    Z = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (Z + dagger(Z)) / 2


def is_unitary(U: Matrix, tol: ToleranceContext = DEFAULT_TOL) -> bool:
    U = np.asarray(U)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        return False
    return allclose(dagger(U) @ U, np.eye(U.shape[0]), tol)


def is_isometry(V: Matrix, tol: ToleranceContext = DEFAULT_TOL) -> bool:
    V = np.asarray(V)
    if V.ndim != 2 or V.shape[1] > V.shape[0]:
        return False
    return allclose(dagger(V) @ V, np.eye(V.shape[1]), tol)


def is_projector(P: Matrix, tol: ToleranceContext = DEFAULT_TOL) -> bool:
    P = np.asarray(P)
    return is_hermitian(P, tol) and allclose(P @ P, P, tol)


def commutator_norm(A: Matrix, B: Matrix) -> float:
    return float(np.max(np.abs(A @ B - B @ A), initial=0.0))


def unitary_from_isometry(V: Matrix, tol: ToleranceContext = DEFAULT_TOL) -> Matrix:
    """Extend isometry columns to a full unitary."""
    V = np.asarray(V, dtype=complex)
    if V.shape[1] == V.shape[0]:
        return V
    comp = kernel_basis(dagger(V), tol)
    return np.hstack([V, comp[:, : V.shape[0] - V.shape[1]]])


def fix_phase(v: np.ndarray) -> np.ndarray:
    """Rotate a vector so its largest-magnitude entry is real positive."""
    v = np.asarray(v, dtype=complex)
    flat = v.ravel()
    if flat.size == 0:
        return v
    i = int(np.argmax(np.abs(flat)))
    if abs(flat[i]) == 0:
        return v
    return v * (abs(flat[i]) / flat[i])

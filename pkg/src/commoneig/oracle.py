"""Brute-force common eigenspace and the inclusion-exclusion count.

The oracle is the reference every structured solver is tested against.
It intersects kernels one constraint at a time: the current subspace is
invariant under every remaining check (they commute), so each step reduces
to a small Hermitian eigenproblem inside the current basis.  When the
kernels are large that gets expensive, and the oracle instead multiplies
the local eigenprojectors (which commute) and reads the dimension off the
trace of the product.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import linalg as la
from .errors import NotCommuting, NotProjector, TooLarge, TooManyRows
from .instance import (
    MAX_TOTAL_DIM,
    CesInstance,
    FactorRow,
    FactorTable,
    LocalTerm,
    check_norm,
)
from .linalg import DEFAULT_TOL, ToleranceContext

_MAX_DENOM = 2 ** 16


def _local_kernel_fraction(check, lam: float, dims, tol) -> float:
    """Fraction of the space in Ker(H - lam); used to order constraints."""
    scale = max(check_norm(check), abs(lam), 1.0)
    win = la.spectral_tol(scale, tol)
    if isinstance(check, LocalTerm):
        w = np.linalg.eigvalsh(check.matrix)
        return float(np.mean(np.abs(w - lam) <= win))
    vals = np.ones(1)
    for f in check.factors:
        vals = np.multiply.outer(vals, np.linalg.eigvalsh(f)).ravel()
    return float(np.mean(np.abs(vals - lam) <= win))


def _initial_kernel(check, lam: float, dims, tol) -> np.ndarray:
    """Orthonormal basis of Ker(H - lam) built from the check's structure."""
    scale = max(check_norm(check), abs(lam), 1.0)
    win = la.spectral_tol(scale, tol)
    if isinstance(check, LocalTerm):
        w, V = np.linalg.eigh(check.matrix)
        K = V[:, np.abs(w - lam) <= win]
        if K.shape[1] == 0:
            return np.zeros((int(np.prod(dims)), 0), dtype=complex)
        # K ⊗ I on the complement, with axes moved to global order
        comp = [p for p in range(len(dims)) if p not in check.support]
        dC = int(np.prod([dims[p] for p in comp], dtype=np.int64))
        m = K.shape[1]
        full = np.kron(K, np.eye(dC, dtype=complex))  # rows: (support, comp)
        order = list(check.support) + comp
        n = len(dims)
        T = full.reshape([dims[p] for p in order] + [m * dC])
        T = T.transpose(list(np.argsort(order)) + [n])
        return T.reshape(-1, m * dC)
    eig = [np.linalg.eigh(f) for f in check.factors]
    vals = np.ones(1)
    for w, _ in eig:
        vals = np.multiply.outer(vals, w).ravel()
    idx = np.nonzero(np.abs(vals - lam) <= win)[0]
    D = int(np.prod(dims))
    if idx.size == 0:
        return np.zeros((D, 0), dtype=complex)
    multi = np.array(np.unravel_index(idx, [len(w) for w, _ in eig])) if eig else np.zeros((0, idx.size), int)
    cols = np.ones((1, idx.size), dtype=complex)
    for j, (_, V) in enumerate(eig):
        sel = V[:, multi[j]]  # d_j × m
        cols = (cols[:, None, :] * sel[None, :, :]).reshape(-1, idx.size)
    return cols


_MAX_LOCAL = 256


def _local_projector(check, lam: float, dims, tol):
    """Callable B -> P B, P the projector onto Ker(H - lam), or None if it cannot be built."""
    scale = max(check_norm(check), abs(lam), 1.0)
    win = la.spectral_tol(scale, tol)
    dims = list(dims)
    if isinstance(check, LocalTerm):
        sup, h = tuple(check.support), check.matrix
        if h.shape[0] > _MAX_LOCAL:
            return None
        w, V = np.linalg.eigh((h + la.dagger(h)) / 2)
        K = V[:, np.abs(w - lam) <= win]
        P = K @ la.dagger(K)
        return lambda B: la.apply_local(P, sup, dims, B)
    # product check: rotate each site into its eigenbasis, mask, rotate back
    sup, eig, c = [], [], 1.0 + 0j
    for j, f in enumerate(check.factors):
        d = f.shape[0]
        t = np.trace(f) / d
        if np.max(np.abs(f - t * np.eye(d)), initial=0.0) <= tol.eps_eq * max(1.0, abs(t)):
            c *= t
        else:
            sup.append(j)
            eig.append(np.linalg.eigh((f + la.dagger(f)) / 2))
    vals = np.full(1, c)
    for w, _ in eig:
        vals = np.multiply.outer(vals, w).ravel()
    mask = np.abs(vals - lam) <= win
    shape = [dims[j] if j in sup else 1 for j in range(len(dims))] + [1]
    mask = mask.reshape([dims[j] for j in sup]).reshape(shape)

    def apply(B):
        k = B.shape[1]
        for j, (_, V) in zip(sup, eig):
            B = la.apply_local(la.dagger(V), (j,), dims, B)
        B = (B.reshape(dims + [k]) * mask).reshape(-1, k)
        for j, (_, V) in zip(sup, eig):
            B = la.apply_local(V, (j,), dims, B)
        return B

    return apply


def _projector_product_route(x: CesInstance, tol: ToleranceContext, want_basis: bool):
    """dim L = tr(P_1 ... P_r) for commuting eigenprojectors, applied in column chunks."""
    projs = []
    for c, lam in zip(x.checks, x.lambdas):
        pr = _local_projector(c, lam, x.dims, tol)
        if pr is None:
            return None
        projs.append(pr)
    D = x.total_dim
    dims = list(x.dims)

    def apply_all(B):
        for P in projs:
            B = P(B)
        return B

    step = max(1, (1 << 22) // D)
    tr = 0.0
    for lo in range(0, D, step):
        hi = min(D, lo + step)
        E = np.zeros((D, hi - lo), dtype=complex)
        E[np.arange(lo, hi), np.arange(hi - lo)] = 1.0
        tr += float(np.trace(apply_all(E)[lo:hi]).real)
    dim = int(round(tr))
    if abs(tr - dim) > 1e-6 * max(1.0, tr):
        return None  # projectors do not commute to working precision
    if not want_basis or dim == 0:
        return dim, (np.zeros((D, 0), dtype=complex) if want_basis else None)
    rng = tol.rng(104729)
    G = rng.standard_normal((D, dim)) + 1j * rng.standard_normal((D, dim))
    U, sv, _ = np.linalg.svd(apply_all(G), full_matrices=False)
    if sv[-1] <= 1e-8 * sv[0]:
        return None
    return dim, U


def _is_exact_diag(x: CesInstance) -> bool:
    def ok(M):
        if np.count_nonzero(M - np.diag(np.diag(M))):
            return False
        d = np.diag(M)
        if np.any(d.imag != 0):
            return False
        return all(Fraction(float(v)).denominator <= _MAX_DENOM for v in d.real)

    for c in x.checks:
        mats = [c.matrix] if isinstance(c, LocalTerm) else list(c.factors)
        if not all(ok(M) for M in mats):
            return False
    return all(Fraction(v).denominator <= _MAX_DENOM for v in x.lambdas)


def _exact_diag_mask(x: CesInstance) -> np.ndarray:
    """Boolean mask of basis states satisfying every check exactly."""
    dims = list(x.dims)
    n = len(dims)
    mask = np.ones(dims, dtype=bool)
    for c, lam in zip(x.checks, x.lambdas):
        target = Fraction(lam)
        if isinstance(c, LocalTerm):
            vals = np.array([Fraction(float(v)) for v in np.diag(c.matrix).real], dtype=object)
            sub = np.array([v == target for v in vals], dtype=bool)
            shape = [dims[p] for p in c.support]
            sub = sub.reshape(shape)
            # move to global order and broadcast over the complement
            order = np.argsort(c.support)
            sub = sub.transpose(order)
            bshape = [dims[p] if p in c.support else 1 for p in range(n)]
            mask &= sub.reshape(bshape)
        else:
            acc = np.array([Fraction(1)], dtype=object)
            for f in c.factors:
                col = np.array([Fraction(float(v)) for v in np.diag(f).real], dtype=object)
                acc = np.multiply.outer(acc, col).ravel()
            mask &= np.array([v == target for v in acc], dtype=bool).reshape(dims)
        if not mask.any():
            break
    return mask.ravel()


def common_eigenspace(
    x: CesInstance, tol: ToleranceContext = DEFAULT_TOL, want_basis: bool = True
):
    """Dimension and orthonormal basis of L_x = ∩_a Ker(H_a − λ_a I).

    Returns
    -------
    (int, ndarray)
        The dimension and a D×dim matrix with orthonormal columns.
    """
    D = x.total_dim
    if D > MAX_TOTAL_DIM:
        raise TooLarge(f"total dimension {D} exceeds {MAX_TOTAL_DIM}")
    if x.r == 0:
        return D, (np.eye(D, dtype=complex) if want_basis else None)
    if _is_exact_diag(x):
        mask = _exact_diag_mask(x)
        idx = np.nonzero(mask)[0]
        if not want_basis:
            return int(idx.size), None
        B = np.zeros((D, idx.size), dtype=complex)
        B[idx, np.arange(idx.size)] = 1.0
        return int(idx.size), B
    order = sorted(
        range(x.r), key=lambda a: _local_kernel_fraction(x.checks[a], x.lambdas[a], x.dims, tol)
    )
    first = order[0]
    k0 = _local_kernel_fraction(x.checks[first], x.lambdas[first], x.dims, tol) * D
    if x.r > 1 and (k0 >= 256 or k0 * k0 * (x.r - 1) > 4.0 * D * x.r * 64):
        out = _projector_product_route(x, tol, want_basis)
        if out is not None:
            return out
    B = _initial_kernel(x.checks[first], x.lambdas[first], x.dims, tol)
    for a in order[1:]:
        if B.shape[1] == 0:
            break
        lam = x.lambdas[a]
        AB = x.apply(a, B) - lam * B
        M = la.dagger(B) @ AB
        M = (M + la.dagger(M)) / 2
        w, V = np.linalg.eigh(M)
        scale = max(check_norm(x.checks[a]), abs(lam), 1.0)
        keep = np.abs(w) <= la.spectral_tol(scale, tol)
        B = B @ V[:, keep]
        # re-orthonormalize to stop drift
        if B.shape[1]:
            B, _ = np.linalg.qr(B)
    return int(B.shape[1]), B


def dimension(x: CesInstance, tol: ToleranceContext = DEFAULT_TOL) -> int:
    return common_eigenspace(x, tol, want_basis=False)[0]


def membership_residual(x: CesInstance, psi: np.ndarray) -> float:
    """max_a ||(H_a − λ_a) ψ|| for a normalized state."""
    psi = np.asarray(psi, dtype=complex).reshape(-1, 1)
    psi = psi / np.linalg.norm(psi)
    return max(
        (float(np.linalg.norm(x.apply(a, psi) - x.lambdas[a] * psi)) for a in range(x.r)),
        default=0.0,
    )


# --------------------------------------------------------------------------
# inclusion-exclusion


class _RankOracle:
    """r(Ω) = rk ∏_{a∈Ω} H_a for commuting projectors in any supported form."""

    def __init__(self, projectors, dims: Sequence[int] | None, tol: ToleranceContext):
        self.tol = tol
        if isinstance(projectors, CesInstance):
            if any(abs(v) > tol.eps_eq for v in projectors.lambdas):
                raise ValueError("inclusion-exclusion needs lambda = 0 for every check")
            if projectors.is_factorized():
                projectors = projectors.to_table()
            else:
                dims = projectors.dims
                projectors = [projectors.dense(a) for a in range(projectors.r)]
        if isinstance(projectors, FactorTable):
            self.kind = "table"
            self.cells = [list(row) for row in projectors.cells]
            self.dims = list(projectors.dims)
            self.r = projectors.r
            self.D = projectors.total_dim
            for row in self.cells:
                for c in row:
                    if not la.is_projector(c, tol):
                        raise NotProjector("table cell is not a projector")
            self._check_commuting_table()
        else:
            self.kind = "dense"
            self.mats = [np.asarray(P, dtype=complex) for P in projectors]
            self.r = len(self.mats)
            self.D = self.mats[0].shape[0] if self.mats else int(np.prod(dims or [1]))
            for P in self.mats:
                if not la.is_projector(P, tol):
                    raise NotProjector("operator is not a projector")
            for a, b in itertools.combinations(range(self.r), 2):
                if la.commutator_norm(self.mats[a], self.mats[b]) > tol.eps_eq:
                    raise NotCommuting(f"projectors {a} and {b} do not commute")

    def _check_commuting_table(self) -> None:
        from .instance import classify_commutation, NONCOMMUTING

        for a, b in itertools.combinations(range(self.r), 2):
            k = classify_commutation(FactorRow(self.cells[a]), FactorRow(self.cells[b]), tol=self.tol)
            if k == NONCOMMUTING:
                raise NotCommuting(f"rows {a} and {b} do not commute")

    def identity_state(self):
        if self.kind == "table":
            return [np.eye(d, dtype=complex) for d in self.dims]
        return np.eye(self.D, dtype=complex)

    def extend(self, state, a: int):
        if self.kind == "table":
            return [P @ c for P, c in zip(state, self.cells[a])]
        return state @ self.mats[a]

    def rank_of(self, state) -> int:
        if self.kind == "table":
            out = 1
            for P in state:
                k = la.rank(P, self.tol)
                if k == 0:
                    return 0
                out *= k
            return out
        # product of commuting projectors is a projector: rank = trace
        return int(round(float(np.trace(state).real)))


def inclusion_exclusion_dim(
    projectors, dims: Sequence[int] | None = None, tol: ToleranceContext = DEFAULT_TOL
) -> int:
    """dim L_x = Σ_{Ω ⊆ [r]} (−1)^{|Ω|} r(Ω) for commuting projectors with λ = 0.

    ``projectors`` may be a :class:`FactorTable`, a :class:`CesInstance`, or a
    list of dense projector matrices.  Subsets whose product vanishes are
    pruned together with all their supersets.
    """
    ro = _RankOracle(projectors, dims, tol)
    total = 0
    stack = [(0, ro.identity_state(), 0)]  # (next index, product, |Ω|)
    while stack:
        start, state, size = stack.pop()
        rk = ro.D if size == 0 else ro.rank_of(state)
        if rk == 0:
            continue
        total += (-1) ** size * rk
        for a in range(start, ro.r):
            stack.append((a + 1, ro.extend(state, a), size + 1))
    return total


def subset_rank_profile(
    projectors, dims: Sequence[int] | None = None, tol: ToleranceContext = DEFAULT_TOL
) -> dict[tuple[int, ...], int]:
    """Map every subset Ω (as a sorted tuple) to r(Ω); r(∅) = total dimension."""
    ro = _RankOracle(projectors, dims, tol)
    if ro.r > 20:
        raise TooManyRows(f"{ro.r} rows exceeds the limit of 20")
    prof: dict[tuple[int, ...], int] = {}

    def rec(start, state, omega):
        rk = ro.D if not omega else ro.rank_of(state)
        prof[tuple(omega)] = rk
        for a in range(start, ro.r):
            if rk == 0:
                prof_zero(a, omega)
                continue
            rec(a + 1, ro.extend(state, a), omega + [a])

    def prof_zero(a, omega):
        # every superset of a zero-rank subset also has rank 0
        rest = list(range(a + 1, ro.r))
        for k in range(len(rest) + 1):
            for extra in itertools.combinations(rest, k):
                prof[tuple(omega + [a] + list(extra))] = 0

    rec(0, ro.identity_state(), [])
    return dict(sorted(prof.items(), key=lambda kv: (len(kv[0]), kv[0])))

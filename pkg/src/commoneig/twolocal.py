"""Structure theory and NP-witnesses for 2-local common eigenspace problems.

Pipeline
--------
1. :func:`simplify` removes single-particle checks by restricting particle
   spaces, and merges all checks on an edge into one projector Π_jk.
2. :func:`interaction_algebras` reads the per-edge algebras off the
   operator Schmidt decomposition of Π_jk and computes the invariant
   algebra N_j of every particle.
3. :func:`decompose` splits each particle along the blocks of N_j and
   factorizes each block into one subparticle per neighbour.
4. :func:`solve` searches for a block assignment with every edge fixed
   space nonzero.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import algebra as alg
from . import linalg as la
from .errors import (
    CommutationViolation,
    DecompositionFailed,
    InfeasibleAssignment,
    InternalInconsistency,
    NotTwoLocal,
    ParseError,
    ShapeMismatch,
)
from .instance import (
    CesInstance,
    LocalTerm,
    decode_matrix,
    effective_support,
    encode_matrix,
    match_eigenvalue,
    restrict_to_support,
)
from .linalg import DEFAULT_TOL, ToleranceContext

POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass(frozen=True)
class Decided:
    answer: str
    reason: str
    log: tuple[str, ...] = ()


@dataclass(eq=False)
class SimplifiedTwoLocal:
    """Edge projectors on reduced particle spaces.

    ``isometries[j]`` maps the reduced space of particle j (dimension
    ``dims[j]``) into the original one.
    """

    instance: CesInstance
    dims: tuple[int, ...]
    isometries: tuple[np.ndarray, ...]
    edges: dict[tuple[int, int], np.ndarray]
    log: list[str] = field(default_factory=list)

    @property
    def spectators(self) -> tuple[int, ...]:
        touched = {p for e in self.edges for p in e}
        return tuple(j for j in range(len(self.dims)) if j not in touched)

    def neighbours(self, j: int) -> list[int]:
        return sorted([k for (a, k) in self.edges if a == j] + [a for (a, k) in self.edges if k == j])


# --------------------------------------------------------------------------
# simplification


def _compress(h: np.ndarray, support: tuple[int, ...], dims: Sequence[int], j: int, K: np.ndarray):
    """(K† on particle j) h (K on particle j), other factors untouched."""
    mats_l = []
    mats_r = []
    for p in support:
        if p == j:
            mats_l.append(la.dagger(K))
            mats_r.append(K)
        else:
            mats_l.append(np.eye(dims[p]))
            mats_r.append(np.eye(dims[p]))
    return la.tensor(*mats_l) @ h @ la.tensor(*mats_r)


def _joint_eigenspace(mats: list[np.ndarray], lams: list[float], tol: ToleranceContext) -> np.ndarray:
    """Orthonormal basis of ∩ Ker(M_i − λ_i) by iterative compression."""
    D = mats[0].shape[0]
    B = np.eye(D, dtype=complex)
    for M, lam in zip(mats, lams):
        C = la.dagger(B) @ M @ B
        C = (C + la.dagger(C)) / 2
        w, V = np.linalg.eigh(C)
        scale = max(1.0, float(np.linalg.norm(M, 2)), abs(lam))
        B = B @ V[:, np.abs(w - lam) <= la.spectral_tol(scale, tol)]
        if B.shape[1] == 0:
            break
    return B


def simplify(x: CesInstance, tol: ToleranceContext = DEFAULT_TOL) -> SimplifiedTwoLocal | Decided:
    """Apply the three simplifications; may decide the instance negatively."""
    dims = list(x.dims)
    V = [np.eye(d, dtype=complex) for d in dims]
    log: list[str] = []
    terms: list[tuple[tuple[int, ...], np.ndarray, float]] = []

    def reduce_term(sup, h, lam):
        """Shrink a term to its effective support; returns None if dropped."""
        t = LocalTerm(sup, h)
        eff = effective_support(t, dims, tol)
        if len(eff) > 2:
            raise NotTwoLocal(f"check acts on particles {eff}")
        if eff != tuple(sup):
            t = restrict_to_support(t, dims, eff)
        if not eff:
            c = complex(t.matrix[0, 0]) if t.matrix.size else 0.0
            if abs(c - lam) > la.spectral_tol(max(1.0, abs(c)), tol):
                return "neg"
            return None
        return (t.support, t.matrix, lam)

    for a, c in enumerate(x.checks):
        eff = effective_support(c, dims, tol)
        if len(eff) > 2:
            raise NotTwoLocal(f"check {a} acts on particles {eff}")
        t = restrict_to_support(c, dims, eff)
        if not eff:
            cval = complex(t.matrix[0, 0])
            if abs(cval - x.lambdas[a]) > la.spectral_tol(max(1.0, abs(cval)), tol):
                return Decided(NEGATIVE, f"check {a} is the scalar {cval.real:g} != lambda", tuple(log))
            log.append(f"drop trivial check {a}")
            continue
        terms.append((t.support, t.matrix, x.lambdas[a]))

    for _ in range(4 * (len(terms) + sum(dims)) + 8):
        # Simplification 1: every lambda must be an eigenvalue
        for sup, h, lam in terms:
            w = np.linalg.eigvalsh((h + la.dagger(h)) / 2)
            if match_eigenvalue(w, lam, float(np.max(np.abs(w), initial=1.0))) is None:
                return Decided(NEGATIVE, f"lambda {lam:g} outside the spectrum of a check on {sup}", tuple(log))
        # Simplification 2: restrict particles along single-particle checks
        idx = next((i for i, (sup, _, _) in enumerate(terms) if len(sup) == 1), None)
        if idx is not None:
            (j,), h, lam = terms.pop(idx)
            K = la.eigenspace_basis(h, lam, tol)
            if K.shape[1] == 0:
                return Decided(NEGATIVE, f"particle {j} restricted to the zero space", tuple(log))
            V[j] = V[j] @ K
            old = dims[j]
            new_terms = []
            for sup, g, mu in terms:
                if j in sup:
                    g = _compress(g, sup, dims, j, K)
                new_terms.append((sup, g, mu))
            dims[j] = K.shape[1]
            log.append(f"restrict particle {j}: {old} -> {dims[j]}")
            terms = []
            for sup, g, mu in new_terms:
                r = reduce_term(sup, g, mu)
                if r == "neg":
                    return Decided(NEGATIVE, f"restricted check on {sup} became a scalar != lambda", tuple(log))
                if r is not None:
                    terms.append(r)
            continue
        # Simplification 3: merge each edge group into one projector
        groups: dict[tuple[int, int], list[int]] = {}
        for i, (sup, _, _) in enumerate(terms):
            groups.setdefault(tuple(sorted(sup)), []).append(i)
        merged = []
        changed = False
        for e, ids in sorted(groups.items()):
            mats = []
            for i in ids:
                sup, h, lam = terms[i]
                if sup != e:
                    h, _, _ = la.bipartite_split(h, sup, dims, list(e))
                mats.append((h, lam))
            B = _joint_eigenspace([m for m, _ in mats], [l for _, l in mats], tol)
            D = dims[e[0]] * dims[e[1]]
            if B.shape[1] == 0:
                return Decided(NEGATIVE, f"checks on edge {e} have no joint eigenvector", tuple(log))
            if B.shape[1] == D:
                log.append(f"edge {e}: joint eigenspace is everything, dropped")
                changed = True
                continue
            P = B @ la.dagger(B)
            if len(ids) > 1 or not (la.is_projector(mats[0][0], tol) and abs(mats[0][1] - 1) <= tol.eps_eq):
                changed = True
                log.append(f"edge {e}: {len(ids)} check(s) merged into a rank-{B.shape[1]} projector")
            r = reduce_term(e, P, 1.0)
            if r is not None and r != "neg" and len(r[0]) == 1:
                changed = True
                log.append(f"edge {e}: projector acts on particle {r[0][0]} only")
            if r is not None and r != "neg":
                merged.append(r)
        terms = merged
        if not changed:
            break
    else:  # pragma: no cover - the loop bound is generous
        raise InternalInconsistency("simplification did not converge")
    edges = {tuple(sup): h for sup, h, _ in terms}
    return SimplifiedTwoLocal(x, tuple(dims), tuple(V), edges, log)


# --------------------------------------------------------------------------
# interaction algebras


def _edge_schmidt(P: np.ndarray, dj: int, dk: int, tol: ToleranceContext):
    return la.operator_schmidt(P, dj, dk, tol)


def interaction_algebras(s: SimplifiedTwoLocal, tol: ToleranceContext = DEFAULT_TOL):
    """Per-edge algebras (A_{j.k}, A_{k.j}) and per-particle invariant algebras N_j."""
    edge_alg: dict[tuple[int, int], tuple[alg.AlgebraBasis, alg.AlgebraBasis]] = {}
    for (j, k), P in s.edges.items():
        A, B = _edge_schmidt(P, s.dims[j], s.dims[k], tol)
        edge_alg[(j, k)] = (
            alg.generate_algebra(A, s.dims[j], tol),
            alg.generate_algebra(B, s.dims[k], tol),
        )
    per_particle: dict[int, list[alg.AlgebraBasis]] = {j: [] for j in range(len(s.dims))}
    for (j, k), (Aj, Ak) in edge_alg.items():
        per_particle[j].append(Aj)
        per_particle[k].append(Ak)
    N = {}
    for j, algs in per_particle.items():
        for X, Y in itertools.combinations(algs, 2):
            for a in X.basis:
                for b in Y.basis:
                    if la.commutator_norm(a, b) > 1e3 * tol.eps_eq:
                        raise CommutationViolation(f"edge algebras at particle {j} do not commute")
        ops = [b for A in algs for b in A.basis]
        N[j] = alg.commutant_of(ops, s.dims[j], tol) if ops else alg.full_algebra(s.dims[j])
    return edge_alg, N


def is_irreducible(s: SimplifiedTwoLocal, tol: ToleranceContext = DEFAULT_TOL) -> bool:
    """True iff N_j is the scalars for every particle touched by an edge."""
    _, N = interaction_algebras(s, tol)
    spect = set(s.spectators)
    return all(N[j].dim == 1 for j in N if j not in spect)


# --------------------------------------------------------------------------
# subparticle decomposition


@dataclass(eq=False)
class ParticleBlock:
    """Block α of particle j in reduced coordinates.

    ``frame`` has orthonormal columns ordered as the tensor product
    H_{j.j} ⊗ H_{j.k1} ⊗ H_{j.k2} ⊗ ... with neighbours in ascending order.
    """

    frame: np.ndarray
    d_jj: int
    neighbours: tuple[int, ...]
    sub_dims: tuple[int, ...]

    @property
    def dim(self) -> int:
        return self.frame.shape[1]

    @property
    def factor_dims(self) -> tuple[int, ...]:
        return (self.d_jj,) + self.sub_dims

    def sub_dim(self, k: int) -> int:
        return self.sub_dims[self.neighbours.index(k)]


@dataclass(eq=False)
class EdgeBlock:
    h: np.ndarray  # projector on H_{j.k} ⊗ H_{k.j}
    fixed: np.ndarray  # orthonormal basis of M_jk

    @property
    def rank(self) -> int:
        return self.fixed.shape[1]


@dataclass(eq=False)
class SubparticleDecomposition:
    simplified: SimplifiedTwoLocal
    blocks: dict[int, list[ParticleBlock]]
    edge_blocks: dict[tuple[int, int], dict[tuple[int, int], EdgeBlock]]

    def feasible(self, e: tuple[int, int], aj: int, ak: int) -> bool:
        return self.edge_blocks[e][(aj, ak)].rank > 0

    def spectator_factor(self) -> int:
        return int(np.prod([self.simplified.dims[j] for j in self.simplified.spectators], dtype=np.int64))

    def dimension(self) -> int:
        """Σ_α ∏_j dim H_{j.j} ∏_edges dim M_jk, times the spectator dimensions."""
        parts = sorted(self.blocks)
        edges = sorted(self.edge_blocks)
        if not parts:
            return self.spectator_factor()
        total = 0
        assign: dict[int, int] = {}

        def rec(i, acc):
            nonlocal total
            if acc == 0:
                return
            if i == len(parts):
                total += acc
                return
            j = parts[i]
            for a, blk in enumerate(self.blocks[j]):
                assign[j] = a
                f = blk.d_jj
                for e in edges:
                    if j in e and all(p in assign for p in e):
                        if parts.index(e[0]) <= i and parts.index(e[1]) <= i:
                            f *= self.edge_blocks[e][(assign[e[0]], assign[e[1]])].rank
                rec(i + 1, acc * f)
                del assign[j]

        rec(0, 1)
        return total * self.spectator_factor()

    def assignment_dimension(self, assignment: dict[int, int]) -> int:
        f = self.spectator_factor()
        for j, a in assignment.items():
            f *= self.blocks[j][a].d_jj
        for e, tab in self.edge_blocks.items():
            f *= tab[(assignment[e[0]], assignment[e[1]])].rank
        return f


def _right_factor(M: np.ndarray, d1: int, d2: int) -> np.ndarray:
    T = M.reshape(d1, d2, d1, d2)
    return np.einsum("ikil->kl", T) / d1


def _split_first(M: np.ndarray, d_first: int, d_rest: int) -> np.ndarray:
    """Part of I_first ⊗ m acting on the rest."""
    return _right_factor(M, d_first, d_rest)


def _particle_blocks(
    j: int,
    s: SimplifiedTwoLocal,
    edge_alg,
    Nj: alg.AlgebraBasis,
    tol: ToleranceContext,
) -> list[ParticleBlock]:
    nbrs = s.neighbours(j)
    # Schmidt factors of every edge at j, in reduced coordinates of j
    factors: dict[int, list[np.ndarray]] = {}
    for k in nbrs:
        e = (min(j, k), max(j, k))
        Aalg = edge_alg[e][0] if e[0] == j else edge_alg[e][1]
        factors[k] = list(Aalg.basis)
    bd = alg.block_decompose(Nj, tol)
    out = []
    for blk in bd.blocks:
        F = blk.frame
        d1, d2 = blk.d1, blk.d2
        # edge algebras act as I_{d1} ⊗ (·) on this block
        G = np.eye(d2, dtype=complex)
        sub_dims: list[int] = []
        rest = d2
        done = 1
        for k in nbrs:
            mats = []
            for a in factors[k]:
                M = la.dagger(F) @ a @ F
                m2 = _right_factor(M, d1, d2)
                if np.max(np.abs(M - np.kron(np.eye(d1), m2)), initial=0.0) > 1e4 * tol.eps_eq:
                    raise DecompositionFailed(f"edge algebra at particle {j} is not in the commutant of N_j")
                Mr = la.dagger(G) @ m2 @ G
                mats.append(_split_first(Mr, done, rest))
            A = alg.generate_algebra(mats, rest, tol)
            if not alg.has_trivial_center(A, tol):
                raise DecompositionFailed(f"edge algebra ({j},{k}) has a nontrivial center in a block")
            U, e1, e2 = alg.fact1(A, tol, tol.rng(31 * j + k))
            G = G @ np.kron(np.eye(done), U)
            sub_dims.append(e1)
            done *= e1
            rest = e2
        if rest != 1:
            raise DecompositionFailed(f"particle {j}: residual factor of dimension {rest} after splitting")
        frame = F @ np.kron(np.eye(d1), G)
        out.append(ParticleBlock(frame, d1, tuple(nbrs), tuple(sub_dims)))
    return out


def _edge_block(
    P: np.ndarray,
    j: int,
    k: int,
    bj: ParticleBlock,
    bk: ParticleBlock,
    tol: ToleranceContext,
) -> EdgeBlock:
    Phi = np.kron(bj.frame, bk.frame)
    M = la.dagger(Phi) @ P @ Phi
    fd = list(bj.factor_dims) + list(bk.factor_dims)
    pj = 1 + bj.neighbours.index(k)
    pk = len(bj.factor_dims) + 1 + bk.neighbours.index(j)
    red = restrict_to_support(LocalTerm(tuple(range(len(fd))), M), fd, (pj, pk))
    h = red.matrix
    back = la.embed_local(h, [pj, pk], fd)
    if np.max(np.abs(back - M), initial=0.0) > 1e4 * tol.eps_eq:
        raise DecompositionFailed(f"edge ({j},{k}) does not act on a single subparticle pair")
    h = (h + la.dagger(h)) / 2
    w, V = np.linalg.eigh(h)
    fixed = V[:, np.abs(w - 1) <= 1e-6]
    return EdgeBlock(h, fixed)


def decompose(s: SimplifiedTwoLocal, tol: ToleranceContext = DEFAULT_TOL) -> SubparticleDecomposition:
    edge_alg, N = interaction_algebras(s, tol)
    spect = set(s.spectators)
    blocks = {j: _particle_blocks(j, s, edge_alg, N[j], tol) for j in range(len(s.dims)) if j not in spect}
    edge_blocks = {}
    for (j, k), P in sorted(s.edges.items()):
        tab = {}
        for aj, bj in enumerate(blocks[j]):
            for ak, bk in enumerate(blocks[k]):
                tab[(aj, ak)] = _edge_block(P, j, k, bj, bk, tol)
        edge_blocks[(j, k)] = tab
    return SubparticleDecomposition(s, blocks, edge_blocks)


# --------------------------------------------------------------------------
# search, witnesses and model states


@dataclass(eq=False)
class TwoLocalWitness:
    """Per-particle isometries (original coordinates) selecting one block each."""

    isometries: tuple[np.ndarray, ...]

    def to_dict(self) -> dict:
        return {
            "kind": "twolocal",
            "blocks": [{"particle": j, "isometry": encode_matrix_rect(V)} for j, V in enumerate(self.isometries)],
        }

    @staticmethod
    def from_dict(doc) -> "TwoLocalWitness":
        if not isinstance(doc, dict) or doc.get("kind") != "twolocal":
            raise ParseError("not a twolocal witness", "$.kind")
        items = doc.get("blocks")
        if not isinstance(items, list):
            raise ParseError("blocks must be a list", "$.blocks")
        out = {}
        for i, it in enumerate(items):
            if not isinstance(it, dict) or not isinstance(it.get("particle"), int):
                raise ParseError("bad block entry", f"$.blocks[{i}]")
            out[it["particle"]] = decode_matrix_rect(it.get("isometry"), f"$.blocks[{i}].isometry")
        if sorted(out) != list(range(len(out))):
            raise ParseError("particles must be 0..n-1", "$.blocks")
        return TwoLocalWitness(tuple(out[j] for j in range(len(out))))


def encode_matrix_rect(M: np.ndarray) -> list:
    return encode_matrix(M) if M.shape[0] == M.shape[1] else [
        [[float(z.real), float(z.imag)] for z in row] for row in np.asarray(M, dtype=complex)
    ]


def decode_matrix_rect(obj, loc: str) -> np.ndarray:
    if not isinstance(obj, list) or not obj or not all(isinstance(r, list) for r in obj):
        raise ParseError("matrix must be a list of rows", loc)
    try:
        return np.array([[complex(z[0], z[1]) for z in row] for row in obj], dtype=complex)
    except (TypeError, IndexError, ValueError) as exc:
        raise ParseError(f"bad matrix entry: {exc}", loc) from exc


@dataclass
class TwoLocalResult:
    answer: str
    witness: TwoLocalWitness | None
    dimension: int
    assignment: dict[int, int] | None = None
    decomposition: SubparticleDecomposition | None = None
    reason: str = ""


def _search(d: SubparticleDecomposition) -> dict[int, int] | None:
    """Backtracking over block labels with most-constrained-variable order."""
    parts = sorted(d.blocks)
    domains = {j: list(range(len(d.blocks[j]))) for j in parts}
    nbr_edges = {j: [e for e in d.edge_blocks if j in e] for j in parts}
    assign: dict[int, int] = {}

    def consistent(j, a):
        for e in nbr_edges[j]:
            o = e[1] if e[0] == j else e[0]
            if o in assign:
                key = (a, assign[o]) if e[0] == j else (assign[o], a)
                if d.edge_blocks[e][key].rank == 0:
                    return False
        return True

    def live(j):
        return [a for a in domains[j] if consistent(j, a)]

    def rec():
        free = [j for j in parts if j not in assign]
        if not free:
            return True
        j = min(free, key=lambda p: (len(live(p)), p))
        for a in live(j):
            assign[j] = a
            if rec():
                return True
            del assign[j]
        return False

    return dict(assign) if rec() else None


def solve(x: CesInstance, tol: ToleranceContext = DEFAULT_TOL) -> TwoLocalResult:
    s = simplify(x, tol)
    if isinstance(s, Decided):
        return TwoLocalResult(NEGATIVE, None, 0, reason=s.reason)
    d = decompose(s, tol)
    assign = _search(d)
    dim = d.dimension()
    if assign is None:
        if dim != 0:
            raise InternalInconsistency("search failed although the dimension formula is positive")
        return TwoLocalResult(NEGATIVE, None, 0, decomposition=d, reason="no feasible block assignment")
    return TwoLocalResult(POSITIVE, witness_from_assignment(d, assign), dim, assign, d)


def witness_from_assignment(d: SubparticleDecomposition, assign: dict[int, int]) -> TwoLocalWitness:
    s = d.simplified
    isos = []
    for j in range(len(s.dims)):
        if j in d.blocks:
            W = s.isometries[j] @ d.blocks[j][assign[j]].frame
        else:
            W = s.isometries[j]
        Q, _ = np.linalg.qr(W)
        isos.append(Q)
    return TwoLocalWitness(tuple(isos))


def _same_subspace(A: np.ndarray, B: np.ndarray, tol: ToleranceContext) -> bool:
    if A.shape != B.shape:
        return False
    return bool(np.max(np.abs(A @ la.dagger(A) - B @ la.dagger(B)), initial=0.0) <= 1e-6)


def verify_witness(x: CesInstance, w: TwoLocalWitness, tol: ToleranceContext = DEFAULT_TOL) -> bool:
    """Accept iff the witness selects one block per particle with every edge fixed space nonzero.

    The verifier recomputes the (deterministic) simplification and
    decomposition, matches each witness subspace to a block, and checks
    the restricted projectors.
    """
    if len(w.isometries) != x.n:
        raise ShapeMismatch(f"witness has {len(w.isometries)} particles, instance has {x.n}")
    for j, Y in enumerate(w.isometries):
        if Y.ndim != 2 or Y.shape[0] != x.dims[j] or Y.shape[1] == 0:
            raise ShapeMismatch(f"isometry {j} has shape {Y.shape}")
    for Y in w.isometries:
        if not la.is_isometry(Y, ToleranceContext(eps_eq=1e-7)):
            return False
    s = simplify(x, tol)
    if isinstance(s, Decided):
        return False
    d = decompose(s, tol)
    assign = {}
    for j, Y in enumerate(w.isometries):
        if j in d.blocks:
            hit = None
            for a, blk in enumerate(d.blocks[j]):
                if _same_subspace(Y, s.isometries[j] @ blk.frame, tol):
                    hit = a
                    break
            if hit is None:
                return False
            assign[j] = hit
        else:
            # spectator: any nonzero subspace of the reduced space
            Vj = s.isometries[j]
            if np.linalg.norm(Y - Vj @ (la.dagger(Vj) @ Y)) > 1e-6:
                return False
    for e, tab in d.edge_blocks.items():
        if tab[(assign[e[0]], assign[e[1]])].rank == 0:
            return False
    return True


def _apply_per_site(mats: Sequence[np.ndarray], psi: np.ndarray) -> np.ndarray:
    """(M_0 ⊗ M_1 ⊗ ...) ψ for rectangular M_j."""
    in_dims = [m.shape[1] for m in mats]
    T = psi.reshape(in_dims)
    for j, m in enumerate(mats):
        T = np.moveaxis(np.tensordot(m, T, axes=([1], [j])), 0, j)
    return T.ravel()


def model_state(
    d: SubparticleDecomposition, assignment: dict[int, int], tol: ToleranceContext = DEFAULT_TOL
) -> np.ndarray:
    """Product of bond states and local states, mapped to the original space."""
    s = d.simplified
    for e, tab in d.edge_blocks.items():
        if tab[(assignment[e[0]], assignment[e[1]])].rank == 0:
            raise InfeasibleAssignment(f"edge {e} has an empty fixed space")
    # label every subparticle factor, then fill in a product of pieces
    labels: list[tuple] = []
    dims: list[int] = []
    for j in range(len(s.dims)):
        if j in d.blocks:
            blk = d.blocks[j][assignment[j]]
            labels.append((j, "own"))
            dims.append(blk.d_jj)
            for k, e1 in zip(blk.neighbours, blk.sub_dims):
                labels.append((j, k))
                dims.append(e1)
        else:
            labels.append((j, "own"))
            dims.append(s.dims[j])
    pieces: list[tuple[list[int], np.ndarray]] = []
    for j in range(len(s.dims)):
        n_own = d.blocks[j][assignment[j]].d_jj if j in d.blocks else s.dims[j]
        v = np.zeros(n_own, dtype=complex)
        v[0] = 1
        pieces.append(([labels.index((j, "own"))], v))
    for (j, k), tab in sorted(d.edge_blocks.items()):
        eb = tab[(assignment[j], assignment[k])]
        pieces.append(([labels.index((j, k)), labels.index((k, j))], la.fix_phase(eb.fixed[:, 0])))
    order = [ax for axes, _ in pieces for ax in axes]
    vec = np.ones(1, dtype=complex)
    for _, v in pieces:
        vec = np.kron(vec, v)
    T = vec.reshape([dims[a] for a in order]).transpose(np.argsort(order))
    psi = T.ravel()
    maps = []
    for j in range(len(s.dims)):
        if j in d.blocks:
            maps.append(s.isometries[j] @ d.blocks[j][assignment[j]].frame)
        else:
            maps.append(s.isometries[j])
    out = _apply_per_site(maps, psi)
    out = out / np.linalg.norm(out)
    from .oracle import membership_residual

    res = membership_residual(s.instance, out)
    if res > 1e-7:
        raise InternalInconsistency(f"model state violates the eigenvalue equations (residual {res:.2e})")
    return out


def witness_to_json(w: TwoLocalWitness) -> dict:
    return w.to_dict()

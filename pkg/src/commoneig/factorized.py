"""Factorized CES: simplification, canonical form, Pauli normal form, stabilizers.

A factorized instance is a table of single-site cells.  Rows with lambda != 0
are *regular*, rows with lambda = 0 are *singular*.  The solver

1. shrinks every column to the joint image of its regular cells and turns
   singular cells into image projectors (:func:`simplify_table`);
2. picks one central block of each column algebra, splits the block into a
   part carrying the regular cells and a part carrying the singular ones,
   and rewrites the regular part as signed Pauli strings
   (:func:`canonicalize`);
3. decides the Pauli part with a stabilizer rank computation and the
   projector part with :mod:`commoneig.projectors2`, a classical search,
   or the oracle.

Every rewrite is recorded as a transform-log entry.  A certificate is a
branch choice plus its log; :func:`verify_certificate` replays the log
with a validity check per step, so a forged log is rejected.

Log entry kinds: ``"i"`` restrict a column to an invariant subspace,
``"ii"`` split a column into a tensor product, ``"iii"`` delete a column of
scalar cells, ``"iv"`` conjugate a column by a unitary, ``"v"`` rescale one
cell together with its lambda, ``"vi"`` permute rows and columns, and
``"drop"`` delete a zero row with lambda = 0.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import algebra as alg
from . import linalg as la
from . import oracle
from . import projectors2 as p2
from .errors import (
    Inconclusive,
    InternalInconsistency,
    NonCommutingGenerators,
    NotCommuting,
    NotFullAlgebra,
    NotHermitian,
    NotInvolution,
    ParseError,
    ShapeMismatch,
)
from .instance import (
    NONCOMMUTING,
    CesInstance,
    FactorRow,
    FactorTable,
    classify_commutation,
)
from .linalg import DEFAULT_TOL, ToleranceContext
from .twolocal import NEGATIVE, POSITIVE, Decided, decode_matrix_rect, encode_matrix_rect

MAX_BRANCHES = 256
_STEP_ATOL = 1e-7

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _maxabs(M) -> float:
    return float(np.max(np.abs(M), initial=0.0))


def _close(A, B, scale: float = 1.0) -> bool:
    return _maxabs(A - B) <= _STEP_ATOL * max(1.0, scale)


def _herm(M: np.ndarray) -> np.ndarray:
    return (M + la.dagger(M)) / 2


# --------------------------------------------------------------------------
# Pauli strings and stabilizer groups


@dataclass(frozen=True)
class PauliString:
    letters: str
    sign: int = 1

    def __post_init__(self) -> None:
        if set(self.letters) - set("IXYZ"):
            raise ValueError(f"bad Pauli letters {self.letters!r}")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")

    @property
    def n(self) -> int:
        return len(self.letters)

    def matrix(self) -> np.ndarray:
        if not self.letters:
            return np.array([[self.sign]], dtype=complex)
        return self.sign * la.tensor(*(PAULI[c] for c in self.letters))

    def __str__(self) -> str:
        return ("-" if self.sign < 0 else "+") + self.letters


def _commute(A: np.ndarray, B: np.ndarray, thr: float) -> bool | None:
    """True if AB = BA, False if AB = -BA, None otherwise."""
    AB, BA = A @ B, B @ A
    if _maxabs(AB - BA) <= thr:
        return True
    if _maxabs(AB + BA) <= thr:
        return False
    return None


def pauli_normal_form(G_list: Sequence[np.ndarray], tol: ToleranceContext = DEFAULT_TOL):
    """Rewrite ±commuting Hermitian involutions as signed Pauli strings.

    Parameters
    ----------
    G_list : sequence of (D, D) arrays
        Hermitian, squaring to I, pairwise commuting or anticommuting, and
        generating the full matrix algebra on C^D.

    Returns
    -------
    U : ndarray
        Unitary with ``U @ s.matrix() @ U^dagger == G`` for every pair.
    strings : list of PauliString
    n : int
        Number of qubits, ``D == 2**n``.
    """
    Gs = [la.as_matrix(G, square=True) for G in G_list]
    if not Gs:
        raise NotFullAlgebra("empty family")
    D = Gs[0].shape[0]
    thr = 1e-7
    for a, G in enumerate(Gs):
        if G.shape != (D, D):
            raise ValueError("generators must share a shape")
        if _maxabs(G - la.dagger(G)) > thr:
            raise NotInvolution(f"generator {a} is not Hermitian")
        if _maxabs(G @ G - np.eye(D)) > thr:
            raise NotInvolution(f"generator {a} does not square to I")
    for a, b in itertools.combinations(range(len(Gs)), 2):
        if _commute(Gs[a], Gs[b], thr) is None:
            raise NotFullAlgebra(f"generators {a} and {b} neither commute nor anticommute")
    U, letters, signs = _pnf(Gs, D, thr)
    strings = [PauliString(l, s) for l, s in zip(letters, signs)]
    return U, strings, len(strings[0].letters)


def _pnf(Gs: list[np.ndarray], D: int, thr: float):
    if D == 1:
        signs = []
        for G in Gs:
            v = G[0, 0].real
            signs.append(1 if v > 0 else -1)
        return np.ones((1, 1), dtype=complex), [""] * len(Gs), signs
    pair = None
    for a, b in itertools.combinations(range(len(Gs)), 2):
        if _commute(Gs[a], Gs[b], thr) is False:
            pair = (a, b)
            break
    if pair is None:
        raise NotFullAlgebra(f"no anticommuting pair on C^{D}; the centre is not trivial")
    a, b = pair
    Ep = la.eigenspace_basis(Gs[a], 1.0)
    m = D // 2
    if D % 2 or Ep.shape[1] != m:
        raise NotFullAlgebra("anticommuting pair with unbalanced eigenspaces")
    V = np.hstack([Ep, Gs[b] @ Ep])
    letters, subs = [], []
    for G in Gs:
        ca = _commute(G, Gs[a], thr)
        cb = _commute(G, Gs[b], thr)
        L = {(True, True): "I", (False, True): "X", (True, False): "Z", (False, False): "Y"}[(ca, cb)]
        M = la.dagger(V) @ G @ V
        P = PAULI[L]
        blk = lambda i, k: M[i * m:(i + 1) * m, k * m:(k + 1) * m]
        Gp = sum(P[i, k] * blk(k, i) for i in range(2) for k in range(2)) / 2
        Gp = _herm(Gp)
        if _maxabs(M - np.kron(P, Gp)) > 10 * thr:
            raise NotFullAlgebra("generator does not factor after the qubit split")
        letters.append(L)
        subs.append(Gp)
    Us, rest, signs = _pnf(subs, m, thr)
    U = V @ np.kron(np.eye(2), Us)
    return U, [l + r for l, r in zip(letters, rest)], signs


@dataclass(frozen=True, eq=False)
class StabilizerGroup:
    """Signed Pauli generators with target eigenvalues ±1.

    Generator ``k`` is the Hermitian operator ``i**phase[k] X^x[k] Z^z[k]``;
    the constraint is that it acts as ``targets[k]`` on the code space.
    """

    n_qubits: int
    x: np.ndarray
    z: np.ndarray
    phase: np.ndarray
    targets: tuple[int, ...]

    @staticmethod
    def from_strings(strings: Sequence[PauliString], targets: Sequence[int], n: int | None = None) -> "StabilizerGroup":
        n = n if n is not None else (strings[0].n if strings else 0)
        m = len(strings)
        x = np.zeros((m, n), dtype=np.uint8)
        z = np.zeros((m, n), dtype=np.uint8)
        ph = np.zeros(m, dtype=np.int64)
        for k, s in enumerate(strings):
            if s.n != n:
                raise ValueError("strings of different length")
            for q, c in enumerate(s.letters):
                x[k, q] = c in "XY"
                z[k, q] = c in "ZY"
            ph[k] = (s.letters.count("Y") + (2 if s.sign < 0 else 0)) % 4
        t = tuple(int(v) for v in targets)
        if len(t) != m or any(v not in (1, -1) for v in t):
            raise ValueError("targets must be ±1, one per generator")
        return StabilizerGroup(n, x, z, ph, t)

    @property
    def m(self) -> int:
        return len(self.targets)

    def strings(self) -> list[PauliString]:
        out = []
        for k in range(self.m):
            letters = "".join("IXZY"[int(a) + 2 * int(b)] for a, b in zip(self.x[k], self.z[k]))
            p = (int(self.phase[k]) - letters.count("Y")) % 4
            out.append(PauliString(letters, 1 if p == 0 else -1))
        return out

    def to_dict(self) -> dict:
        bits = lambda v: "".join(str(int(c)) for c in v)
        return {
            "n_qubits": self.n_qubits,
            "generators": [
                {"x": bits(self.x[k]), "z": bits(self.z[k]), "phase": int(self.phase[k]), "target": self.targets[k]}
                for k in range(self.m)
            ],
        }

    @staticmethod
    def from_dict(doc) -> "StabilizerGroup":
        try:
            n = int(doc["n_qubits"])
            gens = doc["generators"]
            x = np.array([[int(c) for c in g["x"]] for g in gens], dtype=np.uint8).reshape(len(gens), n)
            z = np.array([[int(c) for c in g["z"]] for g in gens], dtype=np.uint8).reshape(len(gens), n)
            ph = np.array([int(g["phase"]) % 4 for g in gens], dtype=np.int64)
            t = tuple(int(g["target"]) for g in gens)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad stabilizer data: {exc}", "$.stabilizer") from exc
        return StabilizerGroup(n, x, z, ph, t)

    def to_instance(self) -> CesInstance:
        """The same constraints as a factorized CES instance on qubits."""
        rows = []
        for s in self.strings():
            f = [PAULI[c] for c in s.letters]
            f[0] = s.sign * f[0]
            rows.append(FactorRow(f))
        return CesInstance((2,) * self.n_qubits, tuple(rows), tuple(float(t) for t in self.targets))


def _sym_commute(s: StabilizerGroup, a: int, b: int) -> bool:
    v = int(np.dot(s.x[a], s.z[b]) + np.dot(s.z[a], s.x[b]))
    return v % 2 == 0


def stabilizer_dimension(s: StabilizerGroup) -> int:
    """Dimension of the joint eigenspace by GF(2) elimination with phases mod 4."""
    for a, b in itertools.combinations(range(s.m), 2):
        if not _sym_commute(s, a, b):
            raise NonCommutingGenerators(f"generators {a} and {b} anticommute")
    n = s.n_qubits
    rows = []
    for k in range(s.m):
        # fold the target into the phase: t*g acts as +1
        p = (int(s.phase[k]) + (2 if s.targets[k] < 0 else 0)) % 4
        rows.append([s.x[k].astype(np.uint8).copy(), s.z[k].astype(np.uint8).copy(), p])
    rank = 0
    for col in range(2 * n):
        vec = (lambda r: r[0][col]) if col < n else (lambda r: r[1][col - n])
        piv = next((i for i in range(rank, len(rows)) if vec(rows[i])), None)
        if piv is None:
            continue
        rows[rank], rows[piv] = rows[piv], rows[rank]
        q = rows[rank]
        for i in range(len(rows)):
            if i != rank and vec(rows[i]):
                r = rows[i]
                p = (q[2] + r[2] + 2 * int(np.dot(q[1], r[0]))) % 4
                rows[i] = [q[0] ^ r[0], q[1] ^ r[1], p]
        rank += 1
    for r in rows[rank:]:
        if r[2] == 2:
            return 0
        if r[2] % 2:
            raise InternalInconsistency("dependent product with an imaginary phase")
    return 2 ** (n - rank)


# --------------------------------------------------------------------------
# simplification


def _as_table(t) -> FactorTable:
    if isinstance(t, CesInstance):
        return t.to_table()
    return t


def _check_table(t: FactorTable, tol: ToleranceContext) -> None:
    for a, row in enumerate(t.cells):
        for j, c in enumerate(row):
            if not la.is_hermitian(c, tol):
                raise NotHermitian(f"cell ({a}, {j}) is not Hermitian")
    rows = [FactorRow(r) for r in t.cells]
    for a, b in itertools.combinations(range(t.r), 2):
        if classify_commutation(rows[a], rows[b], tol=tol) == NONCOMMUTING:
            raise NotCommuting(f"rows {a} and {b} do not commute")


def simplify_table(t: FactorTable, tol: ToleranceContext = DEFAULT_TOL) -> FactorTable | Decided:
    """Shrink columns to the joint image of regular cells; singular cells to projectors.

    Zero rows with lambda 0 are removed.  Returns :class:`Decided` (negative)
    when two regular rows multiply to zero or a column collapses.
    """
    t = _as_table(t)
    reg = [a for a in range(t.r) if t.is_regular(a, tol)]
    sing = [a for a in range(t.r) if a not in reg]
    for a, b in itertools.combinations(reg, 2):
        for j in range(t.n):
            A, B = t.cells[a][j], t.cells[b][j]
            if _maxabs(A @ B) <= tol.eps_eq * max(1.0, la.singular_values(A)[0] * la.singular_values(B)[0]):
                return Decided(NEGATIVE, f"regular rows {a} and {b} multiply to zero in column {j}")
    bases = []
    for j in range(t.n):
        d = t.dims[j]
        if reg:
            stack = []
            for a in reg:
                B = la.image_basis(t.cells[a][j], tol)
                stack.append(np.eye(d) - B @ la.dagger(B))
            K = la.kernel_basis(np.vstack(stack), tol)
        else:
            K = np.eye(d, dtype=complex)
        if K.shape[1] == 0:
            return Decided(NEGATIVE, f"column {j} has no joint image of its regular cells")
        bases.append(K)
    cells, lams = [], []
    for a in range(t.r):
        row = []
        dead = False
        for j in range(t.n):
            K = bases[j]
            c = t.cells[a][j]
            if K.shape[1] != t.dims[j]:
                c = _herm(la.dagger(K) @ c @ K)
            if a in sing:
                B = la.image_basis(c, tol)
                if B.shape[1] == 0:
                    dead = True
                    break
                c = B @ la.dagger(B)
            row.append(c)
        if dead:
            continue
        cells.append(tuple(row))
        lams.append(t.lambdas[a])
    dims = tuple(K.shape[1] for K in bases)
    out = FactorTable(tuple(cells), tuple(lams), dims)
    for a in range(out.r):
        if not out.is_regular(a, tol):
            continue
        for b in range(out.r):
            if out.is_regular(b, tol):
                continue
            for j in range(out.n):
                if la.commutator_norm(out.cells[a][j], out.cells[b][j]) > 1e2 * tol.eps_eq * max(
                    1.0, _maxabs(out.cells[a][j])
                ):
                    raise InternalInconsistency(
                        f"regular row {a} and singular row {b} do not commute in column {j}"
                    )
    return out


# --------------------------------------------------------------------------
# transform log


class _Reject(Exception):
    """A log step failed its validity check."""


@dataclass
class _State:
    cells: list[list[np.ndarray]]
    lambdas: list[float]
    dims: list[int]

    @staticmethod
    def of(t: FactorTable) -> "_State":
        return _State([list(r) for r in t.cells], list(t.lambdas), list(t.dims))

    def table(self) -> FactorTable:
        return FactorTable(tuple(tuple(r) for r in self.cells), tuple(self.lambdas), tuple(self.dims))

    def apply(self, e: dict) -> None:
        """Apply one log entry after checking that it is a legal move."""
        kind = e.get("kind")
        try:
            getattr(self, "_" + {"drop": "drop", "i": "restrict", "ii": "split", "iii": "scalar",
                                 "iv": "conjugate", "v": "rescale", "vi": "permute"}[kind])(e)
        except KeyError as exc:
            raise _Reject(f"unknown or incomplete step {kind!r}: {exc}") from exc
        except (IndexError, ValueError, TypeError) as exc:
            raise _Reject(f"bad step {kind!r}: {exc}") from exc

    def _col(self, j) -> int:
        j = int(j)
        if not 0 <= j < len(self.dims):
            raise _Reject(f"column {j} out of range")
        return j

    def _drop(self, e):
        a = int(e["row"])
        if not 0 <= a < len(self.cells):
            raise _Reject("row out of range")
        if abs(self.lambdas[a]) > _STEP_ATOL or not any(_maxabs(c) <= _STEP_ATOL for c in self.cells[a]):
            raise _Reject("only a zero row with lambda 0 can be dropped")
        del self.cells[a]
        del self.lambdas[a]

    def _restrict(self, e):
        j = self._col(e["column"])
        W = np.asarray(e["isometry"], dtype=complex)
        d = self.dims[j]
        if W.ndim != 2 or W.shape[0] != d or not 1 <= W.shape[1] <= d or not la.is_isometry(W):
            raise _Reject("restriction needs an isometry into the column space")
        P = W @ la.dagger(W)
        for row in self.cells:
            c = row[j]
            if _maxabs(c @ W - P @ c @ W) > _STEP_ATOL * max(1.0, _maxabs(c)):
                raise _Reject("subspace is not invariant under the column")
        for row in self.cells:
            row[j] = _herm(la.dagger(W) @ row[j] @ W)
        self.dims[j] = W.shape[1]

    def _split(self, e):
        j = self._col(e["column"])
        d1, d2 = (int(v) for v in e["dims"])
        if d1 < 1 or d2 < 1 or d1 * d2 != self.dims[j]:
            raise _Reject("split dimensions do not multiply to the column dimension")
        facs = e["factors"]
        if len(facs) != len(self.cells):
            raise _Reject("need one factor pair per row")
        new = []
        for row, (A, B) in zip(self.cells, facs):
            A = np.asarray(A, dtype=complex)
            B = np.asarray(B, dtype=complex)
            if A.shape != (d1, d1) or B.shape != (d2, d2):
                raise _Reject("factor shapes do not match the split")
            if _maxabs(A - la.dagger(A)) > _STEP_ATOL or _maxabs(B - la.dagger(B)) > _STEP_ATOL:
                raise _Reject("factors must be Hermitian")
            if not _close(np.kron(A, B), row[j], _maxabs(row[j])):
                raise _Reject("cell is not the stated tensor product")
            new.append((A, B))
        for row, (A, B) in zip(self.cells, new):
            row[j:j + 1] = [A, B]
        self.dims[j:j + 1] = [d1, d2]

    def _scalar(self, e):
        j = self._col(e["column"])
        d = self.dims[j]
        scales = []
        for row in self.cells:
            c = row[j]
            r = c[0, 0]
            if abs(r.imag) > _STEP_ATOL or not _close(c, r * np.eye(d), abs(r)) or abs(r) <= _STEP_ATOL:
                raise _Reject("column is not a nonzero real multiple of I in every row")
            scales.append(float(r.real))
        for a, r in enumerate(scales):
            self.lambdas[a] /= r
            del self.cells[a][j]
        del self.dims[j]

    def _conjugate(self, e):
        j = self._col(e["column"])
        U = np.asarray(e["unitary"], dtype=complex)
        if U.shape != (self.dims[j], self.dims[j]) or not la.is_unitary(U):
            raise _Reject("conjugation needs a unitary of the column size")
        for row in self.cells:
            row[j] = _herm(U @ row[j] @ la.dagger(U))

    def _rescale(self, e):
        a = int(e["row"])
        j = self._col(e["column"])
        r = float(e["scale"])
        if not 0 <= a < len(self.cells) or not np.isfinite(r) or abs(r) <= _STEP_ATOL:
            raise _Reject("rescale needs a valid row and a nonzero real factor")
        self.cells[a][j] = self.cells[a][j] * r
        self.lambdas[a] *= r

    def _permute(self, e):
        cp = [int(v) for v in e["columns"]]
        rp = [int(v) for v in e["rows"]]
        if sorted(cp) != list(range(len(self.dims))) or sorted(rp) != list(range(len(self.cells))):
            raise _Reject("not a permutation")
        self.cells = [[self.cells[a][j] for j in cp] for a in rp]
        self.lambdas = [self.lambdas[a] for a in rp]
        self.dims = [self.dims[j] for j in cp]


_MATRIX_KEYS = ("isometry", "unitary")


def log_to_json(log: Sequence[dict]) -> list[dict]:
    out = []
    for e in log:
        d = {}
        for k, v in e.items():
            if k in _MATRIX_KEYS:
                d[k] = encode_matrix_rect(np.asarray(v))
            elif k == "factors":
                d[k] = [[encode_matrix_rect(A), encode_matrix_rect(B)] for A, B in v]
            else:
                d[k] = v
        out.append(d)
    return out


def log_from_json(items, loc: str = "$.log") -> list[dict]:
    if not isinstance(items, list):
        raise ParseError("log must be a list", loc)
    out = []
    for i, e in enumerate(items):
        if not isinstance(e, dict) or "kind" not in e:
            raise ParseError("log entry needs a kind", f"{loc}[{i}]")
        d = {}
        for k, v in e.items():
            if k in _MATRIX_KEYS:
                d[k] = decode_matrix_rect(v, f"{loc}[{i}].{k}")
            elif k == "factors":
                if not isinstance(v, list):
                    raise ParseError("factors must be a list", f"{loc}[{i}].factors")
                pairs = []
                for q, p in enumerate(v):
                    if not isinstance(p, list) or len(p) != 2:
                        raise ParseError("factor entry must be a pair", f"{loc}[{i}].factors[{q}]")
                    pairs.append(tuple(decode_matrix_rect(m, f"{loc}[{i}].factors[{q}]") for m in p))
                d[k] = pairs
            else:
                d[k] = v
        out.append(d)
    return out


# --------------------------------------------------------------------------
# canonical form


@dataclass(eq=False)
class CanonicalForm:
    """Pauli block on the first ``n_qubits`` columns, projector block on the rest."""

    qubit_block: StabilizerGroup
    projector_block: FactorTable
    transform_log: list[dict]
    branch: tuple[int, ...]
    table: FactorTable

    @property
    def n_qubits(self) -> int:
        return self.qubit_block.n_qubits


@dataclass(eq=False)
class ColumnAnalysis:
    """Central blocks of one column algebra (built from the regular rows)."""

    decomposition: alg.BlockDecomposition

    @property
    def n_blocks(self) -> int:
        return len(self.decomposition.blocks)


def analyse_columns(t: FactorTable, tol: ToleranceContext = DEFAULT_TOL) -> list[ColumnAnalysis]:
    reg = [a for a in range(t.r) if t.is_regular(a, tol)]
    out = []
    cache: dict[tuple, ColumnAnalysis] = {}
    for j in range(t.n):
        gens = [t.cells[a][j] for a in reg]
        key = (t.dims[j],) + tuple(np.round(g, 10).tobytes() for g in gens)
        if key not in cache:
            A = alg.generate_algebra(gens, t.dims[j], tol)
            cache[key] = ColumnAnalysis(alg.block_decompose(A, tol, check_ops=gens or None))
        out.append(cache[key])
    return out


def _letter(M: np.ndarray) -> str | None:
    for c, P in PAULI.items():
        if _close(M, P):
            return c
    return None


def _split_cell(c: np.ndarray, d1: int, d2: int, regular: bool) -> tuple[np.ndarray, np.ndarray]:
    T = c.reshape(d1, d2, d1, d2)
    if regular:
        A = _herm(np.einsum("ikjk->ij", T) / d2)
        B = np.eye(d2, dtype=complex)
    else:
        A = np.eye(d1, dtype=complex)
        B = _herm(np.einsum("kikj->ij", T) / d1)
    if not _close(np.kron(A, B), c, _maxabs(c)):
        raise InternalInconsistency("cell does not factor across the block split")
    return A, B


def canonicalize(
    t: FactorTable,
    hints: Sequence[int] | None = None,
    tol: ToleranceContext = DEFAULT_TOL,
    analyses: list[ColumnAnalysis] | None = None,
) -> CanonicalForm | Decided:
    """Bring a simplified table to canonical form along one branch.

    ``hints[j]`` selects the central block of column ``j`` (default 0).
    """
    analyses = analyses if analyses is not None else analyse_columns(t, tol)
    hints = tuple(int(h) for h in hints) if hints is not None else (0,) * t.n
    if len(hints) != t.n:
        raise ValueError("need one block choice per column")
    st = _State.of(t)
    log: list[dict] = []

    def step(**e):
        try:
            st.apply(e)
        except _Reject as exc:
            raise InternalInconsistency(f"canonicalization produced an illegal step: {exc}") from exc
        log.append(e)

    frames = []
    for j, an in enumerate(analyses):
        if not 0 <= hints[j] < an.n_blocks:
            raise ValueError(f"column {j} has {an.n_blocks} blocks, got choice {hints[j]}")
        blk = an.decomposition.blocks[hints[j]]
        if an.n_blocks > 1:
            step(kind="i", column=j, isometry=blk.isometry)
            frames.append((blk.unitary, blk.d1, blk.d2))
        else:
            frames.append((blk.frame, blk.d1, blk.d2))
    for a in reversed(range(len(st.cells))):
        if abs(st.lambdas[a]) <= tol.eps_eq and any(_maxabs(c) <= _STEP_ATOL for c in st.cells[a]):
            step(kind="drop", row=a)
    regular = [abs(v) > tol.eps_eq for v in st.lambdas]

    # right to left, so indices of unprocessed columns never move
    kinds_after: list[str] = []
    for j in reversed(range(t.n)):
        U, d1, d2 = frames[j]
        if not _close(U, np.eye(U.shape[0])):
            step(kind="iv", column=j, unitary=la.dagger(U))
        if d1 > 1 and d2 > 1:
            facs = [_split_cell(row[j], d1, d2, reg) for row, reg in zip(st.cells, regular)]
            step(kind="ii", column=j, dims=[d1, d2], factors=facs)
            kinds = ["pauli", "proj"]
        elif d1 > 1:
            kinds = ["pauli"]
        elif d2 > 1:
            kinds = ["proj"]
        else:
            kinds = ["scalar"]
        local: list[str] = []
        for off, kind in reversed(list(enumerate(kinds))):
            k = j + off
            if kind == "scalar":
                step(kind="iii", column=k)
                continue
            if kind == "proj":
                for a, reg in enumerate(regular):
                    if reg:
                        c = st.cells[a][k][0, 0].real
                        if not _close(st.cells[a][k], c * np.eye(st.dims[k]), abs(c)):
                            raise InternalInconsistency("regular cell is not scalar on the singular factor")
                        if not _close(c, 1.0):
                            step(kind="v", row=a, column=k, scale=1.0 / c)
                local.insert(0, "proj")
                continue
            local[0:0] = _pauli_column(st, k, regular, step, tol)
        kinds_after[0:0] = local

    q_cols = [k for k, kd in enumerate(kinds_after) if kd == "qubit"]
    p_cols = [k for k, kd in enumerate(kinds_after) if kd == "proj"]
    reg_rows = [a for a, r in enumerate(regular) if r]
    sing_rows = [a for a, r in enumerate(regular) if not r]
    perm_c, perm_r = q_cols + p_cols, reg_rows + sing_rows
    if perm_c != list(range(len(perm_c))) or perm_r != list(range(len(perm_r))):
        step(kind="vi", columns=perm_c, rows=perm_r)
    final = st.table()
    nq = len(q_cols)
    for a in range(len(reg_rows)):
        if not (_close(final.lambdas[a], 1.0) or _close(final.lambdas[a], -1.0)):
            return Decided(NEGATIVE, f"rescaled lambda {final.lambdas[a]:.6g} of a regular row is not ±1", ())
    try:
        return _read_canonical(final, nq, log, hints)
    except _Reject as exc:
        raise InternalInconsistency(f"canonical form check failed: {exc}") from exc


def _pauli_column(st: _State, k: int, regular: list[bool], step, tol) -> list[str]:
    """Turn the regular cells of column ``k`` into Pauli strings and split into qubits."""
    d = st.dims[k]
    reg_rows = [a for a, r in enumerate(regular) if r]
    for a, r in enumerate(regular):
        if not r and not _close(st.cells[a][k], np.eye(d)):
            raise InternalInconsistency("singular cell is not the identity on the regular factor")
    for a in reg_rows:
        c = st.cells[a][k]
        sq = c @ c
        s = sq[0, 0].real
        if s <= 0 or not _close(sq, s * np.eye(d), s):
            raise InternalInconsistency("regular cell does not square to a scalar")
        if not _close(s, 1.0):
            step(kind="v", row=a, column=k, scale=1.0 / np.sqrt(s))
    U, strings, nq = pauli_normal_form([st.cells[a][k] for a in reg_rows], tol)
    step(kind="iv", column=k, unitary=la.dagger(U))
    for a, s in zip(reg_rows, strings):
        if s.sign < 0:
            step(kind="v", row=a, column=k, scale=-1.0)
    letters = {a: s.letters for a, s in zip(reg_rows, strings)}
    for q in range(nq - 1):
        col = k + q
        rest = nq - q - 1
        facs = []
        for a in range(len(st.cells)):
            if a in letters:
                w = letters[a][q:]
                facs.append((PAULI[w[0]], la.tensor(*(PAULI[c] for c in w[1:]))))
            else:
                facs.append((np.eye(2, dtype=complex), np.eye(2 ** rest, dtype=complex)))
        step(kind="ii", column=col, dims=[2, 2 ** rest], factors=facs)
    return ["qubit"] * nq


def _read_canonical(final: FactorTable, nq: int, log, hints) -> CanonicalForm:
    reg_rows = [a for a in range(final.r) if abs(final.lambdas[a]) > 0.5]
    strings, targets = [], []
    for a in reg_rows:
        letters = ""
        for q in range(nq):
            L = _letter(final.cells[a][q])
            if L is None:
                raise _Reject(f"row {a} column {q} is not a Pauli matrix")
            letters += L
        for c in final.cells[a][nq:]:
            if not _close(c, np.eye(c.shape[0])):
                raise _Reject(f"regular row {a} is not the identity on the projector block")
        lam = final.lambdas[a]
        if not (_close(lam, 1.0) or _close(lam, -1.0)):
            raise _Reject(f"regular row {a} has lambda {lam:g}")
        strings.append(PauliString(letters, 1))
        targets.append(1 if lam > 0 else -1)
    sing_rows = [a for a in range(final.r) if a not in reg_rows]
    cells = []
    for a in sing_rows:
        if abs(final.lambdas[a]) > _STEP_ATOL:
            raise _Reject(f"row {a} has lambda {final.lambdas[a]:g}")
        for c in final.cells[a][:nq]:
            if not _close(c, np.eye(2)):
                raise _Reject(f"singular row {a} is not the identity on the Pauli block")
        for c in final.cells[a][nq:]:
            if not _close(c @ c, c) or not _close(c, la.dagger(c)):
                raise _Reject(f"singular row {a} has a non-projector cell")
        cells.append(tuple(final.cells[a][nq:]))
    if any(d != 2 for d in final.dims[:nq]):
        raise _Reject("Pauli block columns must be qubits")
    sg = StabilizerGroup.from_strings(strings, targets, nq)
    pb = FactorTable(tuple(cells), tuple(0.0 for _ in cells), tuple(final.dims[nq:]))
    return CanonicalForm(sg, pb, list(log), tuple(hints), final)


def branch_count(analyses: Sequence[ColumnAnalysis]) -> int:
    out = 1
    for an in analyses:
        out *= an.n_blocks
    return out


def enumerate_branches(
    t: FactorTable,
    tol: ToleranceContext = DEFAULT_TOL,
    max_branches: int = MAX_BRANCHES,
    analyses: list[ColumnAnalysis] | None = None,
) -> Iterator[tuple[tuple[int, ...], CanonicalForm | Decided]]:
    """Every block choice of a simplified table with its canonical form."""
    analyses = analyses if analyses is not None else analyse_columns(t, tol)
    total = branch_count(analyses)
    if total > max_branches:
        raise Inconclusive(f"{total} branches exceed the cap of {max_branches}")
    for choice in itertools.product(*(range(an.n_blocks) for an in analyses)):
        yield choice, canonicalize(t, choice, tol, analyses)


# --------------------------------------------------------------------------
# projector block


def _columns_commute(t: FactorTable, tol: ToleranceContext) -> bool:
    for j in range(t.n):
        col = t.column(j)
        for A, B in itertools.combinations(col, 2):
            if la.commutator_norm(A, B) > 1e2 * tol.eps_eq:
                return False
    return True


def _classical_search(t: FactorTable, tol: ToleranceContext):
    """Product-basis search when every column is a commuting family.

    Returns a list of per-column vectors or None.
    """
    rng = tol.rng(4242)
    bases, masks = [], []
    for j in range(t.n):
        col = t.column(j)
        C = sum(rng.standard_normal() * c for c in col) if col else np.zeros((t.dims[j], t.dims[j]))
        _, E = np.linalg.eigh(_herm(np.asarray(C, dtype=complex)))
        bases.append(E)
        masks.append([np.real(np.diag(la.dagger(E) @ c @ E)) for c in col])
    rows = []
    for a in range(t.r):
        rows.append([(j, {s for s in range(t.dims[j]) if masks[j][a][s] < 0.5}) for j in range(t.n)])
    assign: dict[int, int] = {}

    def ok(a):
        open_ = False
        for j, kill in rows[a]:
            if j in assign:
                if assign[j] in kill:
                    return True
            elif kill:
                open_ = True
        return open_

    def rec(j):
        if j == t.n:
            return all(ok(a) for a in range(t.r))
        for s in range(t.dims[j]):
            assign[j] = s
            if all(ok(a) for a in range(t.r)) and rec(j + 1):
                return True
            del assign[j]
        return False

    if not rec(0):
        return None
    return [bases[j][:, assign[j]] for j in range(t.n)]


def solve_projector_block(pb: FactorTable, tol: ToleranceContext = DEFAULT_TOL):
    """Decide L'' != 0 for a commuting projector table; returns (positive, witness dict)."""
    if pb.r == 0:
        return True, {"kind": "empty"}
    if pb.n == 0:
        return False, None
    if all(d == 2 for d in pb.dims):
        ans, w = p2.solve_projectors_qubits(pb, tol)
        return ans == POSITIVE, (w.to_dict() if w is not None else None)
    if _columns_commute(pb, tol):
        vecs = _classical_search(pb, tol)
        if vecs is None:
            return False, None
        return True, {"kind": "product", "vectors": [encode_matrix_rect(v.reshape(-1, 1)) for v in vecs]}
    dim, B = oracle.common_eigenspace(pb.to_instance(), tol)
    if dim == 0:
        return False, None
    return True, {"kind": "state", "vector": encode_matrix_rect(B[:, :1])}


def verify_projector_block(pb: FactorTable, w, tol: ToleranceContext = DEFAULT_TOL) -> bool:
    if not isinstance(w, dict):
        raise ParseError("projector witness must be an object", "$.projector_witness")
    kind = w.get("kind")
    if kind == "empty":
        return pb.r == 0
    if kind == "projectors2":
        pw = p2.ProjectorTableWitness.from_dict(w, pb.dims)
        return p2.verify_projector_witness(pb, pw, tol)
    if kind == "product":
        vecs = [decode_matrix_rect(v, f"$.projector_witness.vectors[{i}]").ravel() for i, v in enumerate(w.get("vectors", []))]
        if len(vecs) != pb.n or any(v.size != d for v, d in zip(vecs, pb.dims)):
            return False
        vecs = [v / np.linalg.norm(v) if np.linalg.norm(v) > 0 else v for v in vecs]
        if any(np.linalg.norm(v) == 0 for v in vecs):
            return False
        return all(any(np.linalg.norm(c @ v) <= 1e-7 for c, v in zip(row, vecs)) for row in pb.cells)
    if kind == "state":
        psi = decode_matrix_rect(w.get("vector"), "$.projector_witness.vector").ravel()
        if psi.size != pb.total_dim or np.linalg.norm(psi) == 0:
            return False
        return oracle.membership_residual(pb.to_instance(), psi) <= 1e-7
    raise ParseError(f"unknown projector witness kind {kind!r}", "$.projector_witness.kind")


# --------------------------------------------------------------------------
# solving and certificates


@dataclass
class FactorizedResult:
    answer: str
    certificate: dict | None
    dimension: int | None
    branches: int
    reason: str = ""
    canonical: CanonicalForm | None = field(default=None, repr=False)


def solve_factorized(
    t,
    tol: ToleranceContext = DEFAULT_TOL,
    max_branches: int = MAX_BRANCHES,
    want_dimension: bool = True,
) -> FactorizedResult:
    """Decide a factorized CES instance and build a replayable certificate.

    The dimension is the sum over branches of (stabilizer dimension) ×
    (projector block dimension); it is reported when every branch's
    projector block is small enough for the oracle.
    """
    t = _as_table(t)
    _check_table(t, tol)
    s = simplify_table(t, tol)
    if isinstance(s, Decided):
        return FactorizedResult(NEGATIVE, None, 0, 0, s.reason)
    analyses = analyse_columns(s, tol)
    best: FactorizedResult | None = None
    dim_total: int | None = 0 if want_dimension else None
    count = 0
    for choice, cf in enumerate_branches(s, tol, max_branches, analyses):
        count += 1
        if isinstance(cf, Decided):
            continue
        sd = stabilizer_dimension(cf.qubit_block)
        if sd == 0:
            continue
        if best is not None and dim_total is None:
            continue
        pos, pw = solve_projector_block(cf.projector_block, tol)
        if dim_total is not None:
            if cf.projector_block.total_dim <= 2 ** 12:
                pd = oracle.dimension(cf.projector_block.to_instance(), tol) if cf.projector_block.r else cf.projector_block.total_dim
                dim_total += sd * pd
            else:
                dim_total = None
        if pos and best is None:
            cert = {
                "kind": "factorized",
                "dims": list(t.dims),
                "branch": list(choice),
                "log": log_to_json(cf.transform_log),
                "qubits": cf.n_qubits,
                "stabilizer": cf.qubit_block.to_dict(),
                "projector_witness": pw,
            }
            best = FactorizedResult(POSITIVE, cert, None, 0, canonical=cf)
    if best is None:
        return FactorizedResult(NEGATIVE, None, 0, count, "every branch is empty")
    best.branches = count
    best.dimension = dim_total
    return best


def replay(t, log: Sequence[dict], tol: ToleranceContext = DEFAULT_TOL, snapshots: bool = False):
    """Simplify ``t`` and apply ``log``; returns the final table (and snapshots).

    Raises ``ValueError`` when a step is not a legal move.
    """
    t = _as_table(t)
    s = simplify_table(t, tol)
    if isinstance(s, Decided):
        raise ValueError(f"instance simplifies to a negative answer: {s.reason}")
    st = _State.of(s)
    snaps = [s] if snapshots else None
    for i, e in enumerate(log):
        try:
            st.apply(e)
        except _Reject as exc:
            raise ValueError(f"step {i}: {exc}") from exc
        if snapshots:
            snaps.append(st.table())
    final = st.table()
    return (final, snaps) if snapshots else final


def verify_certificate(t, cert, tol: ToleranceContext = DEFAULT_TOL) -> bool:
    """Replay a factorized certificate; True only if every step and the end state check out."""
    if not isinstance(cert, dict) or cert.get("kind") != "factorized":
        raise ParseError("not a factorized certificate", "$.kind")
    log = log_from_json(cert.get("log"))
    nq = cert.get("qubits")
    if not isinstance(nq, int) or nq < 0:
        raise ParseError("qubits must be a non-negative integer", "$.qubits")
    t = _as_table(t)
    dims = cert.get("dims")
    if not isinstance(dims, list) or not all(isinstance(d, int) for d in dims):
        raise ParseError("dims must be a list of integers", "$.dims")
    if tuple(dims) != tuple(t.dims):
        raise ShapeMismatch(f"certificate is for dims {tuple(dims)}, table has {t.dims}")
    try:
        _check_table(t, tol)
    except (NotCommuting, NotHermitian):
        return False
    try:
        final = replay(t, log, tol)
        if nq > final.n:
            return False
        cf = _read_canonical(final, nq, log, cert.get("branch", ()))
    except (ValueError, _Reject):
        return False
    try:
        if stabilizer_dimension(cf.qubit_block) == 0:
            return False
    except NonCommutingGenerators:
        return False
    try:
        return bool(verify_projector_block(cf.projector_block, cert.get("projector_witness"), tol))
    except Exception as exc:  # malformed witness inside a well-formed certificate
        if isinstance(exc, ParseError):
            raise
        return False

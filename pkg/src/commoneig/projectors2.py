"""Factorized projector tables on qubits, plus the Kochen-Specker obstruction in C^3.

A commutative table of qubit projectors can be replaced column by column
with a *consistent* table whose cells are ``I``, ``|0><0|`` or ``|1><1|``.
Consistency keeps every subset product rank, so the replacement has the
same answer, and the diagonal table is decided by a search over bit
strings.  In dimension three the same recoloring can be impossible; the
Peres ray set is the standard witness of that failure.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from importlib import resources
from typing import Sequence

import numpy as np

from . import linalg as la
from .errors import NotCommutativeTable, NotProjector, NotQubit, ParseError, ShapeMismatch
from .instance import NONCOMMUTING, FactorRow, FactorTable, classify_commutation, decode_matrix, encode_matrix
from .linalg import DEFAULT_TOL, ToleranceContext

P0 = np.array([[1, 0], [0, 0]], dtype=complex)
P1 = np.array([[0, 0], [0, 1]], dtype=complex)
I2 = np.eye(2, dtype=complex)


def _same(A: np.ndarray, B: np.ndarray, tol: ToleranceContext) -> bool:
    return float(np.max(np.abs(A - B), initial=0.0)) <= tol.eps_eq * max(1.0, float(np.max(np.abs(A), initial=0.0)))


def _orth(A: np.ndarray, B: np.ndarray, tol: ToleranceContext) -> bool:
    return float(np.max(np.abs(A @ B), initial=0.0)) <= tol.eps_eq


def _check_projector_table(t: FactorTable, tol: ToleranceContext) -> None:
    for a, row in enumerate(t.cells):
        for j, c in enumerate(row):
            if not la.is_projector(c, tol):
                raise NotProjector(f"cell ({a}, {j}) is not a projector")


# --------------------------------------------------------------------------
# orthogonality graphs


@dataclass(frozen=True, eq=False)
class OrthogonalityGraph:
    """Rows of one column grouped by equal cells; edges join orthogonal classes.

    Zero cells form their own class and get no edges: a zero projector is
    orthogonal to everything and stays zero under any consistent change.
    """

    column: int
    vertices: tuple[tuple[int, ...], ...]
    projectors: tuple[np.ndarray, ...]
    ranks: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]

    def degree(self, v: int) -> int:
        return sum(v in e for e in self.edges)

    @property
    def max_degree(self) -> int:
        return max((self.degree(v) for v in range(len(self.vertices))), default=0)

    def vertex_of(self, row: int) -> int:
        for v, rows in enumerate(self.vertices):
            if row in rows:
                return v
        raise KeyError(row)


def orthogonality_graph(t: FactorTable, j: int, tol: ToleranceContext = DEFAULT_TOL) -> OrthogonalityGraph:
    groups: list[list[int]] = []
    reps: list[np.ndarray] = []
    for a, c in enumerate(t.column(j)):
        for g, R in zip(groups, reps):
            if _same(c, R, tol):
                g.append(a)
                break
        else:
            groups.append([a])
            reps.append(c)
    ranks = [la.rank(R, tol) for R in reps]
    edges = [
        (u, v)
        for u, v in itertools.combinations(range(len(reps)), 2)
        if ranks[u] and ranks[v] and _orth(reps[u], reps[v], tol)
    ]
    return OrthogonalityGraph(j, tuple(tuple(g) for g in groups), tuple(reps), tuple(ranks), tuple(edges))


# --------------------------------------------------------------------------
# consistent tables


def canonical_consistent_table(t: FactorTable, tol: ToleranceContext = DEFAULT_TOL) -> FactorTable:
    """Replace every qubit column by cells from {I, |0><0|, |1><1|} (and 0)."""
    if any(d != 2 for d in t.dims):
        raise NotQubit(f"all columns must have dimension 2, got {t.dims}")
    _check_projector_table(t, tol)
    cols = []
    for j in range(t.n):
        g = orthogonality_graph(t, j, tol)
        new = {}
        for v, rk in enumerate(g.ranks):
            new[v] = {0: np.zeros((2, 2), dtype=complex), 1: P0, 2: I2}[rk]
        for u, v in g.edges:
            new[u], new[v] = P0, P1
        cols.append([new[g.vertex_of(a)] for a in range(t.r)])
    cells = tuple(tuple(cols[j][a] for j in range(t.n)) for a in range(t.r))
    return FactorTable(cells, t.lambdas, t.dims)


def check_consistency(x: FactorTable, xp: FactorTable, tol: ToleranceContext = DEFAULT_TOL) -> bool:
    """True when ``xp`` keeps ranks, equalities and orthogonalities of ``x`` per column."""
    if x.r != xp.r or tuple(x.dims) != tuple(xp.dims):
        raise ShapeMismatch(f"tables differ in shape: {x.r}x{x.dims} vs {xp.r}x{xp.dims}")
    for j in range(x.n):
        A, B = x.column(j), xp.column(j)
        for a in range(x.r):
            if la.rank(A[a], tol) != la.rank(B[a], tol):
                return False
        for a, b in itertools.combinations(range(x.r), 2):
            if _same(A[a], A[b], tol) and not _same(B[a], B[b], tol):
                return False
            if _orth(A[a], A[b], tol) and not _orth(B[a], B[b], tol):
                return False
    return True


def is_commutative(t: FactorTable, tol: ToleranceContext = DEFAULT_TOL) -> bool:
    rows = [FactorRow(r) for r in t.cells]
    return all(
        classify_commutation(rows[a], rows[b], tol=tol) != NONCOMMUTING
        for a, b in itertools.combinations(range(t.r), 2)
    )


# --------------------------------------------------------------------------
# witnesses


@dataclass(frozen=True, eq=False)
class ProjectorTableWitness:
    """A consistent table plus a product basis state it annihilates row by row."""

    table: FactorTable
    bits: tuple[int, ...]

    def to_dict(self) -> dict:
        return {
            "kind": "projectors2",
            "bits": list(self.bits),
            "cells": [[encode_matrix(c) for c in row] for row in self.table.cells],
        }

    @staticmethod
    def from_dict(doc, dims: Sequence[int] | None = None) -> "ProjectorTableWitness":
        if not isinstance(doc, dict) or doc.get("kind") != "projectors2":
            raise ParseError("not a projectors2 witness", "$.kind")
        bits = doc.get("bits")
        if not isinstance(bits, list) or not all(b in (0, 1) for b in bits):
            raise ParseError("bits must be a list of 0/1", "$.bits")
        rows = doc.get("cells")
        if not isinstance(rows, list):
            raise ParseError("cells must be a list of rows", "$.cells")
        cells = []
        for a, row in enumerate(rows):
            if not isinstance(row, list):
                raise ParseError("row must be a list", f"$.cells[{a}]")
            cells.append(tuple(decode_matrix(c, f"$.cells[{a}][{j}]") for j, c in enumerate(row)))
        dims = tuple(dims) if dims is not None else tuple(2 for _ in bits)
        try:
            table = FactorTable(tuple(cells), tuple(0.0 for _ in cells), dims)
        except ValueError as exc:
            raise ParseError(str(exc), "$.cells") from exc
        return ProjectorTableWitness(table, tuple(int(b) for b in bits))


def _row_kills(row: Sequence[np.ndarray], bits: Sequence[int], tol: ToleranceContext) -> bool:
    for c, b in zip(row, bits):
        if np.linalg.norm(c[:, b]) <= tol.eps_eq:
            return True
    return False


def verify_projector_witness(t: FactorTable, w: ProjectorTableWitness, tol: ToleranceContext = DEFAULT_TOL) -> bool:
    """Accept iff the witness table is consistent with ``t``, both are commutative,
    and every witness row annihilates the basis state ``|bits>``."""
    if w.table.r != t.r or tuple(w.table.dims) != tuple(t.dims) or len(w.bits) != t.n:
        raise ShapeMismatch("witness does not match the table shape")
    if any(abs(v) > tol.eps_eq for v in t.lambdas):
        return False
    try:
        _check_projector_table(t, tol)
        _check_projector_table(w.table, tol)
    except NotProjector:
        return False
    if not (is_commutative(t, tol) and is_commutative(w.table, tol)):
        return False
    if not check_consistency(t, w.table, tol):
        return False
    return all(_row_kills(row, w.bits, tol) for row in w.table.cells)


# --------------------------------------------------------------------------
# diagonal search


def _clauses(xp: FactorTable, tol: ToleranceContext) -> list[list[tuple[int, int]]]:
    """Each row becomes a clause of literals (site, bit that kills the row there).

    A row with a zero cell is always satisfied and yields no clause.
    """
    out = []
    for row in xp.cells:
        lits = []
        dead = False
        for j, c in enumerate(row):
            k0 = np.linalg.norm(c[:, 0]) <= tol.eps_eq
            k1 = np.linalg.norm(c[:, 1]) <= tol.eps_eq
            if k0 and k1:
                dead = True
                break
            if k0:
                lits.append((j, 0))
            elif k1:
                lits.append((j, 1))
        if not dead:
            out.append(lits)
    return out


def solve_clauses(n: int, clauses: list[list[tuple[int, int]]]) -> list[int] | None:
    """Small DPLL: a literal (j, b) is true when bit j equals b."""
    assign: dict[int, int] = {}

    def propagate(assign):
        changed = True
        while changed:
            changed = False
            for cl in clauses:
                open_lits = []
                sat = False
                for j, b in cl:
                    v = assign.get(j)
                    if v is None:
                        open_lits.append((j, b))
                    elif v == b:
                        sat = True
                        break
                if sat:
                    continue
                if not open_lits:
                    return False
                if len(open_lits) == 1:
                    j, b = open_lits[0]
                    assign[j] = b
                    changed = True
        return True

    def rec(assign):
        if not propagate(assign):
            return None
        free = [j for j in range(n) if j not in assign]
        if not free:
            return assign
        # branch on the most frequent free variable
        counts = {j: 0 for j in free}
        for cl in clauses:
            for j, _ in cl:
                if j in counts:
                    counts[j] += 1
        j = max(free, key=lambda q: (counts[q], -q))
        for b in (0, 1):
            trial = dict(assign)
            trial[j] = b
            got = rec(trial)
            if got is not None:
                return got
        return None

    got = rec(assign)
    if got is None:
        return None
    return [got.get(j, 0) for j in range(n)]


def solve_projectors_qubits(t: FactorTable, tol: ToleranceContext = DEFAULT_TOL):
    """Decide a commutative qubit projector table with all lambdas 0.

    Returns
    -------
    (str, ProjectorTableWitness | None)
        ``"positive"`` with a witness, or ``"negative"`` with None.
    """
    if any(abs(v) > tol.eps_eq for v in t.lambdas):
        raise ValueError("projector tables need lambda = 0 on every row")
    if any(d != 2 for d in t.dims):
        raise NotQubit(f"all columns must have dimension 2, got {t.dims}")
    _check_projector_table(t, tol)
    if not is_commutative(t, tol):
        raise NotCommutativeTable("rows of the table do not commute")
    xp = canonical_consistent_table(t, tol)
    bits = solve_clauses(t.n, _clauses(xp, tol))
    if bits is None:
        return "negative", None
    return "positive", ProjectorTableWitness(xp, tuple(bits))


# --------------------------------------------------------------------------
# Kochen-Specker


class _NoAssignment:
    def __repr__(self) -> str:
        return "NoAssignment"

    def __bool__(self) -> bool:
        return False


NoAssignment = _NoAssignment()

Surd = tuple[int, int]  # a + b*sqrt(2)


def _smul(x: Surd, y: Surd) -> Surd:
    return (x[0] * y[0] + 2 * x[1] * y[1], x[0] * y[1] + x[1] * y[0])


def _sdot(u: Sequence[Surd], v: Sequence[Surd]) -> Surd:
    a = b = 0
    for x, y in zip(u, v):
        p = _smul(x, y)
        a += p[0]
        b += p[1]
    return a, b


def load_peres_rays() -> list[tuple[Surd, ...]]:
    """The Peres 33-ray set in exact a + b*sqrt(2) form."""
    text = resources.files("commoneig").joinpath("data/peres33.json").read_text(encoding="utf-8")
    doc = json.loads(text)
    return [tuple((int(a), int(b)) for a, b in ray) for ray in doc["rays"]]


def surd_to_float(ray: Sequence[Surd]) -> np.ndarray:
    v = np.array([a + b * np.sqrt(2.0) for a, b in ray], dtype=float)
    return v / np.linalg.norm(v)


def _is_exact(rays) -> bool:
    try:
        return all(len(c) == 2 and all(isinstance(t, (int, np.integer)) for t in c) for r in rays for c in r)
    except TypeError:
        return False


def orthogonality_structure(rays, tol: float = 1e-9):
    """Orthogonal pairs and complete orthogonal triads among the rays."""
    n = len(rays)
    if _is_exact(rays):
        orth = [[_sdot(rays[i], rays[k]) == (0, 0) for k in range(n)] for i in range(n)]
    else:
        V = [np.asarray(r, dtype=complex) / np.linalg.norm(r) for r in rays]
        orth = [[abs(np.vdot(V[i], V[k])) <= tol for k in range(n)] for i in range(n)]
    pairs = [(i, k) for i, k in itertools.combinations(range(n), 2) if orth[i][k]]
    triads = [
        t for t in itertools.combinations(range(n), 3)
        if orth[t[0]][t[1]] and orth[t[0]][t[2]] and orth[t[1]][t[2]]
    ]
    return pairs, triads


def kochen_specker_check(rays, tol: float = 1e-9):
    """Search for a 0/1 valuation with exactly one 1 per complete orthogonal
    triad and never two 1s on an orthogonal pair.

    ``rays`` are either exact (a, b) surd triples or numeric 3-vectors.
    Returns the valuation as a tuple, or :data:`NoAssignment`.
    """
    n = len(rays)
    pairs, triads = orthogonality_structure(rays, tol)
    nbrs = [[] for _ in range(n)]
    for i, k in pairs:
        nbrs[i].append(k)
        nbrs[k].append(i)
    in_triads = [[t for t in triads if i in t] for i in range(n)]

    def propagate(val):
        stack = [i for i in range(n) if val[i] is not None]
        while stack:
            i = stack.pop()
            if val[i] == 1:
                for k in nbrs[i]:
                    if val[k] == 1:
                        return False
                    if val[k] is None:
                        val[k] = 0
                        stack.append(k)
            for t in in_triads[i]:
                vs = [val[q] for q in t]
                ones = vs.count(1)
                if ones > 1:
                    return False
                if ones == 0:
                    free = [q for q in t if val[q] is None]
                    if not free:
                        return False
                    if len(free) == 1:
                        val[free[0]] = 1
                        stack.append(free[0])
        return True

    def rec(val):
        if not propagate(val):
            return None
        free = [i for i in range(n) if val[i] is None]
        if not free:
            return val
        i = max(free, key=lambda q: (len(in_triads[q]) + len(nbrs[q]), -q))
        for b in (1, 0):
            trial = list(val)
            trial[i] = b
            got = rec(trial)
            if got is not None:
                return got
        return None

    got = rec([None] * n)
    if got is None:
        return NoAssignment
    return tuple(int(v) for v in got)


def _ray_projector(ray) -> np.ndarray:
    v = surd_to_float(ray) if _is_exact([ray]) else np.asarray(ray, dtype=complex)
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def recolor_column(t: FactorTable, j: int, tol: ToleranceContext = DEFAULT_TOL) -> list[np.ndarray] | None:
    """Try to replace column ``j`` by diagonal cells consistently.

    Rank-1 classes get basis projectors |c><c| with orthogonal classes on
    distinct labels; full-rank classes become I and zero classes stay 0.
    Returns the new column, or None when no labelling exists.
    """
    d = t.dims[j]
    g = orthogonality_graph(t, j, tol)
    nv = len(g.vertices)
    for v, rk in enumerate(g.ranks):
        if rk not in (0, 1, d):
            raise ValueError("only rank-0, rank-1 and identity cells can be recoloured")
    rank1 = [v for v in range(nv) if g.ranks[v] == 1]
    adj = {v: set() for v in rank1}
    for u, v in g.edges:
        if u in adj and v in adj:
            adj[u].add(v)
            adj[v].add(u)
    order = sorted(rank1, key=lambda v: -len(adj[v]))
    label: dict[int, int] = {}

    def rec(i):
        if i == len(order):
            return True
        v = order[i]
        used = {label[u] for u in adj[v] if u in label}
        for c in range(d):
            if c not in used:
                label[v] = c
                if rec(i + 1):
                    return True
                del label[v]
        return False

    if not rec(0):
        return None
    out = []
    for a in range(t.r):
        v = g.vertex_of(a)
        if g.ranks[v] == 0:
            out.append(np.zeros((d, d), dtype=complex))
        elif g.ranks[v] == d:
            out.append(np.eye(d, dtype=complex))
        else:
            P = np.zeros((d, d), dtype=complex)
            P[label[v], label[v]] = 1.0
            out.append(P)
    return out


@dataclass
class KSReport:
    rays: int
    pairs: int
    triads: int
    assignment: object
    recolorable: bool
    text: str


def peres_table() -> FactorTable:
    """33-row table with the Peres projectors in column 0 and I in column 1."""
    rays = load_peres_rays()
    cells = tuple((_ray_projector(r), np.eye(3, dtype=complex)) for r in rays)
    return FactorTable(cells, tuple(0.0 for _ in rays), (3, 3))


def demo_generalization_failure(rays=None) -> KSReport:
    """Show that diagonal recolouring of a d = 3 column can be impossible.

    A consistent diagonal column would give a valuation (1 on label 2, 0
    elsewhere) that picks exactly one ray per triad and never two
    orthogonal rays.  The search proves there is none for the Peres set,
    and the recolouring search fails directly as well.
    """
    if rays is None:
        rays = load_peres_rays()
    pairs, triads = orthogonality_structure(rays)
    val = kochen_specker_check(rays)
    cells = tuple((_ray_projector(r),) for r in rays)
    t = FactorTable(cells, tuple(0.0 for _ in rays), (3,))
    col = recolor_column(t, 0)
    ok = col is not None
    lines = [
        f"column 0 holds {len(rays)} rank-1 projectors in C^3",
        f"orthogonal pairs: {len(pairs)}, complete orthogonal triads: {len(triads)}",
    ]
    if val is NoAssignment:
        lines.append("valuation search: NoAssignment (exhaustive)")
    else:
        lines.append(f"valuation search: found {''.join(map(str, val))}")
    if ok:
        lines.append("diagonal recolouring: found a consistent diagonal column")
    else:
        lines.append("diagonal recolouring: impossible")
        lines.append(
            "a consistent diagonal column would induce a valuation with one 1 per triad; "
            "none exists, so the qubit recolouring argument does not extend to d = 3"
        )
    return KSReport(len(rays), len(pairs), len(triads), val, ok, "\n".join(lines))


def triad_family(k: int = 3, seed: int = 0) -> list[np.ndarray]:
    """``k`` random orthonormal bases of C^3, flattened to a ray list."""
    rng = np.random.default_rng(seed)
    rays = []
    for _ in range(k):
        U = la.random_unitary(3, rng)
        rays.extend(U[:, i] for i in range(3))
    return rays

"""Instance generators: graph coloring, 3-CNF, commuting Hamiltonians, cluster states."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import linalg as la
from .errors import MalformedClause, NonCommutingTerms, OddSize, ParseError
from .instance import CesInstance, FactorRow, LocalTerm, check_norm, effective_support
from .linalg import DEFAULT_TOL, ToleranceContext

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
P0 = np.array([[1, 0], [0, 0]], dtype=complex)
P1 = np.array([[0, 0], [0, 1]], dtype=complex)


class GapViolation(UserWarning):
    """Some energy assignment falls inside the promise gap (eps_l, eps_u]."""


@dataclass(frozen=True)
class Graph:
    n: int
    edges: tuple[tuple[int, int], ...]

    @staticmethod
    def from_edges(edges: Iterable[tuple[int, int]], n: int | None = None) -> "Graph":
        es = sorted({(min(u, v), max(u, v)) for u, v in edges})
        if any(u == v for u, v in es):
            raise ValueError("self-loops are not allowed")
        m = max((v for e in es for v in e), default=-1) + 1
        return Graph(max(m, n or 0), tuple(es))


# --------------------------------------------------------------------------
# 3-coloring


def from_three_coloring(G: Graph) -> CesInstance:
    """d = 3 instance with checks |cc⟩⟨cc| on every edge and color, λ = 0."""
    checks = []
    for u, v in G.edges:
        for c in range(3):
            e = np.zeros(9, dtype=complex)
            e[3 * c + c] = 1
            checks.append(LocalTerm((u, v), np.outer(e, e)))
    return CesInstance(
        (3,) * G.n, tuple(checks), (0.0,) * len(checks), {"source": "coloring", "edges": [list(e) for e in G.edges]}
    )


def count_colorings(G: Graph, k: int = 3) -> int:
    """Brute-force count of proper k-colorings (independent reference)."""
    total = 0
    for col in itertools.product(range(k), repeat=G.n):
        if all(col[u] != col[v] for u, v in G.edges):
            total += 1
    return total


def read_edge_list(text: str) -> Graph:
    """Parse "u v" lines (0-based).  An optional "n <count>" line fixes the vertex count."""
    edges = []
    n = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "n" and len(parts) == 2 and parts[1].isdigit():
            n = int(parts[1])
            continue
        if len(parts) != 2 or not all(p.lstrip("-").isdigit() for p in parts):
            raise ParseError(f"expected 'u v', got {raw!r}", f"line {lineno}")
        u, v = int(parts[0]), int(parts[1])
        if u < 0 or v < 0 or u == v:
            raise ParseError("vertices must be distinct non-negative integers", f"line {lineno}")
        edges.append((u, v))
    return Graph.from_edges(edges, n)


# --------------------------------------------------------------------------
# 3-CNF


@dataclass(frozen=True)
class Formula:
    n_vars: int
    clauses: tuple[tuple[int, ...], ...]  # DIMACS literals, 1-based


def from_three_cnf(f: Formula) -> CesInstance:
    """One factorized projector per clause, onto its falsifying assignment, λ = 0."""
    rows = []
    for ci, clause in enumerate(f.clauses):
        if len(clause) != 3:
            raise MalformedClause(f"clause {ci} has {len(clause)} literals, expected 3")
        lits = {}
        taut = False
        for lit in clause:
            if lit == 0 or abs(lit) > f.n_vars:
                raise MalformedClause(f"clause {ci} has literal {lit} outside 1..{f.n_vars}")
            v = abs(lit) - 1
            val = lit > 0
            if v in lits and lits[v] != val:
                taut = True
            lits[v] = val
        if taut:
            continue  # always satisfied, no constraint
        factors = []
        for j in range(f.n_vars):
            if j not in lits:
                factors.append(I2)
            else:
                # the falsifier sets a positive literal to 0 and a negative one to 1
                factors.append(P0 if lits[j] else P1)
        rows.append(FactorRow(tuple(factors)))
    return CesInstance(
        (2,) * f.n_vars,
        tuple(rows),
        (0.0,) * len(rows),
        {"source": "cnf", "clauses": [list(c) for c in f.clauses]},
    )


def count_sat(f: Formula) -> int:
    """Brute-force count of satisfying assignments."""
    total = 0
    for bits in itertools.product((False, True), repeat=f.n_vars):
        if all(any(bits[abs(l) - 1] == (l > 0) for l in c) for c in f.clauses):
            total += 1
    return total


def read_dimacs(text: str) -> Formula:
    n = None
    clauses = []
    cur: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ParseError("bad problem line", f"line {lineno}")
            try:
                n = int(parts[2])
            except ValueError as exc:
                raise ParseError("bad variable count", f"line {lineno}") from exc
            continue
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError as exc:
                raise ParseError(f"bad literal {tok!r}", f"line {lineno}") from exc
            if lit == 0:
                clauses.append(tuple(cur))
                cur = []
            else:
                cur.append(lit)
    if cur:
        clauses.append(tuple(cur))
    if n is None:
        n = max((abs(l) for c in clauses for l in c), default=0)
    if n < 1:
        raise ParseError("formula has no variables")
    return Formula(n, tuple(clauses))


def random_three_cnf(n_vars: int, n_clauses: int, rng: np.random.Generator) -> Formula:
    clauses = []
    for _ in range(n_clauses):
        vs = rng.choice(n_vars, size=3, replace=False) + 1
        signs = rng.choice([-1, 1], size=3)
        clauses.append(tuple(int(v * s) for v, s in zip(vs, signs)))
    return Formula(n_vars, tuple(clauses))


# --------------------------------------------------------------------------
# commuting Hamiltonian -> (k+1)-local CES


@dataclass
class HamiltonianReduction:
    instance: CesInstance
    projectors: list[tuple[int, float, LocalTerm]]  # (term index, energy, eigenprojector)
    clauses: list[tuple[int, ...]]  # over ancilla + auxiliary qubits, 1-based DIMACS literals
    metadata: dict = field(default_factory=dict)


def _spectral_projectors(term: LocalTerm, tol: ToleranceContext):
    w, V = np.linalg.eigh(term.matrix)
    gap = la.spectral_tol(max(1.0, float(np.max(np.abs(w)))), tol)
    out = []
    for g in la.cluster_values(w, gap):
        B = V[:, g]
        out.append((float(np.mean(w[g])), B @ la.dagger(B)))
    return out


def _tseitin(clause: Sequence[int], next_var: int) -> tuple[list[tuple[int, ...]], int]:
    """Split a wide clause into clauses of width <= 3 with fresh variables."""
    lits = list(clause)
    if len(lits) <= 3:
        return [tuple(lits)], next_var
    out = []
    z = next_var
    out.append((lits[0], lits[1], z))
    rest = lits[2:]
    while len(rest) > 2:
        z2 = z + 1
        out.append((-z, rest[0], z2))
        rest = rest[1:]
        z = z2
    out.append((-z, rest[0], rest[1]))
    return out, z + 1


def from_commuting_hamiltonian(
    dims: Sequence[int],
    terms: Sequence[LocalTerm],
    eps_l: float,
    eps_u: float,
    tol: ToleranceContext = DEFAULT_TOL,
) -> HamiltonianReduction:
    """(k+1)-local CES instance on H ⊗ (C²)^R whose answer is [min spec H ≤ eps_l].

    Each term is split into spectral projectors Π_a with energies ε_a; the
    ancilla qubit a records whether the state lies in Π_a.  The predicate
    E(y) ≤ threshold is compiled into clauses by enumerating infeasible
    prefixes over the per-term eigenvalue choices.  Assignments in the
    promise gap are accepted (threshold = eps_u) and reported.
    """
    if not eps_u > eps_l:
        raise ValueError("need eps_u > eps_l")
    dims = tuple(int(d) for d in dims)
    for a, b in itertools.combinations(range(len(terms)), 2):
        A = la.embed_local(terms[a].matrix, terms[a].support, dims)
        B = la.embed_local(terms[b].matrix, terms[b].support, dims)
        scale = max(1.0, check_norm(terms[a]) * check_norm(terms[b]))
        if la.commutator_norm(A, B) > tol.eps_eq * scale:
            raise NonCommutingTerms(f"terms {a} and {b} do not commute")
    projs: list[tuple[int, float, LocalTerm]] = []
    groups: list[list[int]] = []
    for t, term in enumerate(terms):
        ids = []
        for e, P in _spectral_projectors(term, tol):
            ids.append(len(projs))
            projs.append((t, e, LocalTerm(term.support, P)))
        groups.append(ids)
    R = len(projs)
    n = len(dims)
    energies = [e for _, e, _ in projs]
    thr = eps_u  # accept-side semantics inside the gap

    # enumerate one-hot prefixes over terms (the only y with L_y != 0)
    mins = [min(energies[i] for i in g) for g in groups]
    maxs = [max(energies[i] for i in g) for g in groups]
    suffix_min = np.concatenate([np.cumsum(mins[::-1])[::-1], [0.0]])
    suffix_max = np.concatenate([np.cumsum(maxs[::-1])[::-1], [0.0]])
    slack = 1e-9 * max(1.0, sum(abs(e) for e in energies))
    bad_prefixes: list[tuple[int, ...]] = []

    def rec(t, prefix, acc):
        if acc + suffix_min[t] > thr + slack:
            bad_prefixes.append(tuple(prefix))
            return
        if acc + suffix_max[t] <= thr + slack or t == len(groups):
            return
        for i in groups[t]:
            rec(t + 1, prefix + [i], acc + energies[i])

    rec(0, [], 0.0)
    gap_count = 0
    for combo in itertools.product(*groups):
        E = sum(energies[i] for i in combo)
        if eps_l + slack < E <= eps_u + slack:
            gap_count += 1
    clauses: list[tuple[int, ...]] = []
    next_var = R + 1
    for pre in bad_prefixes:
        wide = tuple(-(i + 1) for i in pre)
        if not wide:
            wide_clauses = [()]
        else:
            wide_clauses, next_var = _tseitin(wide, next_var)
        clauses.extend(wide_clauses)
    n_aux = next_var - 1 - R
    qdims = dims + (2,) * (R + n_aux)
    checks: list = []
    lams: list[float] = []
    for a, (_, _, P) in enumerate(projs):
        anc = n + a
        Hp = np.kron(P.matrix, P1) + np.kron(np.eye(P.matrix.shape[0]) - P.matrix, P0)
        checks.append(LocalTerm(tuple(P.support) + (anc,), Hp))
        lams.append(1.0)
    for cl in clauses:
        if not cl:
            # the empty clause is unsatisfiable: a zero check with λ = 1
            checks.append(LocalTerm((n,), np.zeros((2, 2), dtype=complex)))
            lams.append(1.0)
            continue
        vs = [abs(l) - 1 + n for l in cl]
        # merge repeated variables
        lit_of = {}
        for v, l in zip(vs, cl):
            lit_of.setdefault(v, set()).add(l > 0)
        if any(len(s) > 1 for s in lit_of.values()):
            continue
        sup = tuple(sorted(lit_of))
        falsifier = [0 if True in lit_of[v] else 1 for v in sup]
        e = np.zeros(2 ** len(sup), dtype=complex)
        e[int("".join(map(str, falsifier)), 2)] = 1
        checks.append(LocalTerm(sup, np.eye(len(e)) - np.outer(e, e)))
        lams.append(1.0)
    Hfull = sum(la.embed_local(t.matrix, t.support, dims) for t in terms) if terms else np.zeros((1, 1))
    lam_min = float(np.linalg.eigvalsh(Hfull)[0]) if len(terms) else 0.0
    meta = {
        "source": "hamiltonian",
        "eps_l": eps_l,
        "eps_u": eps_u,
        "n_projectors": R,
        "n_auxiliary": n_aux,
        "n_clauses": len(clauses),
        "gap_assignments": gap_count,
        "gap_semantics": "accept",
        "ground_energy": lam_min,
        "promise_ok": not (eps_l + slack < lam_min <= eps_u + slack),
    }
    if gap_count:
        warnings.warn(
            f"{gap_count} eigenvalue assignment(s) have energy in ({eps_l}, {eps_u}]", GapViolation, stacklevel=2
        )
    inst = CesInstance(qdims, tuple(checks), tuple(lams), meta)
    return HamiltonianReduction(inst, projs, clauses, meta)


def ground_energy_test(dims: Sequence[int], terms: Sequence[LocalTerm], eps_l: float) -> bool:
    """Exact diagonalization reference: min spec H ≤ eps_l."""
    H = sum(la.embed_local(t.matrix, t.support, dims) for t in terms)
    return bool(np.linalg.eigvalsh(H)[0] <= eps_l + 1e-9)


# --------------------------------------------------------------------------
# eigenvalue-list witnesses for commuting Hamiltonians


@dataclass
class EnergyBundle:
    lambdas: tuple[float, ...]
    witness: object | None
    method: str


def lemma5_witness_bundle(
    dims: Sequence[int], terms: Sequence[LocalTerm], lambdas: Sequence[float], tol: ToleranceContext = DEFAULT_TOL
) -> EnergyBundle:
    """Eigenvalue list plus a common-eigenspace witness for (H_1..H_r; λ)."""
    from . import twolocal

    x = CesInstance(tuple(dims), tuple(terms), tuple(lambdas))
    if all(len(effective_support(t, x.dims, tol)) <= 2 for t in terms):
        res = twolocal.solve(x, tol)
        return EnergyBundle(tuple(lambdas), res.witness, "twolocal")
    return EnergyBundle(tuple(lambdas), None, "oracle")


def verify_energy_bundle(
    dims: Sequence[int],
    terms: Sequence[LocalTerm],
    bundle: EnergyBundle,
    eps_l: float,
    tol: ToleranceContext = DEFAULT_TOL,
) -> tuple[bool, str]:
    """Check (i) Σ λ ≤ eps_l and (ii) the eigenspace witness."""
    from . import oracle, twolocal

    if len(bundle.lambdas) != len(terms):
        return False, "length"
    if sum(bundle.lambdas) > eps_l + 1e-9:
        return False, "energy"
    x = CesInstance(tuple(dims), tuple(terms), bundle.lambdas)
    if bundle.method == "twolocal":
        if bundle.witness is None or not twolocal.verify_witness(x, bundle.witness, tol):
            return False, "witness"
        return True, "ok"
    if oracle.dimension(x, tol) == 0:
        return False, "witness"
    return True, "ok"


# --------------------------------------------------------------------------
# cluster states


def cluster_instance(n: int) -> CesInstance:
    """Periodic cluster-state checks Z X Z on 2n qubits grouped into n particles of C^4."""
    if n % 2:
        raise OddSize(f"particle count must be even, got {n}")
    if n < 2 or 2 * n > 12:
        raise ValueError("need 2 <= n and 2n <= 12 qubits")
    nq = 2 * n
    checks = []
    for q in range(nq):
        paulis = {(q - 1) % nq: Z, q: X, (q + 1) % nq: Z}
        parts = sorted({p // 2 for p in paulis})
        qubits = [2 * p + i for p in parts for i in (0, 1)]
        M = la.tensor(*[paulis.get(b, I2) for b in qubits])
        checks.append(LocalTerm(tuple(parts), M))
    return CesInstance((4,) * n, tuple(checks), (1.0,) * nq, {"source": "cluster", "particles": n})


def cluster_hamiltonian_terms(n: int) -> tuple[tuple[int, ...], list[LocalTerm]]:
    x = cluster_instance(n)
    return x.dims, [LocalTerm(c.support, -c.matrix) for c in x.checks]


def cz_layer(n: int) -> np.ndarray:
    """V = ⊗_p CZ(2p, 2p+1): controlled-Z inside every two-qubit particle (diagonal)."""
    nq = 2 * n
    D = 2 ** nq
    diag = np.ones(D)
    for b in range(D):
        bits = [(b >> (nq - 1 - q)) & 1 for q in range(nq)]
        diag[b] = (-1) ** sum(bits[2 * p] * bits[2 * p + 1] for p in range(n))
    return np.diag(diag).astype(complex)


def schmidt_rank(psi: np.ndarray, left_dim: int, tol: float = 1e-8) -> int:
    M = np.asarray(psi).reshape(left_dim, -1)
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > tol * max(1.0, s[0])))


def bond_cut_schmidt_ranks(psi: np.ndarray, n: int) -> list[int]:
    """Schmidt ranks across the cuts between consecutive bonds (2p+1, 2p+2).

    Qubits are cyclically shifted by one so that every bond is a pair of
    adjacent tensor factors; a product over bonds gives rank 1 at every cut.
    """
    nq = 2 * n
    T = np.asarray(psi).reshape((2,) * nq)
    T = T.transpose(list(range(1, nq)) + [0]).reshape(-1)
    return [schmidt_rank(T, 4 ** b) for b in range(1, n)]

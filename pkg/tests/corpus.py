"""Random instance families with known structure, shared by the test modules.

Every generator takes a numpy Generator and returns valid (pairwise
commuting) instances.  Answers are never assumed: tests compare against the
oracle.
"""

from __future__ import annotations

import itertools

import numpy as np

from commoneig import linalg as la
from commoneig.instance import NONCOMMUTING, CesInstance, FactorRow, FactorTable, LocalTerm, classify_commutation
from commoneig.reductions import Graph, cluster_instance, from_three_coloring

I2 = np.eye(2, dtype=complex)
PAULI = {
    "I": I2,
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


# --------------------------------------------------------------------------
# 2-local instances with a hidden subparticle structure


def _graph(kind, n):
    if kind == "path":
        return [(i, i + 1) for i in range(n - 1)]
    if kind == "cycle":
        return [(i, (i + 1) % n) for i in range(n)]
    if kind == "star":
        return [(0, i) for i in range(1, n)]
    raise ValueError(kind)


def structured_two_local(rng, max_dim=2 ** 12):
    """2-local instance built from block / subparticle data, then locally rotated.

    Particle j is a direct sum of blocks; block alpha of particle j is a
    tensor product of one subparticle per neighbour and a spectator factor.
    Edge terms act on the matching subparticle pair inside every pair of
    blocks, so all terms commute.
    """
    while True:
        n = int(rng.integers(2, 5))
        kind = ["path", "cycle", "star"][int(rng.integers(0, 3))] if n > 2 else "path"
        if kind == "cycle" and n < 3:
            kind = "path"
        edges = _graph(kind, n)
        nbrs = {j: sorted([k for e in edges for k in e if j in e and k != j]) for j in range(n)}
        # blocks[j] = list of (dict neighbour -> subdim, spectator dim)
        blocks = {}
        for j in range(n):
            nb = int(rng.integers(1, 3))
            blocks[j] = []
            for _ in range(nb):
                subs = {k: int(rng.integers(1, 3)) for k in nbrs[j]}
                spec = int(rng.integers(1, 3)) if rng.random() < 0.3 else 1
                blocks[j].append((subs, spec))
        dims = [sum(int(np.prod(list(s.values()) or [1])) * sp for s, sp in blocks[j]) for j in range(n)]
        if int(np.prod(dims)) <= max_dim and max(dims) <= 16:
            break

    def block_offsets(j):
        off, out = 0, []
        for subs, sp in blocks[j]:
            size = int(np.prod(list(subs.values()) or [1])) * sp
            out.append((off, size))
            off += size
        return out

    checks, lams = [], []
    for (j, k) in edges:
        terms = int(rng.integers(1, 3))
        oj, ok = block_offsets(j), block_offsets(k)
        # terms on one edge share an eigenbasis per block pair, so they commute
        frames = {
            (a, b): la.random_unitary(blocks[j][a][0][k] * blocks[k][b][0][j], rng)
            for a in range(len(oj)) for b in range(len(ok))
        }
        for _ in range(terms):
            H = np.zeros((dims[j] * dims[k],) * 2, dtype=complex)
            for a, (sa, la_) in enumerate(oj):
                for b, (sb, lb) in enumerate(ok):
                    mj = blocks[j][a][0][k]
                    mk = blocks[k][b][0][j]
                    r = rng.random()
                    if r < 0.15:
                        P = np.zeros((mj * mk,) * 2)
                    elif r < 0.3:
                        P = np.eye(mj * mk)
                    else:
                        F = frames[(a, b)]
                        P = F @ np.diag(rng.integers(0, 2, size=mj * mk)) @ F.conj().T
                    # P on the (j,k) subparticle pair, identity on every other factor
                    subs_j, spj = blocks[j][a]
                    subs_k, spk = blocks[k][b]
                    fj = [subs_j[q] for q in nbrs[j]] + [spj]
                    fk = [subs_k[q] for q in nbrs[k]] + [spk]
                    pos_j = nbrs[j].index(k)
                    pos_k = nbrs[k].index(j)
                    local = _embed_pair(P, fj, fk, pos_j, pos_k, mj, mk)
                    Ej = np.zeros((dims[j], la_), dtype=complex)
                    Ej[sa:sa + la_, :] = np.eye(la_)
                    Ek = np.zeros((dims[k], lb), dtype=complex)
                    Ek[sb:sb + lb, :] = np.eye(lb)
                    E = np.kron(Ej, Ek)
                    H += E @ local @ E.conj().T
            mode = rng.random()
            if mode < 0.6:
                checks.append(LocalTerm((j, k), H))
                lams.append(0.0)
            elif mode < 0.85:
                c = float(rng.choice([0.5, 2.0, 3.0]))
                checks.append(LocalTerm((j, k), c * H + np.eye(H.shape[0])))
                lams.append(1.0 + c * float(rng.integers(0, 2)))
            else:
                checks.append(LocalTerm((k, j), _swap(H, dims[j], dims[k])))
                lams.append(0.0)
    # occasional 1-local central term: a block indicator
    for j in range(n):
        if len(blocks[j]) > 1 and rng.random() < 0.3:
            off = block_offsets(j)
            D = np.zeros(dims[j])
            a = int(rng.integers(0, len(off)))
            D[off[a][0]:off[a][0] + off[a][1]] = 1.0
            checks.append(LocalTerm((j,), np.diag(D).astype(complex)))
            lams.append(float(rng.integers(0, 2)))
    Us = [la.random_unitary(d, rng) for d in dims]
    rot = []
    for c in checks:
        U = la.tensor(*[Us[p] for p in c.support])
        rot.append(LocalTerm(c.support, U @ c.matrix @ U.conj().T))
    return CesInstance(tuple(dims), tuple(rot), tuple(lams), {"source": "structured", "graph": kind})


def _embed_pair(P, fj, fk, pos_j, pos_k, mj, mk):
    """P on factor pos_j of the j-side and pos_k of the k-side, identity elsewhere."""
    nj, nk = len(fj), len(fk)
    dims = fj + fk
    rest = [i for i in range(nj + nk) if i not in (pos_j, nj + pos_k)]
    drest = int(np.prod([dims[i] for i in rest] or [1]))
    full = np.kron(P, np.eye(drest))  # axes order: (pos_j, pos_k, rest...)
    order = [pos_j, nj + pos_k] + rest
    n = nj + nk
    T = full.reshape([dims[i] for i in order] * 2)
    inv = list(np.argsort(order))
    T = T.transpose(inv + [n + i for i in inv])
    D = int(np.prod(dims))
    return T.reshape(D, D)


def _swap(H, dj, dk):
    T = H.reshape(dj, dk, dj, dk).transpose(1, 0, 3, 2)
    return T.reshape(dj * dk, dj * dk)


def coloring_instances(rng, count):
    out = []
    for _ in range(count):
        n = int(rng.integers(3, 7))
        p = rng.uniform(0.3, 0.8)
        edges = [(u, v) for u, v in itertools.combinations(range(n), 2) if rng.random() < p]
        if not edges:
            edges = [(0, 1)]
        out.append(from_three_coloring(Graph.from_edges(edges, n)))
    return out


def rotated_cluster(rng, n=2):
    x = cluster_instance(n)
    Us = [la.random_unitary(4, rng) for _ in range(n)]
    rot = []
    for c in x.checks:
        U = la.tensor(*[Us[p] for p in c.support])
        rot.append(LocalTerm(c.support, U @ c.matrix @ U.conj().T))
    return CesInstance(x.dims, tuple(rot), x.lambdas, x.meta)


def two_local_corpus(seed=0, count=200):
    rng = np.random.default_rng(seed)
    out = [structured_two_local(rng) for _ in range(count - 30)]
    out += coloring_instances(rng, 20)
    out += [rotated_cluster(rng, 2) for _ in range(5)]
    out += [cluster_instance(2), cluster_instance(4), cluster_instance(6)]
    out += [rotated_cluster(rng, 4) for _ in range(2)]
    return out


# --------------------------------------------------------------------------
# factor tables


def _add_if_commuting(rows, lams, cand, lam):
    r = FactorRow(cand)
    for other in rows:
        if classify_commutation(r, FactorRow(other)) == NONCOMMUTING:
            return False
    rows.append(cand)
    lams.append(lam)
    return True


def qubit_projector_table(rng, n=None, r=None, diagonal=False):
    """Commuting table of qubit projectors (lambda = 0) by rejection sampling.

    Each column draws cells from I and a small set of bases so that
    equalities and orthogonalities actually occur.
    """
    n = n or int(rng.integers(1, 11))
    r = r or int(rng.integers(1, 13))
    col_bases = []
    for _ in range(n):
        k = 1 if diagonal else int(rng.integers(1, 4))
        bases = [np.eye(2, dtype=complex)] + [la.random_unitary(2, rng) for _ in range(k - 1)]
        col_bases.append(bases)
    rows, lams = [], []
    tries = 0
    while len(rows) < r and tries < 60 * r:
        tries += 1
        cand = []
        for j in range(n):
            u = rng.random()
            if u < 0.45:
                cand.append(I2.copy())
            else:
                B = col_bases[j][int(rng.integers(0, len(col_bases[j])))]
                v = B[:, int(rng.integers(0, 2))]
                cand.append(np.outer(v, v.conj()))
        _add_if_commuting(rows, lams, cand, 0.0)
    return FactorTable(tuple(tuple(x) for x in rows), tuple(lams), (2,) * n)


def qubit_projector_corpus(seed=1, count=220):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        out.append(qubit_projector_table(rng, diagonal=(i % 4 == 0)))
    return out


def _commuting_paulis(rng, nq, m):
    strs = []
    tries = 0
    while len(strs) < m and tries < 200:
        tries += 1
        s = "".join(rng.choice(list("IXYZ"), size=nq))
        if all(_pauli_commute(s, t) for t in strs):
            strs.append(s)
    return strs


def _pauli_commute(s, t):
    anti = sum(1 for a, b in zip(s, t) if a != "I" and b != "I" and a != b)
    return anti % 2 == 0


def mixed_qubit_table(rng, n=None):
    """d = 2 table mixing regular and singular rows with a hidden column structure.

    Column types: ``pauli`` (regular cells are scaled Pauli matrices),
    ``diag`` (regular cells diagonal, so the column algebra has two blocks)
    and ``free`` (regular cells scalar).  Singular rows are added by
    rejection sampling so every pair commutes.  Finally every column is
    conjugated by a random unitary.
    """
    n = n or int(rng.integers(1, 7))
    kinds = [["pauli", "diag", "free"][int(rng.integers(0, 3))] for _ in range(n)]
    pauli_cols = [j for j in range(n) if kinds[j] == "pauli"]
    m_reg = int(rng.integers(0, 5))
    strs = _commuting_paulis(rng, len(pauli_cols), m_reg) if pauli_cols else [""] * m_reg
    rows, lams = [], []
    for s in strs:
        cells, lam = [], float(rng.choice([1.0, -1.0]))
        for j in range(n):
            if kinds[j] == "pauli":
                c = s[pauli_cols.index(j)]
                scale = float(rng.choice([1.0, 2.0, -1.0, 0.5]))
                cells.append(scale * PAULI[c])
                lam *= scale
            elif kinds[j] == "diag":
                d = rng.choice([1.0, -1.0, 2.0, 0.5], size=2)
                cells.append(np.diag(d).astype(complex))
                lam *= float(d[int(rng.integers(0, 2))])
            else:
                c = float(rng.choice([1.0, 2.0, -3.0]))
                cells.append(c * I2)
                lam *= c
        if rng.random() < 0.1:
            lam *= 3.0
        rows.append(cells)
        lams.append(lam)
    m_sing = int(rng.integers(0, 6))
    tries = 0
    added = 0
    while added < m_sing and tries < 80:
        tries += 1
        cells = []
        for j in range(n):
            if kinds[j] == "pauli":
                cells.append(I2.copy())
            elif kinds[j] == "diag":
                cells.append([I2, np.diag([1, 0]), np.diag([0, 1])][int(rng.integers(0, 3))].astype(complex))
            else:
                u = rng.random()
                if u < 0.3:
                    cells.append(I2.copy())
                elif u < 0.6:
                    cells.append(np.diag([1, 0]).astype(complex) if rng.random() < 0.5 else np.diag([0, 1]).astype(complex))
                else:
                    v = la.random_unitary(2, np.random.default_rng(int(rng.integers(0, 3))))[:, int(rng.integers(0, 2))]
                    cells.append(np.outer(v, v.conj()))
        if rng.random() < 0.3:
            cells = [(1.0 + rng.random()) * c for c in cells]  # positive, singular, not a projector
        if _add_if_commuting(rows, lams, cells, 0.0):
            added += 1
    order = rng.permutation(len(rows))
    rows = [rows[i] for i in order]
    lams = [lams[i] for i in order]
    Us = [la.random_unitary(2, rng) for _ in range(n)]
    cells = tuple(tuple(Us[j] @ c @ Us[j].conj().T for j, c in enumerate(row)) for row in rows)
    return FactorTable(cells, tuple(lams), (2,) * n)


def mixed_corpus(seed=2, count=120):
    rng = np.random.default_rng(seed)
    return [mixed_qubit_table(rng) for _ in range(count)]


def block_column_table(rng):
    """Columns C^2 ⊗ C^m1 ⊕ C^2 ⊗ C^m2 whose algebra has two central blocks.

    Regular cells are P ⊗ diag(s1 I_m1, s2 I_m2) with a shared Pauli P, so
    the sign of (anti)commutation is the same in both blocks.  Singular
    cells are I ⊗ Q with Q diagonal.
    """
    n = int(rng.integers(1, 4))
    shapes = [(int(rng.integers(1, 3)), int(rng.integers(0, 3))) for _ in range(n)]
    dims = [2 * (m1 + m2) for m1, m2 in shapes]
    if int(np.prod(dims)) > 2 ** 10:
        return block_column_table(rng)
    strs = _commuting_paulis(rng, n, int(rng.integers(1, 4)))
    rows, lams = [], []
    for s in strs:
        cells, lam = [], float(rng.choice([1.0, -1.0]))
        for j, (m1, m2) in enumerate(shapes):
            s1 = float(rng.choice([1.0, -1.0, 2.0]))
            s2 = float(rng.choice([1.0, -1.0, 0.5]))
            D = np.diag([s1] * m1 + [s2] * m2)
            cells.append(np.kron(PAULI[s[j]], D).astype(complex))
            lam *= s1 if rng.random() < 0.7 else s2
        rows.append(cells)
        lams.append(lam)
    for _ in range(int(rng.integers(0, 4))):
        cells = [np.kron(I2, np.diag(rng.integers(0, 2, size=m1 + m2))).astype(complex) for m1, m2 in shapes]
        _add_if_commuting(rows, lams, cells, 0.0)
    Us = [la.random_unitary(d, rng) for d in dims]
    cells = tuple(tuple(Us[j] @ c @ Us[j].conj().T for j, c in enumerate(row)) for row in rows)
    return FactorTable(cells, tuple(lams), tuple(dims))


def random_table(rng, n=None, r=None):
    """Arbitrary Hermitian cells drawn from a small pool; rows need not commute."""
    n = n or int(rng.integers(1, 4))
    r = r or int(rng.integers(2, 6))
    pool = [PAULI[c] for c in "IXYZ"] + [np.diag([1, 0]).astype(complex), np.diag([0, 1]).astype(complex)]
    pool.append(la.random_hermitian(2, rng))
    rows = [[pool[int(rng.integers(0, len(pool)))] for _ in range(n)] for _ in range(r)]
    return FactorTable(tuple(tuple(x) for x in rows), tuple(0.0 for _ in rows), (2,) * n)


def random_stabilizer_strings(rng, n=None, m=None):
    n = n or int(rng.integers(1, 7))
    m = m if m is not None else int(rng.integers(1, n + 3))
    strs = _commuting_paulis(rng, n, m)
    signs = [int(rng.choice([1, -1])) for _ in strs]
    targets = [int(rng.choice([1, -1])) for _ in strs]
    # occasionally append a dependent product to force sign bookkeeping
    if len(strs) >= 2 and rng.random() < 0.5:
        s, sign = _product(strs[0], strs[1])
        strs.append(s)
        signs.append(sign * signs[0] * signs[1] * int(rng.choice([1, 1, -1])))
        targets.append(targets[0] * targets[1])
    return n, strs, signs, targets


_MULT = {
    ("X", "Y"): ("Z", 1j), ("Y", "X"): ("Z", -1j), ("Y", "Z"): ("X", 1j),
    ("Z", "Y"): ("X", -1j), ("Z", "X"): ("Y", 1j), ("X", "Z"): ("Y", -1j),
}


def _product(s, t):
    phase = 1
    out = ""
    for a, b in zip(s, t):
        if a == "I":
            out += b
        elif b == "I":
            out += a
        elif a == b:
            out += "I"
        else:
            c, ph = _MULT[(a, b)]
            out += c
            phase *= ph
    return out, int(round(phase.real))

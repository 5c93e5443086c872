"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL ...`` line; the lines are
repeated in the pytest terminal summary.
"""
import collections
import copy
import itertools
import time
import warnings

import numpy as np
import pytest

import corpus
from commoneig import cli
from commoneig import factorized as fz
from commoneig import linalg as la
from commoneig import oracle
from commoneig import projectors2 as p2
from commoneig import reductions as rd
from commoneig import twolocal
from commoneig.instance import FactorRow, FactorTable, LocalTerm, classify_commutation, classify_dense
from commoneig.twolocal import POSITIVE, Decided, TwoLocalWitness


@pytest.fixture
def report(record_property):
    def _report(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"
        print(line)
        record_property("criterion", line)
        assert ok, line

    return _report


# shared corpora, built once per session -----------------------------------


@pytest.fixture(scope="module")
def two_local():
    xs = corpus.two_local_corpus(seed=0, count=200)
    return [(x, oracle.dimension(x)) for x in xs]


@pytest.fixture(scope="module")
def projector_tables():
    ts = corpus.qubit_projector_corpus(seed=1, count=220)
    return [(t, oracle.dimension(t.to_instance())) for t in ts]


@pytest.fixture(scope="module")
def mixed_tables():
    ts = corpus.mixed_corpus(seed=2, count=120)
    return [(t, oracle.dimension(t.to_instance())) for t in ts]


@pytest.fixture(scope="module")
def block_tables():
    rng = np.random.default_rng(3)
    ts = [corpus.block_column_table(rng) for _ in range(30)]
    return [(t, oracle.dimension(t.to_instance())) for t in ts]


# --------------------------------------------------------------------------


def test_criterion_1_cluster(report):
    t0 = time.perf_counter()
    x = rd.cluster_instance(4)
    res = twolocal.solve(x)
    dim, B = oracle.common_eigenspace(x)
    psi = twolocal.model_state(res.decomposition, res.assignment)
    overlap = abs(np.vdot(B[:, 0], psi)) if dim else 0.0
    ranks = rd.bond_cut_schmidt_ranks(rd.cz_layer(4) @ psi, 4)
    elapsed = time.perf_counter() - t0
    ok = res.answer == POSITIVE and dim == 1 and overlap >= 1 - 1e-8 and ranks == [1, 1, 1] and elapsed < 5
    report(1, ok, f"answer={res.answer} dim={dim} overlap={overlap:.12f} ranks={ranks} time={elapsed:.2f}s")


def test_criterion_2_two_local_dimensions(report, two_local):
    t0 = time.perf_counter()
    bad = []
    for i, (x, d) in enumerate(two_local):
        assert x.total_dim <= 2 ** 12
        res = twolocal.solve(x)
        if res.dimension != d or (res.answer == POSITIVE) != (d > 0):
            bad.append(i)
    elapsed = time.perf_counter() - t0
    ok = len(two_local) >= 200 and not bad and elapsed < 600
    report(2, ok, f"{len(two_local)} instances, {len(bad)} mismatches, {elapsed:.1f}s")


def test_criterion_3_inclusion_exclusion(report, projector_tables):
    bad = 0
    for t, d in projector_tables:
        assert t.n <= 10 and t.r <= 12
        bad += oracle.inclusion_exclusion_dim(t) != d
    ok = len(projector_tables) >= 200 and bad == 0
    report(3, ok, f"{len(projector_tables)} tables, {bad} mismatches")


def _is_scalar(M):
    return np.allclose(M, M[0, 0] * np.eye(M.shape[0]), atol=1e-13)


def _dense_reference(ra, rb):
    """Dense classification of two product rows.

    Columns where both cells are multiples of I only contribute scalars, so
    they are folded out before the dense products are formed.
    """
    keep = [j for j in range(len(ra)) if not (_is_scalar(ra[j]) and _is_scalar(rb[j]))]
    ca = np.prod([ra[j][0, 0] for j in range(len(ra)) if j not in keep])
    cb = np.prod([rb[j][0, 0] for j in range(len(rb)) if j not in keep])
    A = ca * la.tensor(*[ra[j] for j in keep]) if keep else np.array([[ca]])
    B = cb * la.tensor(*[rb[j] for j in keep]) if keep else np.array([[cb]])
    # the spectral norm of a tensor product is the product of the factor norms
    scale = float(np.prod([np.linalg.norm(c, 2) for c in ra]) * np.prod([np.linalg.norm(c, 2) for c in rb]))
    return classify_dense(A, B, scale=scale)


def test_criterion_4_parity_law(report, projector_tables, mixed_tables, block_tables):
    rng = np.random.default_rng(4)
    tables = [t for t, _ in projector_tables + mixed_tables + block_tables]
    tables += [corpus.random_table(rng) for _ in range(150)]
    seen = collections.Counter()
    bad = 0
    for t in tables:
        for a, b in itertools.combinations(range(t.r), 2):
            law = classify_commutation(FactorRow(t.cells[a]), FactorRow(t.cells[b]))
            seen[law] += 1
            bad += law != _dense_reference(t.cells[a], t.cells[b])
    counts = ", ".join(f"{k}={v}" for k, v in sorted(seen.items()))
    report(4, bad == 0, f"{len(tables)} tables, {sum(seen.values())} row pairs ({counts}), {bad} disagreements")


def _involution_family(rng):
    n = int(rng.integers(1, 4))
    strs = []
    for q in range(n):
        strs += ["I" * q + "Z" + "I" * (n - q - 1), "I" * q + "X" + "I" * (n - q - 1)]
    # extra commuting or anticommuting products keep the family from being trivial
    for _ in range(int(rng.integers(0, 3))):
        strs.append("".join(rng.choice(list("IXYZ")) for _ in range(n)))
    order = rng.permutation(len(strs))
    V = la.random_unitary(2 ** n, rng)
    mats = []
    for k in order:
        s = strs[k]
        M = la.tensor(*[corpus.PAULI[c] for c in s])
        mats.append(V @ M @ V.conj().T)
    return mats


def test_criterion_5_pauli_normal_form(report):
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(100):
        Gs = _involution_family(rng)
        U, strings, n = fz.pauli_normal_form(Gs)
        assert la.is_unitary(U)
        for G, s in zip(Gs, strings):
            worst = max(worst, float(np.max(np.abs(U @ s.matrix() @ U.conj().T - G))))
    report(5, worst < 1e-8, f"100 families, worst residual {worst:.2e}")


def _branch_final_dims(t):
    """Replay every branch log; returns (sum of final dims, step violations, branch -> snapshot dims)."""
    s = fz.simplify_table(t)
    if isinstance(s, Decided):
        return 0, 0, {}
    total = bad = 0
    per_branch = {}
    for choice, cf in fz.enumerate_branches(s):
        if isinstance(cf, Decided):
            continue
        _, snaps = fz.replay(t, cf.transform_log, snapshots=True)
        dims = [oracle.dimension(sn.to_instance()) if sn.r else sn.total_dim for sn in snaps]
        for e, before, after in zip(cf.transform_log, dims, dims[1:]):
            # restriction to a block may shrink the space; every other step keeps it
            if e["kind"] == "i":
                bad += after > before
            else:
                bad += after != before
        per_branch[choice] = dims
        total += dims[-1]
    return total, bad, per_branch


def test_criterion_6_canonical_form(report, mixed_tables):
    disagree = steps_bad = sums_bad = cert_bad = 0
    for t, d in mixed_tables:
        assert t.total_dim <= 2 ** 12
        res = fz.solve_factorized(t)
        disagree += (res.answer == POSITIVE) != (d > 0)
        total, bad, per_branch = _branch_final_dims(t)
        steps_bad += bad
        sums_bad += total != d
        if res.certificate is not None:
            dims = per_branch[tuple(res.certificate["branch"])]
            cert_bad += not all(v > 0 for v in dims)
    ok = len(mixed_tables) >= 100 and disagree == cert_bad == steps_bad == sums_bad == 0
    report(
        6,
        ok,
        f"{len(mixed_tables)} tables, {disagree} answer disagreements, {steps_bad} bad steps, "
        f"{sums_bad} branch-sum mismatches, {cert_bad} certificate branches losing positivity",
    )


def test_criterion_7_stabilizers(report):
    rng = np.random.default_rng(7)
    bad = 0
    for _ in range(100):
        n, strs, signs, targets = corpus.random_stabilizer_strings(rng)
        assert n <= 6
        sg = fz.StabilizerGroup.from_strings([fz.PauliString(s, g) for s, g in zip(strs, signs)], targets, n)
        bad += fz.stabilizer_dimension(sg) != oracle.dimension(sg.to_instance())
    report(7, bad == 0, f"100 generator sets, {bad} mismatches")


_DIAG = (np.eye(2, dtype=complex), p2.P0, p2.P1)


def _diagonal_cell(c):
    return any(np.allclose(c, M, atol=1e-10) for M in _DIAG)


def test_criterion_8_qubit_projectors(report, projector_tables):
    bad = []
    for i, (t, d) in enumerate(projector_tables):
        xp = p2.canonical_consistent_table(t)
        if not p2.is_commutative(xp) or not p2.check_consistency(t, xp):
            bad.append((i, "table"))
            continue
        if oracle.subset_rank_profile(t) != oracle.subset_rank_profile(xp):
            bad.append((i, "profile"))
        if not all(_diagonal_cell(c) for row in xp.cells for c in row):
            bad.append((i, "cells"))
        ans, w = p2.solve_projectors_qubits(t)
        if (ans == "positive") != (d > 0):
            bad.append((i, "answer"))
    report(8, not bad, f"{len(projector_tables)} tables, failures={bad[:5]}")


def test_criterion_9_reductions(report):
    out = []
    tri = rd.from_three_coloring(rd.Graph.from_edges([(0, 1), (1, 2), (0, 2)]))
    res = twolocal.solve(tri)
    out.append(res.answer == POSITIVE and oracle.dimension(tri) == 6 == res.dimension)
    k4 = rd.from_three_coloring(rd.Graph.from_edges(itertools.combinations(range(4), 2)))
    out.append(twolocal.solve(k4).answer != POSITIVE and oracle.dimension(k4) == 0)
    rng = np.random.default_rng(9)
    cnf_bad = 0
    for _ in range(50):
        f = rd.random_three_cnf(10, int(rng.integers(20, 60)), rng)
        cnf_bad += oracle.dimension(rd.from_three_cnf(f)) != rd.count_sat(f)
    out.append(cnf_bad == 0)
    ham_bad = ham_done = 0
    while ham_done < 30:
        nq = int(rng.integers(1, 4))
        strs = corpus._commuting_paulis(rng, nq, int(rng.integers(1, 3)))
        terms = []
        for s in strs:
            sup = tuple(j for j, c in enumerate(s) if c != "I") or (0,)
            coef = float(rng.uniform(0.5, 2.0)) * float(rng.choice([-1, 1]))
            terms.append(LocalTerm(sup, coef * la.tensor(*[corpus.PAULI[s[j]] for j in sup])))
        eps = float(rng.uniform(-3.0, 1.0))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", rd.GapViolation)
            red = rd.from_commuting_hamiltonian((2,) * nq, terms, eps, eps + 0.05)
        if not red.metadata["promise_ok"]:
            continue
        ham_done += 1
        ham_bad += (oracle.dimension(red.instance) > 0) != rd.ground_energy_test((2,) * nq, terms, eps)
    out.append(ham_bad == 0)
    report(
        9,
        all(out),
        f"triangle={out[0]} K4={out[1]} cnf mismatches={cnf_bad}/50 hamiltonian mismatches={ham_bad}/{ham_done}",
    )


def test_criterion_10_kochen_specker(report, projector_tables):
    t0 = time.perf_counter()
    val = p2.kochen_specker_check(p2.load_peres_rays())
    elapsed = time.perf_counter() - t0
    text = cli.demo_ks_failure()
    rep = p2.demo_generalization_failure()
    columns = failed = 0
    for t, _ in projector_tables:
        for j in range(t.n):
            columns += 1
            col = p2.recolor_column(t, j)
            if col is None or not all(_diagonal_cell(c) for c in col):
                failed += 1
    ok = val is p2.NoAssignment and elapsed < 60 and not rep.recolorable and "impossible" in text and failed == 0
    report(10, ok, f"Peres: no assignment in {elapsed:.2f}s; {columns - failed}/{columns} qubit columns recoloured")


# --------------------------------------------------------------------------
# witness soundness


def _twolocal_candidates(x, positives):
    yield TwoLocalWitness(tuple(np.eye(d, dtype=complex) for d in x.dims))
    for w in positives.get(x.dims, []):
        yield w
    s = twolocal.simplify(x)
    if isinstance(s, Decided):
        return
    d = twolocal.decompose(s)
    keys = sorted(d.blocks)
    choices = list(itertools.product(*(range(len(d.blocks[j])) for j in keys)))
    for combo in choices[:256]:
        yield twolocal.witness_from_assignment(d, dict(zip(keys, combo)))


def _soundness_twolocal(two_local):
    emitted = rejected = accepted_bad = 0
    positives = {}
    for x, d in two_local:
        res = twolocal.solve(x)
        if res.answer == POSITIVE:
            emitted += 1
            rejected += not twolocal.verify_witness(x, res.witness)
            positives.setdefault(x.dims, []).append(res.witness)
    tried = 0
    for x, d in two_local:
        if d:
            continue
        for w in _twolocal_candidates(x, positives):
            tried += 1
            accepted_bad += twolocal.verify_witness(x, w)
    return emitted, rejected, tried, accepted_bad


def _soundness_projectors(projector_tables):
    rng = np.random.default_rng(11)
    emitted = rejected = tried = accepted_bad = 0
    by_shape = {}
    for t, d in projector_tables:
        ans, w = p2.solve_projectors_qubits(t)
        if w is not None:
            emitted += 1
            rejected += not p2.verify_projector_witness(t, w)
            by_shape.setdefault((t.r, t.n), []).append(w)
    for t, d in projector_tables:
        if d:
            continue
        xp = p2.canonical_consistent_table(t)
        # every basis string against the canonical table
        for bits in itertools.product((0, 1), repeat=t.n):
            tried += 1
            accepted_bad += all(p2._row_kills(row, bits, la.DEFAULT_TOL) for row in xp.cells)
        # the full verifier on sampled strings and on witnesses built for other tables
        samples = [tuple(int(b) for b in rng.integers(0, 2, t.n)) for _ in range(8)]
        cands = [p2.ProjectorTableWitness(xp, b) for b in samples] + by_shape.get((t.r, t.n), [])
        for w in cands:
            tried += 1
            accepted_bad += p2.verify_projector_witness(t, w)
    return emitted, rejected, tried, accepted_bad


def _flip_variants(t, rng, k=4):
    """The same rows with one regular eigenvalue negated."""
    regular = [a for a in range(t.r) if abs(t.lambdas[a]) > 1e-12]
    for a in rng.permutation(regular)[:k]:
        lams = list(t.lambdas)
        lams[a] = -lams[a]
        yield FactorTable(t.cells, tuple(lams), t.dims)


def _soundness_factorized(mixed_tables, block_tables):
    rng = np.random.default_rng(12)
    emitted = rejected = tried = accepted_bad = 0
    certs = []
    for t, d in mixed_tables + block_tables:
        res = fz.solve_factorized(t)
        if res.certificate is not None:
            emitted += 1
            rejected += not fz.verify_certificate(t, res.certificate)
            certs.append((t, res.certificate))
    negatives = [t for t, d in mixed_tables + block_tables if d == 0]
    for t, cert in certs:
        for tf in _flip_variants(t, rng):
            if oracle.dimension(tf.to_instance()) == 0:
                negatives.append(tf)
                tried += 1
                accepted_bad += fz.verify_certificate(tf, cert)
    for t in negatives:
        for _, cert in certs:
            if tuple(cert["dims"]) == tuple(t.dims):
                tried += 1
                accepted_bad += fz.verify_certificate(t, copy.deepcopy(cert))
    return emitted, rejected, tried, accepted_bad


def test_criterion_11_witness_soundness(report, two_local, projector_tables, mixed_tables, block_tables):
    parts = {
        "twolocal": _soundness_twolocal(two_local),
        "projectors2": _soundness_projectors(projector_tables),
        "factorized": _soundness_factorized(mixed_tables, block_tables),
    }
    ok = all(rej == 0 and bad == 0 for _, rej, _, bad in parts.values())
    detail = "; ".join(
        f"{k}: {em} emitted/{rej} rejected, {tr} adversarial/{bad} accepted" for k, (em, rej, tr, bad) in parts.items()
    )
    report(11, ok, detail)

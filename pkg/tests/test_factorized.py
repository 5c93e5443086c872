import copy

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import corpus
from commoneig import factorized as fz
from commoneig import linalg as la
from commoneig import oracle
from commoneig.errors import (
    Inconclusive,
    NonCommutingGenerators,
    NotFullAlgebra,
    NotInvolution,
    ParseError,
    ShapeMismatch,
)
from commoneig.instance import FactorTable, table_from_rows
from commoneig.twolocal import NEGATIVE, POSITIVE, Decided

X, Y, Z = corpus.PAULI["X"], corpus.PAULI["Y"], corpus.PAULI["Z"]
I2 = corpus.I2
P0 = np.diag([1.0, 0.0]).astype(complex)
P1 = np.diag([0.0, 1.0]).astype(complex)


def _sg(strs, signs=None, targets=None):
    signs = signs or [1] * len(strs)
    targets = targets or [1] * len(strs)
    return fz.StabilizerGroup.from_strings([fz.PauliString(s, g) for s, g in zip(strs, signs)], targets, len(strs[0]))


# --------------------------------------------------------------------------
# Pauli normal form


def _check_pnf(Gs, U, strings):
    for G, s in zip(Gs, strings):
        assert np.max(np.abs(U @ s.matrix() @ U.conj().T - G)) < 1e-8


def test_pnf_plain():
    U, strings, n = fz.pauli_normal_form([Z, X])
    assert n == 1 and [s.letters for s in strings] == ["Z", "X"]
    assert la.is_unitary(U)
    _check_pnf([Z, X], U, strings)


def test_pnf_conjugated_single_qubit():
    rng = np.random.default_rng(0)
    for _ in range(10):
        V = la.random_unitary(2, rng)
        Gs = [V @ Z @ V.conj().T, V @ X @ V.conj().T]
        U, strings, n = fz.pauli_normal_form(Gs)
        assert [s.letters for s in strings] == ["Z", "X"]
        _check_pnf(Gs, U, strings)


def test_pnf_two_qubit_family():
    rng = np.random.default_rng(1)
    V = la.random_unitary(4, rng)
    fam = [np.kron(Z, I2), np.kron(X, I2), np.kron(I2, Z), np.kron(I2, X)]
    Gs = [V @ g @ V.conj().T for g in fam]
    U, strings, n = fz.pauli_normal_form(Gs)
    assert n == 2
    assert all(sum(c != "I" for c in s.letters) == 1 for s in strings)
    _check_pnf(Gs, U, strings)


def test_pnf_errors():
    with pytest.raises(NotInvolution):
        fz.pauli_normal_form([2 * Z, X])
    with pytest.raises(NotFullAlgebra):
        fz.pauli_normal_form([Z, (X + Z) / np.sqrt(2)])
    with pytest.raises(NotFullAlgebra):
        fz.pauli_normal_form([])


# --------------------------------------------------------------------------
# stabilizers


def test_stabilizer_examples():
    assert fz.stabilizer_dimension(_sg(["ZI", "IZ"])) == 1
    assert fz.stabilizer_dimension(_sg(["Z", "Z"], [1, -1])) == 0
    assert fz.stabilizer_dimension(_sg(["ZX", "XZ"])) == 1
    assert fz.stabilizer_dimension(_sg(["ZZ", "XX", "YY"], [1, 1, 1])) == 0
    assert fz.stabilizer_dimension(_sg(["ZZ", "XX", "YY"], [1, 1, -1])) == 1
    with pytest.raises(NonCommutingGenerators):
        fz.stabilizer_dimension(_sg(["ZI", "XI"]))


def test_stabilizer_against_oracle():
    rng = np.random.default_rng(2)
    for _ in range(40):
        n, strs, signs, targets = corpus.random_stabilizer_strings(rng)
        sg = _sg(strs, signs, targets)
        assert fz.stabilizer_dimension(sg) == oracle.dimension(sg.to_instance())


@st.composite
def _signed_paulis(draw):
    n = draw(st.integers(1, 4))
    cands = draw(st.lists(st.text("IXYZ", min_size=n, max_size=n), min_size=1, max_size=6))
    strs = []
    for s in cands:
        if all(corpus._pauli_commute(s, t) for t in strs):
            strs.append(s)
    signs = draw(st.lists(st.sampled_from([1, -1]), min_size=len(strs), max_size=len(strs)))
    targets = draw(st.lists(st.sampled_from([1, -1]), min_size=len(strs), max_size=len(strs)))
    return strs, signs, targets


@settings(max_examples=60, deadline=None)
@given(_signed_paulis())
def test_stabilizer_property(case):
    strs, signs, targets = case
    sg = _sg(strs, signs, targets)
    assert fz.stabilizer_dimension(sg) == oracle.dimension(sg.to_instance())


def test_stabilizer_roundtrip():
    sg = _sg(["XYZ", "ZZI"], [-1, 1], [1, -1])
    back = fz.StabilizerGroup.from_dict(sg.to_dict())
    assert [str(s) for s in back.strings()] == ["-XYZ", "+ZZI"]
    assert back.targets == (1, -1)
    with pytest.raises(ParseError):
        fz.StabilizerGroup.from_dict({"n_qubits": 1})


# --------------------------------------------------------------------------
# simplification


def test_simplify_rank_one_regular_row():
    e = np.array([1.0, 1.0]) / np.sqrt(2)
    R = np.outer(e, e).astype(complex)
    t = table_from_rows([(R, P0), (Z, I2)], [1.0, 0.0])
    s = fz.simplify_table(t)
    assert s.dims == (1, 1)


def test_simplify_orthogonal_regular_rows():
    t = table_from_rows([(P0, I2), (P1, Z)], [1.0, 1.0])
    out = fz.simplify_table(t)
    assert isinstance(out, Decided) and out.answer == NEGATIVE


def test_simplify_preserves_dimension_and_is_idempotent():
    rng = np.random.default_rng(3)
    for _ in range(40):
        t = corpus.mixed_qubit_table(rng)
        s = fz.simplify_table(t)
        d = oracle.dimension(t.to_instance())
        if isinstance(s, Decided):
            assert d == 0
            continue
        assert oracle.dimension(s.to_instance()) == d
        s2 = fz.simplify_table(s)
        assert s2.dims == s.dims and s2.r == s.r


# --------------------------------------------------------------------------
# canonical form


def test_canonical_projectors_only():
    t = table_from_rows([(P0, P1, I2), (P1, I2, P0)], [0.0, 0.0])
    cf = fz.canonicalize(fz.simplify_table(t))
    assert cf.n_qubits == 0
    assert cf.projector_block.r == 2 and cf.projector_block.dims == (2, 2, 2)


def test_canonical_bond_state():
    t = table_from_rows([(Z, X), (X, Z)], [1.0, 1.0])
    cf = fz.canonicalize(fz.simplify_table(t))
    assert cf.qubit_block.n_qubits == 2 and cf.qubit_block.m == 2
    assert cf.projector_block.r == 0
    assert fz.stabilizer_dimension(cf.qubit_block) == 1


def test_canonical_recovers_conjugated_strings():
    rng = np.random.default_rng(4)
    checked = 0
    for _ in range(60):
        n = int(rng.integers(1, 4))
        strs = corpus._commuting_paulis(rng, n, int(rng.integers(2, n + 3)))
        # keep families whose letters generate L(C^2) in every column
        if not all(len({s[j] for s in strs} - {"I"}) >= 2 for j in range(n)):
            continue
        signs = [float(rng.choice([1.0, -1.0])) for _ in strs]
        Us = [la.random_unitary(2, rng) for _ in range(n)]
        rows = [tuple(Us[j] @ corpus.PAULI[c] @ Us[j].conj().T for j, c in enumerate(s)) for s in strs]
        t = table_from_rows(rows, signs)
        d = oracle.dimension(t.to_instance())
        cf = fz.canonicalize(fz.simplify_table(t))
        if isinstance(cf, Decided):
            assert d == 0
            continue
        assert cf.n_qubits == n
        got = [g.letters for g in cf.qubit_block.strings()]
        assert [[c == "I" for c in g] for g in got] == [[c == "I" for c in s] for s in strs]
        assert fz.stabilizer_dimension(cf.qubit_block) == d
        checked += 1
    assert checked >= 10


def test_branches_and_cap():
    rng = np.random.default_rng(5)
    for _ in range(20):
        t = corpus.block_column_table(rng)
        s = fz.simplify_table(t)
        if isinstance(s, Decided):
            continue
        an = fz.analyse_columns(s)
        if fz.branch_count(an) > 1:
            with pytest.raises(Inconclusive):
                fz.solve_factorized(t, max_branches=1)
            return
    pytest.fail("no multi-branch table generated")


# --------------------------------------------------------------------------
# solving and certificates


def test_solve_all_regular_uses_stabilizer_only():
    t = table_from_rows([(Z, X), (X, Z)], [1.0, 1.0])
    res = fz.solve_factorized(t)
    assert res.answer == POSITIVE and res.dimension == 1
    assert res.certificate["projector_witness"] == {"kind": "empty"}
    assert fz.verify_certificate(t, res.certificate)


def test_solve_all_singular_diagonal():
    t = table_from_rows([(P0, P0, I2), (P1, I2, P0), (I2, P1, P1)], [0.0, 0.0, 0.0])
    res = fz.solve_factorized(t)
    assert res.dimension == oracle.dimension(t.to_instance())
    assert res.certificate["projector_witness"]["kind"] == "projectors2"


def test_contradictory_signs():
    t = table_from_rows([(Z,), (Z,)], [1.0, -1.0])
    assert fz.solve_factorized(t).answer == NEGATIVE


def test_mixed_sample_against_oracle():
    rng = np.random.default_rng(6)
    for _ in range(40):
        t = corpus.mixed_qubit_table(rng)
        d = oracle.dimension(t.to_instance())
        res = fz.solve_factorized(t)
        assert (res.answer == POSITIVE) == (d > 0)
        assert res.dimension == d
        if res.certificate is not None:
            assert fz.verify_certificate(t, res.certificate)


def test_block_tables_against_oracle():
    rng = np.random.default_rng(7)
    for _ in range(15):
        t = corpus.block_column_table(rng)
        d = oracle.dimension(t.to_instance())
        res = fz.solve_factorized(t)
        assert res.dimension == d
        if res.certificate is not None:
            assert fz.verify_certificate(t, res.certificate)


def _positive_with_log(seed=8):
    rng = np.random.default_rng(seed)
    while True:
        t = corpus.mixed_qubit_table(rng)
        res = fz.solve_factorized(t)
        if res.answer == POSITIVE and any(e["kind"] == "iv" for e in res.certificate["log"]):
            return t, res.certificate


def test_replay_snapshots_keep_positivity():
    t, cert = _positive_with_log()
    _, snaps = fz.replay(t, fz.log_from_json(cert["log"]), snapshots=True)
    assert len(snaps) == len(cert["log"]) + 1
    for s in snaps:
        assert oracle.dimension(s.to_instance()) > 0


def test_tampered_certificates_rejected():
    t, cert = _positive_with_log()
    bad = copy.deepcopy(cert)
    i = next(k for k, e in enumerate(bad["log"]) if e["kind"] == "iv")
    M = fz.log_from_json([bad["log"][i]])[0]["unitary"]
    bad["log"][i] = fz.log_to_json([{**fz.log_from_json([bad["log"][i]])[0], "unitary": 1.5 * M}])[0]
    assert not fz.verify_certificate(t, bad)
    bad = copy.deepcopy(cert)
    bad["qubits"] = cert["qubits"] + 5
    assert not fz.verify_certificate(t, bad)


def test_certificate_shape_and_parse_errors():
    t, cert = _positive_with_log()
    other = table_from_rows([(Z,)], [1.0])
    with pytest.raises(ShapeMismatch):
        fz.verify_certificate(other, cert)
    with pytest.raises(ParseError):
        fz.verify_certificate(t, {"kind": "factorized", "dims": list(t.dims), "log": "nope", "qubits": 0})
    with pytest.raises(ParseError):
        fz.verify_certificate(t, {"kind": "other"})


def test_certificate_rejected_on_flipped_instance():
    t = table_from_rows([(Z, X), (X, Z)], [1.0, 1.0])
    cert = fz.solve_factorized(t).certificate
    flipped = table_from_rows([(Z, X), (X, Z), (Y, Y)], [1.0, 1.0, -1.0])
    assert oracle.dimension(flipped.to_instance()) == 0
    assert fz.solve_factorized(flipped).answer == NEGATIVE
    assert not fz.verify_certificate(
        flipped, {**cert, "dims": list(flipped.dims)}
    )

"""Command-line interface: ``commoneig {validate,solve,verify,reduce,demo}``.

Results go to stdout as JSON (demos print plain text); diagnostics go to
stderr.  Exit codes:

====  ==========================================================
0     success (valid instance, solved, witness accepted)
1     invalid instance, rejected witness, or inapplicable mode
2     parse error, missing file, shape mismatch, unknown demo
3     a solver hit its search cap (Inconclusive)
4     ``--cross-check`` found a disagreement with the oracle
====  ==========================================================
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

import numpy as np

from . import factorized, oracle, reductions, twolocal
from . import instance as ins
from . import projectors2 as p2
from .errors import (
    CommonEigError,
    Inconclusive,
    MalformedClause,
    NotTwoLocal,
    ParseError,
    ShapeMismatch,
)
from .instance import CesInstance, LocalTerm
from .linalg import ToleranceContext
from .twolocal import NEGATIVE, POSITIVE, decode_matrix_rect, encode_matrix_rect

EXIT_OK = 0
EXIT_REJECT = 1
EXIT_MALFORMED = 2
EXIT_INCONCLUSIVE = 3
EXIT_DISAGREE = 4

MODES = ("auto", "2local", "factorized", "projectors2", "oracle")
DEMOS = ("cluster", "peres", "ks-failure")


class _Usage(Exception):
    """Raised instead of argparse's own exit so that bad usage maps to code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _Usage(message)


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


def _emit(doc: dict) -> None:
    print(json.dumps(doc, indent=2, sort_keys=True))


def _load(path: str, tol: ToleranceContext) -> CesInstance:
    # lambda-outside-spectrum is reported by validate, not warned at load time
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return ins.load(path, tol)


# --------------------------------------------------------------------------
# validate


def cmd_validate(path: str, tol: ToleranceContext) -> int:
    try:
        x = _load(path, tol)
    except (OSError, ParseError) as exc:
        _err(f"error: {exc}")
        return EXIT_MALFORMED
    rep = ins.validate(x, tol)
    doc = rep.to_dict()
    doc["path"] = path
    doc["regular"] = [abs(v) > tol.eps_eq for v in x.lambdas]
    doc["noncommuting_pairs"] = [list(p) for p in rep.noncommuting_pairs()]
    _emit(doc)
    for e in rep.errors:
        _err(f"invalid: {e}")
    for w in rep.warnings:
        _err(f"warning: {w}")
    return EXIT_OK if rep.valid else EXIT_REJECT


# --------------------------------------------------------------------------
# solve


def _qubit_projector_table(x: CesInstance, tol: ToleranceContext) -> bool:
    if not x.is_factorized() or any(d != 2 for d in x.dims):
        return False
    if any(abs(v) > tol.eps_eq for v in x.lambdas):
        return False
    return all(
        np.allclose(f @ f, f, atol=tol.eps_eq) and np.allclose(f, f.conj().T, atol=tol.eps_eq)
        for c in x.checks
        for f in c.factors
    )


def choose_mode(x: CesInstance, tol: ToleranceContext) -> str:
    """Shape-based dispatch used by ``--mode auto``."""
    if ins.locality(x, tol) <= 2:
        return "2local"
    if _qubit_projector_table(x, tol):
        return "projectors2"
    if x.is_factorized():
        return "factorized"
    return "oracle"


def run_solver(x: CesInstance, mode: str, tol: ToleranceContext) -> tuple[str, int | None, dict | None]:
    """Return (answer, dimension or None, witness document or None)."""
    if mode == "2local":
        res = twolocal.solve(x, tol)
        w = res.witness.to_dict() if res.witness is not None else None
        return res.answer, res.dimension, w
    if mode == "projectors2":
        t = x.to_table()
        ans, w = p2.solve_projectors_qubits(t, tol)
        dim = oracle.dimension(x, tol) if x.total_dim <= ins.MAX_TOTAL_DIM else None
        return ans, dim if ans == POSITIVE else 0, (w.to_dict() if w is not None else None)
    if mode == "factorized":
        res = factorized.solve_factorized(x.to_table(), tol)
        return res.answer, res.dimension, res.certificate
    dim, B = oracle.common_eigenspace(x, tol)
    if dim == 0:
        return NEGATIVE, 0, None
    return POSITIVE, dim, {"kind": "state", "vector": encode_matrix_rect(B[:, :1])}


def cmd_solve(path: str, mode: str, witness_out: str | None, cross_check: bool, tol: ToleranceContext) -> int:
    try:
        x = _load(path, tol)
    except (OSError, ParseError) as exc:
        _err(f"error: {exc}")
        return EXIT_MALFORMED
    rep = ins.validate(x, tol)
    if not rep.structural_ok:
        for e in rep.errors:
            _err(f"invalid: {e}")
        return EXIT_REJECT
    used = choose_mode(x, tol) if mode == "auto" else mode
    try:
        answer, dim, wdoc = run_solver(x, used, tol)
    except Inconclusive as exc:
        _err(f"inconclusive: {exc}")
        _emit({"path": path, "mode": used, "answer": "inconclusive", "reason": str(exc)})
        return EXIT_INCONCLUSIVE
    except (NotTwoLocal, ValueError, CommonEigError) as exc:
        _err(f"mode {used!r} does not apply: {exc}")
        return EXIT_REJECT
    out = {"path": path, "mode": used, "answer": answer, "dimension": dim, "witness": None}
    if wdoc is not None and witness_out:
        doc = dict(wdoc)
        doc["version"] = ins.SCHEMA_VERSION
        with open(witness_out, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
        out["witness"] = witness_out
    code = EXIT_OK
    if cross_check:
        odim = oracle.dimension(x, tol)
        agree = (answer == POSITIVE) == (odim > 0) and (dim is None or dim == odim)
        out["cross_check"] = {"oracle_dimension": odim, "agree": agree}
        if not agree:
            _err(f"CROSS-CHECK FAILED: {used} says {answer} (dim {dim}), oracle dim {odim}")
            code = EXIT_DISAGREE
    _emit(out)
    return code


# --------------------------------------------------------------------------
# verify


def verify_document(x: CesInstance, doc, tol: ToleranceContext) -> bool:
    """Dispatch a witness document to its verifier.

    Raises ParseError for malformed documents and ShapeMismatch when the
    witness was made for a differently shaped instance.
    """
    if not isinstance(doc, dict):
        raise ParseError("witness must be a JSON object")
    kind = doc.get("kind")
    if kind == "twolocal":
        w = twolocal.TwoLocalWitness.from_dict(doc)
        try:
            return twolocal.verify_witness(x, w, tol)
        except NotTwoLocal:
            return False
    if kind == "projectors2":
        if not x.is_factorized():
            raise ShapeMismatch("projector witness needs a factorized instance")
        t = x.to_table()
        w = p2.ProjectorTableWitness.from_dict(doc, t.dims if len(doc.get("bits", [])) == t.n else None)
        return p2.verify_projector_witness(t, w, tol)
    if kind == "factorized":
        if not x.is_factorized():
            raise ShapeMismatch("certificate needs a factorized instance")
        return factorized.verify_certificate(x.to_table(), doc, tol)
    if kind == "state":
        psi = decode_matrix_rect(doc.get("vector"), "$.vector").ravel()
        if psi.size != x.total_dim:
            raise ShapeMismatch(f"state has {psi.size} entries, instance dimension is {x.total_dim}")
        if np.linalg.norm(psi) == 0:
            return False
        return oracle.membership_residual(x, psi) <= 1e-7
    raise ParseError(f"unknown witness kind {kind!r}", "$.kind")


def cmd_verify(inst_path: str, wit_path: str, tol: ToleranceContext) -> int:
    try:
        x = _load(inst_path, tol)
        with open(wit_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        ok = verify_document(x, doc, tol)
    except (OSError, json.JSONDecodeError, ParseError, ShapeMismatch) as exc:
        _err(f"malformed: {exc}")
        return EXIT_MALFORMED
    _emit({"instance": inst_path, "witness": wit_path, "accepted": bool(ok)})
    return EXIT_OK if ok else EXIT_REJECT


# --------------------------------------------------------------------------
# reduce


def _read_text(path: str) -> str:
    with open(path, "r", encoding="utf-8") as fh:
        return fh.read()


def cmd_reduce(kind: str, src: str, out: str, eps_l: float | None, eps_u: float | None, tol: ToleranceContext) -> int:
    try:
        if kind == "coloring":
            G = reductions.read_edge_list(_read_text(src))
            x = reductions.from_three_coloring(G)
            meta = {"vertices": G.n, "edges": len(G.edges)}
            if G.n <= 12:
                meta["colorings"] = reductions.count_colorings(G)
        elif kind == "cnf":
            f = reductions.read_dimacs(_read_text(src))
            x = reductions.from_three_cnf(f)
            meta = {"variables": f.n_vars, "clauses": len(f.clauses)}
            if f.n_vars <= 20:
                meta["satisfying_assignments"] = reductions.count_sat(f)
        elif kind == "hamiltonian":
            h = _load(src, tol)
            if not all(isinstance(c, LocalTerm) for c in h.checks):
                raise ParseError("Hamiltonian terms must be local checks", "$.checks")
            lo = eps_l if eps_l is not None else h.meta.get("eps_l")
            hi = eps_u if eps_u is not None else h.meta.get("eps_u")
            if not isinstance(lo, (int, float)) or not isinstance(hi, (int, float)):
                raise ParseError("thresholds missing: pass --eps-l/--eps-u or set meta.eps_l/eps_u")
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                red = reductions.from_commuting_hamiltonian(h.dims, list(h.checks), float(lo), float(hi), tol)
            for w in caught:
                _err(f"warning: {w.message}")
            x = red.instance
            meta = dict(red.metadata)
        else:  # cluster: the input is the particle count
            try:
                n = int(src)
            except ValueError as exc:
                raise ParseError(f"cluster size must be an integer, got {src!r}") from exc
            x = reductions.cluster_instance(n)
            meta = {"particles": n, "qubits": 2 * n}
    except (OSError, ParseError, MalformedClause, ValueError, CommonEigError) as exc:
        _err(f"malformed input: {exc}")
        return EXIT_MALFORMED
    ins.save(x, out)
    meta.update({"kind": kind, "out": out, "dims": list(x.dims), "checks": x.r})
    _emit(meta)
    return EXIT_OK


# --------------------------------------------------------------------------
# demos


def demo_cluster(tol: ToleranceContext, n: int = 4) -> str:
    x = reductions.cluster_instance(n)
    dim, B = oracle.common_eigenspace(x, tol)
    res = twolocal.solve(x, tol)
    psi = twolocal.model_state(res.decomposition, res.assignment, tol)
    overlap = abs(np.vdot(B[:, 0], psi)) if dim else 0.0
    V = reductions.cz_layer(n)
    ranks = reductions.bond_cut_schmidt_ranks(V @ psi, n)
    lines = [
        f"cluster state on {2 * n} qubits grouped into {n} particles of dimension 4",
        f"checks: {x.r} (Z X Z on every qubit of the ring), target eigenvalue +1",
        f"oracle: dim L = {dim}",
        f"2-local solver: {res.answer}, structural dimension {res.dimension}",
    ]
    for j in sorted(res.decomposition.blocks):
        blk = res.decomposition.blocks[j][res.assignment[j]]
        subs = " x ".join(str(e) for e in blk.sub_dims)
        lines.append(f"  particle {j}: C^4 -> own dim {blk.d_jj}, bond factors {subs}")
    lines += [
        f"model state overlap with the oracle vector: {overlap:.12f}",
        f"after the intra-particle CZ layer, bond-cut Schmidt ranks: {ranks}",
        "every rank is 1, so the state is a product of one entangled pair per bond",
    ]
    return "\n".join(lines)


def demo_peres() -> str:
    rays = p2.load_peres_rays()
    pairs, triads = p2.orthogonality_structure(rays)
    val = p2.kochen_specker_check(rays)
    lines = [
        f"rays: {len(rays)} in C^3 (exact arithmetic over Z[sqrt 2])",
        f"orthogonal pairs: {len(pairs)}",
        f"complete orthogonal triads: {len(triads)}",
        f"0/1 valuation with one 1 per triad and no orthogonal 1s: {val!r}",
    ]
    drops = sum(1 for i in range(len(rays)) if p2.kochen_specker_check(rays[:i] + rays[i + 1:]) is not p2.NoAssignment)
    lines.append(f"removing any single ray restores an assignment in {drops}/{len(rays)} cases")
    return "\n".join(lines)


def demo_ks_failure() -> str:
    rep = p2.demo_generalization_failure()
    lines = [rep.text, "", "control: the same recolouring on qubit columns"]
    rng = np.random.default_rng(0)
    P0 = np.diag([1.0, 0.0]).astype(complex)
    P1 = np.diag([0.0, 1.0]).astype(complex)
    ok = 0
    trials = 20
    for _ in range(trials):
        U = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))[0]
        W = np.linalg.qr(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)))[0]
        col = [U @ P0 @ U.conj().T, U @ P1 @ U.conj().T, W @ P0 @ W.conj().T, np.eye(2, dtype=complex)]
        t = ins.FactorTable(tuple((c,) for c in col), (0.0,) * len(col), (2,))
        if p2.recolor_column(t, 0) is not None:
            ok += 1
    lines.append(f"random qubit columns recoloured diagonally: {ok}/{trials}")
    return "\n".join(lines)


def cmd_demo(name: str, tol: ToleranceContext) -> int:
    if name == "cluster":
        print(demo_cluster(tol))
    elif name == "peres":
        print(demo_peres())
    elif name == "ks-failure":
        print(demo_ks_failure())
    else:
        _err(f"unknown demo {name!r}; choose from {', '.join(DEMOS)}")
        return EXIT_MALFORMED
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="commoneig", description="Decide and certify common eigenspace instances.")
    p.add_argument("--seed", type=int, default=0, help="seed for randomized linear algebra (default 0)")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    v = sub.add_parser("validate", help="check Hermiticity, commutation and spectra")
    v.add_argument("path")

    s = sub.add_parser("solve", help="decide an instance")
    s.add_argument("path")
    s.add_argument("--mode", choices=MODES, default="auto")
    s.add_argument("--witness", metavar="OUT", help="write the witness JSON here")
    s.add_argument("--cross-check", action="store_true", help="compare against the dense oracle")

    w = sub.add_parser("verify", help="check a witness against an instance")
    w.add_argument("instance")
    w.add_argument("witness")

    r = sub.add_parser("reduce", help="build an instance from a source problem")
    r.add_argument("kind", choices=("coloring", "cnf", "hamiltonian", "cluster"))
    r.add_argument("input", help="edge list, DIMACS file, Hamiltonian JSON, or cluster particle count")
    r.add_argument("out")
    r.add_argument("--eps-l", type=float, default=None)
    r.add_argument("--eps-u", type=float, default=None)

    d = sub.add_parser("demo", help="print a worked example")
    d.add_argument("name")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except _Usage as exc:
        _err(f"usage error: {exc}")
        return EXIT_MALFORMED
    tol = ToleranceContext(seed=args.seed)
    if args.command == "validate":
        return cmd_validate(args.path, tol)
    if args.command == "solve":
        return cmd_solve(args.path, args.mode, args.witness, args.cross_check, tol)
    if args.command == "verify":
        return cmd_verify(args.instance, args.witness, tol)
    if args.command == "reduce":
        return cmd_reduce(args.kind, args.input, args.out, args.eps_l, args.eps_u, tol)
    return cmd_demo(args.name, tol)


if __name__ == "__main__":
    sys.exit(main())

"""Instance model: check operators, factor tables, validation and JSON I/O.

Particles are indexed from 0.  A check operator is either a
:class:`LocalTerm` (a matrix on a few particles, identity elsewhere) or a
:class:`FactorRow` (a full tensor product of single-site Hermitian factors).
"""

from __future__ import annotations

import itertools
import json
import warnings
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence, Union

import numpy as np

from . import linalg as la
from .errors import NotTwoLocal, ParseError, SupportMismatch
from .linalg import DEFAULT_TOL, ToleranceContext

SCHEMA_VERSION = 1
MAX_TOTAL_DIM = 2 ** 14

REGULAR = "regular"
SINGULAR = "singular"
NONCOMMUTING = "noncommuting"


@dataclass(frozen=True, eq=False)
class LocalTerm:
    """A matrix acting on the particles in ``support`` (in that factor order)."""

    support: tuple[int, ...]
    matrix: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "support", tuple(int(p) for p in self.support))
        object.__setattr__(self, "matrix", la.as_matrix(self.matrix, square=True))


@dataclass(frozen=True, eq=False)
class FactorRow:
    """A factorized operator H_0 ⊗ H_1 ⊗ ... ⊗ H_{n-1}."""

    factors: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "factors", tuple(la.as_matrix(f, square=True) for f in self.factors)
        )


CheckOperator = Union[LocalTerm, FactorRow]


def _check_shape(check: CheckOperator, dims: Sequence[int]) -> None:
    if isinstance(check, LocalTerm):
        la._check_support(check.support, dims)
        dS = int(np.prod([dims[p] for p in check.support], dtype=np.int64))
        if check.matrix.shape != (dS, dS):
            raise SupportMismatch(
                f"matrix shape {check.matrix.shape} does not match support {check.support}"
            )
    else:
        if len(check.factors) != len(dims):
            raise SupportMismatch(f"factor row has {len(check.factors)} factors, expected {len(dims)}")
        for j, f in enumerate(check.factors):
            if f.shape != (dims[j], dims[j]):
                raise SupportMismatch(f"factor {j} has shape {f.shape}, expected {dims[j]}")


@dataclass(frozen=True, eq=False)
class CesInstance:
    """Checks H_a with target eigenvalues lambda_a on a multipartite space."""

    dims: tuple[int, ...]
    checks: tuple[CheckOperator, ...]
    lambdas: tuple[float, ...]
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "checks", tuple(self.checks))
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        if any(d < 1 for d in self.dims):
            raise ValueError("particle dimensions must be positive")
        if len(self.checks) != len(self.lambdas):
            raise ValueError("need exactly one lambda per check")
        for c in self.checks:
            _check_shape(c, self.dims)

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def r(self) -> int:
        return len(self.checks)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def is_factorized(self) -> bool:
        return all(isinstance(c, FactorRow) for c in self.checks)

    def dense(self, a: int) -> np.ndarray:
        return dense_check(self.checks[a], self.dims)

    def apply(self, a: int, B: np.ndarray) -> np.ndarray:
        return apply_check(self.checks[a], self.dims, B)

    def to_table(self) -> "FactorTable":
        if not self.is_factorized():
            raise ValueError("instance has non-factorized checks")
        return FactorTable(
            tuple(tuple(c.factors) for c in self.checks), self.lambdas, self.dims
        )


@dataclass(frozen=True, eq=False)
class FactorTable:
    """An r×n grid of single-site Hermitian cells with target eigenvalues."""

    cells: tuple[tuple[np.ndarray, ...], ...]
    lambdas: tuple[float, ...]
    dims: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        cells = tuple(tuple(la.as_matrix(c, square=True) for c in row) for row in self.cells)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        dims = tuple(int(d) for d in self.dims)
        if not dims and cells:
            dims = tuple(c.shape[0] for c in cells[0])
        object.__setattr__(self, "dims", dims)
        if len(cells) != len(self.lambdas):
            raise ValueError("need exactly one lambda per row")
        for row in cells:
            if len(row) != len(dims):
                raise ValueError("ragged factor table")
            for j, c in enumerate(row):
                if c.shape != (dims[j], dims[j]):
                    raise ValueError(f"cell in column {j} has shape {c.shape}")

    @property
    def r(self) -> int:
        return len(self.cells)

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def is_regular(self, a: int, tol: ToleranceContext = DEFAULT_TOL) -> bool:
        return abs(self.lambdas[a]) > tol.eps_eq

    def column(self, j: int) -> list[np.ndarray]:
        return [row[j] for row in self.cells]

    def to_instance(self, meta: dict | None = None) -> CesInstance:
        return CesInstance(
            self.dims, tuple(FactorRow(row) for row in self.cells), self.lambdas, meta or {}
        )


@dataclass(frozen=True)
class InteractionGraph:
    n: int
    edges: tuple[tuple[int, int], ...]

    def neighbours(self, j: int) -> list[int]:
        out = [k for (a, k) in self.edges if a == j] + [a for (a, k) in self.edges if k == j]
        return sorted(out)

    def degree(self, j: int) -> int:
        return len(self.neighbours(j))


# --------------------------------------------------------------------------
# dense helpers


def dense_check(check: CheckOperator, dims: Sequence[int]) -> np.ndarray:
    if isinstance(check, LocalTerm):
        return la.embed_local(check.matrix, check.support, dims)
    return la.tensor(*check.factors)


def apply_check(check: CheckOperator, dims: Sequence[int], B: np.ndarray) -> np.ndarray:
    if isinstance(check, LocalTerm):
        return la.apply_local(check.matrix, check.support, dims, B)
    return la.apply_factors(check.factors, B)


def check_norm(check: CheckOperator) -> float:
    if isinstance(check, LocalTerm):
        return float(np.linalg.norm(check.matrix, 2))
    return float(np.prod([np.linalg.norm(f, 2) for f in check.factors]))


def check_spectrum(check: CheckOperator, tol: ToleranceContext = DEFAULT_TOL) -> np.ndarray:
    """Sorted eigenvalues (with multiplicity) of a check operator on its support."""
    if isinstance(check, LocalTerm):
        return np.linalg.eigvalsh((check.matrix + la.dagger(check.matrix)) / 2)
    vals = np.ones(1)
    for f in check.factors:
        vals = np.multiply.outer(vals, np.linalg.eigvalsh((f + la.dagger(f)) / 2)).ravel()
    return np.sort(vals)


def match_eigenvalue(spectrum: np.ndarray, lam: float, scale: float) -> float | None:
    """Nearest eigenvalue within 1e-7*scale of ``lam``; ties go to the smaller one."""
    if len(spectrum) == 0:
        return None
    dist = np.abs(np.asarray(spectrum) - lam)
    best = float(np.min(dist))
    if best > 1e-7 * max(scale, 1.0):
        return None
    candidates = np.asarray(spectrum)[dist <= best + 1e-15]
    return float(np.min(candidates))


def _is_scalar_identity(M: np.ndarray, tol: ToleranceContext) -> bool:
    d = M.shape[0]
    c = np.trace(M) / d
    return bool(np.max(np.abs(M - c * np.eye(d)), initial=0.0) <= tol.eps_eq * max(1.0, abs(c)))


def effective_support(
    check: CheckOperator, dims: Sequence[int], tol: ToleranceContext = DEFAULT_TOL
) -> tuple[int, ...]:
    """Particles on which ``check`` acts non-trivially (sorted)."""
    if isinstance(check, FactorRow):
        if any(np.max(np.abs(f), initial=0.0) <= tol.eps_eq for f in check.factors):
            return ()
        return tuple(j for j, f in enumerate(check.factors) if not _is_scalar_identity(f, tol))
    h = check.matrix
    if np.max(np.abs(h), initial=0.0) <= tol.eps_eq:
        return ()
    out = []
    for p in check.support:
        if len(check.support) == 1:
            if not _is_scalar_identity(h, tol):
                out.append(p)
            continue
        hp, dl, dr = la.bipartite_split(h, check.support, dims, [p])
        A, _ = la.operator_schmidt(hp, dl, dr, tol)
        if len(A) > 1 or (len(A) == 1 and not _is_scalar_identity(A[0], tol)):
            out.append(p)
    return tuple(sorted(out))


def restrict_to_support(
    check: CheckOperator, dims: Sequence[int], support: Sequence[int]
) -> LocalTerm:
    """Rewrite ``check`` as a LocalTerm on ``support`` (assumed to contain its action)."""
    support = tuple(sorted(support))
    if isinstance(check, FactorRow):
        scale = 1.0 + 0j
        for j, f in enumerate(check.factors):
            if j not in support:
                scale *= np.trace(f) / dims[j]
        mats = [check.factors[j] for j in support]
        return LocalTerm(support, scale * la.tensor(*mats) if mats else np.array([[scale]]))
    full = list(check.support)
    missing = [p for p in support if p not in full]
    h = check.matrix
    if missing:
        h = np.kron(h, np.eye(int(np.prod([dims[p] for p in missing])), dtype=complex))
        full = full + missing
    keep = [p for p in full if p in support]
    drop = [p for p in full if p not in support]
    hp, dl, dr = la.bipartite_split(h, full, dims, keep)
    T = hp.reshape(dl, dr, dl, dr)
    hk = np.einsum("ajbj->ab", T) / dr
    # reorder kept sites into sorted order
    hk, _, _ = la.bipartite_split(hk, keep, dims, list(support))
    del drop
    return LocalTerm(support, hk)


def interaction_graph(x: CesInstance, tol: ToleranceContext = DEFAULT_TOL) -> InteractionGraph:
    edges = set()
    for c in x.checks:
        s = effective_support(c, x.dims, tol)
        if len(s) > 2:
            raise NotTwoLocal(f"check acts on {len(s)} particles {s}")
        if len(s) == 2:
            edges.add((s[0], s[1]))
    return InteractionGraph(x.n, tuple(sorted(edges)))


def locality(x: CesInstance, tol: ToleranceContext = DEFAULT_TOL) -> int:
    return max((len(effective_support(c, x.dims, tol)) for c in x.checks), default=0)


# --------------------------------------------------------------------------
# commutation classification


def _rel(a: float, scale: float, tol: ToleranceContext) -> bool:
    return a <= tol.eps_eq * max(scale, 1.0)


def classify_dense(
    A: np.ndarray, B: np.ndarray, tol: ToleranceContext = DEFAULT_TOL, scale: float | None = None
) -> str:
    """Reference classification from full matrices.

    ``scale`` defaults to ||A||·||B|| (spectral norms); pass it when known.
    """
    if scale is None:
        scale = float(np.linalg.norm(A, 2) * np.linalg.norm(B, 2))
    AB = A @ B
    if _rel(float(np.max(np.abs(AB), initial=0.0)), scale, tol):
        return SINGULAR
    if _rel(float(np.max(np.abs(AB - B @ A), initial=0.0)), scale, tol):
        return REGULAR
    return NONCOMMUTING


def classify_commutation(
    a: CheckOperator,
    b: CheckOperator,
    dims: Sequence[int] | None = None,
    tol: ToleranceContext = DEFAULT_TOL,
) -> str:
    """Regular, singular or non-commuting, following the per-site parity law.

    For two FactorRows: singular if some site product vanishes; regular if
    every site commutes or anticommutes and the anticommuting count is even;
    otherwise non-commuting.  LocalTerms fall back to a dense test on the
    union of the supports.
    """
    if isinstance(a, FactorRow) and isinstance(b, FactorRow):
        if len(a.factors) != len(b.factors):
            raise SupportMismatch("rows of different length")
        anti = 0
        mixed = False
        for A, B in zip(a.factors, b.factors):
            scale = float(np.linalg.norm(A, 2) * np.linalg.norm(B, 2))
            AB = A @ B
            if _rel(float(np.max(np.abs(AB), initial=0.0)), scale, tol):
                return SINGULAR
            BA = B @ A
            if _rel(float(np.max(np.abs(AB - BA), initial=0.0)), scale, tol):
                continue
            if _rel(float(np.max(np.abs(AB + BA), initial=0.0)), scale, tol):
                anti += 1
                continue
            mixed = True
        if mixed or anti % 2:
            return NONCOMMUTING
        return REGULAR
    if dims is None:
        raise ValueError("dims are required for local terms")
    union = sorted(set(_support_of(a, dims)) | set(_support_of(b, dims)))
    A = restrict_to_support(a, dims, union).matrix
    B = restrict_to_support(b, dims, union).matrix
    return classify_dense(A, B, tol)


def _support_of(c: CheckOperator, dims: Sequence[int]) -> tuple[int, ...]:
    if isinstance(c, LocalTerm):
        return c.support
    return tuple(range(len(dims)))


# --------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    hermitian: list[bool]
    commutation: list[list[str]]
    spectrum: list[bool]
    dim_ok: bool
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def structural_ok(self) -> bool:
        """Hermitian, pairwise commuting and within the size limit."""
        return (
            self.dim_ok
            and all(self.hermitian)
            and not any(NONCOMMUTING in row for row in self.commutation)
        )

    @property
    def spectrum_ok(self) -> bool:
        return all(self.spectrum)

    @property
    def valid(self) -> bool:
        return self.structural_ok and self.spectrum_ok

    def noncommuting_pairs(self) -> list[tuple[int, int]]:
        r = len(self.commutation)
        return [
            (a, b)
            for a in range(r)
            for b in range(a + 1, r)
            if self.commutation[a][b] == NONCOMMUTING
        ]

    def to_dict(self) -> dict:
        r = len(self.commutation)
        return {
            "valid": self.valid,
            "structural_ok": self.structural_ok,
            "spectrum_ok": self.spectrum_ok,
            "dim_ok": self.dim_ok,
            "hermitian": self.hermitian,
            "lambda_in_spectrum": self.spectrum,
            "pairs": [
                {"a": a, "b": b, "kind": self.commutation[a][b]}
                for a in range(r)
                for b in range(a + 1, r)
            ],
            "errors": self.errors,
            "warnings": self.warnings,
        }


def _probe_classify(x: CesInstance, a: int, b: int, tol: ToleranceContext) -> str:
    """Classification through random probe vectors (for large mixed pairs)."""
    rng = np.random.default_rng(tol.seed + 7919)
    G = rng.standard_normal((x.total_dim, 4)) + 1j * rng.standard_normal((x.total_dim, 4))
    G /= np.linalg.norm(G, axis=0)
    BG = x.apply(b, G)
    ABG = x.apply(a, BG)
    BAG = x.apply(b, x.apply(a, G))
    scale = check_norm(x.checks[a]) * check_norm(x.checks[b])
    if _rel(float(np.max(np.abs(ABG), initial=0.0)), scale, tol):
        return SINGULAR
    if _rel(float(np.max(np.abs(ABG - BAG), initial=0.0)), scale, tol):
        return REGULAR
    return NONCOMMUTING


def validate(x: CesInstance, tol: ToleranceContext = DEFAULT_TOL) -> ValidationReport:
    """Check Hermiticity, commutativity and lambda membership in the spectrum."""
    errors: list[str] = []
    warns: list[str] = []
    dim_ok = x.total_dim <= MAX_TOTAL_DIM
    if not dim_ok:
        errors.append(f"total dimension {x.total_dim} exceeds {MAX_TOTAL_DIM}")
    herm = []
    for a, c in enumerate(x.checks):
        if isinstance(c, LocalTerm):
            ok = la.is_hermitian(c.matrix, tol)
        else:
            ok = all(la.is_hermitian(f, tol) for f in c.factors)
        herm.append(ok)
        if not ok:
            errors.append(f"check {a} is not Hermitian")
    r = x.r
    comm = [[REGULAR] * r for _ in range(r)]
    for a in range(r):
        comm[a][a] = REGULAR
        for b in range(a + 1, r):
            ca, cb = x.checks[a], x.checks[b]
            both_factor = isinstance(ca, FactorRow) and isinstance(cb, FactorRow)
            if both_factor or isinstance(ca, LocalTerm) and isinstance(cb, LocalTerm):
                kind = classify_commutation(ca, cb, x.dims, tol)
            elif dim_ok:
                kind = _probe_classify(x, a, b, tol)
            else:
                kind = NONCOMMUTING
            comm[a][b] = comm[b][a] = kind
            if kind == NONCOMMUTING:
                errors.append(f"checks {a} and {b} do not commute")
    spec = []
    for a, c in enumerate(x.checks):
        s = check_spectrum(c, tol)
        ok = match_eigenvalue(s, x.lambdas[a], check_norm(c)) is not None
        spec.append(ok)
        if not ok:
            warns.append(f"lambda[{a}] = {x.lambdas[a]:g} is not an eigenvalue of check {a}")
    return ValidationReport(herm, comm, spec, dim_ok, errors, warns)


# --------------------------------------------------------------------------
# JSON


def encode_matrix(M: np.ndarray) -> list:
    M = np.asarray(M, dtype=complex)
    return [[[_num(z.real), _num(z.imag)] for z in row] for row in M]


def _num(v: float):
    v = float(v)
    if v == 0:
        return 0
    if v.is_integer() and abs(v) < 2 ** 53:
        return int(v)
    return v


def decode_matrix(obj: Any, loc: str) -> np.ndarray:
    if not isinstance(obj, list) or not obj:
        raise ParseError("matrix must be a non-empty list of rows", loc)
    rows = []
    width = None
    for i, row in enumerate(obj):
        if not isinstance(row, list):
            raise ParseError("row must be a list", f"{loc}[{i}]")
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError("ragged matrix", f"{loc}[{i}]")
        vals = []
        for k, z in enumerate(row):
            zl = f"{loc}[{i}][{k}]"
            if isinstance(z, (int, float)) and not isinstance(z, bool):
                vals.append(complex(z))
            elif (
                isinstance(z, list)
                and len(z) == 2
                and all(isinstance(t, (int, float)) and not isinstance(t, bool) for t in z)
            ):
                vals.append(complex(z[0], z[1]))
            else:
                raise ParseError("entry must be [re, im]", zl)
            if not np.isfinite(vals[-1]):
                raise ParseError("entry is not finite", zl)
        rows.append(vals)
    M = np.array(rows, dtype=complex)
    if M.shape[0] != M.shape[1]:
        raise ParseError(f"matrix is not square: {M.shape}", loc)
    return M


def instance_to_dict(x: CesInstance) -> dict:
    checks = []
    for c in x.checks:
        if isinstance(c, LocalTerm):
            checks.append(
                {"kind": "local", "support": list(c.support), "matrix": encode_matrix(c.matrix)}
            )
        else:
            checks.append({"kind": "factor", "factors": [encode_matrix(f) for f in c.factors]})
    doc = {
        "version": SCHEMA_VERSION,
        "dims": list(x.dims),
        "checks": checks,
        "lambdas": [_num(v) for v in x.lambdas],
    }
    if x.meta:
        doc["meta"] = x.meta
    return doc


def instance_from_dict(doc: Any, tol: ToleranceContext = DEFAULT_TOL) -> CesInstance:
    if not isinstance(doc, dict):
        raise ParseError("document must be an object")
    if doc.get("version") != SCHEMA_VERSION:
        raise ParseError(f"unsupported version {doc.get('version')!r}", "$.version")
    dims = doc.get("dims")
    if (
        not isinstance(dims, list)
        or not dims
        or not all(isinstance(d, int) and not isinstance(d, bool) and d >= 1 for d in dims)
    ):
        raise ParseError("dims must be a non-empty list of positive integers", "$.dims")
    checks_doc = doc.get("checks")
    if not isinstance(checks_doc, list):
        raise ParseError("checks must be a list", "$.checks")
    lam = doc.get("lambdas")
    if not isinstance(lam, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in lam
    ):
        raise ParseError("lambdas must be a list of numbers", "$.lambdas")
    if len(lam) != len(checks_doc):
        raise ParseError("lambdas and checks differ in length", "$.lambdas")
    checks: list[CheckOperator] = []
    for a, c in enumerate(checks_doc):
        loc = f"$.checks[{a}]"
        if not isinstance(c, dict):
            raise ParseError("check must be an object", loc)
        kind = c.get("kind")
        if kind == "local":
            sup = c.get("support")
            if not isinstance(sup, list) or not sup or not all(
                isinstance(p, int) and not isinstance(p, bool) for p in sup
            ):
                raise ParseError("support must be a non-empty list of integers", loc + ".support")
            if len(set(sup)) != len(sup) or not all(0 <= p < len(dims) for p in sup):
                raise ParseError("support has repeated or out-of-range particles", loc + ".support")
            M = decode_matrix(c.get("matrix"), loc + ".matrix")
            dS = int(np.prod([dims[p] for p in sup]))
            if M.shape != (dS, dS):
                raise ParseError(f"matrix order {M.shape[0]} != {dS}", loc + ".matrix")
            checks.append(LocalTerm(tuple(sup), M))
        elif kind == "factor":
            fs = c.get("factors")
            if not isinstance(fs, list) or len(fs) != len(dims):
                raise ParseError("factor row needs one factor per particle", loc + ".factors")
            mats = []
            for j, f in enumerate(fs):
                M = decode_matrix(f, f"{loc}.factors[{j}]")
                if M.shape != (dims[j], dims[j]):
                    raise ParseError(f"factor order {M.shape[0]} != {dims[j]}", f"{loc}.factors[{j}]")
                if not la.is_hermitian(M, tol):
                    raise ParseError("factors must be Hermitian", f"{loc}.factors[{j}]")
                mats.append(M)
            checks.append(FactorRow(tuple(mats)))
        else:
            raise ParseError(f"unknown check kind {kind!r}", loc + ".kind")
    meta = doc.get("meta", {})
    if not isinstance(meta, dict):
        raise ParseError("meta must be an object", "$.meta")
    return CesInstance(tuple(dims), tuple(checks), tuple(float(v) for v in lam), meta)


def dumps(x: CesInstance) -> str:
    """Canonical JSON text (sorted keys, compact separators)."""
    return json.dumps(instance_to_dict(x), sort_keys=True, separators=(",", ":"))


def loads(text: str, tol: ToleranceContext = DEFAULT_TOL, warn: bool = True) -> CesInstance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg} (line {exc.lineno})") from exc
    x = instance_from_dict(doc, tol)
    if warn:
        for a, c in enumerate(x.checks):
            if match_eigenvalue(check_spectrum(c, tol), x.lambdas[a], check_norm(c)) is None:
                warnings.warn(f"lambda[{a}] is not an eigenvalue of check {a}", stacklevel=2)
    return x


def load(path, tol: ToleranceContext = DEFAULT_TOL, warn: bool = True) -> CesInstance:
    with open(path, "r", encoding="utf-8") as fh:
        return loads(fh.read(), tol, warn)


def save(x: CesInstance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(x))
        fh.write("\n")


def table_from_rows(rows: Iterable[Sequence[np.ndarray]], lambdas: Sequence[float]) -> FactorTable:
    return FactorTable(tuple(tuple(r) for r in rows), tuple(lambdas))


def all_pairs(r: int):
    return itertools.combinations(range(r), 2)

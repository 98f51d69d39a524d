"""Manifold definitions and the base Riemannian geometry of (M, g).

A manifold is an open subset of R^n in a single chart: coordinate names, a
boolean domain predicate, a symmetric matrix of metric expressions, and a
scalar potential sigma.  Everything downstream (connections, curvature,
geodesics) is derived from the symbolic jets built here at load time.
"""

import json
import math
import os

import numpy as np

from .exprcore import EvalDomainError, ExprError, parse

__all__ = [
    "BUILTINS",
    "DefinitionError",
    "OutOfDomainError",
    "ManifoldDef",
    "DomainPred",
    "load_manifold",
    "in_domain",
    "metric_at",
    "metric_inverse_at",
    "metric_jet",
    "sigma_at",
    "sigma_jet",
    "christoffel_g",
    "christoffel_jet",
    "grad_sigma",
    "hess_sigma",
    "laplace_sigma",
    "sample_domain",
    "sample_box_points",
]

SPD_EIG_FLOOR = 1e-12
_SPD_CHECK_SEED = 1723
_SPD_CHECK_COUNT = 32


class DefinitionError(Exception):
    """A manifold document failed validation."""


class OutOfDomainError(Exception):
    """A geometry query was made outside the chart domain."""


# ---------------------------------------------------------------------------
# domain predicates: comparisons joined by `and` / `or`


_CMP_OPS = ("<=", ">=", "<", ">")


class DomainPred:
    """Boolean predicate over chart coordinates.

    Grammar: comparisons `expr (< | <= | > | >=) expr` joined by `and`/`or`
    (`and` binds tighter).  Parentheses belong to the arithmetic expressions,
    not the boolean layer.  The constant predicate is spelled `true`.
    """

    def __init__(self, src, coords):
        self.src = src
        self.tree = _parse_pred(src, coords)

    def __call__(self, x):
        return _eval_pred(self.tree, x)

    def __repr__(self):
        return f"DomainPred({self.src!r})"


def _split_keyword(src, word, base):
    """Top-level split on a keyword, returning chunks with global offsets."""
    parts = []
    depth = 0
    start = 0
    i = 0
    n = len(src)
    w = len(word)
    while i < n:
        c = src[i]
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
        elif (
            depth == 0
            and src[i : i + w] == word
            and (i == 0 or not (src[i - 1].isalnum() or src[i - 1] == "_"))
            and (i + w == n or not (src[i + w].isalnum() or src[i + w] == "_"))
        ):
            parts.append((src[start:i], base + start))
            start = i + w
            i += w
            continue
        i += 1
    parts.append((src[start:], base + start))
    return parts


def _parse_pred(src, coords, base=0):
    ors = _split_keyword(src, "or", base)
    if len(ors) > 1:
        return ("or", [_parse_pred(s, coords, b) for s, b in ors])
    ands = _split_keyword(src, "and", base)
    if len(ands) > 1:
        return ("and", [_parse_pred(s, coords, b) for s, b in ands])
    chunk, off = src.strip(), base + (len(src) - len(src.lstrip()))
    if chunk == "true":
        return ("true",)
    for op in _CMP_OPS:
        k = chunk.find(op)
        if k >= 0:
            lhs = parse(chunk[:k], coords)
            rhs = parse(chunk[k + len(op) :], coords)
            return ("cmp", op, lhs, rhs)
    raise DefinitionError(
        f"domain predicate chunk {chunk!r} has no comparison (offset {off + 1})"
    )


def _eval_pred(tree, x):
    tag = tree[0]
    if tag == "true":
        return True
    if tag == "cmp":
        _, op, lhs, rhs = tree
        a = lhs.eval(x)
        b = rhs.eval(x)
        if op == "<":
            return a < b
        if op == "<=":
            return a <= b
        if op == ">":
            return a > b
        return a >= b
    vals = (_eval_pred(t, x) for t in tree[1])
    return all(vals) if tag == "and" else any(vals)


# ---------------------------------------------------------------------------
# definition documents


BUILTINS = {
    "euclidean": {
        "name": "euclidean",
        "dim": 2,
        "coords": ["x1", "x2"],
        "metric": [["1", "0"], ["0", "1"]],
        "sigma": "0",
        "sample_box": [[-3, 3], [-3, 3]],
    },
    "paraboloid": {
        "name": "paraboloid",
        "dim": 2,
        "coords": ["x1", "x2"],
        "metric": [
            ["2/(x1^2+x2^2+1)", "0"],
            ["0", "2/(x1^2+x2^2+1)"],
        ],
        "sigma": "-log(0.5*(x1^2+x2^2+1))",
        "sample_box": [[-3, 3], [-3, 3]],
    },
    "punctured-plane": {
        "name": "punctured-plane",
        "dim": 2,
        "coords": ["x1", "x2"],
        "domain": "x1^2 + x2^2 > 0",
        "metric": [
            ["exp(2/(x1^2+x2^2))", "0"],
            ["0", "exp(2/(x1^2+x2^2))"],
        ],
        "sigma": "-2/(x1^2+x2^2)",
        "sample_box": [[-2.3, 2.3], [-2.3, 2.3]],
        # derivative magnitudes explode toward the puncture; keep random
        # sampling in an annulus where double precision holds identities
        "sample_guard": "x1^2 + x2^2 > 0.49 and x1^2 + x2^2 < 5.1",
    },
    "half-plane-exp": {
        "name": "half-plane-exp",
        "dim": 2,
        "coords": ["x1", "x2"],
        "domain": "x2 > 0",
        "metric": [["1/x2^2", "0"], ["0", "1/x2^2"]],
        "sigma": "exp(-x2)",
        "sample_box": [[-5, 5], [0.1, 10]],
    },
}


class ManifoldDef:
    """Validated manifold definition with precomputed symbolic jets.

    Immutable after construction; all geometry queries are pure.
    """

    def __init__(self, doc):
        try:
            name = doc["name"]
            n = int(doc["dim"])
            coords = tuple(doc["coords"])
            metric_src = doc["metric"]
            sigma_src = doc["sigma"]
        except (KeyError, TypeError) as err:
            raise DefinitionError(f"bad manifold document: {err!r}") from None
        if n < 2:
            raise DefinitionError(f"dim must be >= 2, got {n}")
        if len(coords) != n:
            raise DefinitionError(f"expected {n} coordinate names, got {len(coords)}")
        if len(set(coords)) != n:
            raise DefinitionError("coordinate names must be distinct")
        if len(metric_src) != n or any(len(row) != n for row in metric_src):
            raise DefinitionError(f"metric must be {n}x{n}")

        self.name = name
        self.n = n
        self.coords = coords
        self.domain_src = doc.get("domain", "true")

        try:
            self.domain = DomainPred(self.domain_src, coords)
            self._sigma = parse(sigma_src, coords)
            rows = [[None] * n for _ in range(n)]
            for i in range(n):
                for j in range(i, n):
                    e = parse(metric_src[i][j], coords)
                    if parse(metric_src[j][i], coords) != e:
                        raise DefinitionError(
                            f"metric not syntactically symmetric at ({i},{j})"
                        )
                    # one shared node per unordered pair keeps evaluated
                    # matrices exactly symmetric
                    rows[i][j] = rows[j][i] = e
        except ExprError as err:
            raise DefinitionError(f"{name}: {err}") from None
        self._g = rows

        box = doc.get("sample_box")
        if box is None:
            box = [[-1.0, 1.0]] * n
        self.sample_box = np.asarray(box, dtype=float)
        if self.sample_box.shape != (n, 2):
            raise DefinitionError(f"sample_box must be {n} pairs")
        guard_src = doc.get("sample_guard")
        self.sample_guard = (
            DomainPred(guard_src, coords) if guard_src is not None else None
        )

        # normalized source document, kept so derived manifolds (conjugate)
        # can be rebuilt through the same validation path
        self.doc = {
            "name": name,
            "dim": n,
            "coords": list(coords),
            "metric": [list(row) for row in metric_src],
            "sigma": sigma_src,
            "domain": self.domain_src,
            "sample_box": [[float(a), float(b)] for a, b in self.sample_box],
        }
        if guard_src is not None:
            self.doc["sample_guard"] = guard_src

        # symbolic jets up to second order of g and sigma
        self._dg = [[[rows[i][j].diff(k) for j in range(n)] for i in range(n)] for k in range(n)]
        self._d2g = [
            [[[self._dg[k][i][j].diff(l) for j in range(n)] for i in range(n)] for l in range(n)]
            for k in range(n)
        ]
        self._dsig = [self._sigma.diff(k) for k in range(n)]
        d2 = [[None] * n for _ in range(n)]
        for k in range(n):
            for l in range(k, n):
                d2[k][l] = d2[l][k] = self._dsig[k].diff(l)
        self._d2sig = d2

        self._spd_spot_check()

    def _spd_spot_check(self):
        pts = sample_domain(self, _SPD_CHECK_COUNT, seed=_SPD_CHECK_SEED)
        for x in pts:
            g = _eval_sym_matrix(self._g, tuple(x))
            w = np.linalg.eigvalsh(g)
            if w.min() <= SPD_EIG_FLOOR:
                raise DefinitionError(
                    f"{self.name}: metric not SPD at {tuple(x)} (eigenvalues {w})"
                )

    def __repr__(self):
        return f"ManifoldDef({self.name!r}, n={self.n})"


def load_manifold(doc):
    """Load a manifold from a built-in name, a JSON file path, or a dict."""
    if isinstance(doc, str):
        if doc in BUILTINS:
            doc = BUILTINS[doc]
        elif os.path.isfile(doc):
            try:
                with open(doc) as fh:
                    doc = json.load(fh)
            except (OSError, json.JSONDecodeError) as err:
                raise DefinitionError(f"cannot read manifold file {doc}: {err}") from None
        else:
            raise DefinitionError(
                f"unknown manifold {doc!r} (not a built-in, not a file)"
            )
    if not isinstance(doc, dict):
        raise DefinitionError("manifold document must be a dict or a name/path")
    return ManifoldDef(doc)


# ---------------------------------------------------------------------------
# evaluation helpers


def _pt(M, x):
    x = tuple(float(c) for c in x)
    if len(x) != M.n:
        raise ValueError(f"expected {M.n} coordinates, got {len(x)}")
    return x


def _eval_sym_matrix(rows, x):
    n = len(rows)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(i, n):
            out[i, j] = out[j, i] = rows[i][j].eval(x)
    return out


def in_domain(M, x):
    """Chart membership: the predicate holds and g, sigma evaluate finite."""
    x = _pt(M, x)
    try:
        if not M.domain(x):
            return False
        M._sigma.eval(x)
        for i in range(M.n):
            for j in range(i, M.n):
                M._g[i][j].eval(x)
    except EvalDomainError:
        return False
    return True


def _require(M, x):
    x = _pt(M, x)
    if not in_domain(M, x):
        raise OutOfDomainError(f"{tuple(x)} is outside the domain of {M.name}")
    return x


def metric_at(M, x):
    """g(x) as an (n, n) SPD matrix."""
    x = _require(M, x)
    g = _eval_sym_matrix(M._g, x)
    if np.linalg.eigvalsh(g).min() <= SPD_EIG_FLOOR:
        raise OutOfDomainError(f"{M.name}: metric not SPD at {tuple(x)}")
    return g


def metric_inverse_at(M, x):
    return np.linalg.inv(metric_at(M, x))


def metric_jet(M, x, order):
    """(g,) or (g, dg) or (g, dg, d2g); dg[k,i,j] = d_k g_ij."""
    x = _require(M, x)
    return _metric_jet_raw(M, x, order)


def _metric_jet_raw(M, x, order):
    n = M.n
    g = _eval_sym_matrix(M._g, x)
    if order == 0:
        return (g,)
    dg = np.empty((n, n, n))
    for k in range(n):
        for i in range(n):
            for j in range(i, n):
                dg[k, i, j] = dg[k, j, i] = M._dg[k][i][j].eval(x)
    if order == 1:
        return g, dg
    d2g = np.empty((n, n, n, n))
    for k in range(n):
        for l in range(n):
            for i in range(n):
                for j in range(i, n):
                    d2g[k, l, i, j] = d2g[k, l, j, i] = M._d2g[k][l][i][j].eval(x)
    return g, dg, d2g


def sigma_at(M, x):
    x = _require(M, x)
    return M._sigma.eval(x)


def sigma_jet(M, x, order):
    """(s,) or (s, ds) or (s, ds, d2s) with exact symmetric second order."""
    x = _require(M, x)
    return _sigma_jet_raw(M, x, order)


def _sigma_jet_raw(M, x, order):
    n = M.n
    s = M._sigma.eval(x)
    if order == 0:
        return (s,)
    ds = np.array([M._dsig[k].eval(x) for k in range(n)])
    if order == 1:
        return s, ds
    d2s = np.empty((n, n))
    for k in range(n):
        for l in range(k, n):
            d2s[k, l] = d2s[l, k] = M._d2sig[k][l].eval(x)
    return s, ds, d2s


def _christoffel_from_jet(g, dg):
    gi = np.linalg.inv(g)
    s = dg + dg.transpose(1, 0, 2) - dg.transpose(1, 2, 0)
    # s[i,j,l] = d_i g_jl + d_j g_il - d_l g_ij
    return 0.5 * np.einsum("kl,ijl->kij", gi, s)


def christoffel_g(M, x):
    """Levi-Civita coefficients, gamma[k,i,j] = Gamma^k_ij."""
    x = _require(M, x)
    g, dg = _metric_jet_raw(M, x, 1)
    return _christoffel_from_jet(g, dg)


def christoffel_jet(M, x):
    """(gamma, dgamma) with dgamma[m,k,i,j] = d_m Gamma^k_ij, exactly.

    d(g^{-1}) = -g^{-1} dg g^{-1} keeps everything in matrix calculus; no
    finite differences and no symbolic Gamma expressions.
    """
    x = _require(M, x)
    g, dg, d2g = _metric_jet_raw(M, x, 2)
    gi = np.linalg.inv(g)
    s = dg + dg.transpose(1, 0, 2) - dg.transpose(1, 2, 0)
    gam = 0.5 * np.einsum("kl,ijl->kij", gi, s)
    dgi = -np.einsum("ka,mab,bl->mkl", gi, dg, gi)
    # ds[m,i,j,l] = d_m s[i,j,l] = d2g[m,i,j,l] + d2g[m,j,i,l] - d2g[m,l,i,j]
    ds = d2g + d2g.transpose(0, 2, 1, 3) - d2g.transpose(0, 2, 3, 1)
    dgam = 0.5 * (
        np.einsum("mkl,ijl->mkij", dgi, s) + np.einsum("kl,mijl->mkij", gi, ds)
    )
    return gam, dgam


def grad_sigma(M, x):
    x = _require(M, x)
    g = _eval_sym_matrix(M._g, x)
    _, ds = _sigma_jet_raw(M, x, 1)
    return np.linalg.solve(g, ds)


def hess_sigma(M, x):
    """Covariant Hessian (nabla^g dsigma)_ij = d_i d_j sigma - Gamma^k_ij d_k sigma."""
    x = _require(M, x)
    g, dg = _metric_jet_raw(M, x, 1)
    _, ds, d2s = _sigma_jet_raw(M, x, 2)
    gam = _christoffel_from_jet(g, dg)
    return d2s - np.einsum("kij,k->ij", gam, ds)


def laplace_sigma(M, x):
    x = _require(M, x)
    gi = np.linalg.inv(_eval_sym_matrix(M._g, x))
    return float(np.einsum("ij,ij->", gi, hess_sigma(M, x)))


# ---------------------------------------------------------------------------
# sampling


def sample_box_points(M, count, rng):
    lo = M.sample_box[:, 0]
    hi = M.sample_box[:, 1]
    return rng.uniform(lo, hi, size=(count, M.n))


def sample_domain(M, count, seed=0, rng=None):
    """`count` in-domain points from the sample box, deterministic per seed."""
    if rng is None:
        rng = np.random.default_rng(seed)
    out = []
    attempts = 0
    limit = 200 * count + 1000
    while len(out) < count:
        if attempts >= limit:
            raise DefinitionError(
                f"{M.name}: could not draw {count} in-domain samples "
                f"({len(out)} found in {attempts} attempts)"
            )
        batch = sample_box_points(M, min(count, 64), rng)
        attempts += len(batch)
        for x in batch:
            tx = tuple(x)
            ok = in_domain(M, tx)
            if ok and M.sample_guard is not None:
                try:
                    ok = M.sample_guard(tx)
                except EvalDomainError:
                    ok = False
            if ok:
                out.append(x)
                if len(out) == count:
                    break
    return np.asarray(out)

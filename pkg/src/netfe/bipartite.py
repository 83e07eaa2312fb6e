"""Two-way (bipartite) data and the weighted one-mode projection.

Rows are matches ``(i, j)`` between a type-1 unit ``i`` (e.g. a student or
worker) and a type-2 unit ``j`` (a teacher or firm), with an outcome and
optional covariates.  Partialling out the type-1 effects leaves a weighted
graph on the type-2 units whose Laplacian is ``B2' M_B1 B2``.
"""

import csv
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .exceptions import GraphInputError
from .graph import Graph, _sorted_ids

__all__ = [
    "BipartiteData",
    "ParameterMap",
    "Projection",
    "build_bipartite",
    "stack_two_way",
    "q_and_w",
    "one_mode_projection",
    "demean_type1",
    "read_matched_csv",
    "write_matched_csv",
    "write_projection_csv",
]


@dataclass(frozen=True, eq=False)
class BipartiteData:
    """Matched two-type observations.

    ``t1[e]`` and ``t2[e]`` are the compact 0-based type-1 and type-2 units
    of row ``e``.  ``X`` has shape ``(m, p)`` with ``p`` possibly 0.
    """

    t1: np.ndarray
    t2: np.ndarray
    y: np.ndarray
    X: np.ndarray
    ids1: np.ndarray
    ids2: np.ndarray

    @property
    def n1(self):
        return int(self.ids1.size)

    @property
    def n2(self):
        return int(self.ids2.size)

    @property
    def m(self):
        return int(self.t1.size)

    @property
    def p(self):
        return int(self.X.shape[1])

    def B1(self):
        return sparse.csr_matrix((np.ones(self.m), (np.arange(self.m), self.t1)), shape=(self.m, self.n1))

    def B2(self):
        return sparse.csr_matrix((np.ones(self.m), (np.arange(self.m), self.t2)), shape=(self.m, self.n2))

    def degrees1(self):
        return np.bincount(self.t1, minlength=self.n1).astype(float)

    def degrees2(self):
        return np.bincount(self.t2, minlength=self.n2).astype(float)

    def with_outcome(self, y, X=None):
        """Copy with a new outcome vector (and optionally new covariates)."""
        y = np.asarray(y, dtype=float)
        X = self.X if X is None else np.asarray(X, dtype=float).reshape(self.m, -1)
        return BipartiteData(self.t1, self.t2, y, X, self.ids1, self.ids2)


def build_bipartite(rows):
    """Build :class:`BipartiteData` from ``(i, j, y[, x])`` rows.

    Type-1 and type-2 ids live in separate namespaces.  ``y`` may be
    ``None`` (stored as NaN) when only the graph structure is needed; ``x``
    is a sequence of covariates of the same length in every row.
    """
    rows = list(rows)
    if not rows:
        raise GraphInputError("empty data (at least one row required)")
    a, b, ys, xs = [], [], [], []
    p = None
    for r, row in enumerate(rows, start=1):
        if len(row) == 2:
            i, j = row
            yv, x = None, ()
        elif len(row) == 3:
            i, j, yv = row
            x = ()
        elif len(row) == 4:
            i, j, yv, x = row
            x = () if x is None else tuple(np.atleast_1d(x))
        else:
            raise GraphInputError("expected (i, j, y[, x])", row=r)
        if p is None:
            p = len(x)
        elif len(x) != p:
            raise GraphInputError(f"covariate dimension {len(x)} != {p}", row=r)
        a.append(i)
        b.append(j)
        ys.append(np.nan if yv is None else float(yv))
        xs.append(x)
    ids1 = _sorted_ids(a)
    ids2 = _sorted_ids(b)
    p1 = {v: k for k, v in enumerate(ids1)}
    p2 = {v: k for k, v in enumerate(ids2)}
    t1 = np.array([p1[v] for v in a])
    t2 = np.array([p2[v] for v in b])
    X = np.array(xs, dtype=float).reshape(len(rows), p)
    return BipartiteData(t1, t2, np.array(ys), X, np.asarray(ids1, dtype=object), np.asarray(ids2, dtype=object))


@dataclass(frozen=True)
class ParameterMap:
    """Maps stacked vertex effects ``alpha`` to ``(mu, eta)``.

    Type-1 units occupy vertices ``0..n1-1`` with ``alpha = mu``; type-2
    units occupy ``n1..n1+n2-1`` with ``alpha = -eta``.
    """

    n1: int
    n2: int

    def split(self, alpha):
        alpha = np.asarray(alpha)
        return alpha[: self.n1].copy(), -alpha[self.n1 :]

    def join(self, mu, eta):
        return np.concatenate([np.asarray(mu, dtype=float), -np.asarray(eta, dtype=float)])


def stack_two_way(bd):
    """Unweighted graph on ``n1 + n2`` vertices with incidence ``(B1, -B2)``."""
    ids = np.empty(bd.n1 + bd.n2, dtype=object)
    ids[: bd.n1] = [("type1", v) for v in bd.ids1]
    ids[bd.n1 :] = [("type2", v) for v in bd.ids2]
    g = Graph.from_arrays(bd.n1 + bd.n2, bd.t1, bd.n1 + bd.t2, None, ids)
    return g, ParameterMap(bd.n1, bd.n2)


def demean_type1(bd, v):
    """Apply ``M_B1``: subtract type-1 group means from the rows of ``v``."""
    v = np.asarray(v, dtype=float)
    cnt = bd.degrees1()
    if v.ndim == 1:
        means = np.bincount(bd.t1, v, bd.n1) / cnt
        return v - means[bd.t1]
    out = np.empty_like(v)
    for k in range(v.shape[1]):
        means = np.bincount(bd.t1, v[:, k], bd.n1) / cnt
        out[:, k] = v[:, k] - means[bd.t1]
    return out


def _pairs(bd):
    """Enumerate edge pairs sharing a type-1 unit.

    Pairs are ordered by connector, then by the labels of the two edges;
    within each pair the first edge has the lower label.
    """
    order = np.lexsort((np.arange(bd.m), bd.t1))
    counts = np.bincount(bd.t1, minlength=bd.n1)
    starts = np.concatenate([[0], np.cumsum(counts)])
    first, second, conn = [], [], []
    for i in range(bd.n1):
        es = order[starts[i] : starts[i + 1]]
        k = es.size
        if k < 2:
            continue
        a, b = np.triu_indices(k, 1)
        first.append(es[a])
        second.append(es[b])
        conn.append(np.full(a.size, i))
    if not first:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    return np.concatenate(first), np.concatenate(second), np.concatenate(conn)


def q_and_w(bd):
    """First-difference operator ``Q`` (``m' x m``) and weights ``W`` (``m' x m'``).

    Row ``k`` of ``Q`` has ``+1`` at the lower-labelled and ``-1`` at the
    higher-labelled edge of the ``k``-th pair; ``W`` is diagonal with
    ``1 / sqrt(d_c)`` for the connecting type-1 unit ``c``.  Rows of
    ``Q B2`` that are identically zero (pairs through the same type-2 unit)
    are kept.
    """
    e1, e2, conn = _pairs(bd)
    mp = e1.size
    rows = np.repeat(np.arange(mp), 2)
    cols = np.column_stack([e1, e2]).ravel()
    vals = np.tile([1.0, -1.0], mp)
    Q = sparse.csr_matrix((vals, (rows, cols)), shape=(mp, bd.m))
    W = sparse.diags(1.0 / np.sqrt(bd.degrees1()[conn]), shape=(mp, mp)).tocsr()
    return Q, W


@dataclass(frozen=True, eq=False)
class Projection:
    """Weighted one-mode projection on the type-2 units.

    ``graph`` is the simple weighted graph with adjacency ``A`` (``None``
    when the projection has no edges).  ``connector[k]`` is the type-1 unit
    through which pair ``k`` (row ``k`` of ``Q``) arises.
    """

    graph: Graph
    A: sparse.csr_matrix
    L: sparse.csr_matrix
    Q: sparse.csr_matrix
    W: sparse.csr_matrix
    m_prime: int
    connector: np.ndarray
    pairs: np.ndarray

    @property
    def empty(self):
        return self.graph is None


def one_mode_projection(bd, check=False, atol=1e-10):
    """Project the bipartite graph onto the type-2 units.

    The adjacency is ``A'_{jk} = sum_i c_ij c_ik / d_i`` for ``j != k``,
    where ``c_ij`` counts the rows matching ``i`` and ``j`` and ``d_i`` is
    the number of rows of ``i``.  With ``check=True`` the Laplacian is also
    formed densely as ``B2' M_B1 B2`` and compared entrywise.
    """
    C = sparse.csr_matrix((np.ones(bd.m), (bd.t1, bd.t2)), shape=(bd.n1, bd.n2))
    C.sum_duplicates()
    d1 = bd.degrees1()
    K = (C.T @ sparse.diags(1.0 / d1) @ C).tocsr()
    A = (K - sparse.diags(K.diagonal())).tocsr()
    A.eliminate_zeros()
    deg = np.asarray(A.sum(axis=1)).ravel()
    L = (sparse.diags(deg) - A).tocsr()
    Q, W = q_and_w(bd)
    e1, e2, conn = _pairs(bd)
    mp = int(np.sum(d1 * (d1 - 1) / 2))
    assert mp == e1.size
    if check:
        B2 = bd.B2().toarray()
        ref = B2.T @ demean_type1(bd, B2)
        if not np.allclose(L.toarray(), ref, rtol=0, atol=atol * max(1.0, np.abs(ref).max())):
            raise AssertionError("projection Laplacian disagrees with B2' M_B1 B2")
    U = sparse.triu(A, k=1).tocoo()
    graph = None
    if U.nnz:
        order = np.lexsort((U.col, U.row))
        graph = Graph.from_arrays(bd.n2, U.row[order], U.col[order], U.data[order], bd.ids2)
    return Projection(graph, A, L, Q, W, mp, conn, np.column_stack([e1, e2]))


def read_matched_csv(path, require_y=True):
    """Read a matched CSV with header ``i,j,y,x1,...,xp`` (``y`` optional
    unless ``require_y``)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise GraphInputError("empty file") from None
        if header[:2] != ["i", "j"]:
            raise GraphInputError(f"expected header starting with 'i,j', got {','.join(header)!r}")
        has_y = len(header) > 2 and header[2] == "y"
        if require_y and not has_y:
            raise GraphInputError("missing outcome column 'y'")
        xcols = header[3:] if has_y else header[2:]
        for c in xcols:
            if not c.startswith("x"):
                raise GraphInputError(f"unexpected column {c!r}")
        rows = []
        for r, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise GraphInputError(f"expected {len(header)} fields, got {len(rec)}", row=r)
            try:
                nums = [float(c) for c in rec[2:]]
            except ValueError:
                raise GraphInputError("non-numeric outcome or covariate", row=r) from None
            yv = nums[0] if has_y else None
            x = nums[1:] if has_y else nums
            rows.append((rec[0].strip(), rec[1].strip(), yv, x))
    if not rows:
        raise GraphInputError("no data rows")
    return build_bipartite(rows)


def write_matched_csv(bd, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "y"] + [f"x{k + 1}" for k in range(bd.p)])
        for e in range(bd.m):
            w.writerow(
                [bd.ids1[bd.t1[e]], bd.ids2[bd.t2[e]], repr(float(bd.y[e]))]
                + [repr(float(v)) for v in bd.X[e]]
            )


def write_projection_csv(proj, path):
    """Write the projection as a weighted edge list ``j,jprime,w``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["j", "jprime", "w"])
        if proj.graph is None:
            return
        g = proj.graph
        for a, b, wt in zip(g.tail, g.head, g.weight):
            w.writerow([g.ids[a], g.ids[b], repr(float(wt))])

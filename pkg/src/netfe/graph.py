"""Weighted undirected multigraphs and their matrix representations.

Vertices are stored as compact 0-based indices; the original (arbitrary)
vertex ids are kept in ``Graph.ids`` so results can be mapped back.  Edge
``k`` (0-based) carries the label ``k + 1``.  The oriented incidence matrix
puts ``+sqrt(w)`` on the lower-indexed endpoint of every edge and
``-sqrt(w)`` on the other one.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

from .exceptions import DisconnectedGraphError, GraphInputError

__all__ = [
    "Graph",
    "GraphMatrices",
    "NeighborIndex",
    "build_graph",
    "matrices",
    "neighbor_index",
    "connected_components",
    "is_connected",
    "largest_component",
    "require_connected",
    "read_edge_csv",
    "write_edge_csv",
]


def _sorted_ids(values):
    uniq = list(dict.fromkeys(values))
    try:
        return sorted(uniq)
    except TypeError:
        return sorted(uniq, key=str)


@dataclass(frozen=True, eq=False)
class Graph:
    """Weighted undirected multigraph without loops.

    Attributes
    ----------
    n : int
        Number of vertices.
    tail, head : ndarray of int, shape (m,)
        Compact 0-based endpoints of every edge, in edge-label order.
    weight : ndarray of float, shape (m,)
        Strictly positive edge weights.
    ids : ndarray of object, shape (n,)
        Original vertex id of every compact vertex.
    """

    n: int
    tail: np.ndarray
    head: np.ndarray
    weight: np.ndarray
    ids: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, n, tail, head, weight=None, ids=None):
        """Build a graph from compact 0-based endpoint arrays."""
        tail = np.asarray(tail, dtype=np.int64)
        head = np.asarray(head, dtype=np.int64)
        if tail.shape != head.shape or tail.ndim != 1:
            raise GraphInputError("tail and head must be 1-d arrays of equal length")
        if tail.size == 0:
            raise GraphInputError("empty edge list (m > 0 required)")
        weight = np.ones(tail.size) if weight is None else np.asarray(weight, dtype=float)
        if weight.shape != tail.shape:
            raise GraphInputError("weight must have one entry per edge")
        bad = np.flatnonzero(tail == head)
        if bad.size:
            raise GraphInputError("loop edge", row=int(bad[0]) + 1)
        bad = np.flatnonzero(~(weight > 0) | ~np.isfinite(weight))
        if bad.size:
            raise GraphInputError("non-positive weight", row=int(bad[0]) + 1)
        if tail.min() < 0 or head.min() < 0 or max(tail.max(), head.max()) >= n:
            raise GraphInputError("vertex index out of range")
        if ids is None:
            ids = np.arange(1, n + 1)
        ids = np.asarray(ids, dtype=object)
        if ids.shape != (n,):
            raise GraphInputError("ids must have one entry per vertex")
        for arr in (tail, head, weight, ids):
            arr.flags.writeable = False
        return cls(int(n), tail, head, weight, ids)

    @property
    def m(self):
        return int(self.tail.size)

    @property
    def edges(self):
        """List of ``(i, j, w, label)`` with original ids and 1-based labels."""
        return [
            (self.ids[a], self.ids[b], float(w), k + 1)
            for k, (a, b, w) in enumerate(zip(self.tail, self.head, self.weight))
        ]

    def degrees(self):
        return np.bincount(self.tail, self.weight, self.n) + np.bincount(
            self.head, self.weight, self.n
        )

    def index_of(self, vertex_id):
        """Compact index of an original vertex id."""
        hits = np.flatnonzero(self.ids == vertex_id)
        if hits.size == 0:
            raise KeyError(vertex_id)
        return int(hits[0])

    def __repr__(self):
        return f"Graph(n={self.n}, m={self.m})"


def build_graph(edge_list):
    """Construct a :class:`Graph` from ``(i, j)`` or ``(i, j, w)`` rows.

    Vertex ids may be any hashable values; they are compacted to
    ``0..n-1`` in sorted order.  Repeated pairs are kept as distinct edges.

    Raises
    ------
    GraphInputError
        On an empty edge list, a loop edge, or a non-positive weight.  The
        message carries the offending 1-based row number.
    """
    rows = list(edge_list)
    if not rows:
        raise GraphInputError("empty edge list (m > 0 required)")
    src, dst, wts = [], [], []
    for r, row in enumerate(rows, start=1):
        if len(row) == 2:
            i, j = row
            w = 1.0
        elif len(row) == 3:
            i, j, w = row
        else:
            raise GraphInputError("expected (i, j) or (i, j, w)", row=r)
        if i == j:
            raise GraphInputError("loop edge", row=r)
        try:
            w = float(w)
        except (TypeError, ValueError):
            raise GraphInputError(f"weight {w!r} is not a number", row=r) from None
        if not (w > 0 and np.isfinite(w)):
            raise GraphInputError("non-positive weight", row=r)
        src.append(i)
        dst.append(j)
        wts.append(w)
    ids = _sorted_ids(src + dst)
    pos = {v: k for k, v in enumerate(ids)}
    tail = np.array([pos[v] for v in src])
    head = np.array([pos[v] for v in dst])
    return Graph.from_arrays(len(ids), tail, head, np.array(wts), ids)


@dataclass(frozen=True, eq=False)
class GraphMatrices:
    """Sparse matrix representations of a graph.

    ``B`` is the ``m x n`` oriented incidence matrix, ``A`` the adjacency,
    ``D`` the diagonal degree matrix and ``L = B'B = D - A`` the Laplacian.
    """

    graph: Graph
    B: sparse.csr_matrix
    A: sparse.csr_matrix
    D: sparse.csr_matrix
    L: sparse.csr_matrix
    d: np.ndarray

    @property
    def n(self):
        return self.graph.n

    @property
    def m(self):
        return self.graph.m

    @property
    def vol(self):
        """Total degree ``sum_i d_i`` (twice the total edge weight)."""
        return float(self.d.sum())

    def flip_rows(self, mask):
        """Copy with the orientation of the masked incidence rows reversed."""
        s = np.where(np.asarray(mask, dtype=bool), -1.0, 1.0)
        B = sparse.diags(s) @ self.B
        return GraphMatrices(self.graph, B.tocsr(), self.A, self.D, self.L, self.d)


def matrices(g):
    """Return the :class:`GraphMatrices` of ``g``."""
    lo = np.minimum(g.tail, g.head)
    hi = np.maximum(g.tail, g.head)
    sw = np.sqrt(g.weight)
    rows = np.repeat(np.arange(g.m), 2)
    cols = np.column_stack([lo, hi]).ravel()
    vals = np.column_stack([sw, -sw]).ravel()
    B = sparse.csr_matrix((vals, (rows, cols)), shape=(g.m, g.n))
    A = sparse.csr_matrix(
        (np.concatenate([g.weight, g.weight]), (np.concatenate([lo, hi]), np.concatenate([hi, lo]))),
        shape=(g.n, g.n),
    )
    A.sum_duplicates()
    d = np.asarray(A.sum(axis=1)).ravel()
    D = sparse.diags(d).tocsr()
    L = (D - A).tocsr()
    return GraphMatrices(g, B, A, D, L, d)


@dataclass(frozen=True)
class NeighborIndex:
    """Per-vertex neighbor lists with merged adjacency weights."""

    indptr: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    def __getitem__(self, i):
        sl = slice(self.indptr[i], self.indptr[i + 1])
        return self.indices[sl], self.weights[sl]

    def __len__(self):
        return self.indptr.size - 1


def neighbor_index(g):
    A = matrices(g).A if isinstance(g, Graph) else g.A
    A = A.tocsr()
    A.sort_indices()
    return NeighborIndex(A.indptr.copy(), A.indices.copy(), A.data.copy())


def connected_components(g):
    """Partition of the vertices into connected components.

    Returns a list of sorted index arrays, largest component first; ties
    are broken by the smallest vertex index in the component.
    """
    A = matrices(g).A if isinstance(g, Graph) else g.A
    k, labels = csgraph.connected_components(A, directed=False)
    comps = [np.flatnonzero(labels == c) for c in range(k)]
    comps.sort(key=lambda c: (-c.size, c[0]))
    return comps


def is_connected(g):
    return len(connected_components(g)) == 1


def require_connected(g):
    if not is_connected(g):
        raise DisconnectedGraphError()


def largest_component(g):
    """Induced subgraph on the largest connected component.

    Returns
    -------
    sub : Graph
        Subgraph with vertices relabelled ``0..n'-1`` and edges relabelled in
        their original order.
    vertex_map : ndarray
        ``vertex_map[k]`` is the index in ``g`` of vertex ``k`` of ``sub``.
    """
    keep = connected_components(g)[0]
    if keep.size == g.n:
        return g, np.arange(g.n)
    new = np.full(g.n, -1)
    new[keep] = np.arange(keep.size)
    emask = new[g.tail] >= 0
    sub = Graph.from_arrays(
        keep.size, new[g.tail[emask]], new[g.head[emask]], g.weight[emask], g.ids[keep]
    )
    return sub, keep


def read_edge_csv(path):
    """Read an edge list CSV with header ``i,j[,w]``.

    The header ``j,jprime,w`` written for one-mode projections is accepted
    as well.  Vertex ids are kept as strings.  Errors report 1-based data row numbers.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise GraphInputError("empty file (m > 0 required)") from None
        if header[:2] not in (["i", "j"], ["j", "jprime"]) or header[2:] not in ([], ["w"]):
            raise GraphInputError(f"expected header 'i,j[,w]', got {','.join(header)!r}")
        rows = []
        for r, rec in enumerate(reader, start=1):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise GraphInputError(f"expected {len(header)} fields, got {len(rec)}", row=r)
            i, j = rec[0].strip(), rec[1].strip()
            if not i or not j:
                raise GraphInputError("missing vertex id", row=r)
            w = rec[2].strip() if len(rec) == 3 and rec[2].strip() else "1.0"
            try:
                w = float(w)
            except ValueError:
                raise GraphInputError(f"weight {w!r} is not a number", row=r) from None
            if i == j:
                raise GraphInputError("loop edge", row=r)
            if not (w > 0 and np.isfinite(w)):
                raise GraphInputError("non-positive weight", row=r)
            rows.append((i, j, w))
    if not rows:
        raise GraphInputError("no edges (m > 0 required)")
    return build_graph(rows)


def write_edge_csv(g, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "w"])
        for a, b, wt in zip(g.tail, g.head, g.weight):
            w.writerow([g.ids[a], g.ids[b], repr(float(wt))])

"""Normalized Laplacian, spectral gap, Cheeger constant and the pseudoinverse L*.

``L*`` denotes the generalized inverse ``D^{-1/2} S^+ D^{-1/2}`` of the
Laplacian, where ``S = D^{-1/2} L D^{-1/2}`` is the normalized Laplacian.  It
is the pseudoinverse matched to the degree-weighted normalization
``d'alpha = 0``: ``L* d = 0`` and every column of ``L*`` is orthogonal to
``d``.  With ``vol = sum_i d_i`` it satisfies

    L* = (L + dd'/vol)^{-1} - ii'/vol,

which is the default computational route.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse import linalg as spla

from .exceptions import ConvergenceError, DisconnectedGraphError, NetFEError
from .graph import Graph, GraphMatrices, is_connected, matrices

__all__ = [
    "DENSE_MAX",
    "SpectralSummary",
    "PseudoinverseBundle",
    "DiagSdag",
    "as_matrices",
    "normalized_laplacian",
    "lambda2",
    "cheeger_exact",
    "cheeger_bounds",
    "spectral_summary",
    "star_inverse",
    "star_inverse_eigen",
    "pseudoinverse_star",
    "lstar_solve",
    "diag_Sdag",
]

DENSE_MAX = 2000
CHEEGER_MAX = 24


def as_matrices(g):
    """Accept a Graph or GraphMatrices and return GraphMatrices."""
    if isinstance(g, GraphMatrices):
        return g
    if isinstance(g, Graph):
        return matrices(g)
    raise TypeError(f"expected Graph or GraphMatrices, got {type(g).__name__}")


def _check_connected(gm):
    if np.any(gm.d <= 0):
        raise DisconnectedGraphError("isolated vertex (d_i = 0); apply largest_component first")
    if not is_connected(gm):
        raise DisconnectedGraphError()


def normalized_laplacian(gm):
    """Return ``S = D^{-1/2} L D^{-1/2}`` as a sparse matrix."""
    gm = as_matrices(gm)
    if np.any(gm.d <= 0):
        raise DisconnectedGraphError("isolated vertex (d_i = 0); apply largest_component first")
    r = sparse.diags(1.0 / np.sqrt(gm.d))
    return (r @ gm.L @ r).tocsr()


def _lambda2_dense(gm):
    S = normalized_laplacian(gm).toarray()
    ev = sla.eigvalsh(S)
    return float(ev[1]), float(ev[-1])


def _lambda2_lanczos(gm, tol, maxiter):
    S = normalized_laplacian(gm)
    n = gm.n
    psi = np.sqrt(gm.d / gm.vol)

    def deflate(v):
        return v - psi * (psi @ v)

    def mv(v):
        v = deflate(np.ravel(v))
        return deflate(2.0 * v - S @ v)

    op = spla.LinearOperator((n, n), matvec=mv, dtype=float)
    v0 = deflate(np.random.default_rng(0).standard_normal(n))
    try:
        mu, vec = spla.eigsh(op, k=1, which="LA", tol=tol / 4, maxiter=maxiter, v0=v0)
    except spla.ArpackNoConvergence as exc:
        if exc.eigenvalues.size:
            v = exc.eigenvectors[:, 0]
            res = np.linalg.norm(mv(v) - exc.eigenvalues[0] * v)
        else:
            res = float("nan")
        raise ConvergenceError("lambda2: Lanczos did not converge", res) from None
    v = vec[:, 0]
    res = float(np.linalg.norm(mv(v) - mu[0] * v))
    if res > max(10 * tol, 1e-6):
        raise ConvergenceError("lambda2: Lanczos residual above tolerance", res)
    return 2.0 - float(mu[0])


def lambda2(g, tol=1e-8, method="auto", maxiter=None):
    """Smallest non-zero eigenvalue of the normalized Laplacian.

    Parameters
    ----------
    g : Graph or GraphMatrices
        Connected graph.
    tol : float
        Absolute tolerance (iterative method only; the dense path is exact
        to machine precision).
    method : {"auto", "dense", "lanczos"}
        ``"auto"`` uses a dense symmetric eigendecomposition for
        ``n <= DENSE_MAX`` and a deflated Lanczos iteration otherwise.  The
        Lanczos path only needs products with ``S``; the known null vector
        ``D^{1/2} 1`` is projected out exactly.
    """
    gm = as_matrices(g)
    _check_connected(gm)
    if method == "auto":
        method = "dense" if gm.n <= DENSE_MAX else "lanczos"
    if method == "dense":
        return _lambda2_dense(gm)[0]
    if method == "lanczos":
        return _lambda2_lanczos(gm, tol, maxiter)
    raise ValueError(f"unknown method {method!r}")


def _lambda_max(gm, method):
    if method == "dense" or (method == "auto" and gm.n <= DENSE_MAX):
        return _lambda2_dense(gm)[1]
    S = normalized_laplacian(gm)
    return float(spla.eigsh(S, k=1, which="LA", return_eigenvectors=False)[0])


def cheeger_exact(g):
    """Exact Cheeger constant by exhaustive search over vertex subsets.

    Minimizes ``cut(U) / vol(U)`` over all ``U`` with
    ``0 < vol(U) <= vol(V \\ U)``.  Only feasible for ``n <= 24``.
    """
    gm = as_matrices(g)
    n = gm.n
    if n > CHEEGER_MAX:
        raise NetFEError(f"n = {n} > {CHEEGER_MAX}: exact Cheeger exponential; use lambda2 bounds")
    _check_connected(gm)
    graph = gm.graph
    tail, head, w = graph.tail, graph.head, graph.weight
    d, vol = gm.d, gm.vol
    best = np.inf
    shifts = np.arange(n, dtype=np.int64)
    total = 1 << n
    chunk = 1 << 15
    for start in range(1, total, chunk):
        masks = np.arange(start, min(start + chunk, total), dtype=np.int64)
        bits = ((masks[:, None] >> shifts) & 1).astype(bool)
        vu = bits @ d
        ok = vu <= vol - vu
        if not ok.any():
            continue
        bits, vu = bits[ok], vu[ok]
        cut = (bits[:, tail] != bits[:, head]) @ w
        best = min(best, float(np.min(cut / vu)))
    return best


def cheeger_bounds(lam2):
    """Range of Cheeger constants compatible with a spectral gap.

    From ``2C >= lambda2 >= 1 - sqrt(1 - C^2)`` it follows that
    ``lambda2 / 2 <= C <= sqrt(1 - (1 - lambda2)^2)`` (the upper value is
    capped at 1 for ``lambda2 >= 1``).
    """
    lo = lam2 / 2.0
    hi = 1.0 if lam2 >= 1 else float(np.sqrt(1.0 - (1.0 - lam2) ** 2))
    return lo, hi


@dataclass(frozen=True)
class SpectralSummary:
    lambda2: float
    lambda_max: float
    cheeger: float = None
    cheeger_bounds: tuple = None

    def chain(self):
        """Values of ``(2C, lambda2, 1 - sqrt(1 - C^2), C^2 / 2)``."""
        if self.cheeger is None:
            raise ValueError("exact Cheeger constant not computed")
        C = self.cheeger
        return 2 * C, self.lambda2, 1 - np.sqrt(1 - C * C), C * C / 2


def spectral_summary(g, cheeger=None, method="auto"):
    """Gap, largest eigenvalue and (optionally exact) Cheeger information.

    ``cheeger=None`` computes the exact constant when ``n <= 12``.
    """
    gm = as_matrices(g)
    lam2 = lambda2(gm, method=method)
    lmax = _lambda_max(gm, method)
    if cheeger is None:
        cheeger = gm.n <= 12
    C = cheeger_exact(gm) if cheeger else None
    return SpectralSummary(lam2, lmax, C, cheeger_bounds(lam2))


# -- pseudoinverses ---------------------------------------------------------


def star_inverse(M, d):
    """Degree-normalized pseudoinverse ``M* = D^{-1/2}(D^{-1/2} M D^{-1/2})^+ D^{-1/2}``.

    ``M`` must be symmetric PSD with null space spanned by the ones vector
    (as for ``L`` or ``B'M_X B`` on a connected graph); the result is then
    ``(M + dd'/vol)^{-1} - 11'/vol``.
    """
    M = M.toarray() if sparse.issparse(M) else np.asarray(M, dtype=float)
    d = np.asarray(d, dtype=float)
    vol = d.sum()
    aug = M + np.outer(d, d) / vol
    try:
        c = sla.cho_factor(aug)
    except sla.LinAlgError:
        raise DisconnectedGraphError("augmented matrix singular; graph disconnected or rank-deficient") from None
    inv = sla.cho_solve(c, np.eye(d.size))
    out = inv - 1.0 / vol
    return (out + out.T) / 2


def star_inverse_eigen(M, d):
    """Same as :func:`star_inverse` through an eigendecomposition of the
    normalized matrix; kept as an independent route."""
    M = M.toarray() if sparse.issparse(M) else np.asarray(M, dtype=float)
    r = 1.0 / np.sqrt(np.asarray(d, dtype=float))
    Sm = r[:, None] * M * r[None, :]
    ev, V = sla.eigh(Sm)
    keep = ev > ev.max() * 1e-10
    Sp = (V[:, keep] / ev[keep]) @ V[:, keep].T
    return r[:, None] * Sp * r[None, :]


def _augmented_operator(gm):
    d, vol = gm.d, gm.vol
    L = gm.L

    def mv(x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return L @ x + d * (d @ x) / vol
        return L @ x + np.outer(d, d @ x) / vol

    n = gm.n
    op = spla.LinearOperator((n, n), matvec=mv, matmat=mv, dtype=float)
    precond = spla.LinearOperator((n, n), matvec=lambda x: x / (d + d * d / vol), dtype=float)
    return op, precond


def lstar_solve(gm, b, method="auto", rtol=1e-12, maxiter=None):
    """Apply ``L*`` to a vector or to the columns of a matrix.

    ``method="dense"`` factors the augmented matrix once; ``"cg"`` runs
    Jacobi-preconditioned conjugate gradients on ``(L + dd'/vol) x = b`` per
    column and then subtracts ``(1'b)/vol``.
    """
    gm = as_matrices(gm)
    b = np.asarray(b, dtype=float)
    if method == "auto":
        method = "dense" if gm.n <= DENSE_MAX else "cg"
    vol = gm.vol
    if method == "dense":
        aug = gm.L.toarray() + np.outer(gm.d, gm.d) / vol
        x = sla.cho_solve(sla.cho_factor(aug), b)
        return x - b.sum(axis=0) / vol
    if method != "cg":
        raise ValueError(f"unknown method {method!r}")
    op, pre = _augmented_operator(gm)
    cols = b[:, None] if b.ndim == 1 else b
    out = np.empty_like(cols)
    for k in range(cols.shape[1]):
        x, info = spla.cg(op, cols[:, k], rtol=rtol, atol=0.0, maxiter=maxiter, M=pre)
        if info != 0:
            res = np.linalg.norm(op @ x - cols[:, k])
            raise ConvergenceError("L* solve: conjugate gradients did not converge", res)
        out[:, k] = x - cols[:, k].sum() / vol
    return out[:, 0] if b.ndim == 1 else out


@dataclass(frozen=True, eq=False)
class PseudoinverseBundle:
    """``L*`` (dense array or linear operator) and the diagonal of ``S^+``."""

    Lstar: object
    diag_Sdag: np.ndarray
    method: str

    def apply(self, b):
        return self.Lstar @ b


def pseudoinverse_star(gm, method="linear-solve"):
    """Compute ``L*`` for a connected graph.

    Parameters
    ----------
    method : {"linear-solve", "dense-eigen", "implicit"}
        ``"linear-solve"`` inverts ``L + dd'/vol`` densely;
        ``"dense-eigen"`` goes through the eigendecomposition of ``S``;
        ``"implicit"`` returns a matrix-free operator whose columns come from
        conjugate-gradient solves (the diagonal is then obtained column by
        column).
    """
    gm = as_matrices(gm)
    _check_connected(gm)
    if method == "linear-solve":
        Ls = star_inverse(gm.L, gm.d)
    elif method == "dense-eigen":
        Ls = star_inverse_eigen(gm.L, gm.d)
    elif method == "implicit":
        n = gm.n
        op = spla.LinearOperator(
            (n, n),
            matvec=lambda x: lstar_solve(gm, x, method="cg"),
            matmat=lambda X: lstar_solve(gm, X, method="cg"),
            dtype=float,
        )
        diag = np.array([lstar_solve(gm, np.eye(1, n, i).ravel(), method="cg")[i] for i in range(n)])
        return PseudoinverseBundle(op, gm.d * diag, method)
    else:
        raise ValueError(f"unknown method {method!r}")
    return PseudoinverseBundle(Ls, gm.d * np.diag(Ls), method)


@dataclass(frozen=True)
class DiagSdag:
    """Diagonal of ``S^+``; ``stderr`` is set for the stochastic estimate."""

    values: np.ndarray
    stderr: np.ndarray = None
    method: str = "exact"

    @property
    def approximate(self):
        return self.stderr is not None


def diag_Sdag(g, mode="exact", k_probes=64, seed=0, method="auto"):
    """Diagonal of the pseudoinverse of the normalized Laplacian.

    ``(S^+)_ii = d_i (L*)_ii`` is the ratio of the exact homoskedastic
    variance of the vertex effect to its first-order approximation
    ``sigma^2 / d_i``.

    ``mode="stochastic"`` uses Rademacher probes ``z`` and the estimator
    ``mean_k z_k * (S^+ z_k)``, reporting a per-entry standard error.  It is
    an approximation meant for very large graphs.
    """
    gm = as_matrices(g)
    _check_connected(gm)
    if mode == "exact":
        if method == "auto":
            method = "dense" if gm.n <= DENSE_MAX else "cg"
        if method == "dense":
            Ls = star_inverse(gm.L, gm.d)
            return DiagSdag(gm.d * np.diag(Ls))
        diag = np.empty(gm.n)
        for i in range(gm.n):
            e = np.zeros(gm.n)
            e[i] = 1.0
            diag[i] = lstar_solve(gm, e, method="cg")[i]
        return DiagSdag(gm.d * diag)
    if mode != "stochastic":
        raise ValueError(f"unknown mode {mode!r}")
    if k_probes < 8:
        raise ValueError("stochastic mode needs k_probes >= 8")
    n = gm.n
    sq = np.sqrt(gm.d)
    samples = np.empty((k_probes, n))
    ss = np.random.SeedSequence(seed)
    for k, child in enumerate(ss.spawn(k_probes)):
        z = np.random.default_rng(child).choice([-1.0, 1.0], size=n)
        # S^+ z = D^{1/2} L* D^{1/2} z
        samples[k] = z * sq * lstar_solve(gm, sq * z, method=method)
    est = samples.mean(axis=0)
    se = samples.std(axis=0, ddof=1) / np.sqrt(k_probes)
    return DiagSdag(est, se, "stochastic")

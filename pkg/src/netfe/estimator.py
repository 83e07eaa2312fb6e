"""Constrained least-squares estimation of vertex effects.

The model is ``y = B alpha + X beta + u`` with the normalization
``d'alpha = 0``.  The estimators are

    beta  = (X' M_B X)^{-1} X' M_B y,        M_B = I - B L* B'
    alpha = L* B' (y - X beta),

which equals ``(B' M_X B)* B' M_X y``.  All products with ``L*`` go through
:func:`netfe.spectral.lstar_solve`, so large sparse graphs never form ``L*``.
"""

import csv
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .bipartite import demean_type1, q_and_w, stack_two_way
from .exceptions import DisconnectedGraphError, RankError
from .graph import is_connected
from .spectral import _check_connected, as_matrices, lstar_solve

__all__ = [
    "RANK_TOL",
    "RankReport",
    "FixedEffectFit",
    "EtaRoutes",
    "fit_alpha_known_beta",
    "fit_full",
    "fit_alternative_normalization",
    "fit_eta_three_ways",
    "plain_first_difference",
    "write_fit_csv",
    "fit_to_dict",
    "fit_to_json",
]

RANK_TOL = 1e-10


@dataclass(frozen=True)
class RankReport:
    """Outcome of the rank checks.

    ``deficiency`` is ``p + n - 1 - rank((X, B))``.
    """

    rank_X_full: bool
    rank_XB_full: bool
    connected: bool
    deficiency: int = 0


@dataclass(frozen=True, eq=False)
class FixedEffectFit:
    """Estimated vertex effects, slopes and residuals.

    ``normalization`` is ``"d-weighted"`` (``d'alpha = 0``) or
    ``"mean-zero"`` (``1'alpha = 0``).
    """

    alpha: np.ndarray
    beta: np.ndarray
    residuals: np.ndarray
    normalization: str
    rank_report: RankReport
    gm: object = field(repr=False)
    y: np.ndarray = field(repr=False)
    X: np.ndarray = field(repr=False)

    @property
    def n(self):
        return self.gm.n

    @property
    def m(self):
        return self.gm.m

    @property
    def p(self):
        return int(self.X.shape[1])

    def normalization_residual(self):
        """Relative violation of the active normalization."""
        a = self.alpha
        na = np.linalg.norm(a)
        if na == 0:
            return 0.0
        if self.normalization == "d-weighted":
            return abs(self.gm.d @ a) / (np.linalg.norm(self.gm.d) * na)
        return abs(a.sum()) / (np.sqrt(a.size) * na)


def _as_2d(X, m):
    if X is None:
        return np.zeros((m, 0))
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] != m:
        raise ValueError(f"X has {X.shape[0]} rows, expected {m}")
    return X


def _column_rank(X):
    if X.shape[1] == 0:
        return 0
    R = sla.qr(X, mode="r", pivoting=True)[0]
    diag = np.abs(np.diag(R))
    scale = np.linalg.norm(X, axis=0).max()
    return int(np.sum(diag > RANK_TOL * scale))


def _check_rank(gm, X):
    """Check ``rank X = p`` and ``rank (X, B) = p + n - 1``.

    Returns ``(report, MBX)`` where ``MBX = M_B X``.
    """
    p = X.shape[1]
    if _column_rank(X) < p:
        raise RankError("collinear covariates", deficiency=p - _column_rank(X))
    if p == 0:
        return RankReport(True, True, True, 0), X
    MBX = X - gm.B @ lstar_solve(gm, gm.B.T @ X)
    # eigenvalues of (X'X)^{-1/2} X'M_B X (X'X)^{-1/2} lie in [0, 1]
    XtX = X.T @ X
    ev = sla.eigvalsh(X.T @ MBX, XtX)
    deficiency = int(np.sum(ev < RANK_TOL * 1e2))
    if deficiency:
        raise RankError(
            f"covariates collinear with network dummies (deficiency {deficiency})",
            deficiency=deficiency,
        )
    return RankReport(True, True, True, 0), MBX


def fit_alpha_known_beta(g, z):
    """Estimate ``alpha`` from ``z = y - X beta`` with ``beta`` known.

    Returns ``L* B' z``, which satisfies ``d'alpha = 0``.
    """
    gm = as_matrices(g)
    _check_connected(gm)
    z = np.asarray(z, dtype=float)
    if z.shape != (gm.m,):
        raise ValueError(f"z must have shape ({gm.m},)")
    return lstar_solve(gm, gm.B.T @ z)


def fit_full(g, y, X=None):
    """Joint least-squares estimate of ``(alpha, beta)`` under ``d'alpha = 0``.

    Parameters
    ----------
    g : Graph or GraphMatrices
        Connected graph; ``GraphMatrices`` may carry a non-default edge
        orientation.
    y : ndarray, shape (m,)
    X : ndarray, shape (m, p), optional

    Raises
    ------
    DisconnectedGraphError
    RankError
        ``"collinear covariates"`` or ``"covariates collinear with network
        dummies"`` with the deficiency dimension.
    """
    gm = as_matrices(g)
    _check_connected(gm)
    y = np.asarray(y, dtype=float)
    if y.shape != (gm.m,):
        raise ValueError(f"y must have shape ({gm.m},)")
    X = _as_2d(X, gm.m)
    report, MBX = _check_rank(gm, X)
    if X.shape[1]:
        beta = sla.solve(X.T @ MBX, MBX.T @ y, assume_a="sym")
        z = y - X @ beta
    else:
        beta = np.zeros(0)
        z = y
    alpha = lstar_solve(gm, gm.B.T @ z)
    resid = z - gm.B @ alpha
    return FixedEffectFit(alpha, beta, resid, "d-weighted", report, gm, y, X)


def fit_alternative_normalization(fit):
    """Re-express a fit under ``1'alpha = 0``; differences are unchanged."""
    a = fit.alpha - fit.alpha.mean()
    return FixedEffectFit(a, fit.beta, fit.residuals, "mean-zero", fit.rank_report, fit.gm, fit.y, fit.X)


@dataclass(frozen=True)
class EtaRoutes:
    """Type-2 effects from three estimation routes, each mean-zero."""

    joint: np.ndarray
    profiled: np.ndarray
    weighted_fd: np.ndarray
    beta: np.ndarray

    def max_discrepancy(self):
        r = (self.joint, self.profiled, self.weighted_fd)
        scale = max(1.0, np.abs(self.joint).max())
        return max(np.abs(a - b).max() for a in r for b in r) / scale


def _ls_eta(Z2, ZX, t, n2):
    design = np.hstack([Z2, ZX])
    coef = sla.lstsq(design, t, lapack_driver="gelsd")[0]
    eta = coef[:n2]
    return eta - eta.mean(), coef[n2:]


def fit_eta_three_ways(bd):
    """Type-2 effects by joint, profiled and weighted first-difference LS.

    The joint route fits the stacked graph ``(B1, -B2)`` and maps
    ``eta = -alpha`` on the type-2 block.  The profiled route regresses
    ``M_B1 y`` on ``(M_B1 B2, M_B1 X)`` and the weighted first-difference
    route regresses ``WQy`` on ``(WQB2, WQX)``.  All three are returned
    with mean-zero ``eta``.
    """
    g, pmap = stack_two_way(bd)
    if not is_connected(g):
        raise DisconnectedGraphError()
    fit = fit_full(g, bd.y, bd.X)
    _, eta = pmap.split(fit.alpha)
    joint = eta - eta.mean()

    B2 = bd.B2().toarray()
    prof, _ = _ls_eta(demean_type1(bd, B2), demean_type1(bd, bd.X), demean_type1(bd, bd.y), bd.n2)

    Q, W = q_and_w(bd)
    WQ = (W @ Q).tocsr()
    wfd, _ = _ls_eta((WQ @ B2), WQ @ bd.X, WQ @ bd.y, bd.n2)
    return EtaRoutes(joint, prof, wfd, fit.beta)


def plain_first_difference(bd):
    """Unweighted LS on first differences ``Qy``; not equivalent in general."""
    Q, _ = q_and_w(bd)
    B2 = bd.B2().toarray()
    eta, _ = _ls_eta(Q @ B2, Q @ bd.X, Q @ bd.y, bd.n2)
    return eta


def write_fit_csv(fit, se, path, ids=None):
    """Write ``vertex_id,alpha,se`` rows."""
    ids = fit.gm.graph.ids if ids is None else ids
    se = np.full(fit.n, np.nan) if se is None else np.asarray(se)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["vertex_id", "alpha", "se"])
        for v, a, s in zip(ids, fit.alpha, se):
            w.writerow([v, repr(float(a)), repr(float(s))])


def fit_to_dict(fit):
    """JSON-serializable representation of a fit."""
    rr = fit.rank_report
    return {
        "normalization": fit.normalization,
        "n": fit.n,
        "m": fit.m,
        "p": fit.p,
        "vertex_ids": [str(v) for v in fit.gm.graph.ids],
        "alpha": fit.alpha.tolist(),
        "beta": fit.beta.tolist(),
        "residuals": fit.residuals.tolist(),
        "rank_report": {
            "rank_X_full": rr.rank_X_full,
            "rank_XB_full": rr.rank_XB_full,
            "connected": rr.connected,
            "deficiency": rr.deficiency,
        },
    }


def fit_to_json(fit, **kw):
    return json.dumps(fit_to_dict(fit), **kw)

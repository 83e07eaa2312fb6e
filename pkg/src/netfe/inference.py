"""Connectivity statistics, finite-sample variance bounds and standard errors.

All bounds assume homoskedastic errors with variance ``sigma2`` and
return the exact variance alongside, computed from a dense pseudoinverse,
so containment can be checked directly.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .estimator import _as_2d, _column_rank
from .exceptions import NetFEError, RankError
from .spectral import (
    DENSE_MAX,
    _check_connected,
    as_matrices,
    diag_Sdag,
    lambda2,
    lstar_solve,
    star_inverse,
)

__all__ = [
    "DECILE_COLUMNS",
    "ConnectivityReport",
    "VertexBounds",
    "PairBounds",
    "GapBound",
    "MeanZeroBounds",
    "StandardErrors",
    "Diagnostics",
    "decile_table",
    "harmonic_means",
    "connectivity_report",
    "rho_and_xbar",
    "vertex_variance_bounds",
    "difference_variance_bounds",
    "covariate_gap_bound",
    "mean_zero_variance_bounds",
    "lstar_x",
    "sigma2_hat",
    "standard_errors",
    "diagnostics",
    "report_dict",
]

DECILE_COLUMNS = ["mean", "sd"] + [f"p{10 * k}" for k in range(1, 10)]


def decile_table(values):
    """Mean, standard deviation (ddof=1) and deciles 1..9 of ``values``."""
    v = np.asarray(values, dtype=float)
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    dec = np.quantile(v, np.arange(1, 10) / 10)
    return dict(zip(DECILE_COLUMNS, [float(v.mean()), sd] + [float(q) for q in dec]))


def harmonic_means(gm):
    """Per-vertex and global harmonic-mean degrees.

    Returns
    -------
    dict with ``h_i``, ``H_i``, ``h_i2`` (per vertex) and ``h``, ``H``.
    """
    gm = as_matrices(gm)
    d = gm.d
    A = gm.A
    inv_d = 1.0 / d
    h_i = d / (A.multiply(A) @ inv_d)
    h_i2 = d / (A @ inv_d)
    # H_i sums over the distinct neighbors j of i, unweighted
    P = A.copy()
    P.data[:] = 1.0
    H_i = 1.0 / ((h_i / d) * (P @ (1.0 / (d * h_i))))
    n = gm.n
    h = 1.0 / np.mean(inv_d)
    H = 1.0 / np.sum((h / n) / (d * h_i))
    return {"h_i": h_i, "H_i": H_i, "h_i2": h_i2, "h": float(h), "H": float(H)}


@dataclass(frozen=True, eq=False)
class ConnectivityReport:
    """Per-vertex and global connectivity statistics of a connected graph."""

    ids: np.ndarray
    d: np.ndarray
    h_i: np.ndarray
    H_i: np.ndarray
    h_i2: np.ndarray
    diag_Sdag: np.ndarray
    lambda2: float
    h: float
    H: float
    n: int
    m: int
    rho: float = None
    rho_literal: float = None
    sdag_stderr: np.ndarray = field(default=None, repr=False)

    def deciles(self):
        """Decile tables for every per-vertex statistic."""
        return {
            "d": decile_table(self.d),
            "h_i": decile_table(self.h_i),
            "H_i": decile_table(self.H_i),
            "h_i2": decile_table(self.h_i2),
            "Sdag_ii": decile_table(self.diag_Sdag),
        }

    def format_table(self):
        """Aligned plain-text decile table."""
        rows = self.deciles()
        head = f"{'':>8}" + "".join(f"{c:>10}" for c in DECILE_COLUMNS)
        lines = [head]
        for name, t in rows.items():
            lines.append(f"{name:>8}" + "".join(f"{t[c]:>10.4g}" for c in DECILE_COLUMNS))
        return "\n".join(lines)


def connectivity_report(g, X=None, sdag_mode="exact", k_probes=64, seed=0):
    """Compute a :class:`ConnectivityReport`.

    ``sdag_mode="stochastic"`` estimates ``diag(S^+)`` with random probes
    (see :func:`netfe.spectral.diag_Sdag`) for very large graphs.
    """
    gm = as_matrices(g)
    _check_connected(gm)
    hm = harmonic_means(gm)
    lam2 = lambda2(gm)
    ds = diag_Sdag(gm, mode=sdag_mode, k_probes=k_probes, seed=seed)
    rho = rho_lit = None
    if X is not None and _as_2d(X, gm.m).shape[1] > 0:
        r = rho_and_xbar(gm, X)
        rho, rho_lit = r["rho"], r["rho_literal"]
    return ConnectivityReport(
        gm.graph.ids, gm.d, hm["h_i"], hm["H_i"], hm["h_i2"], ds.values, lam2,
        hm["h"], hm["H"], gm.n, gm.m, rho, rho_lit, ds.stderr,
    )


def rho_and_xbar(gm, X):
    """Non-collinearity measure between covariates and network dummies.

    ``rho`` is the smallest eigenvalue of
    ``(X'X)^{-1/2} X'M_B X (X'X)^{-1/2}``, equivalently ``1 - ||C~||_2``
    with ``C~ = (X'X)^{-1/2} X'B L* B'X (X'X)^{-1/2}``; it lies in
    ``[0, 1]``.  ``rho_literal`` is ``||(X'X)^{-1} X'M_B X||_2``, the
    spectral norm taken at face value, reported for comparison.

    Returns
    -------
    dict with ``rho``, ``rho_literal``, ``xbar`` (``n x p``, rows
    ``X'b_i / d_i``), ``Omega`` (``X'X / m``) and ``Ctilde``.
    """
    gm = as_matrices(gm)
    X = _as_2d(X, gm.m)
    p = X.shape[1]
    if p == 0 or _column_rank(X) < p:
        raise RankError("collinear covariates" if p else "rho requires p >= 1")
    XtX = X.T @ X
    BtX = gm.B.T @ X
    K = BtX.T @ lstar_solve(gm, BtX)
    w, V = sla.eigh(XtX)
    R = (V / np.sqrt(w)) @ V.T
    Ct = R @ K @ R
    Ct = (Ct + Ct.T) / 2
    ev = sla.eigvalsh(Ct)
    rho = float(np.clip(1.0 - ev[-1], 0.0, 1.0))
    rho_lit = float(np.linalg.norm(sla.solve(XtX, XtX - K), 2))
    return {
        "rho": rho,
        "rho_literal": rho_lit,
        "xbar": BtX / gm.d[:, None],
        "Omega": XtX / gm.m,
        "Ctilde": Ct,
    }


def _dense_lstar(gm):
    if gm.n > DENSE_MAX:
        raise NetFEError(f"n = {gm.n} > {DENSE_MAX}: exact variances need a dense pseudoinverse")
    return star_inverse(gm.L, gm.d)


@dataclass(frozen=True)
class VertexBounds:
    """Lower/upper bounds and exact value of ``var(alpha_i)`` per vertex."""

    lower: np.ndarray
    upper: np.ndarray
    exact: np.ndarray
    sigma2: float

    def contains(self, tol=1e-10):
        s = tol * np.maximum(1.0, np.abs(self.exact))
        return (self.lower - s <= self.exact) & (self.exact <= self.upper + s)


def vertex_variance_bounds(g, sigma2, lam2=None):
    """Two-sided bound on ``var(alpha_i)`` for the d-weighted estimator.

    ``sigma2/d_i - 2 sigma2/vol <= var <= (sigma2/d_i)(1 + 1/(lambda2 h_i)) - 2 sigma2/vol``
    with ``vol = sum_i d_i``.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    gm = as_matrices(g)
    _check_connected(gm)
    lam2 = lambda2(gm) if lam2 is None else lam2
    hm = harmonic_means(gm)
    d, vol = gm.d, gm.vol
    lower = sigma2 / d - 2 * sigma2 / vol
    upper = (sigma2 / d) * (1 + 1 / (lam2 * hm["h_i"])) - 2 * sigma2 / vol
    exact = sigma2 * np.diag(_dense_lstar(gm))
    return VertexBounds(lower, upper, exact, float(sigma2))


@dataclass(frozen=True)
class PairBounds:
    """Bounds on ``var(alpha_i - alpha_j)``.

    ``h_ij`` is ``None`` when ``i`` and ``j`` have no common neighbor.
    """

    i: int
    j: int
    lower: float
    upper: float
    exact: float
    d_ij: float
    h_ij: float

    def contains(self, tol=1e-10):
        s = tol * max(1.0, abs(self.exact))
        return self.lower - s <= self.exact <= self.upper + s


def difference_variance_bounds(g, sigma2, i, j, lam2=None):
    """Two-sided bound on ``var(alpha_i - alpha_j)`` for compact vertices ``i != j``.

    The lower value is ``sigma2 (1/d_i + 1/d_j - 2 A_ij/(d_i d_j))``; the
    upper adds ``(sigma2/lambda2)(1/(d_i h_i) + 1/(d_j h_j) - 2 d_ij/(d_i d_j h_ij))``
    where ``d_ij = sum_k A_ik A_jk`` and ``h_ij`` is the harmonic mean of
    the common neighbors' degrees (the last term vanishes when ``d_ij = 0``).
    """
    if i == j:
        raise ValueError("i and j must differ")
    gm = as_matrices(g)
    _check_connected(gm)
    lam2 = lambda2(gm) if lam2 is None else lam2
    hm = harmonic_means(gm)
    d, h = gm.d, hm["h_i"]
    ai = gm.A.getrow(i).toarray().ravel()
    aj = gm.A.getrow(j).toarray().ravel()
    d_ij = float(ai @ aj)
    dij_over_hij = float((ai * aj) @ (1.0 / d))
    h_ij = d_ij / dij_over_hij if d_ij > 0 else None
    a_ij = ai[j]
    lower = sigma2 * (1 / d[i] + 1 / d[j] - 2 * a_ij / (d[i] * d[j]))
    upper = lower + (sigma2 / lam2) * (
        1 / (d[i] * h[i]) + 1 / (d[j] * h[j]) - 2 * dij_over_hij / (d[i] * d[j])
    )
    Ls = _dense_lstar(gm)
    exact = sigma2 * (Ls[i, i] + Ls[j, j] - 2 * Ls[i, j])
    return PairBounds(int(i), int(j), float(lower), float(upper), float(exact), d_ij, h_ij)


def lstar_x(gm, X):
    """Dense ``(B' M_X B)*``, the pseudoinverse relevant with covariates."""
    gm = as_matrices(gm)
    X = _as_2d(X, gm.m)
    if X.shape[1] == 0:
        return _dense_lstar(gm)
    if gm.n > DENSE_MAX:
        raise NetFEError(f"n = {gm.n} > {DENSE_MAX}: exact variances need a dense pseudoinverse")
    BtX = gm.B.T @ X
    M = gm.L.toarray() - BtX @ sla.solve(X.T @ X, BtX.T, assume_a="pos")
    return star_inverse(M, gm.d)


@dataclass(frozen=True)
class GapBound:
    """Bound on the variance increase caused by estimating ``beta``."""

    bound: np.ndarray
    gap: np.ndarray
    rho: float
    sigma2: float

    def contains(self, tol=1e-10):
        s = tol * np.maximum(1.0, np.abs(self.gap).max())
        return (self.gap >= -s) & (self.gap <= self.bound + s)


def covariate_gap_bound(g, X, sigma2, lam2=None):
    """Bound on ``var(alpha_check_i) - var(alpha_hat_i)``.

    The bound is ``(2 sigma2/rho)((1 - rho)/(lambda2 d_i h_i) + xbar_i' Omega^{-1} xbar_i / m)``.
    The exact gap ``sigma2 [(B'M_X B)*_ii - L*_ii]`` is returned with it.

    Raises
    ------
    RankError
        When ``p = 0`` or ``rho`` is zero within tolerance ("X collinear with B").
    """
    gm = as_matrices(g)
    _check_connected(gm)
    X = _as_2d(X, gm.m)
    if X.shape[1] == 0:
        raise RankError("covariate gap bound requires p >= 1")
    r = rho_and_xbar(gm, X)
    rho = r["rho"]
    if rho <= 1e-10:
        raise RankError("X collinear with B")
    lam2 = lambda2(gm) if lam2 is None else lam2
    h = harmonic_means(gm)["h_i"]
    xb = r["xbar"]
    q = np.einsum("ij,ij->i", xb, sla.solve(r["Omega"], xb.T, assume_a="pos").T)
    bound = (2 * sigma2 / rho) * ((1 - rho) / (lam2 * gm.d * h) + q / gm.m)
    gap = sigma2 * (np.diag(lstar_x(gm, X)) - np.diag(_dense_lstar(gm)))
    return GapBound(bound, gap, rho, float(sigma2))


@dataclass(frozen=True)
class MeanZeroBounds:
    """Bounds on ``var`` of the mean-zero normalized effects.

    ``global_upper`` is the eigenvalue-based bound; ``lower``/``upper`` the
    first-order two-sided bound; ``exact`` is ``sigma2 (M L* M)_ii``.
    """

    global_upper: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    exact: np.ndarray
    sigma2: float

    def contains(self, tol=1e-10):
        s = tol * np.maximum(1.0, np.abs(self.exact))
        ok = (self.lower - s <= self.exact) & (self.exact <= self.upper + s)
        return ok & (self.exact <= self.global_upper + s)


def mean_zero_variance_bounds(g, sigma2, lam2=None):
    """Variance bounds for effects normalized by ``1'alpha = 0``.

    ``global_upper = (1/d_i)(sigma2/lambda2)(1 + d_i/(n h))``;
    ``lower = (sigma2/d_i)(1 - 2/n) - 2 sigma2/(n h_i2)`` and
    ``upper = (sigma2/d_i)(1 + 1/(lambda2 h_i)) + (sigma2/h)(2/n + 1/(lambda2 H))``.
    """
    gm = as_matrices(g)
    _check_connected(gm)
    lam2 = lambda2(gm) if lam2 is None else lam2
    hm = harmonic_means(gm)
    d, n = gm.d, gm.n
    h, H = hm["h"], hm["H"]
    glob = (1 / d) * (sigma2 / lam2) * (1 + d / (n * h))
    lower = (sigma2 / d) * (1 - 2 / n) - 2 * sigma2 / (n * hm["h_i2"])
    upper = (sigma2 / d) * (1 + 1 / (lam2 * hm["h_i"])) + (sigma2 / h) * (2 / n + 1 / (lam2 * H))
    Ls = _dense_lstar(gm)
    Mc = Ls - Ls.mean(axis=0)
    Mc = Mc - Mc.mean(axis=1, keepdims=True)
    exact = sigma2 * np.diag(Mc)
    return MeanZeroBounds(glob, lower, upper, exact, float(sigma2))


# -- standard errors --------------------------------------------------------


def sigma2_hat(fit):
    """Unbiased homoskedastic error variance ``u'u / (m - (n - 1) - p)``."""
    dof = fit.m - (fit.n - 1) - fit.p
    if dof <= 0:
        raise NetFEError("no residual degrees of freedom")
    return float(fit.residuals @ fit.residuals / dof)


@dataclass(frozen=True)
class StandardErrors:
    """Per-vertex standard errors; ``mode`` names the variance estimator."""

    se: np.ndarray
    mode: str
    sigma2: float = None


def standard_errors(fit, mode="plugin-unscaled"):
    """Standard errors of the d-weighted vertex effects.

    Parameters
    ----------
    mode : {"plugin", "plugin-unscaled", "homoskedastic"}
        ``"plugin"`` uses ``Sigma = diag(u u')/m`` as printed in the source
        display, ``"plugin-unscaled"`` uses ``diag(u u')``; both give
        ``se_i = sqrt(sum_e B_ei^2 u_e^2 [/ m]) / d_i``.  ``"homoskedastic"``
        gives ``sigma_hat sqrt(L*_ii)`` (``(B'M_X B)*_ii`` when ``p > 0``).
    """
    gm = fit.gm
    u2 = fit.residuals ** 2
    if mode in ("plugin", "plugin-unscaled"):
        B2 = gm.B.multiply(gm.B)
        q = B2.T @ u2
        if mode == "plugin":
            q = q / fit.m
        return StandardErrors(np.sqrt(q) / gm.d, mode)
    if mode == "homoskedastic":
        s2 = sigma2_hat(fit)
        if fit.p == 0:
            diag = diag_Sdag(gm).values / gm.d
        else:
            diag = np.diag(lstar_x(gm, fit.X))
        return StandardErrors(np.sqrt(s2 * np.clip(diag, 0, None)), mode, s2)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True, eq=False)
class Diagnostics:
    """Precision diagnostics for a connected graph.

    ``ratio`` is ``(S^+)_ii = d_i L*_ii``, the exact variance of a vertex
    effect relative to its first-order approximation ``sigma2 / d_i``.
    ``ci_exact`` and ``ci_approx`` are 95% interval widths
    ``2 * 1.96 * sqrt(var)`` under the exact and approximate variance.
    """

    ratio: np.ndarray
    trace_Lstar_over_nm1: float
    inv_h: float
    ci_exact: np.ndarray
    ci_approx: np.ndarray
    sigma2: float

    def deciles(self):
        return {
            "Sdag_ii": decile_table(self.ratio),
            "ci_exact": decile_table(self.ci_exact),
            "ci_approx": decile_table(self.ci_approx),
        }


def diagnostics(g, fit=None, sigma2=None):
    """Ratios ``(S^+)_ii``, ``tr(L*)/(n-1)``, ``1/h`` and CI widths.

    ``sigma2`` defaults to the homoskedastic estimate from ``fit`` when one
    is given, else 1.
    """
    gm = as_matrices(g)
    _check_connected(gm)
    if sigma2 is None:
        sigma2 = sigma2_hat(fit) if fit is not None else 1.0
    ratio = diag_Sdag(gm).values
    lstar_diag = ratio / gm.d
    hm = harmonic_means(gm)
    return Diagnostics(
        ratio,
        float(lstar_diag.sum() / (gm.n - 1)),
        1.0 / hm["h"],
        2 * 1.96 * np.sqrt(sigma2 * lstar_diag),
        2 * 1.96 * np.sqrt(sigma2 / gm.d),
        float(sigma2),
    )


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if np.isfinite(x) else None


def report_dict(rep, bounds=None, se=None, diag=None):
    """JSON-ready report.

    Layout: ``{"global": {...}, "vertices": [...], "deciles": {...}}``.
    """
    glob = {
        "lambda2": _num(rep.lambda2),
        "h": _num(rep.h),
        "H": _num(rep.H),
        "rho": _num(rep.rho),
        "rho_literal": _num(rep.rho_literal),
        "trace_Lstar_over_nm1": _num(diag.trace_Lstar_over_nm1) if diag else float(np.sum(rep.diag_Sdag / rep.d) / (rep.n - 1)),
        "m": rep.m,
        "n": rep.n,
    }
    if diag is not None:
        glob["inv_h"] = _num(diag.inv_h)
        glob["sigma2"] = _num(diag.sigma2)
    if se is not None:
        glob["se_mode"] = se.mode
    verts = []
    for k in range(rep.n):
        v = {
            "id": str(rep.ids[k]),
            "d": _num(rep.d[k]),
            "h_i": _num(rep.h_i[k]),
            "H_i": _num(rep.H_i[k]),
            "h_i2": _num(rep.h_i2[k]),
            "Sdag_ii": _num(rep.diag_Sdag[k]),
        }
        if bounds is not None:
            v["var_exact"] = _num(bounds.exact[k])
            v["lower"] = _num(bounds.lower[k])
            v["upper"] = _num(bounds.upper[k])
        if se is not None:
            v["se"] = _num(se.se[k])
        verts.append(v)
    dec = rep.deciles()
    if diag is not None:
        dec.update({k: t for k, t in diag.deciles().items() if k != "Sdag_ii"})
    return {"global": glob, "vertices": verts, "deciles": dec}

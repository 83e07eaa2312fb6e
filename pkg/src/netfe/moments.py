"""Moments of estimated vertex effects and their bias corrections.

Sampling noise in the estimated effects inflates moments such as their
sample variance.  Under homoskedastic errors the upward bias of the sample
variance is ``sigma2 tr(M L* M)/(n-1)`` with ``M = I - 11'/n``; for a
smooth functional ``tau = mean(phi(alpha_i))`` the leading bias is
``mean(phi''(alpha_i)/2 * b_i' Sigma b_i / d_i^2)``.
"""

from dataclasses import dataclass

import numpy as np

from .inference import lstar_x, sigma2_hat, standard_errors
from .spectral import DENSE_MAX, _check_connected, as_matrices, diag_Sdag, lstar_solve

__all__ = [
    "MomentEstimate",
    "VarianceBias",
    "sample_variance",
    "variance_bias_homoskedastic",
    "bias_corrected_variance",
    "functional_bias",
]


@dataclass(frozen=True)
class MomentEstimate:
    """Plug-in moment, its estimated bias and the corrected value.

    ``tau_corrected`` is always ``tau_hat - bias_hat``.
    """

    tau_hat: float
    bias_hat: float
    functional: str
    bias_literal: float = None

    @property
    def tau_corrected(self):
        return self.tau_hat - self.bias_hat


@dataclass(frozen=True)
class VarianceBias:
    """Bias of the sample variance of the estimated effects.

    ``literal`` is ``sigma2 tr(L*)/(n-1)``; ``exact`` is
    ``sigma2 tr(M L* M)/(n-1)``, the exact expectation of the excess given
    that the sample variance demeans with ``M``.
    """

    literal: float
    exact: float


def sample_variance(fit):
    """``alpha' M alpha / (n - 1)`` for a fit or a plain vector."""
    a = np.asarray(getattr(fit, "alpha", fit), dtype=float)
    if a.size < 2:
        raise ValueError("sample variance needs n >= 2")
    return float(np.var(a, ddof=1))


def _traces(gm, X=None):
    """``(tr(P), 1'P1)`` for ``P = L*`` or ``(B'M_X B)*``."""
    if X is not None and np.asarray(X).size and np.asarray(X).shape[-1] > 0:
        P = lstar_x(gm, X)
        return float(np.trace(P)), float(P.sum())
    if gm.n <= DENSE_MAX:
        P = lstar_x(gm, None)
        return float(np.trace(P)), float(P.sum())
    tr = float(np.sum(diag_Sdag(gm).values / gm.d))
    one = np.ones(gm.n)
    return tr, float(one @ lstar_solve(gm, one))


def variance_bias_homoskedastic(g, sigma2, X=None):
    """Bias of the sample variance of the estimated effects.

    Returns both the trace of ``L*`` and the trace of ``M L* M`` versions
    (with ``(B'M_X B)*`` in place of ``L*`` when covariates are given).
    """
    gm = as_matrices(g)
    _check_connected(gm)
    tr, s = _traces(gm, X)
    n = gm.n
    return VarianceBias(sigma2 * tr / (n - 1), sigma2 * (tr - s / n) / (n - 1))


def bias_corrected_variance(fit, sigma2=None):
    """Sample variance of the effects minus its homoskedastic bias.

    ``sigma2`` defaults to the unbiased residual estimate.  The correction
    uses the ``tr(M L* M)`` form; the ``tr(L*)`` value is kept in
    ``bias_literal``.
    """
    s2 = sigma2_hat(fit) if sigma2 is None else float(sigma2)
    vb = variance_bias_homoskedastic(fit.gm, s2, fit.X if fit.p else None)
    return MomentEstimate(sample_variance(fit), vb.exact, "sample variance", vb.literal)


def functional_bias(fit, phi, phi2, ses=None):
    """Plug-in estimate of ``mean(phi(alpha_i))`` and its leading bias.

    Parameters
    ----------
    phi, phi2 : callable
        The functional and its second derivative, applied elementwise.
    ses : StandardErrors, optional
        Source of ``b_i' Sigma b_i / d_i^2 = se_i^2``; defaults to the
        ``"plugin-unscaled"`` variant.
    """
    ses = standard_errors(fit, "plugin-unscaled") if ses is None else ses
    a = fit.alpha
    tau = float(np.mean(phi(a)))
    curv = np.broadcast_to(np.asarray(phi2(a), dtype=float), a.shape)
    bias = float(np.mean(curv / 2 * ses.se ** 2))
    return MomentEstimate(tau, bias, f"mean phi(alpha), {ses.mode}")

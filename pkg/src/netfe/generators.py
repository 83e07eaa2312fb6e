"""Synthetic graph families, bipartite fixtures and the Monte Carlo harness.

Every replication ``r`` of a simulation draws its errors from a Philox
generator keyed by ``SeedSequence([seed, stream, r])``, so results depend only on
``(seed, r)`` and never on how replications are scheduled across threads.
"""

import configparser
import hashlib
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import stats

from .bipartite import BipartiteData
from .exceptions import GraphInputError, NetFEError
from .graph import Graph, largest_component, matrices
from .spectral import DENSE_MAX, star_inverse

__all__ = [
    "PRNG",
    "erdos_renyi",
    "hypercube",
    "extended_hypercube",
    "star",
    "wheel",
    "random_connected",
    "random_bipartite",
    "analytic_lambda2",
    "make_graph",
    "DGPConfig",
    "SimulationSetup",
    "SimulationResult",
    "prepare",
    "draw",
    "simulate",
    "summarize",
    "thread_count",
]

PRNG = "numpy Philox4x64, key from SeedSequence([seed, stream, rep])"
CHUNK = 256
THREADS_ENV = "NETFE_THREADS"


def _rng(seed, *stream):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), *stream])))


# -- graph families ---------------------------------------------------------


def erdos_renyi(n, p, seed):
    """Simple random graph with independent edges of probability ``p``.

    All ``n`` vertices are kept, isolated ones included.
    """
    if n < 2:
        raise ValueError("n >= 2 required")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    rng = _rng(seed, 0)
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    if not keep.any():
        raise GraphInputError("empty edge list (m > 0 required)")
    return Graph.from_arrays(n, iu[keep], ju[keep])


def hypercube(N):
    """``N``-dimensional hypercube: ``2^N`` vertices, ``N 2^(N-1)`` edges."""
    if N < 1:
        raise ValueError("N >= 1 required")
    v = np.arange(1 << N)
    tail, head = [], []
    for k in range(N):
        u = v ^ (1 << k)
        s = v < u
        tail.append(v[s])
        head.append(u[s])
    t, h = np.concatenate(tail), np.concatenate(head)
    o = np.lexsort((h, t))
    return Graph.from_arrays(1 << N, t[o], h[o])


def extended_hypercube(N):
    """Hypercube plus edges between vertices at Hamming distance two."""
    if N < 1:
        raise ValueError("N >= 1 required")
    v = np.arange(1 << N)
    tail, head = [], []
    masks = [1 << k for k in range(N)] + [(1 << a) | (1 << b) for a in range(N) for b in range(a + 1, N)]
    for mk in masks:
        u = v ^ mk
        s = v < u
        tail.append(v[s])
        head.append(u[s])
    t, h = np.concatenate(tail), np.concatenate(head)
    o = np.lexsort((h, t))
    return Graph.from_arrays(1 << N, t[o], h[o])


def star(n):
    """Star on ``n`` vertices; vertex 1 is the center."""
    if n < 3:
        raise ValueError("n >= 3 required")
    return Graph.from_arrays(n, np.zeros(n - 1, dtype=int), np.arange(1, n))


def wheel(n):
    """Wheel on ``n`` vertices: center 1 joined to a cycle on the other ``n - 1``."""
    if n < 4:
        raise ValueError("n >= 4 required")
    rim = np.arange(1, n)
    nxt = np.roll(rim, -1)
    tail = np.concatenate([np.zeros(n - 1, dtype=int), np.minimum(rim, nxt)])
    head = np.concatenate([rim, np.maximum(rim, nxt)])
    return Graph.from_arrays(n, tail, head)


def analytic_lambda2(family, k):
    """Closed-form spectral gap of the named family.

    ``k`` is ``N`` for the hypercubes and the vertex count otherwise.
    """
    if family == "star":
        return 1.0
    if family == "hypercube":
        return 2.0 / k
    if family == "extended_hypercube":
        return 4.0 / (k + 1)
    if family == "wheel":
        return float(min(4.0 / 3.0, 1 - (2.0 / 3.0) * np.cos(2 * np.pi / (k - 1))))
    raise ValueError(f"no closed form for {family!r}")


def random_connected(n, p, seed):
    """Random spanning tree overlaid with an Erdos-Renyi graph, as a simple graph."""
    if n < 2:
        raise ValueError("n >= 2 required")
    rng = _rng(seed, 1)
    perm = rng.permutation(n)
    parent = perm[(rng.random(n - 1) * np.arange(1, n)).astype(int)]
    pairs = {(min(a, b), max(a, b)) for a, b in zip(parent, perm[1:])}
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    pairs.update(zip(iu[keep].tolist(), ju[keep].tolist()))
    e = np.array(sorted((int(a), int(b)) for a, b in pairs))
    return Graph.from_arrays(n, e[:, 0], e[:, 1])


def random_bipartite(n1, n2, edges_per_type1, seed, p=0):
    """Each type-1 unit matched to ``edges_per_type1`` distinct type-2 units.

    Outcomes are NaN and covariates empty unless ``p > 0`` (then standard
    normal).  Units that end up unmatched are dropped, so ``n2`` is an upper
    bound on the realized type-2 count.
    """
    if not 1 <= edges_per_type1 <= n2:
        raise ValueError("need 1 <= edges_per_type1 <= n2")
    rng = _rng(seed, 2)
    t1 = np.repeat(np.arange(n1), edges_per_type1)
    t2 = np.concatenate([np.sort(rng.choice(n2, edges_per_type1, replace=False)) for _ in range(n1)])
    used, t2c = np.unique(t2, return_inverse=True)
    X = rng.standard_normal((t1.size, p))
    ids1 = np.asarray(np.arange(1, n1 + 1), dtype=object)
    ids2 = np.asarray(used + 1, dtype=object)
    return BipartiteData(t1, t2c, np.full(t1.size, np.nan), X, ids1, ids2)


_FAMILIES = {
    "erdos_renyi": (erdos_renyi, ("n", "p", "seed")),
    "random_connected": (random_connected, ("n", "p", "seed")),
    "hypercube": (hypercube, ("n",)),
    "extended_hypercube": (extended_hypercube, ("n",)),
    "star": (star, ("n",)),
    "wheel": (wheel, ("n",)),
}


def make_graph(family, n, p=None, seed=0):
    """Build a family member by name (``n`` is ``N`` for the hypercubes)."""
    try:
        fn, args = _FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown family {family!r}; choose from {sorted(_FAMILIES)}") from None
    vals = {"n": int(n), "p": p, "seed": seed}
    return fn(*[vals[a] for a in args])


# -- simulation -------------------------------------------------------------

_CONFIG_KEYS = {
    "graph": {"family": str, "n": int, "p": float, "seed": int},
    "model": {"sigma2": float, "errors": str, "covariates": int, "beta": str, "alpha_seed": int},
    "simulation": {"reps": int, "seed": int},
}


@dataclass(frozen=True)
class DGPConfig:
    """Data-generating process for Monte Carlo experiments.

    ``errors`` is ``"homoskedastic"`` (variance ``sigma2``) or
    ``"heteroskedastic"`` (edge variance ``sigma2 (0.5 + |z_e|)`` with
    ``z_e`` standard normal, fixed per fixture).  ``alpha`` is drawn
    i.i.d. standard normal and projected onto ``d'alpha = 0`` unless
    supplied.  ``covariates`` columns of ``X`` are standard normal, fixed
    across replications, with slopes ``beta``.
    """

    family: str = "random_connected"
    n: int = 20
    p: float = None
    graph_seed: int = 0
    sigma2: float = 1.0
    errors: str = "homoskedastic"
    covariates: int = 0
    beta: tuple = ()
    alpha_seed: int = 0
    reps: int = 1000
    seed: int = 0
    alpha: tuple = field(default=None, repr=False)

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be >= 0")
        if self.errors not in ("homoskedastic", "heteroskedastic"):
            raise ValueError(f"unknown error model {self.errors!r}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")
        if len(self.beta) not in (0, self.covariates):
            raise ValueError("beta must have one entry per covariate")

    @classmethod
    def from_file(cls, path):
        """Read an INI-style config (sections ``graph``, ``model``, ``simulation``)."""
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
        return cls.from_parser(cp)

    @classmethod
    def from_string(cls, text):
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        cp.read_string(text)
        return cls.from_parser(cp)

    @classmethod
    def from_parser(cls, cp):
        unknown = [s for s in cp.sections() if s not in _CONFIG_KEYS]
        for s in cp.sections():
            if s in _CONFIG_KEYS:
                unknown += [f"{s}.{k}" for k in cp[s] if k not in _CONFIG_KEYS[s]]
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        kw = {}
        rename = {("graph", "seed"): "graph_seed", ("simulation", "seed"): "seed"}
        for s, keys in _CONFIG_KEYS.items():
            if s not in cp:
                continue
            for k, typ in keys.items():
                if k in cp[s]:
                    raw = cp[s][k].strip()
                    try:
                        val = typ(raw)
                    except ValueError:
                        raise ValueError(f"{s}.{k}: cannot parse {raw!r}") from None
                    kw[rename.get((s, k), k)] = val
        if "beta" in kw:
            kw["beta"] = tuple(float(b) for b in kw["beta"].replace(",", " ").split())
        return cls(**kw)

    def to_string(self):
        """Serialize in the config-file format."""
        lines = ["[graph]", f"family = {self.family}", f"n = {self.n}"]
        if self.p is not None:
            lines.append(f"p = {self.p!r}")
        lines += [f"seed = {self.graph_seed}", "", "[model]", f"sigma2 = {self.sigma2!r}",
                  f"errors = {self.errors}", f"covariates = {self.covariates}"]
        if self.beta:
            lines.append("beta = " + ", ".join(repr(float(b)) for b in self.beta))
        lines += [f"alpha_seed = {self.alpha_seed}", "", "[simulation]", f"reps = {self.reps}",
                  f"seed = {self.seed}", ""]
        return "\n".join(lines)

    def digest(self):
        return hashlib.sha256(self.to_string().encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class SimulationSetup:
    """Fixed parts of a DGP: graph, true parameters, design and error scales."""

    graph: Graph
    gm: object
    alpha: np.ndarray
    beta: np.ndarray
    X: np.ndarray
    sigma_e: np.ndarray
    mean: np.ndarray


def prepare(dgp, graph=None):
    """Materialize the fixed parts of ``dgp``.

    ``graph`` overrides the configured family; it is reduced to its largest
    component either way.
    """
    g = make_graph(dgp.family, dgp.n, dgp.p, dgp.graph_seed) if graph is None else graph
    g, _ = largest_component(g)
    gm = matrices(g)
    rng = _rng(dgp.alpha_seed, 3)
    if dgp.alpha is None:
        a = rng.standard_normal(g.n)
    else:
        a = np.asarray(dgp.alpha, dtype=float)
        if a.shape != (g.n,):
            raise ValueError("supplied alpha has the wrong length")
    alpha = a - gm.d * (gm.d @ a) / (gm.d @ gm.d)
    X = rng.standard_normal((g.m, dgp.covariates))
    beta = np.asarray(dgp.beta if dgp.beta else np.ones(dgp.covariates), dtype=float)
    if dgp.errors == "homoskedastic":
        sigma_e = np.full(g.m, np.sqrt(dgp.sigma2))
    else:
        sigma_e = np.sqrt(dgp.sigma2 * (0.5 + np.abs(rng.standard_normal(g.m))))
    mean = gm.B @ alpha + X @ beta
    return SimulationSetup(g, gm, alpha, beta, X, sigma_e, mean)


def draw(setup, seed, rep):
    """Outcome vector of replication ``rep``; returns ``(y, X)``."""
    u = _rng(seed, 4, rep).standard_normal(setup.mean.size) * setup.sigma_e
    return setup.mean + u, setup.X


def thread_count(threads=None):
    """Resolve the worker count from the argument or ``NETFE_THREADS``."""
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, int(threads))


@dataclass(frozen=True, eq=False)
class SimulationResult:
    """Per-replication estimates, ``reps x n`` (``beta`` is ``reps x p``)."""

    setup: SimulationSetup
    alpha_hat: np.ndarray
    beta_hat: np.ndarray
    se: np.ndarray
    sigma2_hat: np.ndarray


def _linear_maps(setup):
    """Dense maps with ``alpha = Ga y`` and ``beta = Gb y``, plus dense ``B``."""
    gm = setup.gm
    Ls = star_inverse(gm.L, gm.d)
    Bd = gm.B.toarray()
    G = Ls @ Bd.T
    X = setup.X
    if X.shape[1]:
        MBX = X - Bd @ (G @ X)
        Gb = sla.solve(X.T @ MBX, MBX.T, assume_a="sym")
        Ga = G - (G @ X) @ Gb
    else:
        Gb = np.zeros((0, gm.m))
        Ga = G
    return Ga, Gb, Bd


def _run_chunk(setup, maps, seed, lo, hi, dof):
    gm = setup.gm
    Y = np.stack([draw(setup, seed, r)[0] for r in range(lo, hi)])
    Ga, Gb, Bd = maps
    A = Y @ Ga.T
    Bh = Y @ Gb.T
    U = Y - A @ Bd.T - Bh @ setup.X.T
    B2 = gm.B.multiply(gm.B)
    se = np.sqrt((B2.T @ (U * U).T).T) / gm.d
    s2 = np.einsum("ij,ij->i", U, U) / dof
    return A, Bh, se, s2


def simulate(dgp, reps=None, threads=None, setup=None):
    """Run the Monte Carlo replications of ``dgp``.

    Replications are processed in fixed chunks of 256 and assembled by
    index, so output is identical for any ``threads``.  ``se`` holds the
    unscaled plug-in standard errors.
    """
    reps = dgp.reps if reps is None else int(reps)
    setup = prepare(dgp) if setup is None else setup
    if setup.gm.n > DENSE_MAX:
        raise NetFEError(f"simulation uses dense linear maps; n = {setup.gm.n} > {DENSE_MAX}")
    maps = _linear_maps(setup)
    dof = max(setup.gm.m - (setup.gm.n - 1) - setup.X.shape[1], 1)
    bounds = [(lo, min(lo + CHUNK, reps)) for lo in range(0, reps, CHUNK)]
    nt = thread_count(threads)
    if nt == 1 or len(bounds) == 1:
        parts = [_run_chunk(setup, maps, dgp.seed, lo, hi, dof) for lo, hi in bounds]
    else:
        with ThreadPoolExecutor(nt) as ex:
            parts = list(ex.map(lambda b: _run_chunk(setup, maps, dgp.seed, b[0], b[1], dof), bounds))
    A, Bh, se, s2 = (np.concatenate([p[k] for p in parts]) for k in range(4))
    return SimulationResult(setup, A, Bh, se, s2)


def _round(x, digits=12):
    """Round to fixed significant digits so reports serialize stably."""
    if isinstance(x, dict):
        return {k: _round(v, digits) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v, digits) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not np.isfinite(x):
            return None
        return float(f"{x:.{digits}g}")
    return x


def summarize(res, dgp, n_ks=5):
    """Summary statistics of a simulation for reports.

    Compares the empirical covariance of the estimated effects with the
    exact ``L* B' Sigma B L*`` (``Sigma = diag(sigma_e^2)``; with
    covariates the exact linear map is used), checks the exact and
    empirical variances against the vertex variance bounds, and runs KS
    normality tests on standardized estimates of up to ``n_ks`` vertices.
    """
    from .inference import vertex_variance_bounds

    s = res.setup
    gm = s.gm
    reps, n = res.alpha_hat.shape
    Ga = _linear_maps(s)[0]
    cov_true = (Ga * s.sigma_e ** 2) @ Ga.T
    err = res.alpha_hat - s.alpha
    out = {
        "n": n,
        "m": gm.m,
        "p": s.X.shape[1],
        "reps": reps,
        "sigma2": dgp.sigma2,
        "errors": dgp.errors,
        "prng": PRNG,
    }
    if dgp.sigma2 == 0:
        out["exact_recovery"] = bool(np.abs(err).max() <= 1e-8 * max(1.0, np.abs(s.alpha).max()))
        return _round(out)
    cov_emp = np.cov(res.alpha_hat, rowvar=False, ddof=1) if reps > 1 else np.zeros((n, n))
    out["cov_rel_frobenius_error"] = np.linalg.norm(cov_emp - cov_true) / np.linalg.norm(cov_true)
    mc_se = np.sqrt(np.diag(cov_true) / reps)
    out["max_abs_bias_in_mc_se"] = float(np.max(np.abs(err.mean(axis=0)) / mc_se))
    out["exact_recovery"] = False
    if dgp.errors == "homoskedastic" and s.X.shape[1] == 0:
        vb = vertex_variance_bounds(gm, dgp.sigma2)
        out["bound_containment_rate_exact"] = float(vb.contains().mean())
        emp = np.diag(cov_emp)
        # empirical variances: allow four MC standard errors of a variance
        tol = 4 * emp * np.sqrt(2.0 / max(reps - 1, 1))
        inside = (emp + tol >= vb.lower) & (emp - tol <= vb.upper)
        out["bound_containment_rate_empirical"] = float(inside.mean())
    idx = np.unique(np.linspace(0, n - 1, min(n_ks, n)).astype(int))
    ks = {}
    for i in idx:
        ok = res.se[:, i] > 0
        z = err[ok, i] / res.se[ok, i]
        ks[str(gm.graph.ids[i])] = float(stats.kstest(z, "norm").pvalue) if z.size > 1 else None
    out["ks_pvalues"] = ks
    out["sigma2_hat_mean"] = float(res.sigma2_hat.mean())
    return _round(out)


def config_dict(dgp):
    d = asdict(dgp)
    d.pop("alpha")
    d["beta"] = list(d["beta"])
    return d

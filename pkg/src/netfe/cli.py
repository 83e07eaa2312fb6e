"""Command-line front end: ``netfe diag | fit | project | simulate``.

Exit codes: 0 success, 2 input error, 3 numerical failure.  Every JSON
report has the layout ``{"manifest": ..., "report": ..., "report_sha256": ...}``
where the hash covers the canonical serialization of ``report`` only, so
timestamps in the manifest never affect it.
"""

import argparse
import csv
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla

from . import __version__
from .bipartite import (
    build_bipartite,
    one_mode_projection,
    read_matched_csv,
    stack_two_way,
    write_projection_csv,
)
from .estimator import (
    fit_alternative_normalization,
    fit_eta_three_ways,
    fit_full,
    fit_to_dict,
)
from .exceptions import ConvergenceError, GraphInputError, NetFEError, RankError
from .generators import PRNG, DGPConfig, config_dict, simulate, summarize, thread_count
from .graph import Graph, _sorted_ids, connected_components, largest_component, matrices, read_edge_csv
from .inference import (
    connectivity_report,
    diagnostics,
    lstar_x,
    report_dict,
    sigma2_hat,
    standard_errors,
    vertex_variance_bounds,
)
from .spectral import DENSE_MAX, lambda2

log = logging.getLogger("netfe")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3


@dataclass
class RunManifest:
    """Provenance of a report: command, inputs, hashes, seed and sizes."""

    command: str
    inputs: list
    config_hash: str
    seed: int = None
    tool_version: str = __version__
    started: str = ""
    wall_clock_s: float = 0.0
    n: int = None
    m: int = None
    threads: int = 1
    extra: dict = field(default_factory=dict)


def _file_hash(paths):
    h = hashlib.sha256()
    for p in paths:
        with open(p, "rb") as fh:
            h.update(fh.read())
    return h.hexdigest()


def canonical_json(obj):
    """Deterministic serialization used for hashing and comparison."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [_clean(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if np.isfinite(x) else None
    return x


def envelope(manifest, report):
    report = _clean(report)
    body = canonical_json(report)
    return {
        "manifest": _clean(asdict(manifest)),
        "report": report,
        "report_sha256": hashlib.sha256(body.encode()).hexdigest(),
    }


def _emit(doc, path):
    text = json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _start(command, inputs, seed=None):
    m = RunManifest(command, list(inputs), _file_hash(inputs) if inputs else "", seed)
    m.started = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    return m, time.perf_counter()


def _reduce(g, no_reduce):
    """Largest-component reduction; returns ``(sub, vertex_map, edge_mask)``."""
    comps = connected_components(g)
    if len(comps) == 1:
        return g, np.arange(g.n), np.ones(g.m, dtype=bool)
    if no_reduce:
        raise GraphInputError(
            f"graph is disconnected ({len(comps)} components) and --no-reduce was given"
        )
    sub, keep = largest_component(g)
    emask = np.isin(g.tail, keep)
    log.warning(
        "graph disconnected: kept largest component, dropped %d of %d vertices and %d of %d edges",
        g.n - sub.n, g.n, g.m - sub.m, g.m,
    )
    return sub, keep, emask


# -- diag -------------------------------------------------------------------


def cmd_diag(args):
    man, t0 = _start("diag", [args.edges])
    g0 = read_edge_csv(args.edges)
    g, _, _ = _reduce(g0, args.no_reduce)
    gm = matrices(g)
    rep = connectivity_report(gm, sdag_mode=args.sdag, k_probes=args.probes, seed=args.seed)
    diag = diagnostics(gm, sigma2=args.sigma2) if args.sdag == "exact" else None
    bounds = vertex_variance_bounds(gm, args.sigma2, rep.lambda2) if gm.n <= DENSE_MAX else None
    body = report_dict(rep, bounds=bounds, diag=diag)
    body["global"]["sdag_mode"] = args.sdag
    body["global"]["input_n"] = g0.n
    body["global"]["input_m"] = g0.m
    body["global"]["reduced"] = g.n < g0.n
    man.n, man.m = gm.n, gm.m
    man.wall_clock_s = time.perf_counter() - t0
    _emit(envelope(man, body), args.json)
    if args.table:
        with open(args.table, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            cols = list(next(iter(body["deciles"].values())).keys())
            w.writerow(["statistic"] + cols)
            for name, t in body["deciles"].items():
                w.writerow([name] + [repr(t[c]) for c in cols])
    if args.json not in (None, "-"):
        print(rep.format_table())
    return EXIT_OK


# -- fit --------------------------------------------------------------------


def _read_outcome_rows(path):
    """Rows ``(i, j, y, x)`` from a CSV with header ``i,j,y[,x1..xp]``."""
    bd = read_matched_csv(path, require_y=True)
    i = bd.ids1[bd.t1]
    j = bd.ids2[bd.t2]
    return i, j, bd.y, bd.X, bd


def _se_for(fit, mode):
    if mode == "homoskedastic" and fit.normalization == "mean-zero":
        P = lstar_x(fit.gm, fit.X)
        P = P - P.mean(axis=0)
        P = P - P.mean(axis=1, keepdims=True)
        s2 = sigma2_hat(fit)
        return np.sqrt(s2 * np.clip(np.diag(P), 0, None))
    return standard_errors(fit, mode).se


def cmd_fit(args):
    man, t0 = _start("fit", [args.data])
    se_mode = {"homosked": "homoskedastic"}.get(args.se, args.se)
    if args.two_way:
        bd = read_matched_csv(args.data, require_y=True)
        g, pmap = stack_two_way(bd)
        g, keep, emask = _reduce(g, args.no_reduce)
        if not emask.all():
            t1 = bd.t1[emask]
            t2 = bd.t2[emask]
            bd = build_bipartite(
                [(bd.ids1[a], bd.ids2[b], yv, x) for a, b, yv, x in zip(t1, t2, bd.y[emask], bd.X[emask])]
            )
            g, pmap = stack_two_way(bd)
        gm = matrices(g)
        fit = fit_full(gm, bd.y, bd.X)
        ids = [f"1:{v}" for v in bd.ids1] + [f"2:{v}" for v in bd.ids2]
    else:
        i, j, y, X, _ = _read_outcome_rows(args.data)
        g0 = _graph_from_pairs(i, j)
        g, keep, emask = _reduce(g0, args.no_reduce)
        y, X = y[emask], X[emask]
        gm = matrices(g)
        # each row measures alpha_i - alpha_j for its first column i
        gm = gm.flip_rows(g.tail > g.head)
        fit = fit_full(gm, y, X)
        ids = [str(v) for v in g.ids]
    if args.normalization == "mean":
        fit = fit_alternative_normalization(fit)
    se = _se_for(fit, se_mode)
    body = fit_to_dict(fit)
    body["vertex_ids"] = ids
    body["se"] = se.tolist()
    body["se_mode"] = se_mode
    body.pop("residuals")
    if args.two_way:
        mu, eta = pmap.split(fit.alpha)
        body["mu"] = dict(zip(map(str, bd.ids1), mu.tolist()))
        body["eta"] = dict(zip(map(str, bd.ids2), eta.tolist()))
        routes = fit_eta_three_ways(bd)
        chosen = {"joint": routes.joint, "profiled": routes.profiled, "weightedfd": routes.weighted_fd}[args.route]
        body["route"] = args.route
        body["eta_centered"] = dict(zip(map(str, bd.ids2), chosen.tolist()))
    man.n, man.m = gm.n, gm.m
    man.wall_clock_s = time.perf_counter() - t0
    if args.out_csv:
        with open(args.out_csv, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["vertex_id", "alpha", "se"])
            for v, a, s in zip(ids, fit.alpha, se):
                w.writerow([v, repr(float(a)), repr(float(s))])
    _emit(envelope(man, body), args.json)
    return EXIT_OK


def _graph_from_pairs(i, j):
    ids = _sorted_ids(list(i) + list(j))
    pos = {v: k for k, v in enumerate(ids)}
    tail = np.array([pos[v] for v in i])
    head = np.array([pos[v] for v in j])
    bad = np.flatnonzero(tail == head)
    if bad.size:
        raise GraphInputError("loop edge", row=int(bad[0]) + 1)
    return Graph.from_arrays(len(ids), tail, head, None, ids)


# -- project ----------------------------------------------------------------


def cmd_project(args):
    man, t0 = _start("project", [args.data])
    bd = read_matched_csv(args.data, require_y=False)
    proj = one_mode_projection(bd)
    write_projection_csv(proj, args.out)
    summary = {"n1": bd.n1, "n2": bd.n2, "m": bd.m, "m_prime": proj.m_prime}
    if proj.empty:
        log.warning("projection is empty: every type-1 unit has a single match")
        summary.update(edges=0, connected=False)
    else:
        comps = connected_components(proj.graph)
        summary.update(edges=proj.graph.m, components=len(comps), connected=len(comps) == 1)
        if len(comps) == 1 and proj.graph.n <= DENSE_MAX:
            summary["lambda2"] = lambda2(proj.graph)
    man.n, man.m = bd.n2, (proj.graph.m if proj.graph is not None else 0)
    man.wall_clock_s = time.perf_counter() - t0
    _emit(envelope(man, summary), args.json)
    return EXIT_OK


# -- simulate ---------------------------------------------------------------


def cmd_simulate(args):
    man, t0 = _start("simulate", [args.config])
    dgp = DGPConfig.from_file(args.config)
    reps = dgp.reps if args.reps is None else args.reps
    threads = thread_count(args.threads)
    res = simulate(dgp, reps=reps, threads=threads)
    body = {"config": config_dict(dgp), "summary": summarize(res, dgp)}
    body["config"]["reps"] = reps
    man.seed = dgp.seed
    man.n, man.m = res.setup.gm.n, res.setup.gm.m
    man.threads = threads
    man.extra = {"prng": PRNG}
    man.wall_clock_s = time.perf_counter() - t0
    _emit(envelope(man, body), args.json)
    return EXIT_OK


# -- entry point ------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="netfe", description="Fixed-effect regression on networks.")
    p.add_argument("--version", action="version", version=f"netfe {__version__}")
    p.add_argument("-q", "--quiet", action="store_true", help="suppress warnings")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("diag", help="connectivity diagnostics of an edge list")
    d.add_argument("edges", help="CSV with header i,j[,w]")
    d.add_argument("--json", default="-", help="JSON report path (default stdout)")
    d.add_argument("--table", help="write the decile table as CSV")
    d.add_argument("--sigma2", type=float, default=1.0, help="error variance for bounds and CI widths")
    d.add_argument("--sdag", choices=["exact", "stochastic"], default="exact")
    d.add_argument("--probes", type=int, default=64)
    d.add_argument("--seed", type=int, default=0)
    d.add_argument("--no-reduce", action="store_true", help="fail instead of reducing to the largest component")
    d.set_defaults(func=cmd_diag)

    f = sub.add_parser("fit", help="estimate vertex effects")
    f.add_argument("data", help="CSV with header i,j,y[,x1..xp]")
    f.add_argument("--two-way", action="store_true", help="i and j are different unit types")
    f.add_argument("--normalization", choices=["d", "mean"], default="d")
    f.add_argument("--se", choices=["plugin", "plugin-unscaled", "homosked", "homoskedastic"], default="plugin-unscaled")
    f.add_argument("--route", choices=["joint", "profiled", "weightedfd"], default="joint",
                   help="estimation route for the centered type-2 effects (two-way only)")
    f.add_argument("--out-csv", help="per-vertex CSV vertex_id,alpha,se")
    f.add_argument("--json", default="-")
    f.add_argument("--no-reduce", action="store_true")
    f.set_defaults(func=cmd_fit)

    pr = sub.add_parser("project", help="weighted one-mode projection onto type-2 units")
    pr.add_argument("data", help="CSV with header i,j[,y,x1..xp]")
    pr.add_argument("--out", required=True, help="edge list CSV j,jprime,w")
    pr.add_argument("--json", default="-")
    pr.set_defaults(func=cmd_project)

    s = sub.add_parser("simulate", help="Monte Carlo experiment from a config file")
    s.add_argument("config")
    s.add_argument("--reps", type=int)
    s.add_argument("--threads", type=int, help="worker threads (default: NETFE_THREADS or 1)")
    s.add_argument("--json", default="-")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("netfe: %(levelname)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.ERROR if args.quiet else logging.WARNING)
    log.propagate = False
    try:
        return args.func(args)
    except (ConvergenceError, sla.LinAlgError, np.linalg.LinAlgError) as exc:
        _error(exc)
        return EXIT_NUMERIC
    except (NetFEError, ValueError, OSError, KeyError) as exc:
        _error(exc)
        return EXIT_INPUT
    finally:
        log.removeHandler(handler)


def _error(exc):
    info = {"error": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, RankError):
        info["deficiency"] = exc.deficiency
    if isinstance(exc, GraphInputError) and exc.row is not None:
        info["row"] = exc.row
    sys.stderr.write(json.dumps(info) + "\n")


if __name__ == "__main__":
    sys.exit(main())

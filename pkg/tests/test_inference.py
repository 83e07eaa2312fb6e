import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from conftest import dense_lstar, random_graphs

from netfe.estimator import fit_full
from netfe.exceptions import NetFEError, RankError
from netfe.generators import extended_hypercube, hypercube, random_connected, star
from netfe.graph import build_graph, matrices
from netfe.inference import (
    DECILE_COLUMNS,
    connectivity_report,
    covariate_gap_bound,
    decile_table,
    diagnostics,
    difference_variance_bounds,
    harmonic_means,
    mean_zero_variance_bounds,
    report_dict,
    rho_and_xbar,
    sigma2_hat,
    standard_errors,
    vertex_variance_bounds,
)
from netfe.spectral import lambda2


class TestHarmonicMeans:
    def test_star(self):
        hm = harmonic_means(star(8))
        np.testing.assert_allclose(hm["h_i"], [1] + [7] * 7)
        np.testing.assert_allclose(hm["H_i"], [7] + [1] * 7)
        assert hm["h"] == pytest.approx(1.12)
        assert hm["H"] == pytest.approx(6.25)

    @pytest.mark.parametrize("N", [2, 3, 5])
    def test_hypercubes(self, N):
        hm = harmonic_means(hypercube(N))
        np.testing.assert_allclose(hm["h_i"], N)
        np.testing.assert_allclose(hm["H_i"], N)
        e = harmonic_means(extended_hypercube(N))
        np.testing.assert_allclose(e["h_i"], N * (N + 1) / 2)
        np.testing.assert_allclose(e["h"], N * (N + 1) / 2)

    def test_global_h_between_degrees(self):
        for g in random_graphs(30, seed=1):
            d = g.degrees()
            hm = harmonic_means(g)
            assert d.min() - 1e-12 <= hm["h"] <= d.max() + 1e-12
            for k in ("h_i", "H_i", "h_i2"):
                assert np.all(np.isfinite(hm[k])) and np.all(hm[k] > 0)


class TestReport:
    def test_fields_and_deciles(self):
        rep = connectivity_report(star(8))
        assert rep.lambda2 == pytest.approx(1.0)
        dec = rep.deciles()
        assert list(dec["h_i"]) == DECILE_COLUMNS
        assert dec["d"]["mean"] == pytest.approx(14 / 8)
        assert "h_i" in rep.format_table()

    def test_decile_table(self):
        t = decile_table(np.arange(1, 11))
        assert t["mean"] == 5.5
        assert t["sd"] == pytest.approx(np.std(np.arange(1, 11), ddof=1))
        assert t["p50"] == pytest.approx(5.5)

    def test_rho_reported(self, rng):
        g = random_connected(15, 0.4, 0)
        rep = connectivity_report(g, X=rng.standard_normal((g.m, 2)))
        assert 0 <= rep.rho <= 1

    def test_json_schema(self, rng):
        g = random_connected(12, 0.3, 1)
        rep = connectivity_report(g)
        fit = fit_full(g, rng.standard_normal(g.m))
        doc = report_dict(rep, vertex_variance_bounds(g, 1.0), standard_errors(fit), diagnostics(g, fit))
        json.dumps(doc, allow_nan=False)
        assert set(doc) == {"global", "vertices", "deciles"}
        for k in ("lambda2", "h", "H", "rho", "trace_Lstar_over_nm1", "m", "n"):
            assert k in doc["global"]
        v = doc["vertices"][0]
        for k in ("id", "d", "h_i", "H_i", "h_i2", "Sdag_ii", "var_exact", "lower", "upper", "se"):
            assert k in v


class TestRho:
    def test_orthogonal_is_one(self, rng):
        g = random_connected(12, 0.4, 2)
        gm = matrices(g)
        B = gm.B.toarray()
        R = rng.standard_normal((g.m, 2))
        X = R - B @ dense_lstar(g) @ B.T @ R
        assert rho_and_xbar(gm, X)["rho"] == pytest.approx(1.0, abs=1e-10)

    def test_in_range_is_zero(self, rng):
        g = random_connected(12, 0.4, 3)
        gm = matrices(g)
        X = (gm.B @ rng.standard_normal(12))[:, None]
        assert rho_and_xbar(gm, X)["rho"] == pytest.approx(0.0, abs=1e-10)

    def test_dense_oracle(self, rng):
        for g in random_graphs(20, seed=4):
            if g.m <= g.n + 3:
                continue
            gm = matrices(g)
            X = rng.standard_normal((g.m, 3))
            B = gm.B.toarray()
            MB = np.eye(g.m) - B @ np.linalg.pinv(B.T @ B) @ B.T
            w, V = np.linalg.eigh(X.T @ X)
            R = V @ np.diag(w ** -0.5) @ V.T
            C = R @ X.T @ (np.eye(g.m) - MB) @ X @ R
            r = rho_and_xbar(gm, X)
            assert 1 - r["rho"] == pytest.approx(np.linalg.norm(C, 2), abs=1e-9)
            assert r["rho"] == pytest.approx(np.linalg.eigvalsh(R @ X.T @ MB @ X @ R).min(), abs=1e-9)
            lit = np.linalg.norm(np.linalg.solve(X.T @ X, X.T @ MB @ X), 2)
            assert r["rho_literal"] == pytest.approx(lit, rel=1e-9)

    def test_single_covariate_definitions_agree(self, rng):
        g = random_connected(15, 0.3, 5)
        r = rho_and_xbar(g, rng.standard_normal(g.m))
        assert r["rho"] == pytest.approx(r["rho_literal"], rel=1e-10)


class TestVertexBounds:
    def test_hypercube3(self):
        vb = vertex_variance_bounds(hypercube(3), 1.0)
        # d = h = 3, lambda2 = 2/3, vol = 24
        np.testing.assert_allclose(vb.lower, 1 / 4)
        np.testing.assert_allclose(vb.upper, 5 / 12)
        np.testing.assert_allclose(vb.exact, 29 / 96)
        assert vb.contains().all()

    def test_star_center(self):
        vb = vertex_variance_bounds(star(8), 1.0)
        assert vb.lower[0] == pytest.approx(0.0, abs=1e-14)
        assert vb.upper[0] == pytest.approx(1 / 7)
        assert vb.exact[0] == pytest.approx(1 / 28)

    def test_containment_random(self):
        bad = 0
        for g in random_graphs(100, seed=6):
            bad += (~vertex_variance_bounds(g, 2.5).contains()).sum()
        assert bad == 0

    def test_sigma2_positive(self):
        with pytest.raises(ValueError):
            vertex_variance_bounds(star(4), 0.0)

    def test_matrix_sandwich(self):
        for g in random_graphs(20, seed=7):
            gm = matrices(g)
            Di = np.diag(1 / gm.d)
            A = gm.A.toarray()
            low = Di + Di @ A @ Di - 2 / gm.vol
            gap = dense_lstar(g) - low
            assert np.linalg.eigvalsh(gap).min() > -1e-10
            top = Di @ A @ Di @ A @ Di / lambda2(gm)
            assert np.linalg.eigvalsh(top - gap).min() > -1e-10


class TestDifferenceBounds:
    def test_shared_neighbourhood_exact(self):
        # i = 1, j = 2 share neighbours {3, 4, 5} and are not adjacent
        g = build_graph([(a, b) for a in (1, 2) for b in (3, 4, 5)] + [(3, 4)])
        pb = difference_variance_bounds(g, 2.0, 0, 1)
        assert pb.exact == pytest.approx(2.0 * (1 / 3 + 1 / 3))
        assert pb.lower == pytest.approx(pb.exact)
        assert pb.upper == pytest.approx(pb.exact)

    def test_k2(self):
        pb = difference_variance_bounds(build_graph([(1, 2)]), 1.0, 0, 1)
        assert pb.exact == pytest.approx(1.0)
        assert pb.contains()
        assert pb.h_ij is None

    def test_disjoint_pair(self):
        g = build_graph([(1, 2), (2, 3), (3, 4), (4, 5)])
        pb = difference_variance_bounds(g, 1.0, 0, 4)
        assert pb.d_ij == 0 and pb.h_ij is None
        hm = harmonic_means(g)
        d, h = g.degrees(), hm["h_i"]
        second = (1 / (d[0] * h[0]) + 1 / (d[4] * h[4])) / lambda2(g)
        assert pb.upper - pb.lower == pytest.approx(second)

    def test_same_vertex(self):
        with pytest.raises(ValueError):
            difference_variance_bounds(star(4), 1.0, 1, 1)

    def test_random_pairs(self, rng):
        for g in random_graphs(100, seed=8):
            i, j = rng.choice(g.n, 2, replace=False)
            assert difference_variance_bounds(g, 0.7, i, j).contains()


class TestGapBound:
    def test_requires_covariates(self):
        g = random_connected(10, 0.4, 1)
        with pytest.raises(RankError, match="p >= 1"):
            covariate_gap_bound(g, None, 1.0)

    def test_collinear(self, rng):
        g = random_connected(10, 0.4, 2)
        X = (matrices(g).B @ rng.standard_normal(10))[:, None]
        with pytest.raises(RankError, match="X collinear with B"):
            covariate_gap_bound(g, X, 1.0)

    def test_orthogonal(self, rng):
        g = random_connected(12, 0.4, 3)
        B = matrices(g).B.toarray()
        R = rng.standard_normal((g.m, 2))
        X = R - B @ dense_lstar(g) @ B.T @ R
        gb = covariate_gap_bound(g, X, 1.0)
        np.testing.assert_allclose(gb.gap, 0, atol=1e-10)
        assert gb.contains().all()

    def test_random(self, rng):
        n_checked = 0
        for g in random_graphs(120, seed=9):
            p = int(rng.integers(1, 4))
            if g.m <= g.n + p + 1:
                continue
            gb = covariate_gap_bound(g, rng.standard_normal((g.m, p)), 1.5)
            assert gb.contains().all()
            n_checked += 1
        assert n_checked >= 80


class TestMeanZeroBounds:
    @pytest.mark.parametrize("g", [star(8), hypercube(4)], ids=["star8", "cube4"])
    def test_fixtures(self, g):
        mz = mean_zero_variance_bounds(g, 1.0)
        assert mz.contains().all()

    def test_exact_is_m_lstar_m(self):
        g = random_connected(10, 0.3, 4)
        M = np.eye(10) - 1 / 10
        mz = mean_zero_variance_bounds(g, 2.0)
        np.testing.assert_allclose(mz.exact, 2.0 * np.diag(M @ dense_lstar(g) @ M), atol=1e-12)

    def test_random(self):
        for g in random_graphs(100, seed=10):
            assert mean_zero_variance_bounds(g, 1.0).contains().all()


class TestStandardErrors:
    def test_noiseless_zero(self):
        g = random_connected(10, 0.4, 5)
        gm = matrices(g)
        fit = fit_full(g, gm.B @ np.arange(10.0))
        for mode in ("plugin", "plugin-unscaled", "homoskedastic"):
            np.testing.assert_allclose(standard_errors(fit, mode).se, 0, atol=1e-7)

    def test_plugin_scaling(self, rng):
        g = random_connected(15, 0.3, 6)
        fit = fit_full(g, rng.standard_normal(g.m))
        a = standard_errors(fit, "plugin").se
        b = standard_errors(fit, "plugin-unscaled").se
        np.testing.assert_allclose(a * np.sqrt(g.m), b)

    def test_no_dof(self):
        g = build_graph([(1, 2), (2, 3)])
        fit = fit_full(g, np.array([1.0, 2.0]))
        with pytest.raises(NetFEError, match="no residual degrees of freedom"):
            sigma2_hat(fit)

    def test_unknown_mode(self, rng):
        fit = fit_full(star(4), rng.standard_normal(3))
        with pytest.raises(ValueError):
            standard_errors(fit, "robust")

    def _mc(self, g, sigma_e, reps, seed):
        gm = matrices(g)
        rng = np.random.default_rng(seed)
        G = dense_lstar(g) @ gm.B.toarray().T
        U = rng.standard_normal((reps, g.m)) * sigma_e
        est = U @ G.T
        return gm, est, U

    def test_homoskedastic_vs_monte_carlo(self):
        g = random_connected(30, 0.5, 7)
        gm, est, U = self._mc(g, 1.0, 10_000, 0)
        mc_sd = est.std(axis=0, ddof=1)
        ses = np.array([standard_errors(fit_full(gm, U[r]), "homoskedastic").se for r in range(200)])
        np.testing.assert_allclose(ses.mean(axis=0) / mc_sd, 1.0, atol=0.1)

    def test_plugin_unscaled_heteroskedastic(self):
        g = random_connected(30, 0.5, 8)
        sig = np.sqrt(0.5 + np.abs(np.random.default_rng(1).standard_normal(g.m)))
        gm, est, U = self._mc(g, sig, 10_000, 2)
        mc_sd = est.std(axis=0, ddof=1)
        ses = np.array([standard_errors(fit_full(gm, U[r])).se for r in range(400)])
        ratio = np.sqrt((ses ** 2).mean(axis=0)) / mc_sd
        assert abs(np.median(ratio) - 1) < 0.1


class TestDiagnostics:
    def test_vertex_transitive(self):
        dg = diagnostics(hypercube(4))
        np.testing.assert_allclose(dg.ratio, dg.ratio[0])

    def test_weak_connectivity_pattern(self):
        dg = diagnostics(random_connected(300, 0.004, 1))
        dec = dg.deciles()["Sdag_ii"]
        assert dec["mean"] > 1.5 and dec["p10"] > 1
        assert np.all(dg.ci_exact >= dg.ci_approx)

    def test_well_connected_pattern(self):
        dg = diagnostics(random_connected(60, 0.8, 2))
        assert np.all(np.abs(dg.ratio - 1) < 0.1)

    def test_trace_and_inverse_h(self):
        g = random_connected(20, 0.3, 3)
        dg = diagnostics(g, sigma2=2.0)
        assert dg.trace_Lstar_over_nm1 == pytest.approx(np.trace(dense_lstar(g)) / 19)
        assert dg.inv_h == pytest.approx(np.mean(1 / g.degrees()))
        np.testing.assert_allclose(dg.ci_approx, 2 * 1.96 * np.sqrt(2.0 / g.degrees()))


class TestGlobalRate:
    def test_error_norm_bounded(self):
        # E||alpha_hat - alpha||^2 h / n stays of order one as n grows
        stats = []
        for n in (50, 100, 200, 400):
            g = random_connected(n, 8 / n, n)
            gm = matrices(g)
            rng = np.random.default_rng(n)
            G = dense_lstar(g) @ gm.B.toarray().T
            err = rng.standard_normal((200, g.m)) @ G.T
            h = harmonic_means(gm)["h"]
            stats.append(np.mean(np.sum(err ** 2, axis=1)) * h / n)
        assert max(stats) < 3 and min(stats) > 0.3
        assert max(stats) / min(stats) < 2


connected_edges = st.integers(3, 14).flatmap(
    lambda n: st.tuples(
        st.just(n),
        st.lists(st.tuples(st.integers(1, n), st.integers(1, n)), max_size=3 * n),
        st.lists(st.floats(0.2, 5.0), min_size=4 * n, max_size=4 * n),
    )
)


class TestBoundProperties:
    @given(connected_edges, st.floats(0.1, 10.0))
    @settings(max_examples=100, deadline=None)
    def test_weighted_graphs(self, spec, sigma2):
        n, extra, w = spec
        # a path keeps the graph connected; extra edges vary the structure
        pairs = [(k, k + 1) for k in range(1, n)] + [(a, b) for a, b in extra if a != b]
        g = build_graph([(a, b, wt) for (a, b), wt in zip(pairs, w)])
        assert vertex_variance_bounds(g, sigma2).contains().all()
        assert mean_zero_variance_bounds(g, sigma2).contains().all()
        assert difference_variance_bounds(g, sigma2, 0, n - 1).contains()

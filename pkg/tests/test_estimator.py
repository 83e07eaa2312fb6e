import json

import numpy as np
import pytest
from conftest import dense_lstar, random_graphs

from netfe.bipartite import build_bipartite, stack_two_way
from netfe.estimator import (
    fit_alpha_known_beta,
    fit_alternative_normalization,
    fit_eta_three_ways,
    fit_full,
    fit_to_json,
    plain_first_difference,
    write_fit_csv,
)
from netfe.exceptions import DisconnectedGraphError, RankError
from netfe.generators import random_bipartite, random_connected
from netfe.graph import build_graph, largest_component, matrices


def kkt_oracle(gm, y, X):
    """Equality-constrained least squares by a dense KKT solve."""
    B = gm.B.toarray()
    Z = np.hstack([B, X])
    k = Z.shape[1]
    K = np.zeros((k + 1, k + 1))
    K[:k, :k] = Z.T @ Z
    K[: gm.n, k] = gm.d
    K[k, : gm.n] = gm.d
    sol = np.linalg.lstsq(K, np.concatenate([Z.T @ y, [0.0]]), rcond=None)[0]
    return sol[: gm.n], sol[gm.n : k]


def varied_bipartite(seed, n1, n2, p):
    """Two-way skeleton where type-1 degrees vary between 2 and 5."""
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(n1):
        for j in rng.choice(n2, int(rng.integers(2, 6)), replace=False):
            rows.append((i, int(j), None, rng.standard_normal(p)))
    return build_bipartite(rows)


def connected_bipartite(seed, n1=25, n2=8, e=3, p=1, varied=False):
    """Random two-way data restricted to its connected part, with outcomes."""
    rng = np.random.default_rng(seed)
    bd = varied_bipartite(seed, n1, n2, p) if varied else random_bipartite(n1, n2, e, seed, p=p)
    g, _ = stack_two_way(bd)
    sub, keep = largest_component(g)
    mask = np.isin(g.tail, keep)
    rows = [
        (bd.ids1[a], bd.ids2[b], float(rng.standard_normal()), x)
        for a, b, x in zip(bd.t1[mask], bd.t2[mask], bd.X[mask])
    ]
    return build_bipartite(rows)


class TestKnownBeta:
    def test_k2(self):
        a = fit_alpha_known_beta(build_graph([(1, 2)]), np.array([1.0]))
        np.testing.assert_allclose(a, [0.5, -0.5], atol=1e-15)

    def test_zero(self):
        g = random_connected(10, 0.3, 0)
        np.testing.assert_array_equal(fit_alpha_known_beta(g, np.zeros(g.m)), np.zeros(10))

    def test_noiseless_recovery(self, rng):
        for g in random_graphs(10, seed=1):
            gm = matrices(g)
            a0 = rng.standard_normal(g.n)
            a0 -= gm.d * (gm.d @ a0) / (gm.d @ gm.d)
            np.testing.assert_allclose(fit_alpha_known_beta(gm, gm.B @ a0), a0, atol=1e-10)

    def test_disconnected(self):
        with pytest.raises(DisconnectedGraphError, match="largest_component"):
            fit_alpha_known_beta(build_graph([(1, 2), (3, 4)]), np.ones(2))


class TestFullFit:
    def test_reduces_without_covariates(self, rng):
        g = random_connected(12, 0.3, 2)
        y = rng.standard_normal(g.m)
        f = fit_full(g, y)
        assert f.beta.shape == (0,)
        np.testing.assert_allclose(f.alpha, fit_alpha_known_beta(g, y), atol=1e-14)

    def test_kkt_oracle_random(self, rng):
        g = random_connected(10, 0.4, 3)
        gm = matrices(g)
        X = rng.standard_normal((g.m, 2))
        y = rng.standard_normal(g.m)
        f = fit_full(g, y, X)
        a, b = kkt_oracle(gm, y, X)
        np.testing.assert_allclose(f.alpha, a, atol=1e-8)
        np.testing.assert_allclose(f.beta, b, atol=1e-8)

    def test_kkt_oracle_all_fixtures(self, rng):
        for g in random_graphs(40, n_max=50, seed=4):
            gm = matrices(g)
            p = int(rng.integers(0, 3))
            if g.m <= g.n + p + 1:
                continue
            X = rng.standard_normal((g.m, p))
            y = rng.standard_normal(g.m)
            f = fit_full(gm, y, X)
            a, b = kkt_oracle(gm, y, X)
            np.testing.assert_allclose(f.alpha, a, atol=1e-8)
            np.testing.assert_allclose(f.beta, b, atol=1e-8)
            assert f.normalization_residual() <= 1e-8

    def test_matches_closed_form(self, rng):
        g = random_connected(15, 0.3, 5)
        gm = matrices(g)
        X = rng.standard_normal((g.m, 2))
        y = rng.standard_normal(g.m)
        B = gm.B.toarray()
        MX = np.eye(g.m) - X @ np.linalg.solve(X.T @ X, X.T)
        M = B.T @ MX @ B
        Ms = np.linalg.inv(M + np.outer(gm.d, gm.d) / gm.vol) - 1 / gm.vol
        np.testing.assert_allclose(fit_full(g, y, X).alpha, Ms @ B.T @ MX @ y, atol=1e-9)

    def test_orthogonal_covariates(self, rng):
        g = random_connected(12, 0.4, 6)
        gm = matrices(g)
        B = gm.B.toarray()
        R = rng.standard_normal((g.m, 2))
        X = R - B @ dense_lstar(g) @ B.T @ R
        np.testing.assert_allclose(B.T @ X, 0, atol=1e-10)
        y = rng.standard_normal(g.m)
        f = fit_full(g, y, X)
        np.testing.assert_allclose(f.beta, np.linalg.lstsq(X, y, rcond=None)[0], atol=1e-10)
        np.testing.assert_allclose(f.alpha, fit_alpha_known_beta(g, y - X @ f.beta), atol=1e-12)

    def test_residuals_orthogonal(self, rng):
        g = random_connected(20, 0.2, 7)
        gm = matrices(g)
        X = rng.standard_normal((g.m, 3))
        y = rng.standard_normal(g.m)
        f = fit_full(g, y, X)
        np.testing.assert_allclose(y - gm.B @ f.alpha - X @ f.beta, f.residuals, atol=1e-12)
        scale = np.linalg.norm(y) * max(np.linalg.norm(X), 1)
        assert np.linalg.norm(gm.B.T @ f.residuals) <= 1e-8 * scale
        assert np.linalg.norm(X.T @ f.residuals) <= 1e-8 * scale

    def test_collinear_covariates(self, rng):
        g = random_connected(10, 0.4, 8)
        x = rng.standard_normal(g.m)
        with pytest.raises(RankError, match="collinear covariates"):
            fit_full(g, rng.standard_normal(g.m), np.column_stack([x, 2 * x]))

    def test_collinear_with_dummies(self, rng):
        g = random_connected(10, 0.4, 9)
        gm = matrices(g)
        X = np.column_stack([gm.B @ rng.standard_normal(10), rng.standard_normal(g.m)])
        with pytest.raises(RankError, match="network dummies") as exc:
            fit_full(g, rng.standard_normal(g.m), X)
        assert exc.value.deficiency == 1

    def test_orientation_invariance(self, rng):
        for g in random_graphs(10, seed=10):
            gm = matrices(g)
            y = rng.standard_normal(g.m)
            X = rng.standard_normal((g.m, 1))
            flip = rng.random(g.m) < 0.5
            s = np.where(flip, -1.0, 1.0)
            if g.m <= g.n + 2:
                X = np.zeros((g.m, 0))
            a = fit_full(gm, y, X)
            b = fit_full(gm.flip_rows(flip), s * y, s[:, None] * X)
            np.testing.assert_allclose(a.alpha, b.alpha, atol=1e-10)

    def test_unbiased_monte_carlo(self):
        g = random_connected(20, 0.2, 11)
        gm = matrices(g)
        rng = np.random.default_rng(0)
        a0 = rng.standard_normal(20)
        a0 -= gm.d * (gm.d @ a0) / (gm.d @ gm.d)
        G = dense_lstar(g) @ gm.B.toarray().T
        reps = 10_000
        Y = gm.B @ a0 + rng.standard_normal((reps, g.m))
        est = Y @ G.T
        mc_se = est.std(axis=0, ddof=1) / np.sqrt(reps)
        assert np.all(np.abs(est.mean(axis=0) - a0) < 4 * mc_se)


class TestAlternative:
    def test_mean_zero(self, rng):
        g = random_connected(15, 0.3, 12)
        f = fit_full(g, rng.standard_normal(g.m))
        alt = fit_alternative_normalization(f)
        assert alt.normalization == "mean-zero"
        assert abs(alt.alpha.sum()) <= 1e-8 * np.sqrt(15) * np.linalg.norm(alt.alpha)
        diff = lambda a: a[:, None] - a[None, :]
        np.testing.assert_allclose(diff(alt.alpha), diff(f.alpha), atol=1e-14)

    def test_k2_unchanged(self):
        f = fit_full(build_graph([(1, 2)]), np.array([1.0]))
        np.testing.assert_allclose(fit_alternative_normalization(f).alpha, [0.5, -0.5])


class TestThreeRoutes:
    def test_hand_fixture(self):
        rows = [
            ("s1", "t1", 1.0, [0.3]), ("s1", "t2", 2.0, [0.1]), ("s1", "t3", 0.4, [0.9]),
            ("s2", "t2", 0.5, [-0.2]), ("s2", "t3", 1.5, [0.4]),
        ]
        r = fit_eta_three_ways(build_bipartite(rows))
        assert r.max_discrepancy() <= 1e-8

    def test_random_fixtures(self):
        for s in range(50):
            bd = connected_bipartite(s, varied=s % 2 == 1)
            r = fit_eta_three_ways(bd)
            np.testing.assert_allclose(r.profiled, r.joint, atol=1e-8)
            np.testing.assert_allclose(r.weighted_fd, r.joint, atol=1e-8)

    def test_plain_fd_differs(self):
        gaps = [np.abs(plain_first_difference(bd) - fit_eta_three_ways(bd).joint).max()
                for bd in (connected_bipartite(s, n1=12, n2=6, varied=True) for s in range(5))]
        assert max(gaps) > 1e-3

    def test_noiseless_recovery(self, rng):
        bd = connected_bipartite(3, p=2)
        mu = rng.standard_normal(bd.n1)
        eta = rng.standard_normal(bd.n2)
        beta = np.array([0.7, -1.2])
        y = mu[bd.t1] + eta[bd.t2] + bd.X @ beta
        r = fit_eta_three_ways(bd.with_outcome(y))
        np.testing.assert_allclose(r.joint, eta - eta.mean(), atol=1e-9)
        np.testing.assert_allclose(r.beta, beta, atol=1e-9)


class TestExport:
    def test_csv_and_json(self, tmp_path, rng):
        g = random_connected(6, 0.5, 1)
        f = fit_full(g, rng.standard_normal(g.m))
        p = tmp_path / "fit.csv"
        write_fit_csv(f, np.ones(6), p)
        lines = p.read_text().splitlines()
        assert lines[0] == "vertex_id,alpha,se" and len(lines) == 7
        d = json.loads(fit_to_json(f))
        np.testing.assert_allclose(d["alpha"], f.alpha)
        assert d["rank_report"]["connected"]

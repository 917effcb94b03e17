import math

import numpy as np
import pytest

from lpgraph.linalg import eig_dense, symmetric_norm
from lpgraph.model import (Adjacency, EdgeProbabilityMatrix, KernelSpec, LatentDistribution,
                           ModelError, build_p, nystrom_spectrum, place_pair_at_distance,
                           sample_adjacency, sample_latents)
from lpgraph.theory import varsigma


class TestSampleLatents:
    def test_point_cloud_verbatim(self):
        dist = LatentDistribution.point_cloud([[0.0], [1.0]])
        s = sample_latents(dist, 2, seed=5)
        np.testing.assert_array_equal(s.coords, [[0.0], [1.0]])

    def test_sphere_rows_unit_norm(self):
        s = sample_latents(LatentDistribution.uniform_sphere(3), 1000, seed=1)
        assert np.max(np.abs(np.linalg.norm(s.coords, axis=1) - 1)) <= 1e-12

    def test_normal_mean(self):
        n = 100_000
        s = sample_latents(LatentDistribution.standard_normal(2), n, seed=2)
        # CLT tolerance 4/sqrt(n) is about 0.0126, inside the 0.02 target
        assert np.all(np.abs(s.coords.mean(axis=0)) <= min(0.02, 4 / math.sqrt(n)))

    def test_reproducible(self):
        d = LatentDistribution.uniform_sphere(4)
        a = sample_latents(d, 50, seed=9).coords
        b = sample_latents(d, 50, seed=9).coords
        assert a.tobytes() == b.tobytes()
        assert not np.array_equal(a, sample_latents(d, 50, seed=10).coords)

    def test_errors(self):
        with pytest.raises(ModelError):
            sample_latents(LatentDistribution.uniform_sphere(0), 10, 0)
        with pytest.raises(ModelError):
            sample_latents(LatentDistribution.uniform_sphere(3), 1, 0)

    def test_cloud_resampling_uses_rows(self):
        pts = np.array([[0.1, 0.2], [0.3, 0.4], [0.5, 0.6]])
        s = sample_latents(LatentDistribution.point_cloud(pts), 40, seed=3)
        assert all(any(np.array_equal(row, p) for p in pts) for row in s.coords)


class TestPlacePair:
    def test_zero_distance_copies(self):
        s = sample_latents(LatentDistribution.uniform_sphere(3), 20, 1)
        t = place_pair_at_distance(s, 0, 19, 0.0, seed=4)
        np.testing.assert_array_equal(t.coords[19], t.coords[0])

    def test_sphere_chord(self):
        s = sample_latents(LatentDistribution.uniform_sphere(3), 20, 1)
        t = place_pair_at_distance(s, 0, 19, 0.3, seed=4)
        assert abs(np.linalg.norm(t.coords[19]) - 1) <= 1e-12
        assert abs(np.linalg.norm(t.coords[19] - t.coords[0]) - 0.3) <= 1e-10
        np.testing.assert_array_equal(t.coords[1:19], s.coords[1:19])

    def test_planar_deterministic(self):
        s = sample_latents(LatentDistribution.standard_normal(2), 10, 1)
        a = place_pair_at_distance(s, 2, 5, 1.0, seed=8)
        b = place_pair_at_distance(s, 2, 5, 1.0, seed=8)
        np.testing.assert_array_equal(a.coords, b.coords)
        assert abs(np.linalg.norm(a.coords[5] - a.coords[2]) - 1.0) <= 1e-10

    @pytest.mark.parametrize("eps", [0.01, 0.5, 1.0, 1.7, 2.0])
    def test_sphere_range(self, eps):
        s = sample_latents(LatentDistribution.uniform_sphere(5), 8, 3)
        t = place_pair_at_distance(s, 1, 6, eps, seed=11)
        assert abs(np.linalg.norm(t.coords[6] - t.coords[1]) - eps) <= 1e-10

    def test_infeasible(self):
        s = sample_latents(LatentDistribution.uniform_sphere(3), 8, 3)
        with pytest.raises(ModelError):
            place_pair_at_distance(s, 0, 1, 2.5, seed=0)
        with pytest.raises(ModelError):
            place_pair_at_distance(s, 1, 1, 0.5, seed=0)

    def test_zero_distance_rows_of_p_match(self):
        s = sample_latents(LatentDistribution.uniform_sphere(3), 30, 1)
        t = place_pair_at_distance(s, 0, 29, 0.0, seed=2)
        p = build_p(t, KernelSpec.laplace(), 0.4).entries
        np.testing.assert_array_equal(p[0, 1:29], p[29, 1:29])
        assert p[0, 29] == p[0, 0] == p[29, 29]


class TestBuildP:
    def test_constant(self):
        s = sample_latents(LatentDistribution.uniform_sphere(2), 4, 0)
        p = build_p(s, KernelSpec.constant(1.0), 0.5)
        np.testing.assert_array_equal(p.entries, np.full((4, 4), 0.5))
        np.testing.assert_allclose(eig_dense(p.entries).eigenvalues, [2, 0, 0, 0], atol=1e-12)

    def test_laplace_diagonal_exact(self):
        s = sample_latents(LatentDistribution.uniform_sphere(3), 10, 0)
        p = build_p(s, KernelSpec.laplace(1.0), 0.37)
        assert np.all(np.diag(p.entries) == 0.37)

    def test_laplace_log2(self):
        pts = np.array([[0.0, 0.0], [math.log(2), 0.0]])
        s = sample_latents(LatentDistribution.point_cloud(pts), 2, 0)
        p = build_p(s, KernelSpec.laplace(1.0), 1.0)
        assert abs(p.entries[0, 1] - 0.5) <= 1e-15

    def test_gaussian_value(self):
        pts = np.array([[0.0, 0.0], [1.0, 1.0]])
        s = sample_latents(LatentDistribution.point_cloud(pts), 2, 0)
        p = build_p(s, KernelSpec.gaussian(0.4), 1.0)
        assert abs(p.entries[0, 1] - math.exp(-2 / 0.4)) <= 1e-15

    def test_symmetric_and_bounded(self):
        for kern, dist in [(KernelSpec.laplace(), LatentDistribution.uniform_sphere(3)),
                           (KernelSpec.gaussian(0.4), LatentDistribution.standard_normal(2)),
                           (KernelSpec.dot_product(np.eye(2)),
                            LatentDistribution.point_cloud([[0.5, 0.5], [0.2, 0.9], [0.7, 0.1]]))]:
            p = build_p(sample_latents(dist, 200, 4), kern, 0.3)
            assert np.array_equal(p.entries, p.entries.T)
            assert p.entries.max() <= 0.3 and p.entries.min() >= 0

    def test_dot_product_out_of_range(self):
        dist = LatentDistribution.point_cloud([[1.0, 0.0], [-1.0, 0.0]])
        with pytest.raises(ModelError):
            build_p(sample_latents(dist, 2, 0), KernelSpec.dot_product(np.eye(2)), 1.0)

    def test_bad_rho(self):
        s = sample_latents(LatentDistribution.uniform_sphere(3), 5, 0)
        with pytest.raises(ModelError):
            build_p(s, KernelSpec.laplace(), 0.0)


class TestSampleAdjacency:
    def test_degenerate_probabilities(self):
        rng = np.random.default_rng(0)
        b = (rng.random((30, 30)) < 0.5).astype(float)
        b = np.triu(b) + np.triu(b, 1).T
        a = sample_adjacency(EdgeProbabilityMatrix(b, 1.0), seed=3)
        np.testing.assert_array_equal(a.dense(), b)

    def test_bernoulli_mean(self):
        p = EdgeProbabilityMatrix(np.full((200, 200), 0.5), 0.5)
        vals = [sample_adjacency(p, seed=s).dense()[0, 1] for s in range(400)]
        assert abs(np.mean(vals) - 0.5) <= 0.08

    def test_reproducible(self, laplace_p500):
        a = sample_adjacency(laplace_p500, seed=17)
        b = sample_adjacency(laplace_p500, seed=17)
        assert a.bits.tobytes() == b.bits.tobytes()

    def test_symmetric_binary(self, laplace_p500):
        a = sample_adjacency(laplace_p500, seed=1).dense()
        assert np.array_equal(a, a.T)
        assert set(np.unique(a)) <= {0.0, 1.0}

    def test_hollow(self, laplace_p500):
        a = sample_adjacency(laplace_p500, seed=1, hollow=True)
        assert not np.any(np.diag(a.dense()))
        assert a.hollow

    def test_average_degree(self, laplace_p500):
        adj = sample_adjacency(laplace_p500, seed=2)
        a = adj.dense()
        assert adj.degree_total() == int(a.sum())
        assert adj.average_degree() == pytest.approx(a.sum() / a.shape[0])

    def test_edge_roundtrip(self, laplace_p500):
        adj = sample_adjacency(laplace_p500, seed=3)
        back = Adjacency.from_edges(adj.n, adj.edges())
        assert back == adj
        assert Adjacency.from_dense(adj.dense()) == adj

    def test_noise_within_varsigma(self, laplace_p500):
        # P(|A - P| > varsigma(1, n)) <= 1/n per replicate
        bound = varsigma(1.0, 500, 0.4)
        worst = max(symmetric_norm(sample_adjacency(laplace_p500, seed=s).dense()
                                   - laplace_p500.entries) for s in range(50))
        assert worst <= bound


class TestNystrom:
    def test_constant(self):
        mu = nystrom_spectrum(KernelSpec.constant(0.3), LatentDistribution.uniform_sphere(3),
                              50, 3, seed=1)
        assert abs(mu[0] - 0.3) <= 1e-10
        assert np.all(np.abs(mu[1:]) <= 1e-12)

    def test_two_point_cloud(self):
        dist = LatentDistribution.point_cloud([[1.0, 0.0], [0.0, 1.0]])
        mu = nystrom_spectrum(KernelSpec.dot_product(np.eye(2)), dist, 2, 2, seed=0)
        np.testing.assert_allclose(mu, [0.5, 0.5], atol=1e-14)

    def test_errors(self):
        with pytest.raises(ModelError):
            nystrom_spectrum(KernelSpec.laplace(), LatentDistribution.uniform_sphere(3), 5, 6, 0)

    @pytest.mark.slow
    def test_laplace_self_consistency(self):
        m = 4000
        dist = LatentDistribution.uniform_sphere(3)
        a = nystrom_spectrum(KernelSpec.laplace(), dist, m, 10, seed=1)
        b = nystrom_spectrum(KernelSpec.laplace(), dist, 2 * m, 10, seed=2)
        assert np.max(np.abs(a - b)) <= 4 * math.sqrt(math.log(m)) / math.sqrt(m)

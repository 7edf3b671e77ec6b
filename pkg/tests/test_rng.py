import numpy as np

from fedbench.rng import RngStream, derive, derive_seed


class TestDerivation:
    def test_same_tuple_same_sequence(self):
        a = derive(42, "client", 3, 7)
        b = derive(42, "client", 3, 7)
        assert [a.next_u64() for _ in range(1000)] == [b.next_u64() for _ in range(1000)]

    def test_differing_index_differs(self):
        a = derive(42, "client", 3, 7)
        b = derive(42, "client", 3, 8)
        assert [a.next_u64() for _ in range(1000)] != [b.next_u64() for _ in range(1000)]

    def test_differing_tag_differs(self):
        assert derive_seed(42, "client", 0, 0) != derive_seed(42, "server", 0, 0)
        assert derive_seed(42, "client", 0, 0) != derive_seed(43, "client", 0, 0)

    def test_seed_is_u64(self):
        s = derive_seed(2**63, "x", 2**64 - 1, 5)
        assert 0 <= s < 2**64


class TestUniform:
    def test_range(self):
        rng = derive(1, "u")
        xs = rng.uniforms(10000)
        assert np.all(xs >= 0.0) and np.all(xs < 1.0)

    def test_open_range(self):
        rng = derive(1, "u")
        xs = [rng.uniform_open() for _ in range(10000)]
        assert all(0.0 < x <= 1.0 for x in xs)

    def test_mean(self):
        rng = derive(7, "u")
        xs = rng.uniforms(100000)
        assert abs(xs.mean() - 0.5) < 0.005

    def test_below_in_range_and_covers(self):
        rng = derive(3, "b")
        draws = [rng.below(7) for _ in range(2000)]
        assert set(draws) == set(range(7))


class TestNormal:
    def test_statistics(self):
        # Monte-Carlo oracle: 100k standard-normal draws.
        rng = derive(11, "n")
        xs = rng.normals(100000)
        assert abs(xs.mean()) < 0.02
        assert abs(xs.var() - 1.0) < 0.05

    def test_deterministic(self):
        a = derive(5, "n").normals(100)
        b = derive(5, "n").normals(100)
        np.testing.assert_array_equal(a, b)


class TestGamma:
    def test_statistics(self):
        # Gamma(a,1) has mean a and variance a.
        for shape, seed in ((0.5, 21), (3.0, 22)):
            rng = derive(seed, "g")
            xs = np.fromiter((rng.gamma(shape) for _ in range(100000)), dtype=float)
            assert abs(xs.mean() - shape) < 0.02 * shape
            assert abs(xs.var() - shape) < 0.05 * shape

    def test_positive(self):
        rng = derive(9, "g")
        assert all(rng.gamma(0.1) > 0 for _ in range(500))


class TestDirichlet:
    def test_simplex(self):
        rng = derive(13, "d")
        for _ in range(200):
            q = rng.dirichlet(np.full(10, 0.1))
            assert np.all(q >= 0.0)
            assert abs(q.sum() - 1.0) < 1e-12

    def test_mean_near_uniform(self):
        # E[q] = alpha / sum(alpha) = 1/N regardless of concentration.
        rng = derive(17, "d")
        qs = np.stack([rng.dirichlet(np.full(10, 0.1)) for _ in range(1000)])
        np.testing.assert_allclose(qs.mean(axis=0), 0.1, atol=0.02)


class TestPermutation:
    def test_is_permutation(self):
        rng = derive(19, "p")
        p = rng.permutation(257)
        assert sorted(p.tolist()) == list(range(257))

    def test_choose_without_replacement(self):
        rng = derive(23, "c")
        for _ in range(50):
            picked = rng.choose(10, 4)
            assert len(set(picked)) == 4
            assert all(0 <= i < 10 for i in picked)

    def test_interleaving_does_not_couple_streams(self):
        a1, b1 = derive(1, "x"), derive(1, "y")
        seq_a = [a1.next_u64() for _ in range(10)]
        seq_b = [b1.next_u64() for _ in range(10)]
        a2, b2 = derive(1, "x"), derive(1, "y")
        inter_a, inter_b = [], []
        for _ in range(10):
            inter_a.append(a2.next_u64())
            inter_b.append(b2.next_u64())
        assert seq_a == inter_a and seq_b == inter_b

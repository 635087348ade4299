"""Deterministic stream derivation: replay, independence, path identity."""

import numpy as np

from nsm.rng import (NS_DATA, NS_EVAL, NS_INIT, NS_NOISE, NS_SHUFFLE,
                     RngStream, root_stream)


class TestStreamIdentity:

    def test_same_path_replays_identically(self):
        a = RngStream(42).child(NS_NOISE, 3, 7).generator().normal(size=100)
        b = RngStream(42).child(NS_NOISE, 3, 7).generator().normal(size=100)
        np.testing.assert_array_equal(a, b)

    def test_generator_twice_from_same_stream(self):
        s = RngStream(0).child(NS_EVAL, 1)
        np.testing.assert_array_equal(s.generator().normal(size=16),
                                      s.generator().normal(size=16))

    def test_child_is_pure(self):
        s = RngStream(5)
        assert s.child(1, 2) == s.child(1, 2)
        assert s.child(1, 2).path == (1, 2)
        assert s.path == ()

    def test_different_seeds_differ(self):
        a = RngStream(1).child(NS_NOISE).generator().normal(size=64)
        b = RngStream(2).child(NS_NOISE).generator().normal(size=64)
        assert not np.array_equal(a, b)

    def test_sibling_streams_differ(self):
        a = RngStream(1).child(NS_NOISE, 0).generator().normal(size=64)
        b = RngStream(1).child(NS_NOISE, 1).generator().normal(size=64)
        assert not np.array_equal(a, b)

    def test_namespaces_are_distinct(self):
        names = [NS_NOISE, NS_SHUFFLE, NS_INIT, NS_EVAL, NS_DATA]
        assert len(set(names)) == len(names)
        draws = [RngStream(9).child(n).generator().normal(size=32)
                 for n in names]
        for i in range(len(draws)):
            for j in range(i + 1, len(draws)):
                assert not np.array_equal(draws[i], draws[j])

    def test_nested_vs_flat_derivation_matches(self):
        # child(a).child(b) names the same stream as child(a, b)
        a = RngStream(3).child(4).child(5).generator().normal(size=8)
        b = RngStream(3).child(4, 5).generator().normal(size=8)
        np.testing.assert_array_equal(a, b)

    def test_streams_do_not_interact(self):
        # consuming one stream leaves siblings untouched
        s = RngStream(7)
        before = s.child(2).generator().normal(size=32)
        _ = s.child(1).generator().normal(size=10000)
        after = s.child(2).generator().normal(size=32)
        np.testing.assert_array_equal(before, after)

    def test_negative_and_large_ids_wrap_to_u64(self):
        a = RngStream(1).child(-1)
        b = RngStream(1).child((1 << 64) - 1)
        assert a == b

    def test_root_stream(self):
        assert root_stream(11) == RngStream(11)
        assert root_stream(-1).seed == (1 << 64) - 1


class TestStatisticalSanity:

    def test_uniform_mean(self):
        u = RngStream(123).child(NS_DATA).generator().uniform(size=100000)
        np.testing.assert_allclose(u.mean(), 0.5, atol=5e-3)

    def test_permutation_is_a_permutation(self):
        g = RngStream(123).child(NS_SHUFFLE, 0).generator()
        p = g.permutation(1000)
        assert sorted(p.tolist()) == list(range(1000))

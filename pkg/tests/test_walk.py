import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from tdwalk import walk
from tdwalk.boolfn import make_parity, seven_junta, support_patterns
from tdwalk.walk import (
    WalkConfig,
    dump_trajectory,
    edge_walk_stream,
    iid_stream,
    init_walk,
    pair_stream,
    projected_chain_kernel,
    spectral_gap,
    step,
)


def trajectory(cfg, n):
    state = init_walk(cfg)
    points = [state.current.copy()]
    for _ in range(n):
        step(state)
        points.append(state.current.copy())
    return np.array(points)


class TestInitWalk:
    def test_deterministic(self):
        cfg = WalkConfig(20, 0.5, 42)
        a = init_walk(cfg)
        b = init_walk(cfg)
        assert np.array_equal(a.current, b.current)
        assert a.step_count == 0

    def test_d1_values(self):
        for seed in range(20):
            s = init_walk(WalkConfig(1, 0.5, seed))
            assert s.current[0] in (-1, 1)

    def test_initial_point_uniform_over_seeds(self):
        d = 4
        n = 100_000
        total = np.zeros(d)
        for seed in range(n):
            total += init_walk(WalkConfig(d, 0.5, seed)).current
        means = total / n
        assert np.all(np.abs(means) <= 0.02)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            WalkConfig(0, 0.5, 1)
        with pytest.raises(ValueError):
            WalkConfig(5, 0.0, 1)
        with pytest.raises(ValueError):
            WalkConfig(5, 1.0, 1)


class TestStep:
    def test_flip_fraction_band(self):
        # p = 0.9, d = 50: fraction of non-lazy steps within the binomial band
        state = init_walk(WalkConfig(50, 0.9, 3))
        n = 100_000
        flips = 0
        for _ in range(n):
            step(state)
            flips += state.last_move[1]
        assert 0.894 <= flips / n <= 0.906

    def test_bit_identical_states(self):
        cfg = WalkConfig(12, 0.7, 5)
        a = init_walk(cfg)
        b = init_walk(cfg)
        for _ in range(200):
            step(a)
            step(b)
        assert np.array_equal(a.current, b.current)
        assert a.last_move == b.last_move
        assert a.step_count == b.step_count == 200

    def test_single_flip_invariant(self):
        points = trajectory(WalkConfig(9, 0.8, 11), 500)
        hamming = np.sum(points[1:] != points[:-1], axis=1)
        assert set(np.unique(hamming)) <= {0, 1}

    @settings(max_examples=20, deadline=None)
    @given(st.integers(1, 30), st.floats(0.05, 0.95), st.integers(0, 1000))
    def test_single_flip_invariant_property(self, d, p, seed):
        points = trajectory(WalkConfig(d, p, seed), 60)
        assert np.all(np.sum(points[1:] != points[:-1], axis=1) <= 1)

    def test_off_support_step_rate(self):
        # for a k-junta the label-preserving step rate is (d-k)/d + (k/d)(1-p)
        d, k, p = 25, 5, 0.7
        state = init_walk(WalkConfig(d, p, 17))
        n = 20_000
        off = 0
        for _ in range(n):
            step(state)
            j, flipped = state.last_move
            off += not (flipped and j <= k)
        expected = (d - k) / d + (k / d) * (1 - p)
        sigma = np.sqrt(expected * (1 - expected) / n)
        assert abs(off / n - expected) <= 3 * sigma

    def test_stationarity_chi_squared(self):
        # distribution of x^(t) at fixed t over many seeded runs is uniform
        d, t = 6, 5
        counts = np.zeros(2**d)
        n = 100_000
        weights = 1 << np.arange(d - 1, -1, -1)
        for seed in range(n):
            state = init_walk(WalkConfig(d, 0.5, seed))
            for _ in range(t):
                step(state)
            idx = int(((state.current > 0) * weights).sum())
            counts[idx] += 1
        assert stats.chisquare(counts).pvalue > 0.001


class TestPairStream:
    def test_first_pair_is_initial_point(self):
        cfg = WalkConfig(10, 0.5, 9)
        f = make_parity(10, [1, 2])
        fresh = init_walk(cfg)
        x0 = fresh.current.copy()
        state = init_walk(cfg)
        pair = next(pair_stream(state, f, 1))
        assert np.array_equal(pair.prev, x0)

    def test_off_support_flip_keeps_label(self):
        f = make_parity(12, [1, 2, 3])
        state = init_walk(WalkConfig(12, 0.9, 2))
        for pair in pair_stream(state, f, 2000):
            j, flipped = state.last_move
            if not (flipped and j <= 3):
                assert pair.y_next - pair.y_prev == 0.0

    def test_labels_match_eval(self):
        f = seven_junta(15)
        state = init_walk(WalkConfig(15, 0.6, 4))
        for pair in pair_stream(state, f, 300):
            assert pair.y_prev == f.eval(pair.prev)
            assert pair.y_next == f.eval(pair.next)

    def test_pairs_overlap(self):
        f = make_parity(8, [1])
        state = init_walk(WalkConfig(8, 0.5, 6))
        pairs = list(pair_stream(state, f, 50))
        assert state.step_count == 50
        for a, b in zip(pairs[:-1], pairs[1:]):
            assert np.array_equal(a.next, b.prev)
            assert a.y_next == b.y_prev

    def test_reproducible_sequence(self):
        f = seven_junta(20)
        def run():
            state = init_walk(WalkConfig(20, 0.8, 33))
            return [(p.prev.tobytes(), p.next.tobytes(), p.y_prev, p.y_next)
                    for p in pair_stream(state, f, 100)]
        assert run() == run()

    def test_dim_mismatch(self):
        f = make_parity(5, [1])
        state = init_walk(WalkConfig(6, 0.5, 1))
        with pytest.raises(ValueError):
            next(pair_stream(state, f, 1))


class TestIidStream:
    def test_hamming_distance_band(self):
        f = make_parity(50, [1])
        xs = np.array([x for x, _ in iid_stream(50, 21, f, 10_001)])
        hamming = np.sum(xs[1:] != xs[:-1], axis=1)
        assert 24.5 <= hamming.mean() <= 25.5

    def test_deterministic(self):
        f = make_parity(10, [1, 2])
        a = [(x.tobytes(), y) for x, y in iid_stream(10, 5, f, 50)]
        b = [(x.tobytes(), y) for x, y in iid_stream(10, 5, f, 50)]
        assert a == b

    def test_labels(self):
        f = seven_junta(9)
        for x, y in iid_stream(9, 8, f, 200):
            assert y == f.eval(x)


class TestSpectralGap:
    def test_paper_value(self):
        assert spectral_gap(50, 0.9) == pytest.approx(0.036)

    def test_direct_substitution(self):
        assert spectral_gap(2, 0.5) == 0.5

    def test_eigenvalue_oracle(self):
        # full-chain kernel at k = d = 4: second-largest eigenvalue is 1 - 2p/d
        d, p = 4, 0.25
        kernel = projected_chain_kernel(d, d, p)
        eigs = np.sort(np.linalg.eigvalsh(kernel))[::-1]
        assert eigs[0] == pytest.approx(1.0, abs=1e-10)
        assert eigs[1] == pytest.approx(1 - 2 * p / d, abs=1e-10)
        assert eigs[1] == pytest.approx(1 - spectral_gap(d, p), abs=1e-12)


class TestProjectedKernel:
    def test_rows_sum_to_one(self):
        kernel = projected_chain_kernel(3, 10, 0.5)
        np.testing.assert_array_equal(kernel.sum(axis=1), np.ones(8))

    def test_character_eigenvalues(self):
        k, d, p = 3, 10, 0.5
        kernel = projected_chain_kernel(k, d, p)
        pats = support_patterns(k).astype(float)
        for mask in range(2**k):
            subset = [j for j in range(k) if mask & (1 << (k - 1 - j))]
            chi = np.prod(pats[:, subset], axis=1) if subset else np.ones(2**k)
            expected = 1 - 2 * p * len(subset) / d
            np.testing.assert_allclose(kernel @ chi, expected * chi, atol=1e-10)

    def test_k1_matrix(self):
        p, d = 0.3, 6
        kernel = projected_chain_kernel(1, d, p)
        np.testing.assert_allclose(
            kernel, [[1 - p / d, p / d], [p / d, 1 - p / d]], atol=1e-15
        )

    def test_capacity(self):
        with pytest.raises(ValueError):
            projected_chain_kernel(13, 20, 0.5)

    def test_stationary_uniform(self):
        kernel = projected_chain_kernel(4, 9, 0.7)
        pi = np.full(16, 1 / 16)
        np.testing.assert_allclose(pi @ kernel, pi, atol=1e-15)


class TestEdgeWalk:
    def test_hamming_at_most_one(self):
        for u, v in edge_walk_stream(5, 0.5, 13, 500):
            assert np.sum(u != v) <= 1

    def test_chain_shifts(self):
        states = list(edge_walk_stream(4, 0.5, 3, 100))
        for (u1, v1), (u2, v2) in zip(states[:-1], states[1:]):
            assert np.array_equal(v1, u2)

    def test_marginal_uniform_and_stationary(self):
        # chi-squared uniformity of the first vertex at state 1 and state 100
        k = 4
        n = 4096
        weights = 1 << np.arange(k - 1, -1, -1)
        first = np.zeros(2**k)
        later = np.zeros(2**k)
        for seed in range(n):
            stream = edge_walk_stream(k, 0.5, seed, 100)
            u, _ = next(stream)
            first[int(((u > 0) * weights).sum())] += 1
            for u, _ in stream:
                pass
            later[int(((u > 0) * weights).sum())] += 1
        assert stats.chisquare(first).pvalue > 0.001
        assert stats.chisquare(later).pvalue > 0.001

    def test_lazy_step_is_self_loop(self):
        seen_self_loop = False
        for u, v in edge_walk_stream(3, 0.3, 5, 200):
            if np.array_equal(u, v):
                seen_self_loop = True
        assert seen_self_loop


class TestTrajectoryDump:
    def test_golden_file(self, tmp_path):
        import pathlib

        golden = pathlib.Path(__file__).parent / "data" / "golden_walk.csv"
        out = tmp_path / "walk.csv"
        dump_trajectory(WalkConfig(8, 0.75, 12345), make_parity(8, [1, 2, 3]), 40, out)
        assert out.read_bytes() == golden.read_bytes()

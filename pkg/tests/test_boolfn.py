import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tdwalk import boolfn
from tdwalk.boolfn import (
    BooleanFunction,
    from_fourier,
    function_from_spec,
    function_to_spec,
    load_function_spec,
    make_junta_from_table,
    make_parity,
    seven_junta,
    support_patterns,
)


def all_points(dim):
    return support_patterns(dim)


@st.composite
def random_juntas(draw, max_k=6, boolean_valued=False):
    k = draw(st.integers(1, max_k))
    dim = draw(st.integers(k, 12))
    support = draw(
        st.lists(st.integers(1, dim), min_size=k, max_size=k, unique=True)
    )
    if boolean_valued:
        table = draw(
            st.lists(st.sampled_from([-1.0, 1.0]), min_size=2**k, max_size=2**k)
        )
    else:
        table = draw(
            st.lists(
                st.floats(-2, 2, allow_nan=False, allow_infinity=False),
                min_size=2**k,
                max_size=2**k,
            )
        )
    return make_junta_from_table(dim, support, table)


class TestMakeParity:
    def test_fig1_parity(self):
        f = make_parity(50, range(1, 6))
        assert f.terms == {(1, 2, 3, 4, 5): 1.0}
        assert f.support == (1, 2, 3, 4, 5)

    def test_single_coordinate(self):
        f = make_parity(3, [1])
        x = np.array([-1, 1, 1])
        assert f.eval(x) == -1.0

    def test_all_ones(self):
        f = make_parity(10, [1, 2])
        assert f.eval(np.ones(10)) == 1.0

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            make_parity(5, [0, 1])
        with pytest.raises(ValueError):
            make_parity(5, [5, 6])
        with pytest.raises(ValueError):
            make_parity(5, [])


class TestJuntaFromTable:
    def test_seven_junta_terms(self):
        # table built from the product form, transformed exactly
        pats = support_patterns(7)
        table = 0.5 * np.prod(pats[:, :5], axis=1) * (
            1 + pats[:, 5] + pats[:, 6] - pats[:, 5] * pats[:, 6]
        )
        f = make_junta_from_table(50, range(1, 8), table)
        base = (1, 2, 3, 4, 5)
        assert f.terms == {
            base: 0.5,
            base + (6,): 0.5,
            base + (7,): 0.5,
            base + (6, 7): -0.5,
        }
        assert f.terms == seven_junta(50).terms

    def test_dictator(self):
        f = make_junta_from_table(4, [3], [1.0, -1.0])
        assert f.terms == {(3,): -1.0}

    def test_constant_table(self):
        f = make_junta_from_table(4, [1, 2], [1.0] * 4)
        assert f.terms == {(): 1.0}
        assert f.support == ()

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            make_junta_from_table(4, [1, 2], [1.0] * 3)

    @settings(max_examples=50, deadline=None)
    @given(random_juntas())
    def test_walsh_round_trip(self, f):
        k = f.support_size
        pats = support_patterns(k)
        xs = np.ones((2**k, f.dim), dtype=np.int8)
        if k:
            xs[:, np.asarray(f.support) - 1] = pats
        np.testing.assert_allclose(f.eval_many(xs), f.support_table(), atol=1e-12)


class TestEval:
    def test_five_parity_one_flip(self):
        f = make_parity(50, range(1, 6))
        x = np.ones(50)
        x[0] = -1
        assert f.eval(x) == -1.0

    def test_seven_junta_substitution(self):
        f = seven_junta(50)
        x = np.ones(50)
        x[5] = x[6] = -1
        assert f.eval(x) == pytest.approx(-1.0, abs=1e-15)

    def test_empty_terms(self):
        f = BooleanFunction(5, {})
        for x in all_points(5)[:8]:
            assert f.eval(np.resize(x, 5)) == 0.0

    def test_dim_mismatch(self):
        f = make_parity(5, [1])
        with pytest.raises(ValueError):
            f.eval(np.ones(4))


class TestInfluence:
    def test_parity_in_support(self):
        f = make_parity(12, [2, 5, 7])
        assert f.influence(5) == 1.0

    def test_seven_junta_via_brute_force(self):
        f = seven_junta(9)
        assert f.influence(6) == pytest.approx(0.5, abs=1e-12)
        # oracle: flip-disagreement probability over all support patterns
        pats = support_patterns(7).astype(np.int8)
        xs = np.ones((2**7, 9), dtype=np.int8)
        xs[:, :7] = pats
        vals = f.eval_many(xs)
        flipped = xs.copy()
        flipped[:, 5] *= -1
        assert np.mean(vals != f.eval_many(flipped)) == pytest.approx(0.5, abs=1e-12)

    def test_outside_support(self):
        f = seven_junta(50)
        assert f.influence(8) == 0.0

    @settings(max_examples=40, deadline=None)
    @given(random_juntas(boolean_valued=True))
    def test_influence_equals_flip_probability(self, f):
        # for +-1-valued f, Inf_i = Pr[f(x) != f(x^(i))], exactly
        k = f.support_size
        xs = np.ones((2**k, f.dim), dtype=np.int8)
        if k:
            xs[:, np.asarray(f.support) - 1] = support_patterns(k)
        vals = f.eval_many(xs)
        for i in f.support:
            flipped = xs.copy()
            flipped[:, i - 1] *= -1
            oracle = float(np.mean(np.abs(vals - f.eval_many(flipped)) > 1e-9))
            assert f.influence(i) == pytest.approx(oracle, abs=1e-12)


class TestMinSupportInfluence:
    def test_parity(self):
        assert make_parity(10, [1, 2, 3, 4, 5]).min_support_influence() == 1.0

    def test_seven_junta(self):
        assert seven_junta(50).min_support_influence() == pytest.approx(0.5, abs=1e-12)

    def test_weak_coordinate(self):
        f = from_fourier(4, [((1,), 1.0), ((1, 2), 0.1)])
        assert f.min_support_influence() == pytest.approx(0.01, abs=1e-15)

    def test_empty_support(self):
        with pytest.raises(ValueError):
            BooleanFunction(4, {}).min_support_influence()


class TestApplyPermutation:
    def test_identity(self):
        f = seven_junta(8)
        assert f.apply_permutation(range(1, 9)).terms == f.terms

    def test_swap(self):
        f = make_parity(4, [1, 2])
        g = f.apply_permutation([1, 3, 2, 4])
        assert g.terms == {(1, 3): 1.0}

    def test_non_bijection(self):
        with pytest.raises(ValueError):
            make_parity(3, [1]).apply_permutation([1, 1, 2])

    @settings(max_examples=100, deadline=None)
    @given(random_juntas(max_k=4), st.randoms(use_true_random=False))
    def test_eval_property(self, f, rnd):
        perm = list(range(1, f.dim + 1))
        rnd.shuffle(perm)
        g = f.apply_permutation(perm)
        x = np.array([rnd.choice([-1, 1]) for _ in range(f.dim)], dtype=np.int8)
        permuted = np.array([x[perm[i] - 1] for i in range(f.dim)], dtype=np.int8)
        assert g.eval(x) == pytest.approx(f.eval(permuted), abs=1e-12)


class TestInvariants:
    @settings(max_examples=40, deadline=None)
    @given(random_juntas())
    def test_parseval(self, f):
        k = f.support_size
        xs = np.ones((2**k, f.dim), dtype=np.int8)
        if k:
            xs[:, np.asarray(f.support) - 1] = support_patterns(k)
        mean_sq = float(np.mean(f.eval_many(xs) ** 2))
        assert mean_sq == pytest.approx(f.parseval_mass(), abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(random_juntas(), st.integers(0, 10**6))
    def test_off_support_invariance(self, f, salt):
        rng = np.random.default_rng(salt)
        x = (2 * rng.integers(0, 2, size=f.dim) - 1).astype(np.int8)
        base = f.eval(x)
        for i in range(1, f.dim + 1):
            if i not in f.support:
                flipped = x.copy()
                flipped[i - 1] *= -1
                assert f.eval(flipped) == base


class TestSpecFile:
    def test_parity_spec(self, tmp_path):
        path = tmp_path / "f.json"
        path.write_text(json.dumps({"dim": 50, "parity_support": [1, 2, 3, 4, 5]}))
        f = load_function_spec(path)
        assert f.terms == {(1, 2, 3, 4, 5): 1.0}

    def test_junta_spec(self):
        f = function_from_spec(
            {"dim": 6, "junta": {"support": [2, 4], "table": [1, -1, -1, 1]}}
        )
        assert f.terms == {(2, 4): 1.0}

    def test_fourier_round_trip(self):
        f = seven_junta(50)
        g = function_from_spec(function_to_spec(f))
        assert g.terms == f.terms and g.dim == f.dim

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError):
            function_from_spec({"dim": 4, "parity_support": [1], "extra": 1})

    def test_exactly_one_kind(self):
        with pytest.raises(ValueError):
            function_from_spec({"dim": 4})
        with pytest.raises(ValueError):
            function_from_spec(
                {"dim": 4, "parity_support": [1], "fourier": [{"subset": [1], "coeff": 1.0}]}
            )

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from gselc.selc import (
    ForbiddenArray,
    MutationWeights,
    Significance,
    is_forbidden,
    level_weights,
    mutation_weights,
    parent_probabilities,
    propose_selc_batch,
    significant_effects,
    uniform_weights,
    update_forbidden,
)
from gselc.space import Dataset, DesignSpace, Observation

SIX_PATTERNS = {(1, 1, None), (1, None, 1), (None, 1, 1), (3, 1, None), (3, None, 3), (None, 1, 3)}


def _matches(pattern, x):
    return all(v is None or v == c for v, c in zip(pattern, x))


class TestForbiddenArray:
    def test_table3_worst_two(self, table3):
        fa = update_forbidden(ForbiddenArray(strength=2, order=2), table3)
        assert fa.entries == ((3, 1, 3), (1, 1, 1))
        assert set(fa.patterns()) == SIX_PATTERNS

    def test_membership_examples(self):
        fa = ForbiddenArray(((3, 1, 3), (1, 1, 1)), 2, 2)
        assert is_forbidden(fa, (1, 1, 5))
        assert not is_forbidden(fa, (2, 2, 2))

    def test_forbidden_set_equals_pattern_union(self, space3):
        fa = ForbiddenArray(((3, 1, 3), (1, 1, 1)), 2, 2)
        mask = fa.mask(space3)
        for i, x in enumerate(space3.candidate_array().astype(int).tolist()):
            expected = any(_matches(p, x) for p in SIX_PATTERNS)
            assert mask[i] == expected == is_forbidden(fa, x)

    def test_full_order_bans_only_entries(self, space3):
        fa = ForbiddenArray(((1, 2, 3),), 1, 3)
        assert fa.mask(space3).sum() == 1 and is_forbidden(fa, (1, 2, 3))

    def test_strength_boundaries(self, table3):
        fa = ForbiddenArray(((2, 2, 2),), 0, 2)
        assert update_forbidden(fa, table3) is fa
        everything = update_forbidden(ForbiddenArray(strength=20, order=3), table3)
        assert set(everything.entries) == set(table3.points)

    def test_prior_entries_kept_and_duplicates_collapsed(self, table3):
        prior = ForbiddenArray(((3, 1, 3), (2, 3, 3)), 2, 2)
        fa = update_forbidden(prior, table3)
        assert fa.entries == ((3, 1, 3), (2, 3, 3), (1, 1, 1))

    def test_invalid(self):
        with pytest.raises(ValueError):
            ForbiddenArray(((1, 2),), 1, 3)
        with pytest.raises(ValueError):
            ForbiddenArray((), -1, 1)

    @given(
        entries=st.lists(st.tuples(*[st.integers(1, 3)] * 3), max_size=4),
        extra=st.tuples(*[st.integers(1, 3)] * 3),
        order=st.integers(1, 3),
    )
    def test_self_consistent_and_monotone(self, entries, extra, order):
        space = DesignSpace.grid(3, 3)
        fa = ForbiddenArray(tuple(entries), 1, order)
        assert all(is_forbidden(fa, e) for e in fa.entries)
        bigger = ForbiddenArray(tuple(entries) + (extra,), 1, order)
        assert np.all(bigger.mask(space) >= fa.mask(space))


class TestMutationWeights:
    def test_table8_substructure_two(self):
        w = level_weights([np.nan, 0.80, 0.36, -10.00], w0=0.25)
        assert w[1] == pytest.approx(0.25 * 0.25 + (0.8 / 1.16) * 0.75, abs=1e-12)
        assert w[1] == pytest.approx(0.5797, abs=1e-4)
        assert w[0] == w[3] == pytest.approx(0.0625)
        assert w[2] == pytest.approx(0.0625 + (0.36 / 1.16) * 0.75)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)

    def test_equal_positive_is_uniform(self):
        np.testing.assert_allclose(level_weights([2.0, 2.0, 2.0, 2.0]), 0.25)

    def test_single_observed_level(self):
        w = level_weights([np.nan, 3.0, np.nan], w0=0.25)
        np.testing.assert_allclose(w, [0.25 / 3, 0.25 / 3 + 0.75, 0.25 / 3])

    def test_all_nonpositive_reverts_to_uniform(self):
        np.testing.assert_allclose(level_weights([-1.0, np.nan, -3.0, 0.0]), 0.25)

    @given(st.lists(st.one_of(st.floats(-100, 100), st.just(float("nan"))), min_size=2, max_size=12),
           st.floats(0, 1))
    def test_distribution(self, averages, w0):
        w = level_weights(averages, w0)
        assert np.all(w >= 0) and abs(w.sum() - 1) <= 1e-10

    def test_strong_main_effect_is_weighted(self):
        space = DesignSpace.grid(3, 4)
        rng = np.random.default_rng(0)
        obs = []
        for p in itertools.product(range(1, 5), repeat=3):
            obs.append(Observation(p, 10.0 * p[0] + rng.normal(scale=0.1)))
        data = Dataset(tuple(obs))
        sig = significant_effects(data)
        assert 0 in sig.main and 1 not in sig.main
        w = mutation_weights(data, space, significance=sig)
        w.check()
        assert np.argmax(w.marginals[0]) == 3
        np.testing.assert_allclose(w.marginals[1], 0.25)

    def test_interaction_gets_joint_table(self):
        # factors 1 and 2 on a 3-level scale where the response rewards matching levels
        space = DesignSpace((tuple(range(1, 4)), tuple(range(1, 4)), tuple(range(1, 7))))
        rng = np.random.default_rng(3)
        obs = [
            Observation(p, 5.0 * (p[0] == p[1]) + rng.normal(scale=0.05))
            for p in itertools.product(range(1, 4), range(1, 4), range(1, 7))
        ]
        data = Dataset(tuple(obs))
        sig = significant_effects(data)
        assert sig.pairs and sig.pairs[0][0] == (0, 1)
        w = mutation_weights(data, space, significance=sig)
        w.check()
        assert w.partner[0] == 1 and w.partner[1] == 0
        tab = w.joints[(0, 1)]
        assert tab.shape == (3, 3)
        assert np.min(np.diag(tab)) > np.max(tab[~np.eye(3, dtype=bool)])

    def test_unestimable_model_declares_nothing(self, table3):
        few = Dataset(table3.observations[:2])
        assert significant_effects(few) == Significance()


class TestParents:
    def test_shifted_fitness(self):
        y = np.array([-10.0, 0.0, 10.0])
        p = parent_probabilities(y)
        eps = 1e-6 * 20
        np.testing.assert_allclose(p, np.array([eps, 10 + eps, 20 + eps]) / (30 + 3 * eps))
        np.testing.assert_allclose(parent_probabilities([2.0, 2.0]), 0.5)


class TestProposals:
    def test_zero(self, table3, space3):
        assert propose_selc_batch(table3, ForbiddenArray(), uniform_weights(space3), space3, 0, (), np.random.default_rng(0)) == []

    def test_table3_respects_forbidden_patterns(self, table3, space3):
        fa = update_forbidden(ForbiddenArray(strength=2, order=2), table3)
        for seed in range(20):
            out = propose_selc_batch(
                table3, fa, uniform_weights(space3), space3, 4, table3.points, np.random.default_rng(seed)
            )
            assert len(set(out)) == len(out)
            for x in out:
                assert not any(_matches(p, x) for p in SIX_PATTERNS)
                assert x not in table3.points

    def test_uniform_mutation_distribution(self):
        space = DesignSpace.grid(3, 5)
        data = Dataset((Observation((1, 1, 1), 1.0), Observation((2, 2, 2), 2.0)))
        rng = np.random.default_rng(123)
        counts = np.zeros((3, 5))
        total = 0
        while total < 10_000:
            out = propose_selc_batch(data, ForbiddenArray(), uniform_weights(space), space, 20, (), rng, p_mut=1.0)
            for x in out:
                for j, v in enumerate(x):
                    counts[j, v - 1] += 1
            total += len(out)
        for j in range(3):
            assert stats.chisquare(counts[j]).pvalue > 0.001

    def test_deterministic(self, table3, space3):
        fa = ForbiddenArray(((1, 1, 1),), 1, 3)
        w = mutation_weights(table3, space3)
        a = propose_selc_batch(table3, fa, w, space3, 5, table3.points, np.random.default_rng(8))
        b = propose_selc_batch(table3, fa, w, space3, 5, table3.points, np.random.default_rng(8))
        assert a == b

    def test_shortfall_when_space_exhausted(self, table3, space3):
        # 27 points, 9 sampled, everything sharing two levels with an entry banned
        fa = ForbiddenArray(((1, 1, 1), (2, 2, 2), (3, 3, 3)), 1, 1)
        out = propose_selc_batch(table3, fa, uniform_weights(space3), space3, 5, table3.points, np.random.default_rng(0))
        assert out == []

    def test_explicit_candidates_only(self):
        pts = [(1, 1), (1, 2), (2, 2), (3, 3), (2, 1)]
        space = DesignSpace(((1, 2, 3), (1, 2, 3)), candidates=pts)
        data = Dataset((Observation((1, 1), 1.0), Observation((2, 2), 3.0)))
        out = propose_selc_batch(data, ForbiddenArray(), uniform_weights(space), space, 3, data.points,
                                 np.random.default_rng(1), p_mut=1.0)
        assert set(out) <= set(pts) - set(data.points)

    def test_joint_mutation_path(self):
        space = DesignSpace.grid(2, 3)
        tab = np.zeros((3, 3))
        tab[2, 0] = 1.0
        w = MutationWeights((np.full(3, 1 / 3), np.full(3, 1 / 3)), {(0, 1): tab}, {0: 1, 1: 0})
        data = Dataset((Observation((1, 1), 1.0), Observation((2, 2), 2.0)))
        out = propose_selc_batch(data, ForbiddenArray(), w, space, 1, (), np.random.default_rng(0), p_mut=1.0)
        assert out == [(3, 1)]

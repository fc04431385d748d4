import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gselc.space import (
    Dataset,
    DesignSpace,
    DesignSpaceError,
    Observation,
    apply_relabel,
    covering_radius,
    distance,
    enumerate_candidates,
    minimax_design,
    relabel,
    relabel_dataset,
)


class TestDesignSpace:
    def test_full_factorial_order(self):
        space = DesignSpace.grid(2, 2)
        assert enumerate_candidates(space) == [(1, 1), (1, 2), (2, 1), (2, 2)]

    def test_levy_grid_size(self):
        space = DesignSpace.grid(4, 10)
        assert space.M == 10**4
        assert len(enumerate_candidates(space)) == 10**4

    def test_explicit_candidates_kept_in_order(self):
        rng = np.random.default_rng(1)
        grid = DesignSpace.grid(3, 20)
        idx = rng.choice(grid.M, 1800, replace=False)
        pts = [grid.point(int(i)) for i in idx]
        space = DesignSpace(grid.levels, candidates=pts)
        assert space.M == 1800
        assert enumerate_candidates(space) == pts
        assert space.index_of(pts[17]) == 17
        missing = next(p for p in itertools.product(range(1, 21), repeat=3) if p not in set(pts))
        assert not space.contains(missing)

    def test_index_roundtrip(self, pharma_space):
        for i in (0, 1, 240, 241, 12345, pharma_space.M - 1):
            assert pharma_space.index_of(pharma_space.point(i)) == i
        assert pharma_space.M == 40970

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"levels": ()},
            {"levels": ((1,),)},
            {"levels": ((1, 1, 2),)},
            {"levels": ((1, 2),), "candidates": [(3,)]},
            {"levels": ((1, 2), (1, 2)), "names": ("a", "a")},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(DesignSpaceError):
            DesignSpace(**kwargs)

    def test_enumeration_cap(self):
        space = DesignSpace(DesignSpace.grid(3, 10).levels, max_candidates=999)
        with pytest.raises(DesignSpaceError, match="1000"):
            enumerate_candidates(space)

    def test_dict_roundtrip(self):
        space = DesignSpace(((1, 2.5), (0, 1, 2)), candidates=[(1, 0), (2.5, 2)], names=("u", "v"))
        back = DesignSpace.from_dict(space.to_dict())
        assert back == space


class TestDataset:
    def test_rejects_duplicates(self):
        with pytest.raises(ValueError):
            Dataset((Observation((1, 1), 0.0), Observation((1, 1), 2.0)))

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError):
            Observation((1,), float("nan"))

    def test_arrays(self, table3):
        assert table3.n == 9
        assert table3.X.shape == (9, 3)
        assert table3.y[1] == 53.6


class TestDistance:
    def test_examples(self):
        assert distance((1, 1, 1), (1, 1, 1)) == 0
        assert distance((1, 1), (4, 5)) == 5
        assert distance((2, 20, 35), (2, 15, 39)) == pytest.approx(math.sqrt(41), abs=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            distance((1, 2), (1, 2, 3))


def _brute_min_radius(space, n0):
    return min(covering_radius(space, list(s)) for s in itertools.combinations(enumerate_candidates(space), n0))


class TestMinimax:
    def test_one_dimensional_pair(self):
        space = DesignSpace.grid(1, 10)
        assert _brute_min_radius(space, 2) == 2
        for seed in range(10):
            design = minimax_design(space, 2, np.random.default_rng(seed))
            assert covering_radius(space, design) == 2

    @pytest.mark.parametrize("d,L,n0", [(2, 4, 3), (2, 5, 4), (1, 10, 3), (2, 4, 2)])
    def test_small_grids_reach_brute_force_optimum(self, d, L, n0):
        space = DesignSpace.grid(d, L)
        best = _brute_min_radius(space, n0)
        for seed in range(3):
            design = minimax_design(space, n0, np.random.default_rng(seed))
            assert covering_radius(space, design) == pytest.approx(best, abs=1e-12)

    def test_full_library(self):
        space = DesignSpace.grid(2, 3)
        design = minimax_design(space, space.M, np.random.default_rng(0))
        assert sorted(design) == enumerate_candidates(space)
        assert covering_radius(space, design) == 0

    def test_levy_design(self):
        space = DesignSpace.grid(4, 10)
        design = minimax_design(space, 40, np.random.default_rng(3))
        assert len(design) == 40 and len(set(design)) == 40
        assert all(space.contains(p) for p in design)

    def test_no_worse_than_random_start(self):
        space = DesignSpace.grid(3, 6)
        for seed in range(5):
            rng = np.random.default_rng(seed)
            start = rng.choice(space.M, 8, replace=False)
            random_radius = covering_radius(space, [space.point(int(i)) for i in start])
            design = minimax_design(space, 8, np.random.default_rng(seed))
            assert covering_radius(space, design) <= random_radius

    def test_deterministic(self):
        space = DesignSpace.grid(3, 5)
        a = minimax_design(space, 7, np.random.default_rng(11))
        b = minimax_design(space, 7, np.random.default_rng(11))
        assert a == b

    def test_too_many(self):
        with pytest.raises(ValueError):
            minimax_design(DesignSpace.grid(1, 3), 4, np.random.default_rng(0))

    def test_explicit_candidates_only(self):
        pts = [(1, 1), (1, 3), (2, 2), (3, 1), (3, 3), (2, 3)]
        space = DesignSpace(((1, 2, 3), (1, 2, 3)), candidates=pts)
        design = minimax_design(space, 3, np.random.default_rng(0))
        assert set(design) <= set(pts)


class TestRelabel:
    def test_shift_two_of_five(self):
        space = DesignSpace.grid(1, 5)
        m = relabel(space, 0, 2)
        assert [m[level] for level in range(1, 6)] == [3, 4, 5, 1, 2]

    def test_zero_shift_identity(self):
        m = relabel(DesignSpace.grid(1, 5), 0, 0)
        assert all(k == v for k, v in m.items())

    def test_mod_formula(self):
        space = DesignSpace((tuple(range(1, 6)), tuple(range(1, 35))))
        assert relabel(space, 1, 5)[31] == 2

    def test_requires_integer_levels(self):
        with pytest.raises(DesignSpaceError):
            relabel(DesignSpace(((0.5, 1.5, 2.5),)), 0, 1)

    @given(L=st.integers(2, 40), k=st.integers(0, 39))
    def test_inverse_shift(self, L, k):
        k %= L
        space = DesignSpace.grid(1, L)
        fwd, back = relabel(space, 0, k), relabel(space, 0, (L - k) % L)
        assert sorted(fwd.values()) == list(range(1, L + 1))
        assert all(back[fwd[v]] == v for v in range(1, L + 1))

    def test_dataset_responses_unchanged(self, table3):
        m = relabel(DesignSpace.grid(3, 3), 0, 1)
        moved = relabel_dataset(table3, 0, m)
        assert list(moved.y) == list(table3.y)
        assert moved.points[0] == (2, 1, 1)
        assert apply_relabel([(3, 2, 2)], 0, m) == [(1, 2, 2)]

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from gselc import gp
from gselc.ei import ei_ranking, expected_improvement, improvement, select_top_ei
from gselc.space import Dataset, DesignSpace


def test_improvement_examples():
    assert improvement(33, 33) == 0
    assert improvement(28, 33) == 0
    assert improvement(48, 33) == 15


class TestExpectedImprovement:
    def test_at_incumbent(self):
        assert expected_improvement(5.0, 1.0, 5.0) == pytest.approx(stats.norm.pdf(0), rel=1e-12)
        assert expected_improvement(5.0, 1.0, 5.0) == pytest.approx(0.398942, abs=1e-6)

    def test_zero_uncertainty(self):
        assert expected_improvement(2.0, 0.0, 3.0) == 0.0
        assert expected_improvement(4.0, 0.0, 3.0) == 1.0

    def test_vanishing_uncertainty_limit(self):
        assert expected_improvement(4.0, 1e-20, 3.0) == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("y_hat,s,f_max", [(0.3, 0.7, 1.0), (2.0, 1.5, 1.0), (-1.0, 2.0, 0.5)])
    def test_matches_numerical_expectation(self, y_hat, s, f_max):
        # E[max(Y - f_max, 0)] with Y ~ N(y_hat, s^2), by quadrature
        ref, _ = integrate.quad(lambda t: (t - f_max) * stats.norm.pdf(t, y_hat, s), f_max, np.inf)
        assert expected_improvement(y_hat, s * s, f_max) == pytest.approx(ref, rel=1e-8)

    def test_as_printed_form(self):
        y_hat, s2, f_max = 1.0, 4.0, 2.0
        u = (y_hat - f_max) / 2.0
        ref = (y_hat - f_max) * stats.norm.cdf(u) + s2 * stats.norm.pdf(u)
        assert expected_improvement(y_hat, s2, f_max, "as_printed") == pytest.approx(ref, rel=1e-12)
        with pytest.raises(ValueError):
            expected_improvement(y_hat, s2, f_max, "other")

    def test_array_input(self):
        out = expected_improvement(np.array([1.0, 2.0]), np.array([0.0, 1.0]), 1.5)
        assert out.shape == (2,) and out[0] == 0.0 and out[1] > 0.5

    @given(
        y_hat=st.floats(-50, 50),
        s=st.floats(1e-3, 20),
        f_max=st.floats(-50, 50),
    )
    def test_nonnegative_and_positive_with_spread(self, y_hat, s, f_max):
        ei = expected_improvement(y_hat, s * s, f_max)
        assert ei >= 0
        if (y_hat - f_max) / s > -30:
            assert ei > 0

    @given(u=st.floats(-6, 6), f_max=st.floats(-10, 10))
    def test_monotone_in_spread_and_prediction(self, u, f_max):
        s_grid = np.linspace(0.1, 5, 50)
        ei = expected_improvement(f_max + u * 1.0, s_grid**2, f_max)
        assert np.all(np.diff(ei) >= -1e-12)
        y_grid = f_max + np.linspace(-3, 3, 61)
        ei = expected_improvement(y_grid, 1.0, f_max)
        assert np.all(np.diff(ei) > 0)


def _toy_fit():
    space = DesignSpace.grid(1, 10)
    data = Dataset.from_arrays([[2.0], [5.0], [9.0]], [1.0, 3.0, 0.5])
    return space, data, gp.fit_fixed(data, gp.CorrelationParams.gaussian((0.2,)))


class TestSelectTopEi:
    def test_matches_exhaustive_scan(self):
        space, data, f = _toy_fit()
        picks = select_top_ei(f, space, data.points, 3.0, 2)
        scores = {}
        for x in range(1, 11):
            if (x,) in data.points:
                continue
            scores[(x,)] = expected_improvement(gp.predict(f, [x]), gp.predict_mse(f, [x]), 3.0)
        best = sorted(scores, key=lambda p: -scores[p])[:2]
        assert [s.point for s in picks] == best
        assert picks[0].ei >= picks[1].ei
        for s in picks:
            assert s.ei == pytest.approx(scores[s.point], rel=1e-10)

    def test_zero_and_forced(self):
        space, data, f = _toy_fit()
        assert select_top_ei(f, space, data.points, 3.0, 0) == []
        sampled = [(x,) for x in range(1, 11) if x != 7]
        picks = select_top_ei(f, space, sampled, 3.0, 1)
        assert [s.point for s in picks] == [(7,)]
        with pytest.raises(ValueError):
            select_top_ei(f, space, sampled, 3.0, 2)

    def test_sampled_points_have_negligible_ei(self):
        space, data, f = _toy_fit()
        y_hat, s2 = gp.predict_all(f, space.candidate_array())
        ei = expected_improvement(y_hat, s2, data.y.max())
        for p in data.points:
            assert ei[space.index_of(p)] <= 1e-8 * np.sqrt(f.sigma2_hat)

    def test_ties_keep_enumeration_order(self):
        ei = np.array([0.5, 1.0, 0.5, 1.0, 0.0])
        eligible = np.array([True, True, True, True, True])
        assert list(ei_ranking(ei, eligible)) == [1, 3, 0, 2, 4]
        eligible[1] = False
        assert list(ei_ranking(ei, eligible)) == [3, 0, 2, 4]

    def test_forbidden_mask_respected_and_deterministic(self):
        space, data, f = _toy_fit()
        mask = np.zeros(space.M, dtype=bool)
        first = select_top_ei(f, space, data.points, 3.0, 1)[0]
        mask[first.index] = True
        picks = select_top_ei(f, space, data.points, 3.0, 3, forbidden_mask=mask)
        assert first.point not in [s.point for s in picks]
        again = select_top_ei(f, space, data.points, 3.0, 3, forbidden_mask=mask)
        assert picks == again

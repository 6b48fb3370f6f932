import numpy as np
import pytest

from spfff.comparators import (LhsConfig, ingest_external_design, maximin_lhs, random_design,
                               random_lhs)
from spfff.core import Design, DesignError, DesignSpec, write_design
from spfff.criteria import maximin
from spfff.ward import spfff_design


def strata(design):
    n = design.n
    return np.floor((design.points + 1) / 2 * n).clip(max=n - 1).astype(int)


def assert_lhs(design):
    s = strata(design)
    for j in range(design.d):
        assert sorted(s[:, j]) == list(range(design.n))


class TestLhs:
    def test_four_strata(self):
        d = random_lhs(LhsConfig(4, 1, seed=5))
        assert sorted(strata(d)[:, 0]) == [0, 1, 2, 3]

    def test_two_points_opposite_halves(self):
        d = random_lhs(LhsConfig(2, 2, seed=1))
        for j in range(2):
            assert np.sign(d.points[0, j]) != np.sign(d.points[1, j])

    def test_deterministic(self):
        c = LhsConfig(10, 3, seed=8)
        assert random_lhs(c).points.tobytes() == random_lhs(c).points.tobytes()

    def test_midpoints(self):
        d = random_lhs(LhsConfig(4, 2, seed=0, jitter=False))
        assert sorted(d.points[:, 0]) == [-0.75, -0.25, 0.25, 0.75]

    @pytest.mark.parametrize("seed", range(5))
    def test_maximin_lhs_is_lhs_and_improves(self, seed):
        c = LhsConfig(12, 3, seed=seed)
        d, trace = maximin_lhs(c, return_trace=True)
        assert_lhs(d)
        assert_lhs(random_lhs(c))
        assert maximin(d) >= maximin(random_lhs(c))
        assert np.all(np.diff(trace) >= 0)
        assert trace[-1] == pytest.approx(maximin(d))

    def test_zero_iterations_is_random_lhs(self):
        c = LhsConfig(9, 2, seed=4, improve_iters=0)
        assert np.array_equal(maximin_lhs(c).points, random_lhs(c).points)

    def test_median_improvement(self):
        gains = [maximin(maximin_lhs(LhsConfig(20, 2, seed=s))) - maximin(random_lhs(LhsConfig(20, 2, seed=s)))
                 for s in range(20)]
        assert np.median(gains) > 0

    def test_invalid(self):
        with pytest.raises(ValueError):
            LhsConfig(1, 2)
        with pytest.raises(ValueError):
            LhsConfig(5, 2, improve_iters=-1)

    def test_random_design(self):
        d = random_design(7, 3, seed=2)
        assert d.points.shape == (7, 3) and np.all(np.abs(d.points) <= 1)
        assert d.n_wp == 7


class TestIngest:
    def test_round_trip(self, tmp_path):
        d = spfff_design(DesignSpec.make(20, 6, 3, 2, seed=3))
        write_design(d, tmp_path / "a.csv")
        back = ingest_external_design(tmp_path / "a.csv", tmp_path / "a.json")
        np.testing.assert_allclose(back.points, d.points, atol=1e-12, rtol=0)
        assert back.wp_id.tolist() == d.wp_id.tolist()
        assert back.d_wp == 2

    def _write(self, tmp_path, rows, d_wp=1):
        text = "run,wp_id,x1,x2\n" + "\n".join(rows) + "\n"
        (tmp_path / "e.csv").write_text(text)
        (tmp_path / "e.json").write_text(f'{{"d_wp": {d_wp}, "d_sp": {2 - d_wp}, "scaled": false, "seed": null}}')
        return tmp_path / "e.csv"

    def test_out_of_range(self, tmp_path):
        p = self._write(tmp_path, ["1,1,0.5,1.5", "2,2,0.1,0.2"])
        with pytest.raises(DesignError, match="row 1, column x2"):
            ingest_external_design(p)

    def test_constancy_violation(self, tmp_path):
        p = self._write(tmp_path, ["1,3,0.5,0.1", "2,3,0.4,0.2"])
        with pytest.raises(DesignError, match="row 2, column x1.*wp_id=3"):
            ingest_external_design(p)

    def test_bad_number(self, tmp_path):
        p = self._write(tmp_path, ["1,1,abc,0.1"])
        with pytest.raises(DesignError, match="not a number"):
            ingest_external_design(p)

    def test_replicated_external_design(self, tmp_path):
        p = self._write(tmp_path, ["1,1,-1,-1", "2,1,-1,1", "3,2,1,-1", "4,2,1,-1"])
        d = ingest_external_design(p)
        assert d.n_wp == 2 and maximin(d) == 0.0

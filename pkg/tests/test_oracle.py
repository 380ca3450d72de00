"""Brute-force reference tests.

`background_direct` is the slowest, most literal implementation in the
package: explicit transmittance products and direct sums. These tests anchor
the vectorized reference to it, then anchor the production solver to both.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatprune.oracle import (
    OracleReport,
    audit,
    background_direct,
    background_direct_all,
    leave_one_out_se,
)
from splatprune.quant import QuantConstants, quantify_scene
from splatprune.raster import ContributionList
from splatprune.synth import SynthSpec, generate

from helpers import build_scene, single_view

BLACK = (0.0, 0.0, 0.0)


def random_list(rng, n):
    return ContributionList.build(
        [(i, rng.uniform(0, 1, 3), rng.uniform(0.004, 0.99)) for i in range(n)]
    )


class TestDirectBackground:
    def test_two_equal_halves(self):
        h = ContributionList.build([(0, (1.0, 0.0, 0.0), 0.5), (1, (1.0, 0.0, 0.0), 0.5)])
        np.testing.assert_array_equal(background_direct(h, 0, BLACK), [0.5, 0.0, 0.0])
        np.testing.assert_array_equal(background_direct(h, 1, BLACK), [0.0, 0.0, 0.0])

    def test_background_term_attenuated_correctly(self):
        h = ContributionList.build([(0, (1.0, 1.0, 1.0), 0.5)])
        # behind the only contribution sits just the background
        np.testing.assert_allclose(background_direct(h, 0, (0.3, 0.6, 0.9)), [0.3, 0.6, 0.9])

    def test_index_validation(self):
        h = ContributionList.build([(0, (1.0, 1.0, 1.0), 0.5)])
        with pytest.raises(IndexError):
            background_direct(h, 1)
        with pytest.raises(IndexError):
            background_direct(h, -1)

    @settings(max_examples=40, deadline=None)
    @given(
        n=st.integers(1, 24),
        seed=st.integers(0, 2**31 - 1),
        bg=st.floats(0, 1),
    )
    def test_vectorized_matches_per_index_loop(self, n, seed, bg):
        h = random_list(np.random.default_rng(seed), n)
        fast = background_direct_all(h, (bg, bg, bg))
        assert fast.shape == (n, 3)
        for k in range(n):
            slow = background_direct(h, k, (bg, bg, bg))
            np.testing.assert_allclose(fast[k], slow, rtol=1e-12, atol=1e-300)

    def test_empty_list(self):
        assert background_direct_all(ContributionList.build([])).shape == (0, 3)


class TestLeaveOneOut:
    def test_matches_analytic_on_simple_scene(self):
        scene = build_scene(
            [[0.0, 0.0, 2.0], [0.05, 0.05, 2.5]],
            colors=[[0.9, 0.2, 0.2], [0.2, 0.2, 0.9]],
            opacities=[0.4, 0.6],
            scales=np.full((2, 3), 0.08),
        )
        views = single_view()
        buf = quantify_scene(scene, views, QuantConstants(), BLACK, dtype=np.float64)
        for gid in range(2):
            brute = leave_one_out_se(scene, views, gid, BLACK)
            assert buf.delta_se[gid] == pytest.approx(brute, rel=1e-7)

    def test_removing_an_invisible_gaussian_changes_nothing(self):
        scene = build_scene([[0.0, 0.0, 2.0], [0.0, 0.0, -4.0]])
        assert leave_one_out_se(scene, single_view(), 1, BLACK) == 0.0

    def test_id_validation(self):
        scene = build_scene([[0.0, 0.0, 2.0]])
        with pytest.raises(IndexError):
            leave_one_out_se(scene, single_view(), 1)


@pytest.fixture(scope="module")
def small_report() -> OracleReport:
    scene, views = generate(SynthSpec(seed=17, count=16, mode="layered"))
    return audit(scene, views, QuantConstants(), BLACK, dtype=np.float64)


class TestAudit:

    def test_clean_agreement_tight_in_float64(self, small_report):
        assert small_report.flagged_pixels == 0
        assert not small_report.affected.any()
        assert small_report.max_clean_discrepancy(exact=True) <= 1e-9
        assert small_report.max_clean_discrepancy(exact=False) <= 1e-6

    def test_epsilon_shift_is_measured_not_estimated(self, small_report):
        # guard effect must be tiny when transmittances are moderate
        shift = small_report.epsilon_shift()
        assert shift.max() <= 1e-8 * max(small_report.analytic.max(), 1e-30)
        assert small_report.epsilon == 1e-9

    def test_summary_and_csv_shape(self, small_report):
        s = small_report.summary()
        for key in (
            "gaussians",
            "flagged_pixels",
            "affected_gaussians",
            "max_rel_discrepancy",
            "max_rel_discrepancy_exact_division",
            "max_epsilon_shift",
            "epsilon",
            "dtype",
        ):
            assert key in s
        assert s["gaussians"] == 16
        assert s["dtype"] == "float64"
        rows = small_report.csv_rows()
        assert len(rows) == 17
        assert rows[0][0] == "gaussian_id"

    def test_guards_reject_large_inputs(self):
        scene, views = generate(SynthSpec(seed=0, count=8))
        with pytest.raises(ValueError, match="quadratic"):
            audit(scene, views, max_gaussians=4)
        with pytest.raises(ValueError, match="pixels"):
            audit(scene, views, max_pixels=100)

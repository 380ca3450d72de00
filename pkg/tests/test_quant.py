"""Removal-error quantification tests.

Hand-derivable worked examples are frozen as literals; the recorded-render
path is pinned against the standalone per-pixel path bit for bit.
"""

import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatprune.camera import ViewSet
from splatprune.quant import (
    EPSILON,
    BlendState,
    ErrorBuffer,
    QuantConstants,
    blend_prefix,
    delta_se,
    histogram,
    histogram_csv_rows,
    quantify_pixel,
    quantify_scene,
    quantify_view,
    read_scores_csv,
    records_delta_se,
    solve_background,
    write_scores_csv,
)
from splatprune.raster import ContributionList

from helpers import build_scene, single_view

BLACK = (0.0, 0.0, 0.0)


def two_equal_reds():
    return ContributionList.build([(0, (1.0, 0.0, 0.0), 0.5), (1, (1.0, 0.0, 0.0), 0.5)])


class TestBlendPrefix:
    def test_empty_pixel_is_background(self):
        c, state = blend_prefix(ContributionList.build([]), (0.2, 0.3, 0.4))
        np.testing.assert_array_equal(c, [0.2, 0.3, 0.4])
        assert state.prefix_color.shape == (0, 3)

    def test_two_equal_halves(self):
        c, state = blend_prefix(two_equal_reds(), BLACK)
        np.testing.assert_array_equal(c, [0.75, 0.0, 0.0])
        np.testing.assert_array_equal(state.transmittance, [0.5, 0.25])
        np.testing.assert_array_equal(state.prefix_color[:, 0], [0.5, 0.75])

    def test_background_folds_against_residual(self):
        c, _ = blend_prefix(two_equal_reds(), (0.0, 0.0, 1.0))
        np.testing.assert_array_equal(c, [0.75, 0.0, 0.25])


class TestBackSolve:
    def test_two_equal_halves_back_solve(self):
        h = two_equal_reds()
        c, state = blend_prefix(h, BLACK)
        b1 = solve_background(c, state.prefix_color[0], state.transmittance[0], eps=0.0)
        np.testing.assert_array_equal(b1, [0.5, 0.0, 0.0])  # exact: 0.25 / 0.5
        b2 = solve_background(c, state.prefix_color[1], state.transmittance[1], eps=0.0)
        np.testing.assert_array_equal(b2, [0.0, 0.0, 0.0])

    def test_epsilon_shrinks_toward_zero(self):
        got = solve_background(np.array([1.0]), np.array([0.0]), np.array([1e-12]), eps=1e-9)
        assert got[0] == pytest.approx(1e-12 / (1e-12 + 1e-9) * 1e12, rel=1e-9)
        exact = solve_background(np.array([1.0]), np.array([0.0]), np.array([1e-12]), eps=0.0)
        assert exact[0] == 1e12

    def test_delta_se_squared_norm(self):
        got = delta_se(0.5, 0.5, np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 0.0]))
        assert got == 0.0625
        # alpha = 1 is legal here; no clamping inside the solver
        assert delta_se(1.0, 1.0, np.ones(3), np.zeros(3)) == 3.0


class TestQuantifyPixel:
    def test_two_equal_halves_scores(self):
        scores = dict(quantify_pixel(two_equal_reds(), background=BLACK))
        # exact with the production epsilon: the rear solve has a zero numerator
        assert scores[1] == 0.0625
        assert scores[0] == pytest.approx(0.0625, abs=1e-9)

    def test_two_equal_halves_scores_exact_epsilon_zero(self):
        scores = dict(quantify_pixel(two_equal_reds(), background=BLACK, eps=0.0))
        assert scores[0] == 0.0625
        assert scores[1] == 0.0625

    def test_single_contribution_closed_form(self):
        h = ContributionList.build([(7, (1.0, 0.5, 0.25), 0.25)])
        scores = dict(quantify_pixel(h, background=BLACK))
        # alpha^2 * |c|^2, exact in binary floating point
        assert scores[7] == 0.25 * 0.25 * (1.0 + 0.25 + 0.0625)

    def test_single_contribution_over_background(self):
        h = ContributionList.build([(0, (1.0, 1.0, 1.0), 0.5)])
        scores = dict(quantify_pixel(h, background=(0.5, 0.5, 0.5)))
        # removing it leaves the background: |C - bg|^2 = 3 * 0.25^2
        assert scores[0] == pytest.approx(0.1875, abs=1e-8)

    def test_rear_contribution_suppressed_by_transmittance(self):
        h = ContributionList.build([(0, (1.0, 1.0, 1.0), 0.99), (1, (1.0, 1.0, 1.0), 0.5)])
        scores = dict(quantify_pixel(h, background=BLACK))
        assert scores[1] == pytest.approx(3 * (0.01 * 0.5) ** 2, rel=1e-6)
        assert scores[0] > 1000 * scores[1]

    def test_precomputed_state_matches_recompute(self):
        h = two_equal_reds()
        c, state = blend_prefix(h, BLACK)
        assert quantify_pixel(h, c, state, BLACK) == quantify_pixel(h, background=BLACK)

    def test_rejects_half_supplied_state(self):
        h = two_equal_reds()
        c, state = blend_prefix(h, BLACK)
        with pytest.raises(ValueError, match="both"):
            quantify_pixel(h, c_render=c)
        with pytest.raises(ValueError, match="both"):
            quantify_pixel(h, state=state)

    def test_empty_pixel_scores_nothing(self):
        assert quantify_pixel(ContributionList.build([])) == []

    @settings(max_examples=60, deadline=None)
    @given(
        entries=st.lists(
            st.tuples(
                st.floats(0.004, 0.99),
                st.tuples(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1)),
            ),
            min_size=1,
            max_size=64,
        ),
        bg=st.floats(0, 1),
    )
    def test_scores_nonnegative_and_finite(self, entries, bg):
        h = ContributionList.build([(i, c, a) for i, (a, c) in enumerate(entries)])
        scores = quantify_pixel(h, background=(bg, bg, bg))
        assert len(scores) == len(entries)
        for _, s in scores:
            assert np.isfinite(s)
            assert s >= 0.0
        _, state = blend_prefix(h, (bg, bg, bg))
        assert (np.diff(state.transmittance) <= 0).all()  # transmittance never recovers


class TestRecordedPath:
    def test_records_match_per_pixel_path_bitwise(self, layered50):
        scene, views = layered50
        consts = QuantConstants()
        for dtype in (np.float32, np.float64):
            _, _, out = quantify_view(scene, views[0], consts, BLACK, dtype=dtype)
            fast = records_delta_se(out.records, out.image, consts.epsilon, dtype)
            flat = out.image.reshape(-1, 3)
            cursor = {}
            for pix, lst in out.records.iter_pixels():
                scores = quantify_pixel(lst, flat[pix], _state_of(out, pix), BLACK, consts.epsilon)
                cursor[pix] = np.array([s for _, s in scores], dtype)
            order = out.records.pixel_order()
            slow = np.concatenate([cursor[p] for p in sorted(cursor)]) if cursor else np.zeros(0)
            np.testing.assert_array_equal(fast[order], slow)

    def test_touch_counts_match_record_multiplicity(self, layered50):
        scene, views = layered50
        partial, counts, out = quantify_view(scene, views[1], QuantConstants(), BLACK)
        expected = np.bincount(out.records.gid, minlength=len(scene))
        np.testing.assert_array_equal(counts, expected)
        assert partial[counts == 0].sum() == 0.0

    def test_unrendered_ids_score_zero(self):
        scene = build_scene([[0.0, 0.0, 2.0], [0.0, 0.0, -5.0]], opacities=[0.5, 0.9])
        buf = quantify_scene(scene, single_view(), QuantConstants(), BLACK)
        assert buf.delta_se[1] == 0.0
        assert buf.touch_count[1] == 0
        assert buf.delta_se[0] > 0.0


def _state_of(out, pix):
    """Rebuild a BlendState for one pixel from the flat records."""
    sel = np.flatnonzero(out.records.pix == pix)
    return BlendState(
        prefix_color=out.records.p_after[sel],
        transmittance=out.records.t_after[sel],
    )


class TestSceneAccumulation:
    def test_view_additivity_with_trailing_view(self, layered50):
        scene, views = layered50
        consts = QuantConstants()
        full = quantify_scene(scene, views, consts, BLACK)
        head = quantify_scene(scene, ViewSet(views.views[:-1]), consts, BLACK)
        tail = quantify_scene(scene, ViewSet(views.views[-1:]), consts, BLACK)
        np.testing.assert_array_equal(full.delta_se, head.delta_se + tail.delta_se)
        np.testing.assert_array_equal(full.touch_count, head.touch_count + tail.touch_count)

    def test_duplicated_views_double_everything(self, layered50):
        scene, views = layered50
        consts = QuantConstants()
        base = quantify_scene(scene, ViewSet(views.views[:1]), consts, BLACK)
        twin = dataclasses.replace(views[0], name="twin")
        doubled = quantify_scene(scene, ViewSet((views[0], twin)), consts, BLACK)
        np.testing.assert_array_equal(doubled.delta_se, 2.0 * base.delta_se)
        np.testing.assert_array_equal(doubled.touch_count, 2 * base.touch_count)

    def test_thread_count_does_not_change_bits(self, layered50):
        scene, views = layered50
        consts = QuantConstants()
        seq = quantify_scene(scene, views, consts, BLACK, threads=1)
        par = quantify_scene(scene, views, consts, BLACK, threads=4)
        np.testing.assert_array_equal(seq.delta_se, par.delta_se)
        np.testing.assert_array_equal(seq.touch_count, par.touch_count)

    def test_thread_validation(self, layered50):
        scene, views = layered50
        with pytest.raises(ValueError, match="threads"):
            quantify_scene(scene, views, QuantConstants(), BLACK, threads=0)


class TestConstants:
    def test_defaults(self):
        consts = QuantConstants()
        assert consts.epsilon == 1e-9
        assert consts.epsilon == EPSILON
        assert consts.n_max == 64

    def test_zero_epsilon_allowed(self):
        assert QuantConstants(epsilon=0.0).epsilon == 0.0

    def test_invalid_values_rejected(self):
        with pytest.raises(ValueError, match="epsilon"):
            QuantConstants(epsilon=-1e-9)
        with pytest.raises(ValueError, match="n_max"):
            QuantConstants(n_max=0)

    def test_error_buffer_shape_mismatch(self):
        with pytest.raises(ValueError, match="identical shape"):
            ErrorBuffer(delta_se=np.zeros(3), touch_count=np.zeros(2, np.int64))


class TestHistogram:
    def test_decade_aligned_bins(self):
        buf = ErrorBuffer(
            delta_se=np.array([0.0, 1.0, 10.0, 100.0]), touch_count=np.zeros(4, np.int64)
        )
        hist = histogram(buf, bins=3)
        assert hist.zero_count == 1
        np.testing.assert_array_equal(hist.edges_log10, [0.0, 1.0, 2.0, 3.0])
        np.testing.assert_array_equal(hist.counts, [1, 1, 1])

    def test_all_zero_buffer(self):
        buf = ErrorBuffer(delta_se=np.zeros(5), touch_count=np.zeros(5, np.int64))
        hist = histogram(buf, bins=4)
        assert hist.zero_count == 5
        np.testing.assert_array_equal(hist.counts, 0)

    def test_csv_rows_start_with_zero_bin(self):
        buf = ErrorBuffer(delta_se=np.array([0.0, 0.5]), touch_count=np.zeros(2, np.int64))
        rows = histogram_csv_rows(histogram(buf, bins=2))
        assert rows[0] == ("-inf", "-inf", "1")
        assert len(rows) == 3
        assert sum(int(r[2]) for r in rows[1:]) == 1

    def test_bins_validated(self):
        buf = ErrorBuffer(delta_se=np.ones(1), touch_count=np.zeros(1, np.int64))
        with pytest.raises(ValueError, match="bins"):
            histogram(buf, bins=0)


class TestScoresCsv:
    def test_round_trip(self, tmp_path, layered50_scores):
        buf = layered50_scores
        path = tmp_path / "scores.csv"
        write_scores_csv(buf, path, metadata={"epsilon": 1e-9, "n_max": 64})
        back, meta = read_scores_csv(path)
        np.testing.assert_array_equal(back.delta_se, buf.delta_se)
        np.testing.assert_array_equal(back.touch_count, buf.touch_count)
        assert meta["epsilon"] == "1e-09"
        assert meta["n_max"] == "64"

    def test_identical_buffers_identical_bytes(self, tmp_path, layered50_scores):
        buf = layered50_scores
        p1 = tmp_path / "a.csv"
        p2 = tmp_path / "b.csv"
        write_scores_csv(buf, p1, metadata={"k": "v"})
        write_scores_csv(buf, p2, metadata={"k": "v"})
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("gaussian_id,delta,touch_count\n0,1.0,2\n")
        with pytest.raises(ValueError, match="header"):
            read_scores_csv(path)

    def test_sparse_ids_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("gaussian_id,delta_se,touch_count\n0,1.0,2\n2,1.0,2\n")
        with pytest.raises(ValueError, match="dense"):
            read_scores_csv(path)

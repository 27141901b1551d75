"""Quality head, saliency, channel merge, visualization and the full map."""

from __future__ import annotations

import math

import numpy as np
import pytest

from plqlab.errors import ConfigError, DataError, RegionError, ZeroEmbeddingError, ZeroReferenceError
from plqlab.facemodel import EmbeddingModel, build_reference, embed
from plqlab.fiq import FiqConfig, quality
from plqlab.numgrad import dropout_site, fully_connected
from plqlab.plq import (
    PlqMap,
    PlqOptions,
    WeightMode,
    build_head,
    calibrate_gamma,
    check_saliency,
    find_low_quality_region,
    merge_channels,
    plq_map,
    plq_map_with,
    read_plq_csv,
    saliency,
    visualize,
    visualize_values,
    write_plq_csv,
)
from plqlab.imageio import render_heatmap
from plqlab.regions import Region


def _v(s, gamma):
    return 1.0 - 1.0 / (1.0 + 10.0**gamma * s * s)


class TestQualityHead:
    def test_nonnegative_embedding_literal(self):
        head = build_head(np.array([1.0, 3.0]), 0.8)
        np.testing.assert_allclose(head.weights, [0.2, 0.2])
        assert head(np.array([1.0, 3.0])) == pytest.approx(0.8, abs=1e-15)
        assert head.bias == 0.0

    def test_signed_embedding_literal_misses(self):
        head = build_head(np.array([1.0, -3.0]), 0.8, WeightMode.LITERAL)
        assert head(np.array([1.0, -3.0])) == pytest.approx(-0.4, abs=1e-15)

    def test_signed_embedding_sign_corrected(self):
        head = build_head(np.array([1.0, -3.0]), 0.8, "sign-corrected")
        np.testing.assert_allclose(head.weights, [0.2, -0.2])
        assert head(np.array([1.0, -3.0])) == pytest.approx(0.8, abs=1e-15)

    def test_reproduction_on_random_embeddings(self, rng):
        for _ in range(100):
            e = rng.uniform(0.0, 5.0, size=16)
            q = rng.uniform(0.01, 0.99)
            for mode in WeightMode:
                assert abs(build_head(e, q, mode)(e) - q) < 1e-12
            signed = rng.normal(size=16)
            assert abs(build_head(signed, q, WeightMode.SIGN_CORRECTED)(signed) - q) < 1e-12

    def test_zero_embedding(self):
        with pytest.raises(ZeroEmbeddingError, match="null representation"):
            build_head(np.zeros(4), 0.5)

    def test_literal_mode_spellings(self):
        assert WeightMode("paper-literal") is WeightMode.LITERAL
        assert WeightMode("uniform") is WeightMode.LITERAL
        assert PlqOptions().weight_mode is WeightMode.LITERAL
        with pytest.raises(ValueError):
            WeightMode("literal")


class TestSaliency:
    def test_linear_chain_is_transpose_product(self, rng):
        w = rng.uniform(0.1, 1.0, size=(3, 5))
        net = EmbeddingModel(layers=(dropout_site(0.5), fully_connected(w)), input_shape=(5,))
        head = build_head(np.ones(3), 0.6)
        s = saliency(net, rng.uniform(size=5), head)
        np.testing.assert_array_equal(s.grads, w.T @ head.weights)

    def test_matches_finite_differences(self, model, face):
        head = build_head(embed(model, face), 0.7)
        report = check_saliency(model, face, head, top_k=100)
        assert len(report.indices) == 100
        assert report.passed(1e-5), report.max_error

    @pytest.mark.parametrize("seed", [1, 2])
    def test_matches_finite_differences_random_inputs(self, seed):
        rng = np.random.default_rng(seed)
        net = build_reference(seed=seed)
        image = rng.uniform(size=net.input_shape)
        report = check_saliency(net, image, build_head(embed(net, image), rng.uniform(0.1, 0.9)))
        assert report.passed(1e-5), report.max_error

    @pytest.mark.slow
    def test_gradient_oracle_over_twenty_models(self):
        for seed in range(20):
            rng = np.random.default_rng(100 + seed)
            net = build_reference(seed=100 + seed)
            image = rng.uniform(size=net.input_shape)
            report = check_saliency(net, image, build_head(embed(net, image), 0.5))
            assert report.passed(1e-5), (seed, report.max_error)

    def test_linear_in_head_weights(self, model, face):
        e = embed(model, face)
        single = saliency(model, face, build_head(e, 0.3)).grads
        double = saliency(model, face, build_head(e, 0.6)).grads
        np.testing.assert_allclose(double, 2.0 * single, rtol=1e-12, atol=0.0)

    def test_infinite_clip_is_bit_identical(self, model, face):
        head = build_head(embed(model, face), 0.7)
        np.testing.assert_array_equal(saliency(model, face, head, math.inf).grads, saliency(model, face, head).grads)

    def test_clipping_changes_map_and_stays_finite(self, model, face):
        head = build_head(embed(model, face), 0.7)
        bound = 0.5 * float(np.linalg.norm(head.weights))
        clipped = saliency(model, face, head, clip_norm=bound)
        plain = saliency(model, face, head)
        assert clipped.clipped_steps >= 1
        assert np.isfinite(clipped.grads).all()
        assert not np.array_equal(merge_channels(clipped), merge_channels(plain))

    def test_nonpositive_clip_rejected(self, model, face):
        with pytest.raises(ConfigError):
            saliency(model, face, build_head(embed(model, face), 0.7), clip_norm=0.0)


class TestMergeAndVisualize:
    def test_merge_mean_of_absolutes(self):
        grads = np.array([[[0.3, -0.6, 0.9]]])
        assert merge_channels(grads)[0, 0] == pytest.approx(0.6)

    def test_merge_sign_symmetric(self, rng):
        grads = rng.normal(size=(4, 4, 3))
        np.testing.assert_array_equal(merge_channels(grads), merge_channels(-grads))
        assert not merge_channels(np.zeros((2, 2, 3))).any()

    def test_known_value(self):
        assert visualize_values(np.array([1e-4]), 7.5)[0] == pytest.approx(0.240253, abs=1e-6)

    def test_zero_maps_to_zero_and_range(self, rng):
        values = visualize(np.concatenate([[0.0], rng.exponential(1.0, size=999)]).reshape(10, 100), 7.5).values
        assert values[0, 0] == 0.0
        assert values.min() >= 0.0 and values.max() < 1.0

    def test_huge_saliency_stays_below_one(self):
        assert visualize_values(np.array([1e6]), 7.5)[0] < 1.0

    @pytest.mark.parametrize("gamma", [309.0, 1e4, math.inf, math.nan])
    def test_unrepresentable_gamma_is_config_error(self, gamma):
        with pytest.raises(ConfigError, match="gamma"):
            visualize_values(np.array([0.1]), gamma)
        with pytest.raises(ConfigError, match="gamma"):
            PlqOptions(gamma=gamma)

    def test_large_finite_gamma(self):
        values = visualize_values(np.array([0.0, 1e-3, 1e200]), 300.0)
        assert values[0] == 0.0
        assert values[1] > 0.99 and values.max() < 1.0

    def test_strictly_increasing(self, rng):
        for a, b in rng.uniform(0.0, 1e-3, size=(1000, 2)):
            lo, hi = min(a, b), max(a, b)
            if lo < hi:
                assert _v(lo, 7.5) < _v(hi, 7.5)
                assert visualize_values(np.array([lo]), 7.5)[0] < visualize_values(np.array([hi]), 7.5)[0]

    def test_negative_rejected(self):
        with pytest.raises(DataError):
            visualize(np.array([[0.1, -0.1]]), 7.5)

    def test_no_per_image_rescaling(self, rng):
        s_hat = rng.exponential(1e-4, size=(8, 8))
        for factor in (1.0, 3.0):
            np.testing.assert_array_equal(visualize(factor * s_hat, 7.5).values, _v(factor * s_hat, 7.5))

    def test_map_keeps_merged_saliency(self, rng):
        s_hat = rng.exponential(1e-4, size=(3, 3))
        plq = visualize(s_hat, 6.0)
        np.testing.assert_array_equal(plq.merged_saliency, s_hat)
        assert plq.gamma == 6.0


class TestPlqMap:
    def test_composition_of_components(self, model, face, fast_config):
        result, plq = plq_map(model, face, fast_config, gamma=7.5, clip_norm=1.0)
        q = quality(model, face, fast_config)
        head = build_head(embed(model, face), q.q_scaled)
        expected = visualize(merge_channels(saliency(model, face, head, 1.0)), 7.5)
        assert result == q
        np.testing.assert_array_equal(plq.values, expected.values)

    def test_deterministic(self, model, face, fast_config):
        _, a = plq_map(model, face, fast_config)
        _, b = plq_map(model, face, fast_config)
        np.testing.assert_array_equal(a.values, b.values)

    def test_options_wrapper(self, model, face, fast_config):
        options = PlqOptions(gamma=6.0, weight_mode="sign-corrected", clip_norm=None)
        _, a = plq_map_with(model, face, fast_config, options)
        _, b = plq_map(model, face, fast_config, 6.0, WeightMode.SIGN_CORRECTED, None)
        np.testing.assert_array_equal(a.values, b.values)

    def test_larger_gamma_raises_values_keeps_ranking(self, model, face, fast_config):
        _, low = plq_map(model, face, fast_config, gamma=7.5)
        _, high = plq_map(model, face, fast_config, gamma=8.0)
        nonzero = low.values > 0
        assert (high.values[nonzero] > low.values[nonzero]).all()
        order = np.argsort(low.merged_saliency, axis=None, kind="stable")
        assert (np.diff(high.values.reshape(-1)[order]) >= 0).all()

    def test_options_validate(self):
        with pytest.raises(ConfigError):
            PlqOptions(clip_norm=-1.0)
        with pytest.raises(ValueError):
            PlqOptions(weight_mode="bogus")


class TestCalibrateGamma:
    def test_closed_form(self):
        gamma = calibrate_gamma([np.full((4, 4), 1e-4)], Region(0, 0, 4, 4))
        assert gamma == pytest.approx(math.log10(9) + 8, abs=1e-12)
        assert _v(1e-4, gamma) == pytest.approx(0.9, abs=1e-12)

    def test_unit_reference(self):
        assert calibrate_gamma([np.ones((3, 3))], Region(0, 0, 3, 3)) == pytest.approx(math.log10(9), abs=1e-12)

    def test_doubling_shifts_gamma(self, rng):
        refs = [rng.exponential(1e-3, size=(10, 10)) for _ in range(3)]
        box = Region(2, 2, 6, 6)
        shift = calibrate_gamma(refs, box) - calibrate_gamma([2 * r for r in refs], box)
        assert shift == pytest.approx(2 * math.log10(2), abs=1e-12)

    def test_percentile_inside_box_maps_to_point_nine(self, rng):
        refs = [rng.exponential(1e-3, size=(10, 10)) for _ in range(2)]
        box = Region(1, 2, 7, 5)
        gamma = calibrate_gamma(refs, box)
        q95 = np.percentile(np.concatenate([r[1:8, 2:7].ravel() for r in refs]), 95)
        assert _v(q95, gamma) == pytest.approx(0.9, abs=1e-12)

    def test_zero_reference(self):
        with pytest.raises(ZeroReferenceError):
            calibrate_gamma([np.zeros((4, 4))], Region(0, 0, 2, 2))

    def test_box_outside_image(self):
        with pytest.raises(RegionError):
            calibrate_gamma([np.ones((4, 4))], Region(2, 2, 4, 4))


class TestLowQualityRegion:
    def test_finds_darkest_window(self):
        values = np.full((10, 10), 0.9)
        values[6:9, 2:5] = 0.1
        assert find_low_quality_region(values, 3) == Region.square(6, 2, 3)

    def test_ties_resolve_top_left(self):
        assert find_low_quality_region(np.full((6, 6), 0.5), 2) == Region.square(0, 0, 2)

    def test_search_restricted_to_box(self):
        values = np.full((10, 10), 0.9)
        values[0:2, 0:2] = 0.0
        values[5:7, 5:7] = 0.2
        region = find_low_quality_region(values, 2, within=Region(3, 3, 6, 6))
        assert region == Region.square(5, 5, 2)

    def test_window_too_large(self):
        with pytest.raises(RegionError):
            find_low_quality_region(np.zeros((4, 4)), 5)


class TestCsv:
    def test_round_trip(self, tmp_path, rng):
        values = visualize(rng.exponential(1e-4, size=(5, 7)), 7.5).values
        path = write_plq_csv(values, tmp_path / "map.csv")
        lines = path.read_text().splitlines()
        assert len(lines) == 5 and all(line.count(",") == 6 for line in lines)
        np.testing.assert_allclose(read_plq_csv(path), values, rtol=1e-8)

    def test_accepts_plq_map(self, tmp_path):
        plq = PlqMap(values=np.array([[0.25, 0.5]]), gamma=7.5, merged_saliency=np.zeros((1, 2)))
        assert write_plq_csv(plq, tmp_path / "m.csv").read_text() == "0.25,0.5\n"

    def test_saturated_pixels_render_after_round_trip(self, tmp_path):
        values = visualize_values(np.array([[1e6, 1e-5], [0.0, 1.0]]), 7.5)
        assert values[0, 0] == np.nextafter(1.0, 0.0)
        read = read_plq_csv(write_plq_csv(values, tmp_path / "sat.csv"))
        assert read.max() == 0.999999999
        np.testing.assert_array_equal(render_heatmap(read).pixels, render_heatmap(values).pixels)

    def test_malformed(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0.1,abc\n")
        with pytest.raises(DataError):
            read_plq_csv(path)

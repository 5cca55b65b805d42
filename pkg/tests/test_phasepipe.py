import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ocebench.errors import AllRowsMasked, IndexOutOfRange, TooFewFrames
from ocebench.phasepipe import (
    axial_mean,
    crop_above_surface,
    crop_frames,
    median_filter_3,
    preprocess,
    row_quality_mask,
    temporal_phase_difference,
    unwrap_temporal,
    wrap_phase,
)


class TestUnwrap:
    def test_no_jump_unchanged(self):
        s = np.array([0.1, 0.2, 0.3])
        np.testing.assert_allclose(unwrap_temporal(s), s)

    def test_single_wrap_step(self):
        # raw step -6.0 maps to 2*pi - 6.0
        out = unwrap_temporal(np.array([3.0, -3.0]))
        np.testing.assert_allclose(out, [3.0, 3.0 + (2 * math.pi - 6.0)], atol=1e-12)
        assert out[1] == pytest.approx(3.28319, abs=1e-5)

    def test_ramp_recovered(self):
        ramp = 0.5 * np.arange(20)
        out = unwrap_temporal(wrap_phase(ramp))
        np.testing.assert_allclose(out, ramp, atol=1e-9)

    def test_anchored_at_first_element(self):
        s = np.array([2.9, -2.9, 2.9])
        assert unwrap_temporal(s)[0] == s[0]

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(-3.14159 + 1e-6, 3.14159 - 1e-6), min_size=1, max_size=40),
        st.floats(-10, 10),
    )
    def test_wrap_unwrap_identity(self, steps, start):
        # admissible true steps lie strictly inside (-pi, pi)
        truth = start + np.concatenate([[0.0], np.cumsum(steps)])
        recovered = unwrap_temporal(wrap_phase(truth) if abs(start) <= math.pi else wrap_phase(truth))
        # anchored at the first element, so compare shifted
        np.testing.assert_allclose(recovered - recovered[0], truth - truth[0], atol=1e-9)

    def test_volume_axis(self):
        vol = wrap_phase(np.cumsum(np.random.default_rng(0).uniform(-3, 3, (4, 3, 50)), axis=-1))
        out = unwrap_temporal(vol, axis=-1)
        d = np.diff(out, axis=-1)
        assert np.all(np.abs(d) <= math.pi + 1e-12)


class TestDifference:
    def test_constant_zero(self):
        vol = np.ones((2, 3, 10))
        assert np.all(temporal_phase_difference(vol) == 0)

    def test_shape_contract(self):
        vol = np.zeros((2, 3, 400))
        assert temporal_phase_difference(vol).shape == (2, 3, 399)

    def test_linear_ramp(self):
        vol = np.broadcast_to(0.5 * np.arange(10), (2, 3, 10))
        np.testing.assert_allclose(temporal_phase_difference(vol), 0.5)

    def test_too_few_frames(self):
        with pytest.raises(TooFewFrames):
            temporal_phase_difference(np.zeros((2, 2, 1)))

    def test_inverse_of_cumsum(self):
        rng = np.random.default_rng(5)
        d = rng.standard_normal((2, 2, 30))
        vol = np.cumsum(np.concatenate([np.zeros((2, 2, 1)), d], axis=-1), axis=-1)
        np.testing.assert_allclose(temporal_phase_difference(vol), d, atol=1e-12)

    def test_fused_wrap_diff_equals_unwrap_then_diff(self):
        rng = np.random.default_rng(11)
        wrapped = wrap_phase(np.cumsum(rng.uniform(-3, 3, (3, 4, 60)), axis=-1))
        two_step = temporal_phase_difference(unwrap_temporal(wrapped, axis=-1))
        fused = wrap_phase(np.diff(wrapped, axis=-1))
        np.testing.assert_allclose(two_step, fused, atol=1e-9)


class TestCrops:
    def test_crop_frames(self):
        assert crop_frames(np.zeros((2, 2, 512)), 400).shape[-1] == 400

    def test_crop_frames_identity(self):
        vol = np.random.default_rng(0).standard_normal((2, 2, 40))
        assert np.array_equal(crop_frames(vol, 40), vol)

    def test_crop_frames_duration(self):
        # 400 frames at 30 kHz span 13.33 ms
        assert 400 / 30000 == pytest.approx(13.33e-3, rel=1e-3)

    def test_crop_frames_too_few(self):
        with pytest.raises(TooFewFrames):
            crop_frames(np.zeros((2, 2, 10)), 11)

    def test_crop_surface_identity(self):
        vol = np.random.default_rng(0).standard_normal((4, 5, 6))
        assert np.array_equal(crop_above_surface(vol, 0), vol)

    def test_crop_surface_depth(self):
        assert crop_above_surface(np.zeros((2, 250, 3)), 50).shape[1] == 200

    def test_crop_surface_values_preserved(self):
        vol = np.random.default_rng(0).standard_normal((4, 10, 6))
        out = crop_above_surface(vol, 3)
        assert np.array_equal(out, vol[:, 3:, :])

    def test_crop_surface_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            crop_above_surface(np.zeros((2, 5, 3)), 5)


class TestRowMask:
    def test_uniform_all_kept(self):
        assert row_quality_mask(np.ones((4, 10)), 0.0).all()

    def test_zero_row_masked(self):
        rng = np.random.default_rng(0)
        inten = 1.0 + 0.1 * rng.random((4, 10))
        inten[:, 3] = 0.0
        mask = row_quality_mask(inten, 0.1)
        assert not mask[3]
        assert mask.sum() == 9

    def test_quantile_zero_keeps_all(self):
        rng = np.random.default_rng(1)
        assert row_quality_mask(rng.random((4, 20)), 0.0).all()

    def test_degenerate_keeps_best_row(self):
        inten = np.zeros((4, 5))
        inten[:, 2] = 1.0
        mask = row_quality_mask(inten, 0.0)
        assert mask.any()

    def test_no_rows_raises(self):
        with pytest.raises(AllRowsMasked):
            row_quality_mask(np.zeros((4, 0)), 0.1)


class TestMedianFilter:
    def test_constant_identity(self):
        vol = np.full((4, 5, 6), 2.5)
        assert np.array_equal(median_filter_3(vol), vol)

    def test_impulse_removed(self):
        vol = np.zeros((5, 5, 5))
        vol[2, 2, 2] = 1.0
        assert np.all(median_filter_3(vol) == 0)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(7)
        for _ in range(10):
            vol = rng.standard_normal((5, 5, 7))
            padded = np.pad(vol, 1, mode="edge")
            expected = np.empty_like(vol)
            for i in range(5):
                for j in range(5):
                    for k in range(7):
                        expected[i, j, k] = np.sort(padded[i : i + 3, j : j + 3, k : k + 3].reshape(-1))[13]
            assert np.array_equal(median_filter_3(vol), expected)

    def test_permutation_invariant_in_neighborhood(self):
        rng = np.random.default_rng(9)
        vol = rng.standard_normal((3, 3, 3))
        center = median_filter_3(vol)[1, 1, 1]
        flipped = vol[::-1, ::-1, ::-1].copy()
        assert median_filter_3(flipped)[1, 1, 1] == center


class TestAxialMean:
    def test_constant_along_z(self):
        vol = np.broadcast_to(np.arange(12.0).reshape(3, 1, 4), (3, 5, 4)).copy()
        out = axial_mean(vol, np.ones(5, bool))
        np.testing.assert_allclose(out, vol[:, 0, :])

    def test_masked_rows_excluded(self):
        vol = np.zeros((1, 2, 1))
        vol[0, 0, 0] = 1.0  # masked
        vol[0, 1, 0] = 3.0  # kept
        out = axial_mean(vol, np.array([False, True]))
        assert out[0, 0] == 3.0

    def test_mask_perturbation_invariance(self):
        rng = np.random.default_rng(3)
        vol = rng.standard_normal((4, 6, 5))
        mask = np.array([True, False, True, True, False, True])
        base = axial_mean(vol, mask)
        vol2 = vol.copy()
        vol2[:, ~mask, :] += rng.standard_normal((4, 2, 5)) * 100
        np.testing.assert_allclose(axial_mean(vol2, mask), base)

    def test_all_masked_raises(self):
        with pytest.raises(AllRowsMasked):
            axial_mean(np.zeros((2, 3, 4)), np.zeros(3, bool))


class TestPreprocess:
    def run(self, noise=None, amp=None, seed=0):
        from ocebench.core import AcquisitionConfig
        from ocebench.wavesim import NoiseSpec, PhantomSpec, simulate_measurement

        acq = AcquisitionConfig()
        kw = {} if amp is None else {"amplitude_at_fov_m": amp}
        ph = PhantomSpec(8.3, **kw)
        ns = noise or NoiseSpec(0, 0, 0, 0)
        m = simulate_measurement(ph, acq, ns, 5e-3, seed, delay_range_s=(0.0, 1e-3))
        return preprocess(
            m.phase.data,
            m.intensity.data,
            m.surface_index,
            frame_interval_s=acq.frame_interval_s,
            pixel_pitch_m=acq.pixel_pitch_m,
        )

    def test_map_shape_default(self):
        _, st_map = self.run()
        assert st_map.values.shape == (32, 400)

    def test_zero_amplitude_zero_map(self):
        _, st_map = self.run(amp=0.0)
        assert np.all(st_map.values == 0)

    def test_ridge_monotone_argmax(self):
        _, st_map = self.run()
        peaks = np.argmax(np.abs(st_map.values), axis=1)
        assert np.all(np.diff(peaks) >= 0)

    def test_deterministic(self):
        _, a = self.run(seed=4)
        _, b = self.run(seed=4)
        assert np.array_equal(a.values, b.values)

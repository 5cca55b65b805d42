import numpy as np
import pytest

from ocebench.core import AcquisitionConfig
from ocebench.errors import DegenerateTrack, NoWavefront, TooFewPoints
from ocebench.phasepipe import SpatioTemporalMap, preprocess
from ocebench.velocity import WavefrontTrack, detect_arrival_times, estimate_velocity, fit_velocity
from ocebench.wavesim import NoiseSpec, PhantomSpec, VelocityModel, simulate_measurement

PITCH = 3e-3 / 32
DT = 1.0 / 30000.0


def make_map(values):
    return SpatioTemporalMap(values=np.asarray(values, float), frame_interval_s=DT, pixel_pitch_m=PITCH)


def synthetic_map(v_px_per_frame, ny=32, nt=400, t0=50.0, width=12.0, amp=1.0):
    """Gaussian pulses arriving at t0 + y / v."""
    t = np.arange(nt)[None, :]
    arrival = t0 + np.arange(ny)[:, None] / v_px_per_frame
    return make_map(amp * np.exp(-0.5 * ((t - arrival) / width) ** 2))


class TestDetect:
    def test_all_zero_raises(self):
        with pytest.raises(NoWavefront):
            detect_arrival_times(make_map(np.zeros((8, 100))))

    def test_symmetric_parabola_offset_zero(self):
        m = synthetic_map(0.5)
        track = detect_arrival_times(m)
        # symmetric pulses: refined arrival equals the integer sample at the apex
        errs = track.arrival_frame[track.valid] - (50.0 + np.nonzero(track.valid)[0] * 2.0)
        assert np.all(np.abs(errs) < 0.51)

    def test_literal_1_2_1_peak_refines_to_center(self):
        values = np.zeros((2, 120))
        for y, k in ((0, 60), (1, 64)):
            values[y, k - 1 : k + 2] = [1.0, 2.0, 1.0]
        track = detect_arrival_times(make_map(values))
        assert track.valid.all()
        np.testing.assert_allclose(track.arrival_frame, [60.0, 64.0], atol=1e-12)

    def test_known_slope(self):
        m = synthetic_map(0.5)
        track = detect_arrival_times(m)
        ys = np.nonzero(track.valid)[0]
        d = np.diff(track.arrival_frame[track.valid])
        assert len(ys) >= 30
        assert np.all(np.abs(d - 2.0) < 0.25)

    def test_scale_equivariance(self):
        rng = np.random.default_rng(0)
        base = synthetic_map(1.0).values + 0.01 * rng.standard_normal((32, 400))
        t1 = detect_arrival_times(make_map(base))
        for scale in (0.25, 4.0, 100.0):
            t2 = detect_arrival_times(make_map(scale * base))
            assert np.array_equal(t1.valid, t2.valid)
            np.testing.assert_allclose(t1.arrival_frame[t1.valid], t2.arrival_frame[t2.valid], atol=1e-9)


class TestFit:
    def track(self, ts, valid=None):
        ts = np.asarray(ts, float)
        valid = np.ones(len(ts), bool) if valid is None else valid
        return WavefrontTrack(arrival_frame=ts, confidence=np.ones(len(ts)), valid=valid)

    def test_exact_line(self):
        ts = 5.0 + 2.0 * np.arange(8)
        est = fit_velocity(self.track(ts), PITCH, DT)
        assert est.v_px_per_frame == pytest.approx(0.5, abs=1e-12)
        assert est.r_squared == pytest.approx(1.0, abs=1e-12)
        assert est.n_points == 8

    def test_unit_conversion(self):
        ts = 5.0 + 2.0 * np.arange(8)
        est = fit_velocity(self.track(ts), PITCH, DT)
        assert abs(est.v_mps - 1.40625) < 1e-9

    def test_constant_track_degenerate(self):
        with pytest.raises(DegenerateTrack):
            fit_velocity(self.track(np.full(8, 7.0)), PITCH, DT)

    def test_negative_slope_degenerate(self):
        with pytest.raises(DegenerateTrack):
            fit_velocity(self.track(100.0 - 2.0 * np.arange(8)), PITCH, DT)

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            fit_velocity(self.track([1.0, 2.0, 3.0], valid=np.array([True, False, False])), PITCH, DT)

    def test_r2_below_one_with_noise(self):
        rng = np.random.default_rng(1)
        ts = 5.0 + 2.0 * np.arange(16) + rng.normal(0, 0.5, 16)
        est = fit_velocity(self.track(ts), PITCH, DT)
        assert 0.9 < est.r_squared < 1.0

    def test_mps_invariant(self):
        ts = 5.0 + 2.0 * np.arange(8)
        est = fit_velocity(self.track(ts), PITCH, DT)
        assert est.v_mps == pytest.approx(est.v_px_per_frame * PITCH / DT, rel=1e-15)


class TestRecovery:
    def run_one(self, v, seed, noise):
        acq = AcquisitionConfig()
        ph = PhantomSpec(8.3, VelocityModel(v, 8.3, 1.25))
        m = simulate_measurement(ph, acq, noise, 5e-3, seed, delay_range_s=(0.0, 5e-4))
        _, st_map = preprocess(
            m.phase.data,
            m.intensity.data,
            m.surface_index,
            frame_interval_s=acq.frame_interval_s,
            pixel_pitch_m=acq.pixel_pitch_m,
        )
        return estimate_velocity(st_map)

    @pytest.mark.parametrize("v", [1.0, 2.0, 3.0, 4.0])
    def test_noise_free_within_3pct(self, v):
        est = self.run_one(v, seed=1, noise=NoiseSpec(0, 0, 0, 0))
        assert abs(est.v_mps - v) / v < 0.03

    def test_noisy_median_reasonable(self):
        # smoke-scale version of the acceptance run (8 seeds, one velocity)
        errs = []
        for seed in range(8):
            est = self.run_one(2.0, seed=seed, noise=NoiseSpec())
            errs.append(abs(est.v_mps - 2.0) / 2.0)
        assert np.median(errs) <= 0.10

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from iwknn.filtering import empirical_stats, fit_asymmetric_bounds
from iwknn.sim import (AccessPoint, NoiseModel, VenueLayout, default_layout, generate_offline_campaign,
                       generate_online_stream, path_loss_rssi, random_waypoint_trajectory, sample_rssi,
                       sample_series)

CLEAN = NoiseModel(sigma_dbm=0.0, p_loss=0.0, p_fade=0.0)


class TestLayout:
    def test_default_grid(self):
        lay = default_layout()
        assert len(lay.reference_points) == 20 * 12 == 240
        assert len(lay.aps) == 10
        xs = [p[0] for p in lay.reference_points]
        assert min(xs) > 0 and max(xs) < 50

    @given(st.floats(3, 80), st.floats(3, 80), st.floats(1, 3))
    def test_point_count_formula(self, w, h, pitch):
        lay = VenueLayout(w, h, pitch, ())
        assert len(lay.reference_points) == math.floor(w / pitch + 1e-9) * math.floor(h / pitch + 1e-9)
        for x, y in lay.reference_points:
            assert 0 <= x <= w and 0 <= y <= h

    def test_ap_outside_rejected(self):
        with pytest.raises(ValueError):
            VenueLayout(10, 10, 1, (AccessPoint(11, 5, -30),))

    def test_noise_validation(self):
        with pytest.raises(ValueError):
            NoiseModel(p_loss=0.6, p_fade=0.6)
        with pytest.raises(ValueError):
            NoiseModel(sigma_dbm=-1)


class TestPathLoss:
    ap = AccessPoint(0.0, 0.0, -30.0)

    def test_reference_distance(self):
        assert path_loss_rssi(self.ap, (1.0, 0.0)) == -30.0
        assert path_loss_rssi(self.ap, (0.2, 0.0)) == -30.0

    def test_one_decade(self):
        assert path_loss_rssi(self.ap, (10.0, 0.0), exponent=2.0) == pytest.approx(-50.0, abs=1e-12)

    def test_exponent_range(self):
        with pytest.raises(ValueError):
            path_loss_rssi(self.ap, (3.0, 0.0), exponent=5.0)

    @given(st.floats(0, 100), st.floats(0, 100), st.floats(1.5, 4.5))
    def test_monotone(self, d1, d2, exponent):
        lo, hi = min(d1, d2), max(d1, d2)
        assert path_loss_rssi(self.ap, (lo, 0.0), exponent) >= path_loss_rssi(self.ap, (hi, 0.0), exponent)


class TestSampling:
    def test_always_lost(self):
        rng = np.random.default_rng(0)
        model = NoiseModel(p_loss=1.0, p_fade=0.0)
        assert all(sample_rssi(-60.0, model, rng) is None for _ in range(100))

    def test_noiseless(self):
        rng = np.random.default_rng(0)
        assert sample_rssi(-63.2, CLEAN, rng) == -63.2

    def test_clamped(self):
        x = sample_series(-98.0, NoiseModel(sigma_dbm=10.0, p_loss=0.0), np.random.default_rng(1), 5000)
        assert x.min() >= -100.0 and x.max() <= 0.0

    def test_double_peak(self):
        model = NoiseModel(sigma_dbm=2.0, p_loss=0.0, p_fade=0.2, fade_depth_dbm=15.0, fade_sigma_dbm=3.0)
        x = sample_series(-60.0, model, np.random.default_rng(3), 100_000)
        counts, edges = np.histogram(x, bins=np.arange(-90.0, -45.0, 1.0))
        centres = (edges[:-1] + edges[1:]) / 2
        main = centres[np.argmax(counts)]
        lower = centres < main - 7
        fade = centres[lower][np.argmax(counts[lower])]
        valley = counts[(centres > fade) & (centres < main)].min()
        assert abs(main - (-60.0)) <= 1.0 and abs(fade - (-75.0)) <= 1.5
        assert valley < counts[centres == fade][0] / 2


class TestCampaign:
    def test_shape_and_sentinel(self):
        lay = default_layout()
        camp = generate_offline_campaign(lay, NoiseModel(), 30, 1)
        assert len(camp.series) == 240 * 10 and camp.samples_per_series == 30
        values = np.concatenate([s.samples for s in camp.series.values()])
        assert np.all(np.isfinite(values)) and np.any(values == -100.0)

    def test_seed_determinism(self):
        lay = default_layout(20, 10, 2.5, 4)
        a = generate_offline_campaign(lay, NoiseModel(), 25, 42)
        b = generate_offline_campaign(lay, NoiseModel(), 25, 42)
        c = generate_offline_campaign(lay, NoiseModel(), 25, 43)
        assert all(np.array_equal(a.series[k].samples, b.series[k].samples) for k in a.series)
        assert not all(np.array_equal(a.series[k].samples, c.series[k].samples) for k in a.series)

    def test_gaussian_limit_clt(self):
        lay = default_layout()
        sigma = 2.0
        s = 200
        camp = generate_offline_campaign(lay, NoiseModel(sigma_dbm=sigma, p_loss=0.0, p_fade=0.0), s, 6)
        within3 = within4 = 0
        for (m, n), series in camp.series.items():
            mean = path_loss_rssi(lay.aps[n], lay.reference_points[m])
            if mean - 3 * sigma < -100:
                continue  # clipping at the floor biases the sample mean
            err = abs(empirical_stats(series.samples).mu - mean)
            within3 += err < 3 * sigma / math.sqrt(s)
            within4 += err < 4 * sigma / math.sqrt(s)
        total = len(camp.series)
        assert within4 >= 0.99 * total and within3 >= 0.99 * total

    def test_fades_skew_fitted_bounds(self):
        lay = default_layout()
        camp = generate_offline_campaign(lay, NoiseModel(sigma_dbm=2.0, p_loss=0.05, p_fade=0.15), 200, 2)
        lower_wider = 0
        for s in camp.series.values():
            r = s.samples[s.samples != -100.0]
            p = fit_asymmetric_bounds(r, 0.05)
            lower_wider += p.g_inf > p.g_sup
        assert lower_wider > len(camp.series) / 2


class TestTrajectoryAndStream:
    def test_step_length(self):
        lay = default_layout()
        traj = random_waypoint_trajectory(lay, 2000, 0.05, 3.0, 1)
        steps = np.hypot(*np.diff(traj.xy, axis=0).T)
        assert steps.max() <= 3.0 * 0.05 * 1.05
        xmin, ymin, xmax, ymax = lay.grid_bounds
        assert traj.xy[:, 0].min() >= xmin and traj.xy[:, 0].max() <= xmax
        assert traj.xy[:, 1].min() >= ymin and traj.xy[:, 1].max() <= ymax
        assert len(traj) == 2000 and np.all(np.diff(traj.times) > 0)

    def test_noiseless_stream_at_reference_point(self):
        lay = default_layout()
        rp = lay.reference_points[37]
        traj = random_waypoint_trajectory(lay, 3, 0.05, 3.0, 0)
        traj.xy[:] = rp
        stream = generate_online_stream(lay, CLEAN, traj, 0)
        ideal = [path_loss_rssi(ap, rp) for ap in lay.aps]
        assert len(stream) == 3
        assert all(s.rssi.values.tolist() == ideal for s in stream)

    def test_stream_determinism(self):
        lay = default_layout()
        traj = random_waypoint_trajectory(lay, 50, 0.05, 3.0, 7)
        a = generate_online_stream(lay, NoiseModel(), traj, 7)
        b = generate_online_stream(lay, NoiseModel(), traj, 7)
        assert [s.rssi.values.tobytes() for s in a] == [s.rssi.values.tobytes() for s in b]
        assert [s.truth for s in a] == [s.truth for s in b]

    def test_bad_trajectory_args(self):
        with pytest.raises(ValueError):
            random_waypoint_trajectory(default_layout(), 10, 0.0, 3.0, 0)

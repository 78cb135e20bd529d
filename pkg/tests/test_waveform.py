import numpy as np
import pytest

from cfisac.channel import ChannelEstimate, estimate_channel, ue_ap_channel
from cfisac.errors import ConfigError
from cfisac.geometry import PhysicalConstants, angles_to, steering_vector
from cfisac.scene import ScenarioConfig, make_scene
from cfisac.waveform import (OFDMGrid, allocate_power_uniform, build_frames,
                             make_symbol_streams, mrt_precoder, qpsk_symbols,
                             sensing_beamformer, transmit_frame)

CONSTS = PhysicalConstants(fc=3e9)


@pytest.fixture(scope="module")
def scene():
    return make_scene(ScenarioConfig(), CONSTS, np.random.default_rng(21))


class TestOFDMGrid:
    def test_defaults(self):
        grid = OFDMGrid()
        assert grid.nc == 12 and grid.ns == 14
        assert grid.bandwidth == pytest.approx(360e3)
        assert grid.t_useful == pytest.approx(1 / 30e3)
        assert grid.t_cp == pytest.approx(1 / 30e3 / 14)
        assert grid.t_symbol == pytest.approx(1 / 30e3 * 15 / 14)

    def test_default_passes_doppler_check(self):
        # 2 * 150 * 3e9 / 2.998e8 ~ 3002 Hz <= 30 kHz
        OFDMGrid().validate(150.0)

    def test_narrow_scs_rejected(self):
        with pytest.raises(ConfigError):
            OFDMGrid(delta_f=1e3).validate(150.0)

    def test_bandwidth_budget(self):
        with pytest.raises(ConfigError):
            OFDMGrid(nc=1000).validate(150.0)


class TestSymbols:
    def test_unit_modulus(self):
        x = qpsk_symbols(np.random.default_rng(1), (14, 12))
        np.testing.assert_allclose(np.abs(x), 1.0, atol=1e-12)

    def test_near_zero_mean(self):
        n = 50_000
        x = qpsk_symbols(np.random.default_rng(2), n)
        assert abs(np.mean(x)) < 4 / np.sqrt(n)

    def test_streams_shapes_and_sharing(self, scene):
        grid = OFDMGrid()
        streams = make_symbol_streams(scene, grid, np.random.default_rng(3))
        assert streams.ue[0].shape == (14, 12)
        # coherent mode: all taps share the same per-region sensing sequence
        s_a = streams.sensing_for(0, scene.taps[0].id)
        s_b = streams.sensing_for(0, scene.taps[1].id)
        np.testing.assert_array_equal(s_a, s_b)

    def test_independent_streams_mode(self, scene):
        grid = OFDMGrid()
        streams = make_symbol_streams(scene, grid, np.random.default_rng(4),
                                      coherent=False)
        s_a = streams.sensing_for(0, scene.taps[0].id)
        s_b = streams.sensing_for(0, scene.taps[1].id)
        assert not np.array_equal(s_a, s_b)


class TestPrecoders:
    def test_single_axis_estimate(self):
        est = ChannelEstimate(h_hat=np.array([2.0 + 2.0j, 0, 0, 0]),
                              mean_square_norm=4.0)
        w = mrt_precoder(est)
        np.testing.assert_allclose(w, [(2 - 2j) / 2, 0, 0, 0])

    def test_perfect_csi_deterministic_norm(self):
        h = np.array([1.0, 1.0, 1.0, 1.0], dtype=complex)
        est = ChannelEstimate(h_hat=h, mean_square_norm=float(np.sum(np.abs(h) ** 2)))
        assert np.linalg.norm(mrt_precoder(est)) ** 2 == pytest.approx(1.0)

    def test_mean_square_norm_is_one(self, scene):
        rng = np.random.default_rng(5)
        ue, ap = scene.ues[0], scene.taps[0]
        beta = 1e-9
        sq = []
        for _ in range(10_000):
            ch = ue_ap_channel(ue, ap, beta, 3.0, 1, rng)
            est = estimate_channel(ch.h[0], beta, 5.0, rng)
            sq.append(np.linalg.norm(mrt_precoder(est)) ** 2)
        assert np.mean(sq) == pytest.approx(1.0, rel=0.03)

    def test_zero_normalization_rejected(self):
        est = ChannelEstimate(h_hat=np.zeros(4, dtype=complex),
                              mean_square_norm=0.0)
        with pytest.raises(ConfigError):
            mrt_precoder(est)


class TestBeamformer:
    def test_cell_at_zenith_gives_ones(self, scene):
        tap = scene.taps[0]
        above = tap.position + np.array([0.0, 0.0, 60.0])
        w0 = sensing_beamformer(tap, above)
        np.testing.assert_allclose(w0, np.ones(4), atol=1e-12)

    def test_norm_is_antenna_count(self, scene):
        w0 = sensing_beamformer(scene.taps[1], scene.target.position)
        assert np.linalg.norm(w0) ** 2 == pytest.approx(4.0)

    def test_gain_maximized_toward_cell(self, scene):
        tap = scene.taps[2]
        point = scene.target.position
        w0 = sensing_beamformer(tap, point)
        target_angles = angles_to(tap.position, point)
        best = abs(np.vdot(steering_vector(target_angles, 4), w0)) ** 2
        assert best == pytest.approx(16.0, rel=1e-9)
        from cfisac.geometry import AnglePair
        for az in np.linspace(-np.pi, np.pi, 360, endpoint=False):
            probe = AnglePair(azimuth=az, elevation=target_angles.elevation)
            gain = abs(np.vdot(steering_vector(probe, 4), w0)) ** 2
            assert gain <= best + 1e-6


class TestPowerAllocation:
    def test_equal_split(self):
        alloc = allocate_power_uniform([0, 1], [0, 1], 2.0)
        assert all(v == pytest.approx(0.5) for v in alloc.mu.values())
        assert all(v == pytest.approx(0.5) for v in alloc.eta.values())

    def test_sensing_only(self):
        alloc = allocate_power_uniform([], [2], 2.0)
        assert alloc.eta[2] == pytest.approx(2.0)

    def test_no_streams_all_zero(self):
        alloc = allocate_power_uniform([], [], 2.0)
        assert alloc.total == 0.0

    def test_budget_met_with_equality(self):
        alloc = allocate_power_uniform([0, 1, 2], [0, 1, 2, 3], 2.0)
        assert alloc.total == pytest.approx(2.0)


class TestTransmitFrame:
    def test_pure_sensing_power(self, scene):
        grid = OFDMGrid()
        tap = scene.taps[0]
        streams = make_symbol_streams(scene, grid, np.random.default_rng(6))
        w0 = sensing_beamformer(tap, scene.target.position)
        alloc = allocate_power_uniform([], [0], 2.0)
        s = transmit_frame(tap, {}, {0: w0}, alloc, streams, grid)
        # unit-modulus beamformer entries and symbols: ||s||^2 = P * N_a always
        np.testing.assert_allclose(np.sum(np.abs(s) ** 2, axis=2), 2.0 * 4,
                                   rtol=1e-12)

    def test_zero_allocation_zero_frame(self, scene):
        grid = OFDMGrid()
        tap = scene.taps[0]
        streams = make_symbol_streams(scene, grid, np.random.default_rng(7))
        s = transmit_frame(tap, {}, {}, allocate_power_uniform([], [], 2.0),
                           streams, grid)
        assert not np.any(s)

    def test_dimension_mismatch_rejected(self, scene):
        grid = OFDMGrid()
        tap = scene.taps[0]
        streams = make_symbol_streams(scene, grid, np.random.default_rng(8))
        alloc = allocate_power_uniform([], [0], 2.0)
        with pytest.raises(ConfigError):
            transmit_frame(tap, {}, {0: np.ones(3, dtype=complex)}, alloc,
                           streams, grid)

    def test_frame_energy_single_ue_perfect_csi(self, scene):
        # average transmit energy = P * (weighted precoder norms); with one UE
        # stream and perfect CSI the precoder norm fluctuates around 1
        grid = OFDMGrid()
        tap = scene.taps[0]
        rng = np.random.default_rng(9)
        energies = []
        for _ in range(300):
            streams = make_symbol_streams(scene, grid, rng)
            ch = ue_ap_channel(scene.ues[0], tap, 1e-9, 3.0, 1, rng)
            est = estimate_channel(ch.h[0], 1e-9, None)
            w = mrt_precoder(est)
            alloc = allocate_power_uniform([0], [], 2.0)
            s = transmit_frame(tap, {0: w}, {}, alloc, streams, grid)
            energies.append(np.mean(np.sum(np.abs(s) ** 2, axis=2)))
        assert np.mean(energies) == pytest.approx(2.0, rel=0.05)

    def test_build_frames_covers_all_taps(self, scene):
        grid = OFDMGrid()
        rng = np.random.default_rng(10)
        streams = make_symbol_streams(scene, grid, rng)
        inspected = {i: scene.grid.centroid(i) for i in range(4)}
        frames = build_frames(scene, grid, streams, inspected, rng, 1e-15)
        assert set(frames) == {m.id for m in scene.taps}
        for s in frames.values():
            assert s.shape == (grid.ns, grid.nc, 4)
            assert np.all(np.isfinite(s))

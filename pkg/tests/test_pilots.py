import csv

import numpy as np
import pytest

from irsdl.channel import ChannelRealization, draw_channel
from irsdl.config import sample_rng
from irsdl.errors import DimensionError
from irsdl.pilots import (PilotMatrix, dft_phase_matrix, export_pilot_matrix_csv, observation_matrix,
                          pilot_amplitude, simulate_pilot_rx, stack_channels, unstack_channels)

from conftest import crandn


def _channel(h_d, V):
    return ChannelRealization(h_d=np.asarray(h_d, complex), H_br=np.asarray(V, complex),
                              h_ru=np.ones(np.shape(V)[1], complex), V=np.asarray(V, complex),
                              ue_position=np.zeros(3))


class TestDftPhaseMatrix:
    def test_two_point(self):
        np.testing.assert_allclose(dft_phase_matrix(2, 1).Phi, [[1, 1], [1, -1]], atol=1e-15)

    @pytest.mark.parametrize("N", [1, 4, 16, 100])
    def test_square_is_orthogonal(self, N):
        Phi = dft_phase_matrix(N + 1, N).Phi
        gram = Phi.conj().T @ Phi
        np.testing.assert_allclose(gram, (N + 1) * np.eye(N + 1), atol=1e-9 * (N + 1))

    def test_truncated_rank(self):
        pm = dft_phase_matrix(64, 100)
        assert pm.Phi.shape == (64, 101)
        assert np.linalg.matrix_rank(pm.Phi) == 64
        assert np.linalg.matrix_rank(dft_phase_matrix(10, 16).Phi) == 10

    @pytest.mark.parametrize("T, N", [(17, 16), (10, 16), (30, 16), (101, 100)])
    def test_constraints(self, T, N):
        Phi = dft_phase_matrix(T, N).Phi
        np.testing.assert_allclose(np.abs(Phi), 1, atol=1e-12)
        np.testing.assert_array_equal(Phi[:, 0], 1)
        assert len(np.unique(np.round(Phi, 12))) <= N + 1
        assert np.linalg.matrix_rank(Phi) == min(T, N + 1)

    def test_first_row_ones_and_entries(self):
        Phi = dft_phase_matrix(5, 6).Phi
        np.testing.assert_array_equal(Phi[0], 1)
        t, n = 3, 4
        assert Phi[t, n] == pytest.approx(np.exp(-2j * np.pi * t * n / 7))

    def test_csv_export(self, tmp_path):
        path = tmp_path / "phi.csv"
        export_pilot_matrix_csv(dft_phase_matrix(3, 2), path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["t", "n", "re", "im"]
        assert len(rows) == 1 + 3 * 3
        t, n, re, im = rows[-1]
        assert complex(float(re), float(im)) == pytest.approx(np.exp(-2j * np.pi * 4 / 3))


class TestStacking:
    def test_tiny(self):
        h = stack_channels(_channel([2], [[3]]))
        np.testing.assert_array_equal(h, [2, 3])
        h_d, V = unstack_channels(np.array([2, 3]), 1, 1)
        np.testing.assert_array_equal(h_d, [2])
        np.testing.assert_array_equal(V, [[3]])

    def test_round_trip(self, full_cfg, rng):
        ch = draw_channel(full_cfg, rng)
        h = stack_channels(ch)
        assert h.shape == (1010,)
        np.testing.assert_array_equal(h[:10], ch.h_d)
        np.testing.assert_array_equal(h[10:20], ch.V[:, 0])
        h_d, V = unstack_channels(h, 10, 100)
        np.testing.assert_array_equal(h_d, ch.h_d)
        np.testing.assert_array_equal(V, ch.V)
        h2 = crandn(rng, 1010)
        np.testing.assert_array_equal(stack_channels(_channel(*unstack_channels(h2, 10, 100))), h2)

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            unstack_channels(np.zeros(9), 2, 4)


class TestObservationMatrix:
    def test_identity_case(self):
        P = observation_matrix(PilotMatrix(np.ones((1, 1)), 1, 0), 2, 1.0)
        np.testing.assert_array_equal(P, np.eye(2))

    def test_blocks_and_gram(self):
        M, N, amp = 3, 4, 2.5
        pm = dft_phase_matrix(N + 1, N)
        P = observation_matrix(pm, M, amp)
        assert P.shape == ((N + 1) * M, (N + 1) * M)
        np.testing.assert_allclose(np.abs(P[np.abs(P) > 0]), amp)
        for t in range(N + 1):
            for n in range(N + 1):
                np.testing.assert_allclose(P[t * M:(t + 1) * M, n * M:(n + 1) * M],
                                           amp * pm.Phi[t, n] * np.eye(M), atol=1e-14)
        gram = P.conj().T @ P
        np.testing.assert_allclose(gram, amp ** 2 * (N + 1) * np.eye((N + 1) * M), atol=1e-9)


class TestPilotReception:
    def test_amplitude(self, full_cfg):
        assert pilot_amplitude(full_cfg) == pytest.approx(np.sqrt(10 ** 11.9))

    def test_noiseless_equals_P_h(self, desk_cfg, rng):
        ch = draw_channel(desk_cfg, rng)
        pm = dft_phase_matrix(desk_cfg.T, desk_cfg.N)
        obs = simulate_pilot_rx(ch, pm, desk_cfg, None)
        P = observation_matrix(pm, desk_cfg.M, obs.pilot_amplitude)
        np.testing.assert_allclose(obs.y_p, P @ stack_channels(ch), rtol=1e-10, atol=1e-18)

    def test_slot_model(self, small_cfg, rng):
        # y_t = amp * (h_d + H_br diag(phi_t) h_ru) + n_t, noiseless
        ch = draw_channel(small_cfg, rng)
        pm = dft_phase_matrix(small_cfg.T, small_cfg.N)
        y = simulate_pilot_rx(ch, pm, small_cfg, None).y_p.reshape(small_cfg.T, small_cfg.M)
        amp = pilot_amplitude(small_cfg)
        for t in range(small_cfg.T):
            expected = amp * (ch.h_d + ch.H_br @ np.diag(pm.irs_patterns[t]) @ ch.h_ru)
            np.testing.assert_allclose(y[t], expected, rtol=1e-10)

    def test_zero_channel_is_unit_noise(self, rng):
        M, N, T = 4, 3, 2000
        ch = _channel(np.zeros(M), np.zeros((M, N)))
        from irsdl.config import SystemConfig
        obs = simulate_pilot_rx(ch, dft_phase_matrix(T, N), SystemConfig(M=M, N_H=3, N_V=1, T=T), rng)
        assert obs.y_p.shape == (T * M,)
        assert np.mean(np.abs(obs.y_p) ** 2) == pytest.approx(1.0, abs=0.05)
        assert abs(np.mean(obs.y_p ** 2)) < 0.05  # circular symmetry

    def test_dimensions_and_reproducibility(self, full_cfg):
        ch = draw_channel(full_cfg, sample_rng(0, "c", 0))
        pm = dft_phase_matrix(101, 100)
        a = simulate_pilot_rx(ch, pm, full_cfg, sample_rng(0, "n", 5))
        b = simulate_pilot_rx(ch, pm, full_cfg, sample_rng(0, "n", 5))
        assert a.y_p.shape == (1010,)
        np.testing.assert_array_equal(a.y_p, b.y_p)

    def test_mismatch(self, desk_cfg, rng):
        ch = draw_channel(desk_cfg, rng)
        with pytest.raises(DimensionError):
            simulate_pilot_rx(ch, dft_phase_matrix(5, 8), desk_cfg, rng)

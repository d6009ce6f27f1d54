import itertools

import numpy as np
import pytest

from irsdl.channel import draw_channel
from irsdl.errors import DimensionError, NumericalError, SingularObservationError
from irsdl.estimation import (PhaseBeamSolution, alternating_rounds, direct_path_rate, downlink_rate,
                              linear_snr, ls_estimate, matched_beam, optimize_phases, received_gain)
from irsdl.pilots import (dft_phase_matrix, observation_matrix, pilot_amplitude, simulate_pilot_rx,
                          stack_channels)

from conftest import crandn


def grid_rate(h_d, V, gamma, levels=64):
    """Best rate over a uniform phase grid with the beam matched to each grid point."""
    grid = np.exp(2j * np.pi * np.arange(levels) / levels)
    N = V.shape[1]
    best = 0.0
    for combo in itertools.product(grid, repeat=N):
        g = h_d + V @ np.conj(combo)
        best = max(best, np.linalg.norm(g) ** 2)
    return np.log2(1 + gamma * best)


class TestLinearSnr:
    def test_values(self):
        assert linear_snr(10, -94) == pytest.approx(10 ** 10.4)
        assert linear_snr(-3.5, -3.5) == 1
        assert linear_snr(25, -94) == pytest.approx(10 ** 11.9)


class TestLeastSquares:
    def test_noiseless_recovery(self, desk_cfg, rng):
        pm = dft_phase_matrix(desk_cfg.N + 1, desk_cfg.N)
        for _ in range(5):
            ch = draw_channel(desk_cfg, rng)
            obs = simulate_pilot_rx(ch, pm, desk_cfg, None)
            P = observation_matrix(pm, desk_cfg.M, obs.pilot_amplitude)
            h = stack_channels(ch)
            h_hat = ls_estimate(obs, P)
            assert np.linalg.norm(h_hat - h) / np.linalg.norm(h) < 1e-9

    def test_batch_rows(self, rng):
        P = observation_matrix(dft_phase_matrix(4, 3), 2, 3.0)
        H = crandn(rng, 6, 8)
        Y = H @ P.T
        np.testing.assert_allclose(ls_estimate(Y, P), H, atol=1e-12)

    def test_minimizes_residual_when_overdetermined(self, rng):
        P = observation_matrix(dft_phase_matrix(7, 3), 2, 1.0)
        y = crandn(rng, 14)
        h_hat = ls_estimate(y, P)
        ref = np.linalg.lstsq(P, y, rcond=None)[0]
        np.testing.assert_allclose(h_hat, ref, atol=1e-12)

    def test_short_pilot_rejected(self, rng):
        P = observation_matrix(dft_phase_matrix(16, 16), 4, 1.0)
        with pytest.raises(SingularObservationError):
            ls_estimate(crandn(rng, 64), P)

    def test_rank_deficient_square_rejected(self):
        # T > N+1 rows repeat; drop to a square but singular block pattern
        Phi = dft_phase_matrix(4, 3)
        Phi.Phi[1] = Phi.Phi[0]
        P = observation_matrix(Phi, 2, 1.0)
        with pytest.raises(SingularObservationError):
            ls_estimate(np.zeros(8), P)

    def test_length_mismatch(self):
        P = observation_matrix(dft_phase_matrix(4, 3), 2, 1.0)
        with pytest.raises(DimensionError):
            ls_estimate(np.zeros(7), P)

    def test_error_shrinks_with_pilot_power(self, desk_cfg):
        pm = dft_phase_matrix(desk_cfg.N + 1, desk_cfg.N)
        errors = []
        for p in range(0, 60, 10):
            cfg = desk_cfg.replace(pilot_dBm=p)
            P = observation_matrix(pm, cfg.M, pilot_amplitude(cfg))
            num = den = 0.0
            for i in range(200):
                ch = draw_channel(cfg, np.random.default_rng(i))
                obs = simulate_pilot_rx(ch, pm, cfg, np.random.default_rng(10_000 + i))
                h = stack_channels(ch)
                num += np.linalg.norm(ls_estimate(obs, P) - h) ** 2 / np.linalg.norm(h) ** 2
            errors.append(num / 200)
        assert all(a > b for a, b in zip(errors, errors[1:]))


class TestOptimizer:
    def test_scalar_alignment(self):
        sol = optimize_phases(np.array([1.0 + 0j]), np.array([[-1.0 + 0j]]))
        assert np.angle(sol.phi[0]) % (2 * np.pi) == pytest.approx(np.pi)
        assert abs(received_gain(np.array([1]), np.array([[-1]]), sol)) == pytest.approx(2)
        assert downlink_rate(np.array([1]), np.array([[-1]]), sol, 1.0) == pytest.approx(np.log2(5))

    def test_coherent_sum_after_first_update(self, rng):
        for _ in range(20):
            M, N = 4, 8
            h_d, V = crandn(rng, M), crandn(rng, M, N)
            phi, _, _ = next(alternating_rounds(h_d, V))
            w0 = np.full(M, 1 / np.sqrt(M))
            lhs = abs(np.vdot(h_d, w0) + phi @ (V.conj().T @ w0))
            rhs = abs(np.vdot(h_d, w0)) + np.sum(np.abs(V.conj().T @ w0))
            assert lhs == pytest.approx(rhs, rel=1e-12)

    def test_monotone(self, rng):
        for _ in range(100):
            h_d, V = crandn(rng, 3), crandn(rng, 3, 5)
            obj = [o for _, _, o in alternating_rounds(h_d, V, 30)]
            assert all(b >= a * (1 - 1e-14) for a, b in zip(obj, obj[1:]))

    def test_feasible_output(self, full_cfg, rng):
        ch = draw_channel(full_cfg, rng)
        sol = optimize_phases(ch.h_d, ch.V)
        np.testing.assert_allclose(np.abs(sol.phi), 1, atol=1e-12)
        assert np.linalg.norm(sol.w) == pytest.approx(1, abs=1e-12)
        np.testing.assert_allclose(sol.w, matched_beam(ch.h_d, ch.V, sol.phi), atol=1e-12)

    @pytest.mark.parametrize("M, N", [(1, 2), (2, 2), (2, 3)])
    def test_grid_oracle(self, M, N):
        rng = np.random.default_rng(100 * M + N)
        levels = 64 if N < 3 else 24
        for _ in range(4 if N < 3 else 2):
            h_d, V = crandn(rng, M), crandn(rng, M, N)
            ao = downlink_rate(h_d, V, optimize_phases(h_d, V), 10.0)
            assert grid_rate(h_d, V, 10.0, levels) - ao < 1e-3

    def test_zero_channel(self):
        with pytest.raises(NumericalError):
            optimize_phases(np.zeros(2), np.zeros((2, 3)))

    def test_only_cascaded_channel(self, rng):
        sol = optimize_phases(np.zeros(2, complex), crandn(rng, 2, 3))
        assert np.linalg.norm(sol.w) == pytest.approx(1)

    def test_dominates_random(self, rng):
        for _ in range(50):
            h_d, V = crandn(rng, 3), crandn(rng, 3, 6)
            opt = downlink_rate(h_d, V, optimize_phases(h_d, V), 5.0)
            phi = np.exp(2j * np.pi * rng.random(6))
            rnd = PhaseBeamSolution(phi, matched_beam(h_d, V, phi))
            assert opt >= downlink_rate(h_d, V, rnd, 5.0)


class TestRate:
    def test_zero_snr(self, rng):
        h_d, V = crandn(rng, 2), crandn(rng, 2, 3)
        assert downlink_rate(h_d, V, optimize_phases(h_d, V), 0.0) == 0

    def test_matched_filter_norm_form(self, rng):
        for _ in range(20):
            h_d, V = crandn(rng, 4), crandn(rng, 4, 7)
            phi = np.exp(2j * np.pi * rng.random(7))
            sol = PhaseBeamSolution(phi, matched_beam(h_d, V, phi))
            norm_form = np.log2(1 + 3.0 * np.linalg.norm(h_d + V @ phi.conj()) ** 2)
            assert downlink_rate(h_d, V, sol, 3.0) == pytest.approx(norm_form, abs=1e-9)

    def test_direct_path(self, rng):
        h_d = crandn(rng, 4)
        sol = PhaseBeamSolution(np.ones(3, complex), h_d / np.linalg.norm(h_d))
        assert direct_path_rate(h_d, 2.0) == pytest.approx(downlink_rate(h_d, np.zeros((4, 3)), sol, 2.0))


class TestSolution:
    def test_rejects_infeasible(self):
        with pytest.raises(ValueError):
            PhaseBeamSolution(np.array([2.0 + 0j]), np.array([1.0 + 0j]))
        with pytest.raises(ValueError):
            PhaseBeamSolution(np.array([1.0 + 0j]), np.array([1.0, 1.0 + 0j]))

    def test_stack_round_trip(self, rng):
        phi = np.exp(1j * rng.random(5))
        w = crandn(rng, 3)
        w /= np.linalg.norm(w)
        sol = PhaseBeamSolution.from_stacked(PhaseBeamSolution(phi, w).stacked(), 5)
        np.testing.assert_array_equal(sol.phi, phi)
        np.testing.assert_array_equal(sol.w, w)

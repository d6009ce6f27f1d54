"""Uplink pilot protocol: IRS reflection schedule and noisy pilot reception."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization
from .config import SystemConfig
from .errors import DimensionError


@dataclass(frozen=True)
class PilotMatrix:
    """Reflection schedule ``Phi`` of shape ``(T, N + 1)``.

    Row ``t`` is the extended pattern ``[1, phi_t]``; column 0 carries the
    direct channel and is all ones.
    """

    Phi: np.ndarray
    T: int
    N: int

    def __post_init__(self):
        if self.Phi.shape != (self.T, self.N + 1):
            raise DimensionError(f"Phi has shape {self.Phi.shape}, expected {(self.T, self.N + 1)}")

    @property
    def irs_patterns(self) -> np.ndarray:
        """IRS phase vectors ``phi_t`` as rows, shape ``(T, N)``."""
        return self.Phi[:, 1:]


@dataclass(frozen=True)
class PilotObservation:
    y_p: np.ndarray
    pilot_amplitude: float
    realization_id: int = 0


def dft_phase_matrix(T: int, N: int) -> PilotMatrix:
    """First ``T`` rows of the ``(N+1)``-point DFT matrix.

    Entries are ``exp(-2j pi t n / (N+1))`` with zero-based ``t`` and ``n``.
    ``T`` may exceed ``N + 1``; rows then repeat with period ``N + 1``.
    """
    if T < 1 or N < 0:
        raise DimensionError(f"need T >= 1 and N >= 0, got T={T}, N={N}")
    t = np.arange(T)[:, np.newaxis]
    n = np.arange(N + 1)[np.newaxis, :]
    # Reduce the exponent mod N+1 first so equal phases are bit-identical.
    Phi = np.exp(-2j * np.pi * ((t * n) % (N + 1)) / (N + 1))
    return PilotMatrix(Phi=Phi, T=T, N=N)


def pilot_amplitude(cfg: SystemConfig, pilot_dBm: float | None = None) -> float:
    """Pilot symbol amplitude relative to unit-variance receiver noise."""
    p = cfg.pilot_dBm if pilot_dBm is None else pilot_dBm
    return float(np.sqrt(10 ** ((p - cfg.noise_dBm) / 10)))


def stack_channels(ch: ChannelRealization) -> np.ndarray:
    """Stack ``[h_d; v_1; ...; v_N]`` into one ``(N+1)M`` vector."""
    return np.concatenate([ch.h_d, ch.V.T.reshape(-1)])


def unstack_channels(h: np.ndarray, M: int, N: int):
    """Inverse of :func:`stack_channels`; returns ``(h_d, V)``."""
    h = np.asarray(h)
    if h.shape != ((N + 1) * M,):
        raise DimensionError(f"stacked channel has shape {h.shape}, expected {((N + 1) * M,)}")
    blocks = h.reshape(N + 1, M)
    return blocks[0].copy(), blocks[1:].T.copy()


def observation_matrix(Phi: PilotMatrix, M: int, pilot_amplitude: float) -> np.ndarray:
    """Observation matrix ``X (Phi kron I_M)`` with a constant pilot symbol."""
    return pilot_amplitude * np.kron(Phi.Phi, np.eye(M))


def simulate_pilot_rx(ch: ChannelRealization, Phi: PilotMatrix, cfg: SystemConfig,
                      rng: np.random.Generator | None, pilot_dBm: float | None = None,
                      realization_id: int = 0) -> PilotObservation:
    """Receive ``T`` pilot slots while the IRS steps through ``Phi``.

    Slot ``t`` gives ``amp * (h_d + V phi_t) + n_t`` with
    ``n_t ~ CN(0, I_M)``. Passing ``rng=None`` suppresses the noise.
    """
    M, N = ch.V.shape
    if Phi.N != N or ch.h_d.shape != (M,):
        raise DimensionError(f"pilot schedule for N={Phi.N} does not match channel with N={N}")
    amp = pilot_amplitude(cfg, pilot_dBm)
    Y = amp * (ch.h_d[np.newaxis, :] + Phi.irs_patterns @ ch.V.T)
    if rng is not None:
        Y = Y + complex_noise(rng, Y.shape)
    return PilotObservation(y_p=Y.reshape(-1), pilot_amplitude=amp, realization_id=realization_id)


def complex_noise(rng: np.random.Generator, shape) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with unit variance."""
    z = rng.standard_normal(tuple(shape) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) / np.sqrt(2)


def export_pilot_matrix_csv(Phi: PilotMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "n", "re", "im"])
        for t in range(Phi.T):
            for n in range(Phi.N + 1):
                z = Phi.Phi[t, n]
                writer.writerow([t, n, repr(float(z.real)), repr(float(z.imag))])

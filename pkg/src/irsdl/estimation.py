"""Least-squares channel estimation, phase/beam optimization and downlink rate."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericalError, SingularObservationError
from .pilots import PilotObservation, unstack_channels  # noqa: F401  (re-exported)

DEFAULT_ROUNDS = 200
DEFAULT_TOL = 1e-12
RCOND_LIMIT = 1e-12
FEASIBILITY_TOL = 1e-9


@dataclass(frozen=True)
class PhaseBeamSolution:
    """IRS reflection vector ``phi`` (unit-modulus entries) and unit-norm beam ``w``."""

    phi: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        if np.any(np.abs(np.abs(self.phi) - 1) > FEASIBILITY_TOL):
            raise ValueError("phi entries must have unit modulus")
        if abs(np.linalg.norm(self.w) - 1) > FEASIBILITY_TOL:
            raise ValueError("w must have unit norm")

    def stacked(self) -> np.ndarray:
        """The label vector ``[phi; w]`` of length ``N + M``."""
        return np.concatenate([self.phi, self.w])

    @classmethod
    def from_stacked(cls, omega, N: int) -> "PhaseBeamSolution":
        omega = np.asarray(omega)
        return cls(phi=omega[:N].copy(), w=omega[N:].copy())


def linear_snr(tx_dBm: float, noise_dBm: float) -> float:
    return 10 ** ((tx_dBm - noise_dBm) / 10)


def ls_operator(P: np.ndarray) -> np.ndarray:
    """Return ``(P^H P)^{-1} P^H``, refusing ill-conditioned observations."""
    P = np.asarray(P)
    rows, cols = P.shape
    if rows < cols:
        raise SingularObservationError(
            f"observation matrix is {rows}x{cols}; need at least as many pilot "
            "observations as unknowns (T >= N + 1)")
    gram = P.conj().T @ P
    rcond = 1.0 / np.linalg.cond(gram)
    if not rcond >= RCOND_LIMIT:
        raise SingularObservationError(f"P^H P is singular (rcond={rcond:.3g})")
    return np.linalg.solve(gram, P.conj().T)


def ls_estimate(y_p, P: np.ndarray) -> np.ndarray:
    """Least-squares estimate of the stacked channel.

    ``y_p`` may be a :class:`PilotObservation`, one observation vector, or a
    2-D array with one observation per row (the estimates then come back
    row-wise as well).
    """
    if isinstance(y_p, PilotObservation):
        y_p = y_p.y_p
    y_p = np.asarray(y_p)
    if y_p.shape[-1] != P.shape[0]:
        raise DimensionError(f"observation length {y_p.shape[-1]} does not match P rows {P.shape[0]}")
    op = ls_operator(P)
    return y_p @ op.T


def effective_channel(h_d, V, phi) -> np.ndarray:
    """Column form ``h_d + V conj(phi)`` of the end-to-end channel."""
    return h_d + V @ np.conj(phi)


def matched_beam(h_d, V, phi) -> np.ndarray:
    g = effective_channel(h_d, V, phi)
    norm = np.linalg.norm(g)
    if norm == 0:
        raise NumericalError("effective channel is zero; no beam direction exists")
    return g / norm


def alternating_rounds(h_d, V, rounds: int = DEFAULT_ROUNDS):
    """Yield ``(phi, w, objective)`` after each alternating round.

    Each round aligns every reflected path with the direct path for the
    current beam, then re-matches the beam to the resulting channel. The
    objective is the effective channel norm, which never decreases.
    """
    h_d = np.asarray(h_d, dtype=complex)
    V = np.asarray(V, dtype=complex)
    M, N = V.shape
    if h_d.shape != (M,):
        raise DimensionError(f"h_d has shape {h_d.shape}, expected {(M,)}")
    if not (np.any(h_d) or np.any(V)):
        raise NumericalError("direct and cascaded channels are both zero")
    w = np.full(M, 1 / np.sqrt(M), dtype=complex)
    for _ in range(rounds):
        # np.angle(0) == 0, which fixes the arg(0) convention.
        phases = np.angle(np.vdot(h_d, w)) - np.angle(V.conj().T @ w)
        phi = np.exp(1j * phases)
        g = effective_channel(h_d, V, phi)
        objective = np.linalg.norm(g)
        if objective == 0:
            raise NumericalError("effective channel vanished during optimization")
        w = g / objective
        yield phi, w, objective


def optimize_phases(h_d, V, iters: int = DEFAULT_ROUNDS, tol: float = DEFAULT_TOL) -> PhaseBeamSolution:
    """Jointly optimize IRS phases and the transmit beam by alternation.

    Starts from the uniform beam and runs up to ``iters`` rounds, stopping
    once a round improves the effective channel norm by less than ``tol``
    (relative).
    """
    if iters < 1:
        raise ValueError("need at least one alternating round")
    prev = None
    for phi, w, objective in alternating_rounds(h_d, V, iters):
        if prev is not None and objective - prev <= tol * prev:
            break
        prev = objective
    return PhaseBeamSolution(phi=phi, w=w)


def received_gain(h_d, V, sol: PhaseBeamSolution) -> complex:
    """Scalar end-to-end gain ``(h_d^H + phi^T V^H) w``."""
    return np.vdot(h_d, sol.w) + sol.phi @ (V.conj().T @ sol.w)


def downlink_rate(h_d, V, sol: PhaseBeamSolution, gamma: float) -> float:
    """Spectral efficiency in bit/s/Hz for configuration ``sol`` at SNR ``gamma``."""
    return float(np.log2(1 + gamma * abs(received_gain(h_d, V, sol)) ** 2))


def direct_path_rate(h_d, gamma: float) -> float:
    """Rate without any IRS, beam matched to the direct channel."""
    return float(np.log2(1 + gamma * np.linalg.norm(h_d) ** 2))

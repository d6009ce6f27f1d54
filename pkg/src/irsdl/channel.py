"""Geometric channel model: array responses, pathloss and multipath draws."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .config import SystemConfig
from .errors import ConfigError, DimensionError

UE_PLACEMENT_ATTEMPTS = 1000

# Multipath angle ranges (front hemisphere).
AZIMUTH_RANGE = (-np.pi / 2, np.pi / 2)
ELEVATION_RANGE = (-np.pi / 4, np.pi / 4)
# Path delay ranges in seconds.
DELAY_D_MAX = 10e-9
DELAY_RU_MAX = 5e-9


@dataclass(frozen=True)
class ChannelRealization:
    """One draw of all channels of the link.

    Attributes
    ----------
    h_d : (M,) complex
        Direct BS-UE channel.
    H_br : (M, N) complex
        Rank-one line-of-sight BS-IRS channel.
    h_ru : (N,) complex
        IRS-UE channel.
    V : (M, N) complex
        Cascaded channel ``H_br @ diag(h_ru)``.
    ue_position : (3,) float
        UE location in meters.
    """

    h_d: np.ndarray
    H_br: np.ndarray
    h_ru: np.ndarray
    V: np.ndarray
    ue_position: np.ndarray


def wave_vector(azimuth, elevation, lambda_c):
    """Wave vector in rad/m for a plane wave from (azimuth, elevation)."""
    return (2 * np.pi / lambda_c) * np.array([
        np.cos(azimuth) * np.cos(elevation),
        np.sin(azimuth) * np.cos(elevation),
        np.sin(elevation),
    ])


def irs_element_position(n, N_H, d_r, lambda_c, N=None):
    """Position in meters of the 1-based IRS element ``n``.

    The IRS lies in the yz-plane; elements are filled row by row with
    ``N_H`` elements per horizontal row.
    """
    if n < 1 or (N is not None and n > N):
        raise DimensionError(f"IRS element index {n} out of range [1, {N}]")
    i = (n - 1) % N_H
    j = (n - 1) // N_H
    return np.array([0.0, i * d_r * lambda_c, j * d_r * lambda_c])


def irs_positions(cfg: SystemConfig) -> np.ndarray:
    """All ``(N, 3)`` IRS element positions, same layout as :func:`irs_element_position`."""
    idx = np.arange(cfg.N)
    spacing = cfg.d_r * cfg.lambda_c
    return np.stack([np.zeros(cfg.N), (idx % cfg.N_H) * spacing, (idx // cfg.N_H) * spacing], axis=1)


def array_response_irs(azimuth, elevation, cfg: SystemConfig) -> np.ndarray:
    k = wave_vector(azimuth, elevation, cfg.lambda_c)
    return np.exp(1j * (irs_positions(cfg) @ k))


def array_response_bs(azimuth, elevation, M, d_H) -> np.ndarray:
    m = np.arange(M)
    return np.exp(1j * 2 * np.pi * m * d_H * np.cos(azimuth) * np.cos(elevation))


def pathloss_br(cfg: SystemConfig) -> float:
    """Linear power gain of the BS-IRS link, ``N A / (4 pi d_br^2)``."""
    area = (cfg.d_r * cfg.lambda_c) ** 2
    return cfg.N * area / (4 * np.pi * cfg.d_br ** 2)


def path_gain(d, tau, cfg: SystemConfig) -> complex:
    """Complex gain of one path of length ``d`` meters and delay ``tau`` seconds."""
    if d <= 0:
        raise ValueError(f"distance must be positive, got {d}")
    beta_0 = 10 ** (cfg.beta_0_dB / 10)
    magnitude = np.sqrt(beta_0 * (d / cfg.d_0) ** (-cfg.pathloss_exponent))
    return magnitude * np.exp(-2j * np.pi * cfg.f_c * tau)


def cascade(H_br: np.ndarray, h_ru: np.ndarray) -> np.ndarray:
    """Cascaded channel ``H_br @ diag(h_ru)`` without forming the diagonal."""
    H_br = np.asarray(H_br)
    h_ru = np.asarray(h_ru)
    if H_br.ndim != 2 or h_ru.shape != (H_br.shape[1],):
        raise DimensionError(f"cannot cascade {H_br.shape} with {h_ru.shape}")
    return H_br * h_ru[np.newaxis, :]


def _direction_angles(vec):
    x, y, z = vec
    return np.arctan2(y, x), np.arctan2(z, np.hypot(x, y))


def _irs_local(vec):
    # IRS frame is the global frame rotated by pi about z, so its
    # x-axis (the surface normal) points back at the BS.
    return np.array([-vec[0], -vec[1], vec[2]])


@lru_cache(maxsize=16)
def _los_channel(cfg: SystemConfig) -> np.ndarray:
    to_irs = cfg.irs_position - cfg.bs_position
    az_bs, el_bs = _direction_angles(to_irs)
    az_irs, el_irs = _direction_angles(_irs_local(-to_irs))
    a_bs = array_response_bs(az_bs, el_bs, cfg.M, cfg.d_H)
    a_irs = array_response_irs(az_irs, el_irs, cfg)
    H = np.sqrt(pathloss_br(cfg)) * np.outer(a_bs, a_irs.conj())
    H.setflags(write=False)
    return H


def los_channel_br(cfg: SystemConfig) -> np.ndarray:
    """Static BS-IRS channel ``sqrt(beta_br) a_BS a_IRS^H`` from the fixed geometry."""
    return _los_channel(cfg).copy()


def draw_ue_position(cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    for _ in range(UE_PLACEMENT_ATTEMPTS):
        x = cfg.room_x0 + cfg.room_size * rng.random()
        y = cfg.room_y0 + cfg.room_size * rng.random()
        pos = np.array([x, y, cfg.ue_height])
        if np.linalg.norm(pos - cfg.irs_position) >= cfg.d_ru_min:
            return pos
    raise ConfigError(
        f"no UE position with d_ru >= {cfg.d_ru_min} m found in "
        f"{UE_PLACEMENT_ATTEMPTS} attempts; check the room placement")


def _multipath(n_paths, distance, delay_max, response, cfg, rng):
    az = rng.uniform(*AZIMUTH_RANGE, size=n_paths)
    el = rng.uniform(*ELEVATION_RANGE, size=n_paths)
    tau = rng.uniform(0.0, delay_max, size=n_paths)
    h = sum(path_gain(distance, tau[l], cfg) * response(az[l], el[l]) for l in range(n_paths))
    return np.sqrt(1.0 / n_paths) * h


def draw_channel(cfg: SystemConfig, rng: np.random.Generator,
                 ue_position=None) -> ChannelRealization:
    """Draw one realization of the direct, IRS-UE and cascaded channels.

    If ``ue_position`` is given it is used as is (no distance check),
    otherwise the UE is dropped uniformly in the room.
    """
    if ue_position is None:
        ue_position = draw_ue_position(cfg, rng)
    ue_position = np.asarray(ue_position, dtype=float)
    d_bu = np.linalg.norm(ue_position - cfg.bs_position)
    d_ru = np.linalg.norm(ue_position - cfg.irs_position)

    h_d = _multipath(cfg.L_d, d_bu, DELAY_D_MAX,
                     lambda az, el: array_response_bs(az, el, cfg.M, cfg.d_H), cfg, rng)
    h_ru = _multipath(cfg.L_ru, d_ru, DELAY_RU_MAX,
                      lambda az, el: array_response_irs(az, el, cfg), cfg, rng)
    H_br = los_channel_br(cfg)
    return ChannelRealization(h_d=h_d, H_br=H_br, h_ru=h_ru, V=cascade(H_br, h_ru),
                              ue_position=ue_position)

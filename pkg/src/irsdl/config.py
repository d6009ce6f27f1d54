"""System constants, experiment profiles and seed derivation.

Configuration files are flat ``key = value`` lines; ``#`` starts a comment.
Keys map either onto :class:`SystemConfig` (physics and protocol) or onto
the experiment-level fields of :class:`Profile`. Any other key is an error.
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError

SPEED_OF_LIGHT = 3e8  # m/s, so lambda_c = 0.1 m gives f_c = 3 GHz

PROFILES = ("desk", "paper")


@dataclass(frozen=True)
class SystemConfig:
    """Physical and protocol constants of one IRS-assisted link.

    Distances are in meters, powers in dBm, spacings in wavelengths.
    The UE is dropped uniformly on the square
    ``[room_x0, room_x0 + room_size] x [room_y0, room_y0 + room_size]``
    at height ``ue_height``. The BS sits at the origin with its ULA on the
    x-axis and the IRS is centered at ``(d_br, 0, 0)`` facing the BS.
    """

    M: int = 10
    N_H: int = 10
    N_V: int = 10
    d_H: float = 0.5
    d_r: float = 0.25
    lambda_c: float = 0.1
    d_br: float = 292.0
    L_d: int = 5
    L_ru: int = 5
    pathloss_exponent: float = 3.8
    beta_0_dB: float = -20.4
    d_0: float = 1.0
    noise_dBm: float = -94.0
    pilot_dBm: float = 25.0
    downlink_dBm: float = 10.0
    T: int = 101
    room_x0: float = 275.0
    room_y0: float = -5.0
    room_size: float = 10.0
    ue_height: float = 1.5
    d_ru_min: float = 7.0
    seed: int = 0

    def __post_init__(self):
        for name in ("M", "N_H", "N_V", "T", "L_d", "L_ru"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("d_H", "d_r", "lambda_c", "d_br", "d_0", "d_ru_min", "room_size"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")

    @property
    def N(self) -> int:
        return self.N_H * self.N_V

    @property
    def f_c(self) -> float:
        return SPEED_OF_LIGHT / self.lambda_c

    @property
    def bs_position(self) -> np.ndarray:
        return np.zeros(3)

    @property
    def irs_position(self) -> np.ndarray:
        return np.array([self.d_br, 0.0, 0.0])

    def replace(self, **changes) -> "SystemConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Profile:
    """A system configuration plus dataset sizes and network widths."""

    system: SystemConfig = field(default_factory=SystemConfig)
    n_train: int = 80000
    n_test: int = 2000
    T_short: int = 64
    hidden1: tuple = (512, 512, 256)
    hidden2: tuple = (500, 400, 400, 300)

    def __post_init__(self):
        if self.n_train < 2 or self.n_test < 1:
            raise ConfigError("n_train must be >= 2 and n_test >= 1")
        if not 1 <= self.T_short < self.system.N + 1:
            raise ConfigError(f"T_short must lie in [1, N], got {self.T_short}")

    def replace(self, **changes) -> "Profile":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in ("n_train", "n_test", "T_short")}
        d["hidden1"] = list(self.hidden1)
        d["hidden2"] = list(self.hidden2)
        d["system"] = self.system.to_dict()
        return d


_SYSTEM_FIELDS = {f.name: f.type for f in dataclasses.fields(SystemConfig)}
_PROFILE_FIELDS = ("n_train", "n_test", "T_short", "hidden1", "hidden2")
_INT_FIELDS = {"M", "N_H", "N_V", "L_d", "L_ru", "T", "seed", "n_train", "n_test", "T_short"}


def _convert(key: str, raw: str):
    try:
        if key in ("hidden1", "hidden2"):
            widths = tuple(int(v) for v in raw.split(",") if v.strip())
            if not widths or min(widths) < 1:
                raise ValueError(raw)
            return widths
        if key in _INT_FIELDS:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def parse_overrides(text: str) -> dict:
    """Parse ``key = value`` lines into a dict of typed values."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in _SYSTEM_FIELDS and key not in _PROFILE_FIELDS:
            raise ConfigError(f"unknown config key {key!r} (line {lineno})")
        values[key] = _convert(key, raw)
    return values


def build_profile(values: dict, base: Profile | None = None) -> Profile:
    """Apply ``values`` on top of ``base`` (defaults to the built-in values)."""
    base = base or Profile()
    sys_changes = {k: v for k, v in values.items() if k in _SYSTEM_FIELDS}
    prof_changes = {k: v for k, v in values.items() if k in _PROFILE_FIELDS}
    unknown = set(values) - set(sys_changes) - set(prof_changes)
    if unknown:
        raise ConfigError(f"unknown config key {sorted(unknown)[0]!r}")
    system = base.system.replace(**sys_changes)
    return base.replace(system=system, **prof_changes)


def profile_text(name: str) -> str:
    if name not in PROFILES:
        raise ConfigError(f"unknown profile {name!r}; choose from {PROFILES}")
    return (resources.files("irsdl") / "profiles" / f"{name}.cfg").read_text()


def load_profile(name: str = "desk", path: str | Path | None = None,
                 overrides: dict | None = None) -> Profile:
    """Resolve a profile: built-in file, then an optional config file, then overrides."""
    values = parse_overrides(profile_text(name))
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        values.update(parse_overrides(text))
    values.update(overrides or {})
    return build_profile(values)


def derive_seed(seed: int, label: str) -> int:
    """Stable 63-bit seed for one purpose, independent of Python's hash salt."""
    digest = hashlib.sha256(f"{int(seed)}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def sample_rng(seed: int, label: str, index: int) -> np.random.Generator:
    """Random stream of sample ``index`` for one purpose.

    Depends only on its arguments, so samples can be generated in any order
    or in parallel and still reproduce the serial result.
    """
    return np.random.default_rng(np.random.SeedSequence([derive_seed(seed, label), int(index)]))

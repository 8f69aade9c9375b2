"""Field-response channel model and random scenario generation."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .config import SystemConfig


def normalized_direction(theta, phi):
    """Planar projection ``[sin(theta) cos(phi), cos(theta)]`` of a path's AoD.

    Broadcasts over array inputs; the trailing axis holds (x, y).
    """
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    return np.stack([np.sin(theta) * np.cos(phi), np.cos(theta)], axis=-1)


@dataclass(frozen=True, eq=False)
class PathSet:
    """Multipath geometry between the access point and one receiver.

    ``receiver_id`` 0 is the warden; users are numbered 1..K.
    """

    receiver_id: int
    angles: np.ndarray      # (L, 2): elevation, azimuth
    responses: np.ndarray   # (L,) complex path coefficients

    def __post_init__(self):
        angles = np.array(self.angles, dtype=float).reshape(-1, 2)
        responses = np.array(self.responses, dtype=complex).reshape(-1)
        if angles.shape[0] != responses.shape[0] or angles.shape[0] == 0:
            raise ValueError("angles and responses must be non-empty and of equal length")
        if np.any(angles < 0) or np.any(angles > np.pi):
            raise ValueError("path angles must lie in [0, pi]")
        angles.setflags(write=False)
        responses.setflags(write=False)
        directions = normalized_direction(angles[:, 0], angles[:, 1])
        directions.setflags(write=False)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "responses", responses)
        object.__setattr__(self, "directions", directions)

    @property
    def num_paths(self) -> int:
        return self.responses.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PathSet):
            return NotImplemented
        return (
            self.receiver_id == other.receiver_id
            and np.array_equal(self.angles, other.angles)
            and np.array_equal(self.responses, other.responses)
        )

    __hash__ = None


def field_response(t, paths: PathSet, wavelength: float) -> np.ndarray:
    """Per-path phase factors ``exp(j 2pi/lambda t.rho_l)`` at position(s) ``t``.

    ``t`` of shape (2,) gives an (L,) vector; (..., 2) gives (..., L).
    """
    t = np.asarray(t, dtype=float)
    return np.exp(1j * (2 * np.pi / wavelength) * (t @ paths.directions.T))


def channel(positions, paths: PathSet, wavelength: float) -> np.ndarray:
    """Channel vector ``F(T)^H g`` for antennas at ``positions`` (N, 2)."""
    F = field_response(positions, paths, wavelength)   # (N, L), row n = f(t_n)^T
    return F.conj() @ paths.responses


def channel_matrix(positions, user_paths, wavelength: float) -> np.ndarray:
    """Stack user channels as columns: (N, K)."""
    return np.stack([channel(positions, p, wavelength) for p in user_paths], axis=1)


@dataclass(frozen=True, eq=False)
class Scenario:
    """One channel realization: warden paths first, then one PathSet per user."""

    config: SystemConfig
    paths: tuple[PathSet, ...]
    seed: int | None = None

    @property
    def warden(self) -> PathSet:
        return self.paths[0]

    @property
    def users(self) -> tuple[PathSet, ...]:
        return self.paths[1:]

    def user_channels(self, positions) -> np.ndarray:
        return channel_matrix(positions, self.users, self.config.wavelength)

    def warden_channel(self, positions) -> np.ndarray:
        return channel(positions, self.warden, self.config.wavelength)

    def with_config(self, config: SystemConfig) -> "Scenario":
        return Scenario(config, self.paths, self.seed)

    def with_paths(self, paths) -> "Scenario":
        return Scenario(self.config, tuple(paths), self.seed)

    def fingerprint(self) -> str:
        """Digest of the path geometry; equal across schemes sharing a realization."""
        h = hashlib.sha256()
        for p in self.paths:
            h.update(np.int64(p.receiver_id).tobytes())
            h.update(np.ascontiguousarray(p.angles).tobytes())
            h.update(np.ascontiguousarray(p.responses).tobytes())
        return h.hexdigest()[:16]


def sample_paths(receiver_id: int, num_paths: int, path_gain: float, rng) -> PathSet:
    angles = rng.uniform(0.0, np.pi, size=(num_paths, 2))
    scale = np.sqrt(path_gain / num_paths / 2.0)
    g = scale * (rng.standard_normal(num_paths) + 1j * rng.standard_normal(num_paths))
    return PathSet(receiver_id, angles, g)


def sample_scenario(cfg: SystemConfig, seed: int) -> Scenario:
    """Draw K+1 PathSets: uniform AoDs on [0, pi]^2, CN(0, rho0/L) responses."""
    rng = np.random.default_rng(seed)
    paths = tuple(
        sample_paths(k, L, cfg.path_gain, rng) for k, L in enumerate(cfg.paths_per_user)
    )
    return Scenario(cfg, paths, seed)

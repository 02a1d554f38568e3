"""Field trajectories and simulation configuration."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigError


@dataclass
class FieldSequence:
    """A full spatiotemporal trajectory: (T+1, n) frames over a fixed grid.

    ``n`` is the state width: product(grid_shape) times the number of
    channels, channel-major within each frame. ``mask`` (optional) marks
    state entries excluded from sensing and metrics (e.g. cylinder interior).
    """

    frames: np.ndarray
    grid_shape: tuple
    channels: list
    dt_save: float
    provenance: dict = field(default_factory=dict)
    mask: Optional[np.ndarray] = None

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        self.grid_shape = tuple(int(g) for g in self.grid_shape)
        if self.frames.ndim != 2:
            raise ConfigError(f"frames must be (T+1, n), got {self.frames.shape}")
        expected = int(np.prod(self.grid_shape)) * len(self.channels)
        if self.frames.shape[1] != expected:
            raise ConfigError(
                f"state width {self.frames.shape[1]} != grid {self.grid_shape} "
                f"x {len(self.channels)} channels = {expected}"
            )
        if not np.all(np.isfinite(self.frames)):
            raise ConfigError("non-finite values in frames")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool).reshape(-1)
            if self.mask.shape[0] != self.frames.shape[1]:
                raise ConfigError("mask length must match state width")

    @property
    def n_frames(self):
        return self.frames.shape[0]

    @property
    def n(self):
        return self.frames.shape[1]

    @property
    def cells_per_channel(self):
        return int(np.prod(self.grid_shape))

    def channel_view(self, frame_idx, channel):
        """One channel of one frame, reshaped to the grid."""
        c = self.channels.index(channel) if isinstance(channel, str) else channel
        w = self.cells_per_channel
        return self.frames[frame_idx, c * w : (c + 1) * w].reshape(self.grid_shape)


@dataclass
class SimConfig:
    """Simulation parameters: grid, time stepping, physics and seed."""

    system: str
    grid: tuple
    domain: float
    dt: float
    save_every: int
    burn_in: float
    total_time: float
    epsilon: float
    seed: int = 0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = tuple(int(g) for g in self.grid)
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if self.save_every < 1:
            raise ConfigError("save stride must be >= 1")

    def require_power_of_two_grid(self):
        for g in self.grid:
            if g < 2 or (g & (g - 1)) != 0:
                raise ConfigError(f"spectral solvers need power-of-two grids, got {self.grid}")


def lowpass_noise_2d(rng, n, max_mode, amplitude):
    """Random field from Fourier modes with radial index <= max_mode, scaled
    so that max |u| equals ``amplitude``."""
    noise = rng.standard_normal((n, n))
    spec = np.fft.rfft2(noise)
    ky = np.fft.fftfreq(n, d=1.0 / n)
    kx = np.arange(n // 2 + 1)
    radial = np.sqrt(kx[None, :] ** 2 + ky[:, None] ** 2)
    spec[radial > max_mode] = 0.0
    u = np.fft.irfft2(spec, s=(n, n))
    peak = np.abs(u).max()
    if peak == 0.0:
        return u
    return u * (amplitude / peak)


def block_average(field_2d, factor):
    """Downsample a 2-d array by factor x factor block means."""
    ny, nx = field_2d.shape
    if ny % factor or nx % factor:
        raise ConfigError(f"grid {field_2d.shape} not divisible by {factor}")
    return field_2d.reshape(ny // factor, factor, nx // factor, factor).mean(axis=(1, 3))


def downsample_field_sequence(fs: FieldSequence, factor: int) -> FieldSequence:
    """Spatial block-average of every channel of every frame."""
    if len(fs.grid_shape) != 2:
        raise ConfigError("downsampling implemented for 2-d grids")
    ny, nx = fs.grid_shape
    new_grid = (ny // factor, nx // factor)
    out = np.empty((fs.n_frames, int(np.prod(new_grid)) * len(fs.channels)), dtype=fs.frames.dtype)
    w = int(np.prod(new_grid))
    for t in range(fs.n_frames):
        for c in range(len(fs.channels)):
            coarse = block_average(fs.channel_view(t, c), factor)
            out[t, c * w : (c + 1) * w] = coarse.reshape(-1)
    prov = dict(fs.provenance)
    prov["downsampled_by"] = factor
    mask = None
    if fs.mask is not None:
        cells = fs.cells_per_channel
        mask_parts = []
        for c in range(len(fs.channels)):
            m = fs.mask[c * cells : (c + 1) * cells].reshape(fs.grid_shape)
            coarse = block_average(m.astype(float), factor) > 0  # any fine cell masked
            mask_parts.append(coarse.reshape(-1))
        mask = np.concatenate(mask_parts)
    return FieldSequence(out, new_grid, list(fs.channels), fs.dt_save, prov, mask)

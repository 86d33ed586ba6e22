"""Brownian transport of ions along the trap axis.

An overdamped 1D random walk with reflecting walls at the cloud ends
decides which ions wander into the detection beam during a measurement
window, turning the sampling fraction of a partial projection into a
physical quantity.

Note on the default diffusion constant: the Einstein relation with the
default mobility gives D = mu k_B T ~ 5.95e-6 m^2/s at 50 mK, while the
calibrated transport value used throughout is the explicit override
D = 3.5e-6 m^2/s. The two differ by about 1.7x; the override wins by
default and the discrepancy is deliberately left visible rather than
hidden in a fudged mobility.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.constants import Boltzmann as K_BOLTZMANN  # 1.380649e-23 J/K

from .rng import as_generator

__all__ = [
    "DiffusionConfig",
    "diffusion_constant",
    "step_brownian",
    "struck_during",
    "fraction_struck",
    "BEAM_HALF_WIDTH",
]

# Half-width of the detection interval on the trap axis. Calibrated by
# Monte Carlo so that with D = 3.5e-6 m^2/s a 1 ms window (100 sub-steps)
# strikes 17% of a uniform 3 mm cloud. Of the same order as, but not
# derived from, the nominal 200 um beam waist crossing the cloud.
BEAM_HALF_WIDTH = 1.935e-4


@dataclass(frozen=True)
class DiffusionConfig:
    """Transport parameters; ``d_override = None`` falls back to Einstein.

    ``beam_interval`` must lie inside [-cloud_length/2, +cloud_length/2].
    ``dt`` is the largest sub-step the transport integrator may take.
    """

    temperature: float = 0.05
    mobility: float = 8.62e18
    d_override: float | None = 3.5e-6
    dt: float = 1e-5
    cloud_length: float = 3e-3
    beam_interval: tuple = (-BEAM_HALF_WIDTH, BEAM_HALF_WIDTH)

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        if self.mobility <= 0:
            raise ValueError("mobility must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.cloud_length <= 0:
            raise ValueError("cloud_length must be positive")
        lo, hi = self.beam_interval
        half = self.cloud_length / 2.0
        if not (lo < hi):
            raise ValueError("beam_interval must have positive width")
        if lo < -half or hi > half:
            raise ValueError("beam_interval must lie inside the cloud")

    def effective_d(self):
        if self.d_override is not None:
            return float(self.d_override)
        return diffusion_constant(self.temperature, self.mobility)


def diffusion_constant(temperature, mobility):
    """Einstein relation D = mu k_B T."""
    if temperature < 0:
        raise ValueError("temperature must be non-negative")
    if mobility <= 0:
        raise ValueError("mobility must be positive")
    return mobility * K_BOLTZMANN * temperature


def _reflect(z, half):
    # Fold onto [-half, half]; the triangle wave of period 4*half handles
    # displacements that overshoot the walls several times over.
    t = np.mod(z + half, 4.0 * half)
    return np.where(t <= 2.0 * half, t - half, 3.0 * half - t)


def step_brownian(positions, d, dt, rng, half_length=None):
    """One Gaussian displacement of variance 2 D dt per walker.

    ``half_length = None`` disables the walls (free space); otherwise
    positions are reflected back into [-half_length, +half_length].
    """
    if d < 0:
        raise ValueError("diffusion constant must be non-negative")
    if dt <= 0:
        raise ValueError("dt must be positive")
    positions = np.asarray(positions, dtype=float)
    z = positions + rng.normal(0.0, math.sqrt(2.0 * d * dt), positions.shape)
    if half_length is None:
        return z
    return _reflect(z, float(half_length))


def struck_during(positions, cfg: DiffusionConfig, duration, rng):
    """Propagate walkers for ``duration`` and flag beam entries.

    A walker counts as struck if any sub-step position (including the
    initial one) lies inside ``cfg.beam_interval``. Sub-steps are at
    most duration/100 and at most cfg.dt.

    Returns (final_positions, struck_mask).
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    lo, hi = cfg.beam_interval
    z = np.asarray(positions, dtype=float)
    struck = (z >= lo) & (z <= hi)
    if duration == 0:
        return z, struck
    n_sub = max(100, int(math.ceil(duration / cfg.dt)))
    dt_sub = duration / n_sub
    d = cfg.effective_d()
    half = cfg.cloud_length / 2.0
    for _ in range(n_sub):
        z = step_brownian(z, d, dt_sub, rng, half_length=half)
        struck |= (z >= lo) & (z <= hi)
    return z, struck


def fraction_struck(cfg: DiffusionConfig, duration, n_ions, seed):
    """Fraction of a uniform cloud entering the beam within ``duration``.

    Returns (fraction, struck_indices). At duration 0 this reduces to
    the fraction initially inside the interval, in expectation
    interval_width / cloud_length.
    """
    n_ions = int(n_ions)
    if n_ions < 1:
        raise ValueError("n_ions must be at least 1")
    rng = as_generator(seed)
    half = cfg.cloud_length / 2.0
    z0 = rng.uniform(-half, half, n_ions)
    _, struck = struck_during(z0, cfg, duration, rng)
    return float(struck.mean()), np.flatnonzero(struck)

"""Measurement protocols and estimators.

Three protocols are implemented on top of the ensemble primitives:

* ``run_rabi_ppm``: Rabi probing, either re-prepared each point
  (standard) or accumulated rotations with a partial projection after
  every step.
* ``run_standard_ramsey``: re-initialize, pi/2, free precession, pi/2,
  destructive readout, once per cycle.
* ``run_apl_block``: the phase-tracking variant. The ensemble is
  prepared once; each cycle runs free precession, a pi/2 readout pulse
  at 90 degrees, a partial projection, and a 3 pi/2 pulse that reverts
  the unprojected ions, so the accumulated phase survives across
  cycles and the n-th estimate divides its phase by n.

Phase convention: the tracked angle is the LO phase relative to the
atomic transition, so a positive frequency offset gives a positive
accumulated phase and raises the excited fraction at the 90-degree
readout, estimate = (1 + sin phi)/2. Pulses and readout windows are
treated as instantaneous for the spin dynamics (ideal rotations, no
detuning during the pulse); their wall-clock durations only enter the
cycle timestamps.

The frequency equivalent of a phase slope is exposed in two
conventions: ``estimate_frequency`` returns Hz and divides by 2 pi n T;
``estimate_frequency_angular`` returns the bare phase rate phi/(n T).
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from . import diffusion as _diffusion
from .ensemble import (
    DetectionConfig,
    EnsembleState,
    MeasurementResult,
    excited_population,
    free_precession,
    partial_projection,
    reset_to_ground,
    rotate,
)
from .oscillator import LocalOscillatorState, advance

__all__ = [
    "RamseyConfig",
    "CycleRecord",
    "RabiRecord",
    "DecoherenceModel",
    "DecoherenceFit",
    "SaturationWarning",
    "FitFailureError",
    "run_apl_block",
    "run_standard_ramsey",
    "run_rabi_ppm",
    "estimate_phase",
    "estimate_frequency",
    "estimate_frequency_angular",
    "predicted_projected_fraction",
    "fit_decoherence",
]

_HALF_PI = math.pi / 2.0


class SaturationWarning(UserWarning):
    """Population estimate near the readout rails; phase inversion degrades."""


class FitFailureError(RuntimeError):
    """Least-squares fit did not converge; carries solver diagnostics."""


@dataclass(frozen=True)
class RamseyConfig:
    """Timing and detection for Ramsey-type sequences.

    n_cp is the number of consecutive partial projections executed on
    one preparation before the ensemble is re-initialized; n_cycles is
    the total cycle budget of a run. dead_time is extra free evolution
    per cycle (the relative phase keeps accumulating through it).
    """

    t_fp: float = 0.1
    pi2_duration: float = 7.5e-4
    n_cp: int = 3
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    n_cycles: int = 100
    dead_time: float = 0.0
    diffusion: "_diffusion.DiffusionConfig | None" = None

    def __post_init__(self):
        if self.t_fp <= 0:
            raise ValueError("t_fp must be positive")
        if self.n_cp < 1:
            raise ValueError("n_cp must be at least 1")
        if self.pi2_duration < 0 or self.dead_time < 0:
            raise ValueError("durations must be non-negative")

    @property
    def cycle_time(self):
        """Wall-clock length of one phase-tracking cycle."""
        return (
            self.dead_time
            + self.t_fp
            + 4.0 * self.pi2_duration
            + self.detection.measurement_duration
        )


@dataclass(frozen=True, eq=False)
class CycleRecord:
    """Per-cycle outcome inside one phase-tracking block.

    ``projected_before`` is the ever-projected fraction of the ensemble
    just before this cycle's measurement (diagnostic, not emitted in
    the cycle CSV).
    """

    n: int
    timestamp: float
    measurement: MeasurementResult
    phi_n: float
    delta_f_hz: float
    projected_before: float = 0.0


@dataclass(frozen=True)
class RabiRecord:
    step: int
    angle: float
    estimate: float
    population: float
    n_sampled: int = 0


@dataclass(frozen=True)
class DecoherenceModel:
    """Projected-fraction growth: amplitude * (1 - (1-p)^(n-1))."""

    p: float
    amplitude: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")


@dataclass(frozen=True)
class DecoherenceFit:
    model: DecoherenceModel
    p_stderr: float
    p_ci95: tuple
    residual_norm: float


def estimate_phase(m: MeasurementResult) -> float:
    """Invert a 90-degree readout into the accumulated phase.

    arcsin(2 * clamp(estimate) - 1), principal branch [-pi/2, +pi/2];
    estimate 0.5 maps to 0 and small positive phases raise the excited
    fraction. No unwrapping is attempted; a SaturationWarning is issued
    when the raw estimate sits within 0.05 of either rail.
    """
    if abs(m.estimate - 0.5) > 0.45:
        warnings.warn(
            "population estimate near saturation, phase readout unreliable",
            SaturationWarning,
            stacklevel=2,
        )
    return float(math.asin(2.0 * m.estimate_clamped - 1.0))


def estimate_frequency(phi_n, n, t_fp) -> float:
    """Frequency offset in Hz from the phase after n tracked cycles."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    if t_fp <= 0:
        raise ValueError("t_fp must be positive")
    return float(phi_n / (2.0 * math.pi * n * t_fp))


def estimate_frequency_angular(phi_n, n, t_fp) -> float:
    """Same slope in angular form, phi/(n t_fp), rad/s."""
    n = int(n)
    if n < 1:
        raise ValueError("n must be at least 1")
    if t_fp <= 0:
        raise ValueError("t_fp must be positive")
    return float(phi_n / (n * t_fp))


def _transport(state, cfg, duration):
    """Move ion positions by Brownian transport when a model is attached."""
    if cfg.diffusion is None or duration <= 0:
        return state
    half = state.cloud_length / 2.0
    n_sub = max(1, int(math.ceil(duration / cfg.diffusion.dt)))
    z = state.z_pos
    for _ in range(n_sub):
        z = _diffusion.step_brownian(
            z,
            cfg.diffusion.effective_d(),
            duration / n_sub,
            state.rng_stream,
            half_length=half,
        )
    from dataclasses import replace

    return replace(state, z_pos=z)


def _measure(state, cfg):
    """One partial projection, resolving the sampled set per mode."""
    det = cfg.detection
    if det.mode == "beam_overlap":
        if cfg.diffusion is None:
            raise ValueError("beam_overlap detection needs a diffusion config")
        z, struck = _diffusion.struck_during(
            state.z_pos, cfg.diffusion, det.measurement_duration, state.rng_stream
        )
        from dataclasses import replace

        state = replace(state, z_pos=z)
        return partial_projection(state, det, sampled=np.flatnonzero(struck))
    return partial_projection(state, det)


def run_apl_block(ensemble: EnsembleState, lo: LocalOscillatorState, cfg: RamseyConfig, t0=0.0):
    """One phase-tracking block of cfg.n_cp cycles on a fresh ensemble.

    The ensemble must be initialized (all ions ground). Sequence: one
    pi/2 at phase 0, then per cycle free precession over t_fp (plus any
    dead time), pi/2 at 90 degrees, partial projection, 3 pi/2 at 90
    degrees to revert the unprojected ions.

    Returns the list of CycleRecord, one per cycle; the n-th record's
    delta_f_hz uses the 1/n phase divisor. Empty-sample errors from the
    projection propagate to the caller.
    """
    state = rotate(ensemble, 0.0, _HALF_PI)
    t = t0 + cfg.pi2_duration
    records = []
    for n in range(1, cfg.n_cp + 1):
        dt_free = cfg.dead_time + cfg.t_fp
        state = free_precession(state, advance(lo, dt_free))
        state = _transport(state, cfg, dt_free)
        t += dt_free
        state = rotate(state, _HALF_PI, _HALF_PI)
        t += cfg.pi2_duration
        projected_before = float(state.ever_projected.mean())
        state, m = _measure(state, cfg)
        t += cfg.detection.measurement_duration
        phi = estimate_phase(m)
        records.append(
            CycleRecord(
                n=n,
                timestamp=t,
                measurement=m,
                phi_n=phi,
                delta_f_hz=estimate_frequency(phi, n, cfg.t_fp),
                projected_before=projected_before,
            )
        )
        state = rotate(state, _HALF_PI, 3.0 * _HALF_PI)
        t += 3.0 * cfg.pi2_duration
    return records


def run_standard_ramsey(ensemble: EnsembleState, lo: LocalOscillatorState, cfg: RamseyConfig):
    """cfg.n_cycles independent Ramsey cycles with destructive readout.

    The phase is re-initialized every cycle, so each record is an n=1
    estimate. The whole ensemble is projected (sampling fraction 1);
    technical noise follows cfg.detection.sigma_tech.
    """
    from dataclasses import replace as _dc_replace

    det_full = _dc_replace(cfg.detection, mode="fixed_fraction", p=1.0)
    state = ensemble
    t = 0.0
    records = []
    for _ in range(cfg.n_cycles):
        state = reset_to_ground(state)
        state = rotate(state, 0.0, _HALF_PI)
        dt_free = cfg.dead_time + cfg.t_fp
        state = free_precession(state, advance(lo, dt_free))
        t += cfg.pi2_duration + dt_free
        state = rotate(state, _HALF_PI, _HALF_PI)
        t += cfg.pi2_duration
        state, m = partial_projection(state, det_full)
        t += cfg.detection.measurement_duration
        phi = estimate_phase(m)
        records.append(
            CycleRecord(
                n=1,
                timestamp=t,
                measurement=m,
                phi_n=phi,
                delta_f_hz=estimate_frequency(phi, 1, cfg.t_fp),
                projected_before=0.0,
            )
        )
    return records


def run_rabi_ppm(ensemble, lo, rotation_step, n_steps, reinitialize, det: DetectionConfig):
    """Rabi probing with or without state reuse.

    reinitialize=True re-prepares the ground state before every point k
    and probes with the cumulative pulse area k * rotation_step; the
    readout is the full-cloud mean plus technical noise (the state is
    discarded afterwards, so no per-ion collapse is needed and the
    noiseless trace is exact). reinitialize=False applies one
    rotation_step per point to the same ensemble and partially projects
    after each step, accumulating measurement back-action; the LO keeps
    precessing during each readout window.

    Records run k = 0 .. n_steps, where k = 0 is the unrotated baseline.
    """
    if rotation_step <= 0:
        raise ValueError("rotation_step must be positive")
    n_steps = int(n_steps)
    if n_steps < 1:
        raise ValueError("n_steps must be at least 1")

    records = []
    state = reset_to_ground(ensemble)
    rng = state.rng_stream

    if reinitialize:
        for k in range(n_steps + 1):
            state = reset_to_ground(state)
            if k:
                state = rotate(state, 0.0, k * rotation_step)
            pop = excited_population(state)
            est = pop
            if det.sigma_tech > 0:
                est += rng.normal(0.0, det.sigma_tech)
            records.append(
                RabiRecord(
                    step=k,
                    angle=k * rotation_step,
                    estimate=float(est),
                    population=pop,
                    n_sampled=len(state),
                )
            )
        return records

    for k in range(n_steps + 1):
        if k:
            state = rotate(state, 0.0, rotation_step)
        pop = excited_population(state)
        state, m = partial_projection(state, det)
        records.append(
            RabiRecord(
                step=k,
                angle=k * rotation_step,
                estimate=m.estimate,
                population=pop,
                n_sampled=m.n_sampled,
            )
        )
        # LO-atom phase drift across the readout window; zero on resonance
        state = free_precession(state, advance(lo, det.measurement_duration))
    return records


def predicted_projected_fraction(model: DecoherenceModel, n):
    """Expected ever-projected fraction before the n-th measurement."""
    n_arr = np.asarray(n)
    if np.any(n_arr < 1):
        raise ValueError("cycle index must be at least 1")
    out = model.amplitude * (1.0 - (1.0 - model.p) ** (n_arr - 1))
    if np.isscalar(n) or n_arr.ndim == 0:
        return float(out)
    return out


def fit_decoherence(cycles, deviations) -> DecoherenceFit:
    """Least-squares fit of amplitude * (1 - (1-p)^(n-1)).

    Parameters
    ----------
    cycles : array-like of cycle indices (n >= 1)
    deviations : array-like of per-cycle deviations to fit

    Returns the fitted model with the standard error and 95% confidence
    interval on p (t quantile, dof = points - 2) and the residual norm.
    An all-zero series short-circuits to p = 0. Non-convergence raises
    FitFailureError with the solver message.
    """
    n = np.asarray(cycles, dtype=float)
    d = np.asarray(deviations, dtype=float)
    if n.size < 3:
        raise ValueError("need at least 3 points to fit")
    if n.size != d.size:
        raise ValueError("cycles and deviations must have equal length")
    if np.allclose(d, 0.0, atol=1e-15):
        return DecoherenceFit(
            model=DecoherenceModel(p=0.0, amplitude=0.0),
            p_stderr=0.0,
            p_ci95=(0.0, 0.0),
            residual_norm=0.0,
        )

    def shape(nn, p, a):
        return a * (1.0 - (1.0 - p) ** (nn - 1.0))

    try:
        popt, pcov = optimize.curve_fit(
            shape,
            n,
            d,
            p0=(0.2, max(d.max(), 1e-6)),
            bounds=([0.0, 0.0], [1.0, np.inf]),
            maxfev=20000,
        )
    except RuntimeError as exc:
        raise FitFailureError(f"decoherence fit did not converge: {exc}") from exc

    p_hat, a_hat = popt
    resid = d - shape(n, p_hat, a_hat)
    dof = max(int(n.size) - 2, 1)
    p_var = float(pcov[0, 0])
    stderr = math.sqrt(p_var) if np.isfinite(p_var) and p_var >= 0 else math.inf
    tq = float(stats.t.ppf(0.975, dof))
    return DecoherenceFit(
        model=DecoherenceModel(p=float(p_hat), amplitude=float(a_hat)),
        p_stderr=stderr,
        p_ci95=(float(p_hat - tq * stderr), float(p_hat + tq * stderr)),
        residual_norm=float(np.linalg.norm(resid)),
    )

"""Flat key-value run configuration.

Config files are plain text, one ``key = value`` per line, ``#``
comments and blank lines ignored. Keys are namespaced with dots and
validated against a closed registry; an unknown key is an error, not a
warning, so typos cannot silently fall back to defaults.

Several keys accept 0 (or "none") as "derive from the rest of the
config": stab.q from f0 and t_fp, stab.snr from the detection noise
budget, stab.t_c_s from the cycle timing, stab.n_atom from the
ensemble size. Resolution happens once, in resolve(); the hash covers
the resolved values plus the seed so identical hashes imply identical
runs.
"""

import hashlib
import math
from dataclasses import dataclass

__all__ = ["ConfigError", "RunConfig", "parse_config_file", "config_hash", "DEFAULTS", "describe_keys"]


class ConfigError(ValueError):
    """Bad key, bad value, or unparseable config line."""


def _as_float(raw):
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"expected a number, got {raw!r}") from exc


def _as_int(raw):
    try:
        return int(raw, 0) if isinstance(raw, str) else int(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"expected an integer, got {raw!r}") from exc


def _as_float_or_none(raw):
    if isinstance(raw, str) and raw.strip().lower() in ("none", "null"):
        return None
    if raw is None:
        return None
    return _as_float(raw)


def _as_choice(*options):
    def conv(raw):
        val = str(raw).strip()
        if val not in options:
            raise ConfigError(f"expected one of {options}, got {raw!r}")
        return val

    return conv


# key -> (converter, default, help)
_REGISTRY = {
    "run.seed": (_as_int, 12345, "master seed for every derived stream"),
    "run.n_trials": (_as_int, 0, "trial count override; 0 keeps the per-command default"),
    "run.output_dir": (str, "runs", "directory for emitted CSV/JSON"),
    "ens.n_ions": (_as_int, 2000, "ions in the ensemble"),
    "ens.cloud_length_m": (_as_float, 3e-3, "axial cloud extent"),
    "lo.f0_hz": (_as_float, 12.6e9, "nominal transition frequency"),
    "lo.delta_f0_hz": (_as_float, 0.0, "static LO detuning"),
    "lo.h0": (_as_float, 0.0, "white frequency noise level"),
    "lo.h_minus1": (_as_float, 0.0, "flicker frequency noise level"),
    "lo.h_minus2": (_as_float, 0.0, "random-walk frequency noise level"),
    "lo.preset": (_as_choice("none", "maser", "noisy"), "none", "named noise level set; overrides the h, coefficients"),
    "det.mode": (_as_choice("fixed_fraction", "beam_overlap"), "fixed_fraction", "how the sampled subset is chosen"),
    "det.p": (_as_float, 0.18, "sampling fraction per measurement"),
    "det.sigma_tech": (_as_float, 0.1, "technical noise sd added to the population estimate"),
    "det.measurement_duration_s": (_as_float, 1e-3, "readout window length"),
    "seq.t_fp_s": (_as_float, 0.1, "free precession time per cycle"),
    "seq.pi2_duration_s": (_as_float, 7.5e-4, "pi/2 pulse length"),
    "seq.n_cp": (_as_int, 3, "cycles per tracking block"),
    "seq.n_cycles": (_as_int, 300, "total cycle budget per run"),
    "seq.dead_time_s": (_as_float, 0.0, "extra free evolution per cycle"),
    "seq.rabi_step_rad": (_as_float, math.pi / 6.0, "rotation per Rabi step"),
    "seq.rabi_n_steps": (_as_int, 12, "Rabi steps after the baseline point"),
    "seq.rabi_repeats_standard": (_as_int, 10, "re-initialized Rabi repeats"),
    "seq.rabi_repeats_ppm": (_as_int, 8, "partial-projection Rabi repeats"),
    "diff.temperature_k": (_as_float, 0.05, "ion temperature"),
    "diff.mobility": (_as_float, 8.62e18, "ion mobility for the Einstein relation"),
    "diff.d_override": (_as_float_or_none, 3.5e-6, "diffusion constant override; 'none' derives from T and mobility"),
    "diff.dt_s": (_as_float, 1e-5, "Brownian sub-step"),
    "diff.n_walkers": (_as_int, 20000, "walkers for diffusion statistics"),
    "diff.beam_lo_m": (_as_float, -1.935e-4, "detection beam lower edge"),
    "diff.beam_hi_m": (_as_float, 1.935e-4, "detection beam upper edge"),
    "diff.duration_max_s": (_as_float, 2e-3, "longest struck-fraction window"),
    "diff.n_durations": (_as_int, 11, "points on the struck-fraction duration grid"),
    "stab.k": (_as_float, 1.0, "limit-line prefactor"),
    "stab.q": (_as_float, 0.0, "line quality factor; 0 derives f0 * 2 * t_fp"),
    "stab.snr": (_as_float, 0.0, "single-cycle SNR; 0 derives from the detection noise budget"),
    "stab.t_c_s": (_as_float, 0.0, "cycle time; 0 derives from the sequence timing"),
    "stab.n_atom": (_as_int, 0, "atom number for the information bound; 0 uses ens.n_ions"),
    "allan.mode": (_as_choice("overlapping", "non_overlapping"), "overlapping", "Allan estimator variant"),
    "allan.points_per_decade": (_as_int, 4, "tau grid density"),
}

DEFAULTS = {k: v[1] for k, v in _REGISTRY.items()}


def describe_keys():
    """(key, default, help) rows for docs and --help output."""
    return [(k, v[1], v[2]) for k, v in sorted(_REGISTRY.items())]


@dataclass(frozen=True, eq=False)
class RunConfig:
    """Immutable resolved configuration; values keyed by registry name."""

    values: dict

    def __getitem__(self, key):
        try:
            return self.values[key]
        except KeyError as exc:
            raise ConfigError(f"unknown config key: {key!r}") from exc

    def get(self, key, default=None):
        return self.values.get(key, default)

    def with_overrides(self, overrides):
        merged = dict(self.values)
        for key, raw in overrides.items():
            if key not in _REGISTRY:
                raise ConfigError(f"unknown config key: {key!r}")
            merged[key] = _REGISTRY[key][0](raw)
        return RunConfig(values=merged)


def _preset_levels(name):
    # calibration choices: "maser" keeps 0.1 s phase wander ~ 2e-3 rad,
    # "noisy" pushes it past a radian so single-shot tracking breaks
    if name == "maser":
        return 1e-26, 8e-31, 1e-36
    if name == "noisy":
        return 2e-20, 1e-21, 1e-23
    raise ConfigError(f"unknown lo.preset: {name!r}")


def resolve(values: dict) -> RunConfig:
    """Fill derived defaults and return the frozen config."""
    merged = dict(DEFAULTS)
    for key, raw in values.items():
        if key not in _REGISTRY:
            raise ConfigError(f"unknown config key: {key!r}")
        merged[key] = _REGISTRY[key][0](raw)

    if merged["lo.preset"] != "none":
        merged["lo.h0"], merged["lo.h_minus1"], merged["lo.h_minus2"] = _preset_levels(
            merged["lo.preset"]
        )

    if merged["stab.q"] == 0.0:
        merged["stab.q"] = merged["lo.f0_hz"] * 2.0 * merged["seq.t_fp_s"]
    if merged["stab.snr"] == 0.0:
        p = merged["det.p"]
        n = merged["ens.n_ions"]
        var = merged["det.sigma_tech"] ** 2 + 0.25 / max(p * n, 1.0)
        merged["stab.snr"] = 0.5 / math.sqrt(var)
    if merged["stab.t_c_s"] == 0.0:
        merged["stab.t_c_s"] = (
            merged["seq.dead_time_s"]
            + merged["seq.t_fp_s"]
            + 4.0 * merged["seq.pi2_duration_s"]
            + merged["det.measurement_duration_s"]
        )
    if merged["stab.n_atom"] == 0:
        merged["stab.n_atom"] = merged["ens.n_ions"]

    for key in ("ens.n_ions", "seq.n_cp", "seq.n_cycles", "diff.n_walkers"):
        if merged[key] < 1:
            raise ConfigError(f"{key} must be at least 1, got {merged[key]}")
    if merged["diff.beam_lo_m"] >= merged["diff.beam_hi_m"]:
        raise ConfigError("diff.beam_lo_m must be below diff.beam_hi_m")
    return RunConfig(values=merged)


def parse_config_file(path) -> dict:
    """Read raw key=value pairs; no defaults applied here."""
    raw = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line.rstrip()!r}")
            key, _, value = stripped.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in _REGISTRY:
                raise ConfigError(f"{path}:{lineno}: unknown config key: {key!r}")
            if key in raw:
                raise ConfigError(f"{path}:{lineno}: duplicate key: {key!r}")
            raw[key] = value
    return raw


def _canonical(value):
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return "none"
    return str(value)


def config_hash(cfg: RunConfig) -> str:
    """Stable digest of the resolved config, seed included.

    run.output_dir is excluded: where results land does not change
    what they are, and the hash identifies the data.
    """
    lines = [
        f"{k}={_canonical(cfg.values[k])}"
        for k in sorted(cfg.values)
        if k != "run.output_dir"
    ]
    return hashlib.sha256("\n".join(lines).encode("utf-8")).hexdigest()[:16]

"""Command-line harness.

Subcommands run complete simulation bundles and write CSV/JSON into an
output directory. Every CSV starts with two comment lines carrying the
resolved config hash and the seed, so any output file can be traced to
the exact run that produced it. Nothing records wall-clock time and
all floats are printed with a fixed %.12g format, so re-running a
command with the same config and seed reproduces every file byte for
byte.

Exit codes: 0 success, 2 configuration problem (bad flag, bad config
file, unknown key), 3 runtime or data problem (fit failure, empty
sample, malformed input series). Results are built fully in memory
before anything is written, so a failing run leaves no partial bundle.
"""

import argparse
import json
import math
import os
import re
import sys
from dataclasses import replace

import numpy as np

from . import diffusion as diff_mod
from .config import ConfigError, RunConfig, config_hash, parse_config_file, resolve
from .ensemble import DetectionConfig, EmptySampleError, initialize_ensemble
from .oscillator import NoiseSpec, make_local_oscillator
from .rng import substream
from .sequences import (
    FitFailureError,
    RamseyConfig,
    fit_decoherence,
    predicted_projected_fraction,
    run_apl_block,
    run_rabi_ppm,
    run_standard_ramsey,
)
from .stability import (
    FractionalFrequencySeries,
    InsufficientDataError,
    StabilityParams,
    allan_deviation,
    default_taus,
    limit_apl,
    limit_apl_repetition,
    limit_technical,
    qpn_snr,
)

__all__ = ["main"]


class DataError(RuntimeError):
    """Malformed or unusable input data file."""


def _fmt(v):
    if isinstance(v, float):
        return "%.12g" % v
    return str(v)


def _csv(h, seed, header, rows):
    lines = [f"# config_hash={h}", f"# seed={seed}", ",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _json_doc(payload):
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _meta(command, cfg: RunConfig, h, outputs):
    plain = {}
    for k in sorted(cfg.values):
        v = cfg.values[k]
        if isinstance(v, np.integer):
            v = int(v)
        plain[k] = v
    return _json_doc(
        {
            "command": command,
            "config_hash": h,
            "seed": int(cfg["run.seed"]),
            "config": plain,
            "outputs": sorted(outputs),
        }
    )


def _detection(cfg) -> DetectionConfig:
    return DetectionConfig(
        mode=cfg["det.mode"],
        p=cfg["det.p"],
        sigma_tech=cfg["det.sigma_tech"],
        measurement_duration=cfg["det.measurement_duration_s"],
    )


def _noise_spec(cfg) -> NoiseSpec:
    return NoiseSpec(
        h0=cfg["lo.h0"], h_minus1=cfg["lo.h_minus1"], h_minus2=cfg["lo.h_minus2"]
    )


def _stab_params(cfg) -> StabilityParams:
    return StabilityParams(
        q=cfg["stab.q"],
        snr=cfg["stab.snr"],
        t_c=cfg["stab.t_c_s"],
        k=cfg["stab.k"],
        f0=cfg["lo.f0_hz"],
        n_cp=cfg["seq.n_cp"],
        n_atom=cfg["stab.n_atom"],
    )


def _ramsey_config(cfg, n_cycles) -> RamseyConfig:
    dcfg = None
    if cfg["det.mode"] == "beam_overlap":
        dcfg = diff_mod.DiffusionConfig(
            temperature=cfg["diff.temperature_k"],
            mobility=cfg["diff.mobility"],
            d_override=cfg["diff.d_override"],
            dt=cfg["diff.dt_s"],
            cloud_length=cfg["ens.cloud_length_m"],
            beam_interval=(cfg["diff.beam_lo_m"], cfg["diff.beam_hi_m"]),
        )
    return RamseyConfig(
        t_fp=cfg["seq.t_fp_s"],
        pi2_duration=cfg["seq.pi2_duration_s"],
        n_cp=cfg["seq.n_cp"],
        detection=_detection(cfg),
        n_cycles=n_cycles,
        dead_time=cfg["seq.dead_time_s"],
        diffusion=dcfg,
    )


def _limit_rows(params: StabilityParams, taus):
    qpn_params = replace(params, snr=qpn_snr(params.n_atom)) if params.n_atom else None
    rows = []
    for tau in taus:
        row = [
            float(tau),
            float(limit_technical(params, tau)),
            float(limit_apl(params, tau)),
            float(limit_apl_repetition(params, tau)),
        ]
        row.append(float(limit_technical(qpn_params, tau)) if qpn_params else math.nan)
        rows.append(tuple(row))
    return rows


_LIMIT_HEADER = ("tau_s", "limit_technical", "limit_apl", "limit_apl_repetition", "limit_qpn")


def _rabi_fit(angles, means):
    # contrast/offset/step fit of the probe response c + a (1 - cos(k w)) / 2
    from scipy.optimize import curve_fit

    ks = np.arange(len(means), dtype=float)
    step0 = angles[1] if len(angles) > 1 else 1.0

    def model(k, c, a, w):
        return c + a * (1.0 - np.cos(k * w)) / 2.0

    try:
        popt, _ = curve_fit(model, ks, means, p0=(0.0, 1.0, step0), maxfev=20000)
    except RuntimeError as exc:
        raise FitFailureError(f"probe-curve fit did not converge: {exc}") from exc
    resid = means - model(ks, *popt)
    return {
        "offset": float(popt[0]),
        "amplitude": float(popt[1]),
        "step_rad": float(popt[2]),
        "residual_norm": float(np.linalg.norm(resid)),
    }


def cmd_rabi(cfg: RunConfig, h):
    seed = cfg["run.seed"]
    n_steps = cfg["seq.rabi_n_steps"]
    step = cfg["seq.rabi_step_rad"]
    det = _detection(cfg)
    if det.mode != "fixed_fraction":
        # beam selection needs positions the probe-only bundle does not track
        det = replace(det, mode="fixed_fraction")
    trials = cfg["run.n_trials"]
    spec = _noise_spec(cfg)

    rows = []
    curves = {}
    for mode, reps, reinit in (
        ("standard", trials or cfg["seq.rabi_repeats_standard"], True),
        ("ppm", trials or cfg["seq.rabi_repeats_ppm"], False),
    ):
        est = np.empty((reps, n_steps + 1))
        for r in range(reps):
            ens = initialize_ensemble(
                cfg["ens.n_ions"],
                cfg["ens.cloud_length_m"],
                substream(seed, f"rabi-{mode}", r),
            )
            lo = make_local_oscillator(
                cfg["lo.f0_hz"], cfg["lo.delta_f0_hz"], spec,
                substream(seed, f"rabi-lo-{mode}", r),
            )
            recs = run_rabi_ppm(ens, lo, step, n_steps, reinit, det)
            est[r] = [rec.estimate for rec in recs]
        mean = est.mean(axis=0)
        sd = est.std(axis=0, ddof=1) if reps > 1 else np.zeros(n_steps + 1)
        curves[mode] = mean
        for k in range(n_steps + 1):
            rows.append((mode, k, k * step, float(mean[k]), float(sd[k]), reps))

    deviation = np.abs(curves["ppm"] - curves["standard"])
    fits = {m: _rabi_fit(np.arange(n_steps + 1) * step, c) for m, c in curves.items()}
    files = {
        "rabi_curve.csv": _csv(
            h, seed,
            ("mode", "step", "angle_rad", "mean_estimate", "sd_estimate", "n_trials"),
            rows,
        ),
        "rabi_fit.json": _json_doc(
            {
                "fits": fits,
                "deviation_by_step": [float(d) for d in deviation],
                "max_abs_deviation": float(deviation.max()),
            }
        ),
    }
    return files


def _apl_bundle(cfg: RunConfig, h, include_allan=True):
    seed = cfg["run.seed"]
    n_cp = cfg["seq.n_cp"]
    n_blocks = cfg["run.n_trials"] or max(1, cfg["seq.n_cycles"] // n_cp)
    rcfg = _ramsey_config(cfg, n_cycles=n_blocks * n_cp)
    spec = _noise_spec(cfg)
    f0 = cfg["lo.f0_hz"]

    # same substream for both oscillators: the two protocols see the
    # identical noise realization, so the comparison is apples to apples
    lo_apl = make_local_oscillator(f0, cfg["lo.delta_f0_hz"], spec, substream(seed, "lo"))
    lo_std = make_local_oscillator(f0, cfg["lo.delta_f0_hz"], spec, substream(seed, "lo"))

    block_span = rcfg.pi2_duration + n_cp * rcfg.cycle_time
    apl_rows = []
    per_n = {n: [] for n in range(1, n_cp + 1)}
    proj_by_n = {n: [] for n in range(1, n_cp + 1)}
    block_y = []
    for b in range(n_blocks):
        ens = initialize_ensemble(
            cfg["ens.n_ions"], cfg["ens.cloud_length_m"], substream(seed, "apl-ens", b)
        )
        recs = run_apl_block(ens, lo_apl, rcfg, t0=b * block_span)
        for rec in recs:
            apl_rows.append(
                (b, rec.n, rec.timestamp, rec.measurement.estimate, rec.phi_n, rec.delta_f_hz)
            )
            per_n[rec.n].append(rec.delta_f_hz)
            proj_by_n[rec.n].append(rec.projected_before)
        block_y.append(recs[-1].delta_f_hz / f0)

    std_ens = initialize_ensemble(
        cfg["ens.n_ions"], cfg["ens.cloud_length_m"], substream(seed, "std-ens")
    )
    std_recs = run_standard_ramsey(std_ens, lo_std, rcfg)
    std_rows = [
        (i, rec.n, rec.timestamp, rec.measurement.estimate, rec.phi_n, rec.delta_f_hz)
        for i, rec in enumerate(std_recs)
    ]

    sd_rows = []
    for n in range(1, n_cp + 1):
        vals = np.asarray(per_n[n])
        sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        sd_rows.append((n, sd, vals.size))

    cycle_header = ("block_id", "n", "timestamp_s", "estimate", "phi_rad", "delta_f_hz")
    files = {
        "apl_cycles.csv": _csv(h, seed, cycle_header, apl_rows),
        "ramsey_cycles.csv": _csv(h, seed, cycle_header, std_rows),
        "apl_sd.csv": _csv(h, seed, ("n", "sd_delta_f_hz", "n_blocks"), sd_rows),
    }

    ns = np.arange(1, n_cp + 1)
    mean_proj = np.array([np.mean(proj_by_n[n]) for n in ns])
    fit_doc = {"mean_projected_by_n": [float(v) for v in mean_proj]}
    if n_cp >= 3:
        fit = fit_decoherence(ns, mean_proj)
        fit_doc.update(
            {
                "p": fit.model.p,
                "amplitude": fit.model.amplitude,
                "p_stderr": fit.p_stderr,
                "p_ci95": list(fit.p_ci95),
                "residual_norm": fit.residual_norm,
            }
        )
    files["decoherence_fit.json"] = _json_doc(fit_doc)

    if include_allan:
        mode = cfg["allan.mode"]
        ppd = cfg["allan.points_per_decade"]
        std_tau0 = (
            rcfg.dead_time
            + rcfg.t_fp
            + 2.0 * rcfg.pi2_duration
            + rcfg.detection.measurement_duration
        )
        std_series = FractionalFrequencySeries(
            np.array([rec.delta_f_hz for rec in std_recs]) / f0, std_tau0
        )
        allan_header = ("tau_s", "adev", "n_pairs")
        pts = allan_deviation(std_series, default_taus(std_series, ppd), mode)
        files["allan_standard.csv"] = _csv(
            h, seed, allan_header, [(p.tau, p.adev, p.n_pairs) for p in pts]
        )
        apl_pts = []
        if len(block_y) >= 2:
            apl_series = FractionalFrequencySeries(np.array(block_y), block_span)
            apl_pts = allan_deviation(apl_series, default_taus(apl_series, ppd), mode)
        files["allan_apl.csv"] = _csv(
            h, seed, allan_header, [(p.tau, p.adev, p.n_pairs) for p in apl_pts]
        )
        params = _stab_params(cfg)
        taus = np.logspace(
            math.log10(std_tau0), math.log10(max(n_blocks, 2) * block_span), 25
        )
        files["limits.csv"] = _csv(h, seed, _LIMIT_HEADER, _limit_rows(params, taus))
    return files


def cmd_apl(cfg: RunConfig, h):
    return _apl_bundle(cfg, h, include_allan=True)


def cmd_diffusion(cfg: RunConfig, h):
    seed = cfg["run.seed"]
    dcfg = diff_mod.DiffusionConfig(
        temperature=cfg["diff.temperature_k"],
        mobility=cfg["diff.mobility"],
        d_override=cfg["diff.d_override"],
        dt=cfg["diff.dt_s"],
        cloud_length=cfg["ens.cloud_length_m"],
        beam_interval=(cfg["diff.beam_lo_m"], cfg["diff.beam_hi_m"]),
    )
    n_walkers = cfg["diff.n_walkers"]
    d_eff = dcfg.effective_d()

    rng = substream(seed, "diff-msd")
    z = np.zeros(n_walkers)
    msd_rows = []
    for k in range(1, 101):
        z = diff_mod.step_brownian(z, d_eff, dcfg.dt, rng)  # free space
        if k % 10 == 0:
            t = k * dcfg.dt
            msd_rows.append((t, float(np.mean(z * z)), 2.0 * d_eff * t))

    temps = np.linspace(0.01, 0.10, 10)
    d_rows = [
        (float(t), diff_mod.diffusion_constant(float(t), dcfg.mobility)) for t in temps
    ]

    durations = np.linspace(0.0, cfg["diff.duration_max_s"], cfg["diff.n_durations"])
    struck_rows = []
    for i, dur in enumerate(durations):
        frac, _ = diff_mod.fraction_struck(dcfg, float(dur), n_walkers, substream(seed, "diff", i))
        struck_rows.append((float(dur), frac, n_walkers))

    return {
        "msd.csv": _csv(h, seed, ("t_s", "msd_m2", "predicted_m2"), msd_rows),
        "d_of_t.csv": _csv(h, seed, ("temperature_k", "d_m2_per_s"), d_rows),
        "struck.csv": _csv(h, seed, ("duration_s", "fraction", "n_ions"), struck_rows),
    }


def _read_series(path):
    ts, ys, linenos = [], [], []
    header_allowed = True
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            parts = [p for p in re.split(r"[,\s]+", s) if p]
            if len(parts) != 2:
                raise DataError(f"{path}:{lineno}: expected two columns, got {len(parts)}")
            try:
                t, y = float(parts[0]), float(parts[1])
            except ValueError:
                if header_allowed:
                    header_allowed = False
                    continue
                raise DataError(f"{path}:{lineno}: non-numeric sample {s!r}") from None
            header_allowed = False
            ts.append(t)
            ys.append(y)
            linenos.append(lineno)
    if len(ts) < 2:
        raise DataError(f"{path}: need at least 2 samples, got {len(ts)}")
    t_arr = np.asarray(ts)
    gaps = np.diff(t_arr)
    tau0 = float(np.median(gaps))
    if tau0 <= 0:
        raise DataError(f"{path}: timestamps must be strictly increasing")
    bad = np.flatnonzero(np.abs(gaps - tau0) > 1e-6 * tau0)
    if bad.size:
        raise DataError(
            f"{path}:{linenos[bad[0] + 1]}: non-uniform sample spacing "
            f"(gap {gaps[bad[0]]:.12g}, expected {tau0:.12g})"
        )
    return FractionalFrequencySeries(np.asarray(ys), tau0)


def cmd_allan(cfg: RunConfig, h, input_path):
    seed = cfg["run.seed"]
    series = _read_series(input_path)
    taus = default_taus(series, cfg["allan.points_per_decade"])
    pts = allan_deviation(series, taus, cfg["allan.mode"])
    params = _stab_params(cfg)
    return {
        "allan.csv": _csv(
            h, seed, ("tau_s", "adev", "n_pairs"), [(p.tau, p.adev, p.n_pairs) for p in pts]
        ),
        "limits.csv": _csv(h, seed, _LIMIT_HEADER, _limit_rows(params, [p.tau for p in pts])),
    }


def _projection_bundle(cfg: RunConfig, h):
    seed = cfg["run.seed"]
    n_cp = cfg["seq.n_cp"]
    n_blocks = cfg["run.n_trials"] or 32
    rcfg = _ramsey_config(cfg, n_cycles=n_blocks * n_cp)
    lo = make_local_oscillator(
        cfg["lo.f0_hz"], cfg["lo.delta_f0_hz"], _noise_spec(cfg), substream(seed, "lo")
    )
    block_span = rcfg.pi2_duration + n_cp * rcfg.cycle_time
    proj = np.empty((n_blocks, n_cp))
    for b in range(n_blocks):
        ens = initialize_ensemble(
            cfg["ens.n_ions"], cfg["ens.cloud_length_m"], substream(seed, "apl-ens", b)
        )
        recs = run_apl_block(ens, lo, rcfg, t0=b * block_span)
        proj[b] = [rec.projected_before for rec in recs]

    ns = np.arange(1, n_cp + 1)
    mean = proj.mean(axis=0)
    sd = proj.std(axis=0, ddof=1) if n_blocks > 1 else np.zeros(n_cp)
    fit = fit_decoherence(ns, mean)
    predicted = predicted_projected_fraction(fit.model, ns)
    rows = [
        (int(n), float(mean[i]), float(sd[i]), float(predicted[i]))
        for i, n in enumerate(ns)
    ]
    return {
        "fig5_projection.csv": _csv(h, seed, ("n", "mean_projected", "sd", "predicted"), rows),
        "decoherence_fit.json": _json_doc(
            {
                "p": fit.model.p,
                "amplitude": fit.model.amplitude,
                "p_stderr": fit.p_stderr,
                "p_ci95": list(fit.p_ci95),
                "residual_norm": fit.residual_norm,
            }
        ),
    }


_REPRODUCE_PRESETS = {
    # probe-curve comparison: re-initialized vs accumulated back-action
    "fig4": {"seq.rabi_step_rad": math.pi / 6.0, "seq.rabi_n_steps": 12},
    # projected-fraction growth over an 8-cycle block
    "fig5": {"seq.n_cp": 8, "run.n_trials": 32},
    # stability comparison: tracked blocks vs independent cycles
    "fig6": {
        "seq.n_cp": 3,
        "run.n_trials": 800,
        "seq.n_cycles": 2400,
        "lo.preset": "maser",
    },
}


def cmd_reproduce(cfg: RunConfig, h, target):
    if target == "fig4":
        return cmd_rabi(cfg, h)
    if target == "fig5":
        return _projection_bundle(cfg, h)
    return _apl_bundle(cfg, h, include_allan=True)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="ionclock",
        description="Seeded Monte Carlo runs of a trapped-ion ensemble clock",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--seed", type=int, help="override run.seed")
        p.add_argument("--out", help="override run.output_dir")
        p.add_argument("--trials", type=int, help="override run.n_trials")

    common(sub.add_parser("rabi", help="probe-curve bundle, with and without state reuse"))
    common(sub.add_parser("apl", help="phase-tracking blocks vs independent cycles"))
    common(sub.add_parser("diffusion", help="transport statistics and beam strike fractions"))
    p_allan = sub.add_parser("allan", help="two-sample deviation of a (t, y) series")
    p_allan.add_argument("input", help="CSV/whitespace file of time, fractional frequency")
    common(p_allan)
    p_rep = sub.add_parser("reproduce", help="canned demonstration bundles")
    p_rep.add_argument("target", choices=sorted(_REPRODUCE_PRESETS))
    common(p_rep)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        raw = parse_config_file(args.config) if args.config else {}
        if args.command == "reproduce":
            for key, val in _REPRODUCE_PRESETS[args.target].items():
                raw.setdefault(key, val)
        cfg = resolve(raw)
        overrides = {}
        if args.seed is not None:
            overrides["run.seed"] = args.seed
        if args.out is not None:
            overrides["run.output_dir"] = args.out
        if args.trials is not None:
            overrides["run.n_trials"] = args.trials
        if overrides:
            cfg = cfg.with_overrides(overrides)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    h = config_hash(cfg)
    try:
        if args.command == "rabi":
            files = cmd_rabi(cfg, h)
        elif args.command == "apl":
            files = cmd_apl(cfg, h)
        elif args.command == "diffusion":
            files = cmd_diffusion(cfg, h)
        elif args.command == "allan":
            files = cmd_allan(cfg, h, args.input)
        else:
            files = cmd_reproduce(cfg, h, args.target)
    except (EmptySampleError, FitFailureError, DataError, InsufficientDataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3

    files["run_meta.json"] = _meta(args.command, cfg, h, list(files) + ["run_meta.json"])
    out_dir = cfg["run.output_dir"]
    try:
        os.makedirs(out_dir, exist_ok=True)
        for name, content in files.items():
            with open(os.path.join(out_dir, name), "w", encoding="utf-8") as fh:
                fh.write(content)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())

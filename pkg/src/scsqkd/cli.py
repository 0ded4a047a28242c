"""Command-line front end.

    scsqkd keyrate   --preset 200km
    scsqkd optimize  --config link.toml --set channel.distance_km=120
    scsqkd sweep     --preset 200km --dmin 0 --dmax 400 --step 10 --out sweep.csv
    scsqkd phaselock --pattern on:60,off:60 --out trace.csv

Exit codes: 0 success with a positive rate, 2 zero rate, 1 bad input.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from . import _accel
from .errors import ConfigError, NoPositiveRate, ScsQkdError
from .keyrate import evaluate
from .model import (
    Config,
    KeyRateReport,
    ProtocolParams,
    SourceBounds,
    dark_count_probability,
    dumps_config,
    load_config,
    preset_path,
)
from .optimizer import calibrate_misalignment, optimize, sweep
from .phaselock import (
    MAX_DURATION_S,
    DriftModel,
    FrameTiming,
    InterferenceModel,
    parse_pattern,
    run_feedback,
    write_trace_csv,
)

EXIT_OK = 0
EXIT_BAD_INPUT = 1
EXIT_ZERO_RATE = 2

SWEEP_COLUMNS = ["distance_km", "mu", "p_x", "R", "R_coh", "skr_bps", "e_ph", "n_Z"]
REPORT_COLUMNS = [
    "R", "R_coh", "skr_bps", "e_ph", "N_ph_bar", "N_ph_expected", "n_O_exp_U", "n_B_exp_U", "R_raw",
    "n_Z", "n_O", "n_B", "M_S", "E_t", "mu_eq_A", "mu_eq_B", "log10_eps_coh",
]


# --- configuration ---------------------------------------------------------------


def _parse_value(text: str):
    low = text.strip().lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def apply_overrides(config: Config, assignments: list[str]) -> Config:
    """Apply ``section.field=value`` overrides on top of a loaded config."""
    for item in assignments:
        key, sep, raw = item.partition("=")
        section, dot, name = key.strip().partition(".")
        if not sep or not dot:
            raise ConfigError(f"override {item!r} is not of the form section.field=value")
        if section == "source_bounds" and config.source_bounds is None:
            config = replace(config, source_bounds=SourceBounds())
        record = getattr(config, section, None)
        if record is None or not hasattr(record, "__dataclass_fields__"):
            raise ConfigError(f"unknown section {section!r} in override {item!r}")
        value = _parse_value(raw)
        if section == "channel" and name == "dark_rate_hz":
            name, value = "P_dc", dark_count_probability(float(value), record.clock_hz)
        if name not in {f.name for f in fields(record)}:
            raise ConfigError(f"unknown field {section}.{name}")
        config = replace(config, **{section: replace(record, **{name: value})})
    return config


def _load(args) -> Config:
    if args.config and args.preset:
        raise ConfigError("give --config or --preset, not both")
    if args.config:
        config = load_config(args.config)
    elif args.preset:
        config = load_config(preset_path(args.preset))
    else:
        config = Config()
    config = apply_overrides(config, args.set or [])
    if args.distance is not None:
        config = replace(config, channel=replace(config.channel, distance_km=args.distance))
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return config.validated()


# --- output ----------------------------------------------------------------------


def _report_row(report: KeyRateReport) -> dict[str, float]:
    row = {}
    for col in REPORT_COLUMNS:
        if hasattr(report, col):
            row[col] = getattr(report, col)
        else:
            row[col] = getattr(report.stats, col)
    for name, bits in report.cost_breakdown.items():
        row[f"cost_{name}"] = bits
    return row


def format_report(report: KeyRateReport, params: ProtocolParams | None = None) -> str:
    lines = []
    if params is not None:
        lines += [("mu", params.mu_A), ("p_x", params.p_x), ("N", params.N)]
    lines += [(k, v) for k, v in _report_row(report).items()]
    width = max(len(k) for k, _ in lines)
    return "\n".join(f"{k:<{width}}  {v:.10g}" for k, v in lines)


def _write_rows(path, header, rows) -> None:
    if path is None or str(path) == "-":
        fh, close = sys.stdout, False
    else:
        fh, close = open(path, "w", newline="", encoding="utf-8"), True
    try:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in row])
    finally:
        if close:
            fh.close()


# --- commands --------------------------------------------------------------------


def cmd_keyrate(args) -> int:
    config = _load(args)
    report = evaluate(config.protocol, config.channel, config.source_bounds)
    print(format_report(report, config.protocol))
    if args.out:
        row = _report_row(report)
        _write_rows(args.out, list(row), [list(row.values())])
    return EXIT_OK if report.R_coh > 0.0 else EXIT_ZERO_RATE


def cmd_optimize(args) -> int:
    config = _load(args)
    channel = config.channel
    try:
        if args.calibrate_e_ph is not None:
            e_d, result = calibrate_misalignment(
                channel, config.protocol, args.calibrate_e_ph, config.optimizer, config.source_bounds
            )
            channel = replace(channel, e_d=e_d)
            print(f"{'e_d':<14}  {e_d:.10g}")
        else:
            result = optimize(channel, config.protocol, config.optimizer, config.source_bounds)
    except NoPositiveRate as exc:
        print(f"no positive rate: {exc}")
        return EXIT_ZERO_RATE
    print(format_report(result.report, result.params))
    if args.out:
        best = replace(config, protocol=result.params, channel=channel)
        Path(args.out).write_text(dumps_config(best), encoding="utf-8")
    return EXIT_OK


def _distances(dmin: float, dmax: float, step: float) -> np.ndarray:
    if not (math.isfinite(dmin) and math.isfinite(dmax) and math.isfinite(step)):
        raise ConfigError("sweep range must be finite")
    if not step > 0.0:
        raise ConfigError("--step must be positive")
    if not 0.0 <= dmin <= dmax:
        raise ConfigError("need 0 <= dmin <= dmax")
    n = int(math.floor((dmax - dmin) / step + 1e-9)) + 1
    return dmin + step * np.arange(n)


def cmd_sweep(args) -> int:
    distances = _distances(args.dmin, args.dmax, args.step)
    config = _load(args)
    rows = sweep(config.channel, distances, config.protocol, config.optimizer, config.source_bounds)
    _write_rows(args.out, SWEEP_COLUMNS, [[getattr(r, c) for c in SWEEP_COLUMNS] for r in rows])
    return EXIT_OK if any(r.R_coh > 0.0 for r in rows) else EXIT_ZERO_RATE


def _cycle_pattern(segments, duration_s: float):
    total = sum(s for _, s in segments)
    if total <= 0.0:
        return segments
    out, covered = [], 0.0
    while covered < duration_s:
        for on, seconds in segments:
            out.append((on, seconds))
            covered += seconds
    return out


def cmd_phaselock(args) -> int:
    try:
        segments = parse_pattern(args.pattern)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    duration = args.duration if args.duration is not None else sum(s for _, s in segments)
    if not 0.0 <= duration <= MAX_DURATION_S:
        raise ConfigError(f"duration must lie in [0, {MAX_DURATION_S:g}] s")
    config = _load(args)
    pl = config.phaselock
    model = InterferenceModel(pl.C0, pl.Cd, pl.V_pi, (pl.v_min, pl.v_max))
    drift = DriftModel(pl.sigma_rad_per_sqrt_s, config.seed)
    trace = run_feedback(
        duration, FrameTiming(), model, drift, _cycle_pattern(segments, duration), config.seed,
        sample_interval_s=pl.sample_interval_s,
    )
    if args.out:
        write_trace_csv(args.out, trace, pl.e_floor)
    if len(trace):
        on = trace.enabled
        print(f"samples       {len(trace)}")
        print(f"counts_mean   {trace.counts.mean():.1f}")
        print(f"counts_range  {trace.counts.min():.0f} .. {trace.counts.max():.0f}")
        if on.any():
            print(f"residual_std  {float(np.std(trace.phi_residual[on])):.4g} rad (loop on)")
            print(f"qber_mean     {pl.e_floor + float(trace.err_mean[on].mean()):.4%} (loop on)")
    else:
        print("samples       0")
    return EXIT_OK


# --- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--preset", help="shipped preset: 100km, 150km or 200km")
    common.add_argument("--set", action="append", metavar="SECTION.FIELD=VALUE", help="override a config value")
    common.add_argument("--distance", type=float, help="override channel.distance_km")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", help="output file ('-' for stdout where applicable)")
    common.add_argument("--backend", choices=("numba", "numpy"), help="kernel backend")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="scsqkd", description="Finite-key rates and phase-lock simulation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keyrate", parents=[common], help="key rate for the configured mu and p_x")
    p.set_defaults(func=cmd_keyrate)

    p = sub.add_parser("optimize", parents=[common], help="optimise mu and p_x")
    p.add_argument("--calibrate-e-ph", type=float, metavar="TARGET",
                   help="first choose the smallest e_d whose optimised e_ph reaches TARGET")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", parents=[common], help="optimised rate against distance")
    p.add_argument("--dmin", type=float, default=0.0)
    p.add_argument("--dmax", type=float, default=400.0)
    p.add_argument("--step", type=float, default=10.0)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("phaselock", parents=[common], help="simulate the phase-compensation loop")
    p.add_argument("--pattern", default="on:100", help="loop schedule, e.g. on:60,off:60 (repeats)")
    p.add_argument("--duration", type=float, help="seconds to simulate (default: one pass of the pattern)")
    p.set_defaults(func=cmd_phaselock)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        with _accel.use_backend(args.backend or _accel.backend()):
            return args.func(args)
    except ConfigError as exc:
        if exc.violations:
            print("error: invalid configuration", file=sys.stderr)
            for v in exc.violations:
                print(f"  - {v}", file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    except (ScsQkdError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())

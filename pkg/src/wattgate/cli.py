"""Command line entry point.

Subcommands: synth (generate a labeled household), preprocess (gap-aware
cleanup), train, eval (score a checkpoint), sweep (window-size grid).
Exit codes: 0 success, otherwise the failing error class's code.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import data as data_mod
from . import metrics as metrics_mod
from . import pipeline, synth
from .errors import ConfigurationError, DataError, ParseError, WattgateError


# -- synth ------------------------------------------------------------------

def _parse_kv(tokens, path, lineno):
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise ParseError(f"expected key=value, got {tok!r}", path, lineno)
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def _parse_appliance(name, value, path, lineno):
    tokens = value.split()
    if not tokens:
        raise ParseError("empty appliance definition", path, lineno)
    kind, kv = tokens[0], _parse_kv(tokens[1:], path, lineno)

    def fnum(key, default=None):
        if key not in kv:
            if default is not None:
                return default
            raise ParseError(f"appliance {name!r} needs {key}=", path, lineno)
        try:
            return float(kv[key])
        except ValueError:
            raise ParseError(f"{key} must be a number, got {kv[key]!r}",
                             path, lineno) from None

    jitter = fnum("jitter", 0.2)
    standby = fnum("standby")
    if kind == "cyclic":
        duty = synth.CyclicDuty(on_seconds=fnum("on_s"), off_seconds=fnum("off_s"))
        return synth.ApplianceSpec(name, standby, duty, on_watts=fnum("on"),
                                   jitter=jitter)
    if kind == "burst":
        duty = synth.BurstDuty(events_per_day=fnum("per_day"),
                               duration_seconds=fnum("duration"))
        return synth.ApplianceSpec(name, standby, duty, on_watts=fnum("on"),
                                   jitter=jitter)
    if kind == "program":
        if "phases" not in kv:
            raise ParseError(f"appliance {name!r} needs phases=", path, lineno)
        phases = []
        for part in kv["phases"].split(","):
            try:
                dur, watts = part.split(":")
                phases.append(synth.ProgramPhase(float(dur), float(watts)))
            except ValueError:
                raise ParseError(
                    f"phases must look like seconds:watts,... got {part!r}",
                    path, lineno) from None
        duty = synth.ProgramDuty(events_per_day=fnum("per_day"),
                                 phases=tuple(phases))
        return synth.ApplianceSpec(name, standby, duty, jitter=jitter)
    raise ParseError(f"unknown duty kind {kind!r} "
                     "(expected cyclic, burst, or program)", path, lineno)


def parse_household_spec(path) -> synth.HouseholdSpec:
    """Read a household description file: 'key = value' lines for the
    household fields plus one 'appliance NAME = KIND key=value ...' line
    per appliance."""
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as e:
        raise DataError(f"cannot read household spec {path}: {e}") from None
    fields = {}
    appliances = []
    keymap = {"days": "days", "sample_period": "sample_period",
              "noise_sigma": "noise_sigma_watts",
              "unknown_max": "unknown_max_watts",
              "unknown_step": "unknown_step_watts"}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", path, lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if key.startswith("appliance "):
            name = key[len("appliance "):].strip()
            appliances.append(_parse_appliance(name, value, path, lineno))
        elif key in keymap:
            try:
                fields[keymap[key]] = float(value)
            except ValueError:
                raise ParseError(f"{key} must be a number, got {value!r}",
                                 path, lineno) from None
        else:
            raise ParseError(f"unknown spec key {key!r}", path, lineno)
    if not appliances:
        raise ParseError("household spec defines no appliances", path, None)
    return synth.HouseholdSpec(appliances=tuple(appliances), **fields)


def _active_floor(spec: synth.ApplianceSpec) -> float:
    """Lowest above-standby level the appliance reaches."""
    duty = spec.duty
    if isinstance(duty, synth.ProgramDuty):
        active = [p.watts for p in duty.phases if p.watts > spec.standby_watts]
        return min(active) if active else spec.standby_watts
    return spec.on_watts


def default_threshold(spec: synth.ApplianceSpec) -> float:
    """Halfway between standby and the lowest active level, so every
    active phase counts as on."""
    floor = _active_floor(spec)
    if floor <= spec.standby_watts:
        return spec.standby_watts + 1.0
    return spec.standby_watts + 0.5 * (floor - spec.standby_watts)


def cmd_synth(args) -> int:
    if args.spec is not None:
        spec = parse_household_spec(args.spec)
        overrides = {}
        if args.days is not None:
            overrides["days"] = args.days
        if args.period is not None:
            overrides["sample_period"] = args.period
        if args.noise_sigma is not None:
            overrides["noise_sigma_watts"] = args.noise_sigma
        if overrides:
            spec = replace(spec, **overrides)
    else:
        spec = synth.default_household(
            days=args.days if args.days is not None else 3.0,
            sample_period=args.period if args.period is not None else 10.0,
            noise_sigma_watts=(args.noise_sigma
                               if args.noise_sigma is not None else 5.0))
    if not (0.0 < args.train_frac < 1.0):
        raise ConfigurationError(
            f"--train-frac must lie in (0, 1), got {args.train_frac}")

    household = synth.generate(spec, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_mod.save_channel(out / "aggregate.csv", household.aggregate)
    paths = {}
    for name, series in household.appliances.items():
        fname = f"{name}.csv"
        data_mod.save_channel(out / fname, series)
        paths[name] = fname

    n = household.aggregate.n
    split = int(round(args.train_frac * n))
    if split < 1 or split >= n:
        raise ConfigurationError(
            f"--train-frac {args.train_frac} leaves an empty split for {n} samples")
    manifest = data_mod.Manifest(
        aggregate="aggregate.csv", appliances=paths, base_dir=out,
        sample_period=spec.sample_period,
        thresholds={a.name: default_threshold(a) for a in spec.appliances},
        train_span=(0, split), test_span=(split, n), preprocess="none")
    data_mod.save_manifest(out / "manifest.txt", manifest)
    print(f"wrote {1 + len(paths)} channels ({n} samples each) and "
          f"manifest.txt to {out}")
    return 0


# -- preprocess ---------------------------------------------------------------

def cmd_preprocess(args) -> int:
    manifest = data_mod.load_manifest(args.manifest)
    agg, apps = data_mod.load_household(manifest)
    channels = [agg] + list(apps.values())
    parts = data_mod.preprocess_redd_group(channels, gap_seconds=args.gap_seconds,
                                           min_seconds=args.min_seconds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = [f"input channels: {len(channels)}",
              f"gap threshold: {args.gap_seconds} s, "
              f"minimum part length: {args.min_seconds} s",
              f"parts kept: {len(parts)}"]
    names = ["aggregate"] + list(apps.keys())
    for i, part in enumerate(parts):
        part_dir = out / f"part{i}"
        part_dir.mkdir(exist_ok=True)
        paths = {}
        for name, series in zip(names, part):
            data_mod.save_channel(part_dir / f"{name}.csv", series)
            if name != "aggregate":
                paths[name] = f"{name}.csv"
        part_manifest = data_mod.Manifest(
            aggregate="aggregate.csv", appliances=paths, base_dir=part_dir,
            sample_period=part[0].sample_period,
            thresholds=dict(manifest.thresholds), preprocess="none")
        data_mod.save_manifest(part_dir / "manifest.txt", part_manifest)
        seconds = part[0].n * part[0].sample_period
        report.append(f"part{i}: {part[0].n} samples, {seconds:.0f} s, "
                      f"start {part[0].start_time:.0f}")
    (out / "report.txt").write_text("\n".join(report) + "\n")
    print("\n".join(report))
    if not parts:
        raise DataError("no part survived preprocessing; nothing usable remains")
    return 0


# -- train --------------------------------------------------------------------

def _train_config(args) -> pipeline.RunConfig:
    overrides = {
        "manifest": args.manifest, "out": args.out, "variant": args.variant,
        "loss_mode": args.loss_mode, "s": args.s, "w": args.w,
        "threshold": args.threshold, "lr": args.lr,
        "batch_size": args.batch_size, "steps": args.steps, "seed": args.seed,
        "appliances": tuple(args.appliance) if args.appliance else None,
    }
    if args.config is not None:
        return pipeline.load_run_config(args.config, overrides)
    values = {k: v for k, v in overrides.items() if v is not None}
    return pipeline.build_run_config(values)


def cmd_train(args) -> int:
    cfg = _train_config(args)
    results, report = pipeline.run_training(cfg)
    for result in results:
        loss = "n/a" if result.final_loss is None else repr(result.final_loss)
        print(f"trained {result.appliance}: {cfg.steps} steps, "
              f"final loss {loss}, checkpoint {result.checkpoint_path}")
    if report.appliances:
        print(report.to_text(), end="")
    return 0


# -- eval ---------------------------------------------------------------------

def cmd_eval(args) -> int:
    ckpt_path = Path(args.checkpoint)
    if ckpt_path.is_dir():
        ckpts = sorted(ckpt_path.glob("ckpt_*.npz"))
        if not ckpts:
            raise DataError(f"no ckpt_*.npz checkpoints in {ckpt_path}")
    else:
        ckpts = [ckpt_path]
    out = Path(args.out) if args.out is not None else None
    scored = []
    for ckpt in ckpts:
        app_metrics, _ = pipeline.evaluate_checkpoint(ckpt, args.manifest, out)
        scored.append(app_metrics)
    report = metrics_mod.MetricsReport(appliances=scored)
    text = report.to_text()
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text(text)
    print(text, end="")
    return 0


# -- sweep --------------------------------------------------------------------

def cmd_sweep(args) -> int:
    cfg = _train_config(args)
    values = []
    for chunk in args.values.split(","):
        chunk = chunk.strip()
        if chunk:
            try:
                values.append(int(chunk))
            except ValueError:
                raise ConfigurationError(
                    f"--values must be comma-separated integers, got {chunk!r}"
                ) from None
    rows = pipeline.run_sweep(cfg, args.axis, values)
    for value, name, payload in rows:
        if name is None:
            print(f"{args.axis}={value}: {payload}")
        else:
            print(f"{args.axis}={value} {name}: mae {repr(payload)} W")
    print(f"sweep table: {Path(cfg.out_dir) / 'sweep.csv'}")
    return 0


# -- parser -------------------------------------------------------------------

def _add_train_flags(p):
    p.add_argument("--config", help="run configuration file (key = value lines)")
    p.add_argument("--manifest", help="household manifest path")
    p.add_argument("--out", help="output directory")
    p.add_argument("--variant", choices=pipeline.VARIANTS)
    p.add_argument("--loss-mode", dest="loss_mode", choices=pipeline.LOSS_MODES)
    p.add_argument("--s", type=int, help="samples predicted per window")
    p.add_argument("--w", type=int, help="context samples on each side")
    p.add_argument("--threshold", type=float, help="on/off threshold in watts")
    p.add_argument("--lr", type=float, help="Adam learning rate")
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--steps", type=int, help="training steps")
    p.add_argument("--seed", type=int, help="run seed")
    p.add_argument("--appliance", action="append",
                   help="restrict to this appliance (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wattgate",
        description="Appliance-level energy disaggregation from a single "
                    "aggregate meter.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled household")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--spec", help="household description file (default: built-in)")
    p.add_argument("--days", type=float, help="days of data")
    p.add_argument("--period", type=float, help="sample period in seconds")
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float,
                   help="aggregate noise standard deviation in watts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--train-frac", dest="train_frac", type=float, default=2 / 3,
                   help="fraction of samples assigned to the train span")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="split on long gaps, backfill short ones")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--gap-seconds", dest="gap_seconds", type=float, default=20.0)
    p.add_argument("--min-seconds", dest="min_seconds", type=float, default=86400.0)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train one model per appliance")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score saved checkpoints on the test span")
    p.add_argument("--checkpoint", required=True,
                   help="checkpoint file, or a directory of ckpt_*.npz")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", help="directory for the report and plots")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="retrain across window sizes")
    _add_train_flags(p)
    p.add_argument("--axis", required=True, choices=("s", "w"))
    p.add_argument("--values", required=True,
                   help="comma-separated integers, e.g. 16,32,64")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except WattgateError as e:
        print(f"error[{type(e).__name__}]: {e}", file=sys.stderr)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())

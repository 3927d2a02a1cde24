"""Command line front end.

Subcommands::

    analyze    solve a model and print the design quantities
    sample     draw transmit powers from the solved distribution
    simulate   run the chip-level Monte Carlo campaign
    sweep      tabulate pmin/beta (optionally with Monte Carlo) over a grid
    validate   run the built-in invariant checks

Exit codes: 0 success, 1 bad usage, 2 infeasible configuration,
3 validation failure.

Every power-like quantity takes either a linear flag (--pmax 4) or its
dB twin (--pmax-db 6.02).  A flat ``key=value`` config file can supply
any long option (dashes or underscores); explicit flags win over the
file, which wins over built-in defaults.  Bare output filenames land in
$SSAPOWER_OUTDIR when that is set.
"""

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from .experiments import (
    McSettings,
    SweepSpec,
    atomic_write_text,
    default_grid,
    format_float,
    records_to_csv,
    sweep,
)
from .powermodel import (
    ChannelParams,
    ConstantResidual,
    FractionalResidual,
    InfeasibleConfigError,
    PerfectSic,
    from_db,
    solve_model,
    to_db,
)
from .selfcheck import run_checks
from .simulator import (
    DEFAULT_SEED,
    Genie,
    SystemConfig,
    Threshold,
    design_users,
    run_campaign,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_VALIDATION = 3


class UsageError(Exception):
    """Bad flag/config combinations detected after argparse is done."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad flags; this tool reserves 2
    # for infeasible models, so remap usage problems to 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_pair(parser, name, text):
    group = parser.add_mutually_exclusive_group()
    group.add_argument(f"--{name}", type=float, metavar="X",
                       help=f"{text}, linear scale")
    group.add_argument(f"--{name}-db", type=float, metavar="DB",
                       help=f"{text}, in dB")


def _add_channel_flags(parser):
    _add_pair(parser, "noise", "noise power per chip (default 1.0)")
    _add_pair(parser, "target-snir", "post-despreading SNIR target (default 1.0)")
    _add_pair(parser, "pmax", "transmit power cap (default 4.0)")


def _add_model_flags(parser):
    parser.add_argument("--model", choices=("perfect", "fractional", "constant"),
                        help="cancellation model (default perfect)")
    parser.add_argument("--alpha", type=float, metavar="A",
                        help="leftover power fraction for the fractional model")
    _add_pair(parser, "epsilon", "leftover power for the constant model")


def _add_mc_flags(parser):
    parser.add_argument("--spreading-factor", type=int, metavar="N",
                        help="chips per symbol (default 256)")
    parser.add_argument("--packet-len", type=int, metavar="L",
                        help="symbols per packet (default 100)")
    parser.add_argument("--slots", type=int, metavar="S",
                        help="number of simulated slots (default 2000)")
    parser.add_argument("--bins", type=int, metavar="B",
                        help="equal-probability power bins (default 20)")
    parser.add_argument("--seed", type=int, metavar="SEED",
                        help=f"master RNG seed (default {DEFAULT_SEED})")
    parser.add_argument("--threads", type=int, metavar="T",
                        help="worker threads (default: all cores; results do not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ssapower",
                     description="Power-control design and simulation for "
                                 "spread-spectrum slotted Aloha with "
                                 "successive interference cancellation.")
    parser.add_argument("--config", metavar="FILE",
                        help="flat key=value file supplying defaults for any long option")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND",
                              parser_class=_Parser)

    p = sub.add_parser("analyze",
                       help="solve a model and print pmin, beta and friends")
    _add_channel_flags(p)
    _add_model_flags(p)
    p.add_argument("--table", type=int, metavar="N",
                   help="also emit an N-row pdf/cdf table (CSV)")
    p.add_argument("--output", metavar="FILE", help="write the table to FILE")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sample",
                       help="draw powers from the solved distribution")
    _add_channel_flags(p)
    _add_model_flags(p)
    p.add_argument("--count", type=int, metavar="N", help="number of draws (default 10)")
    p.add_argument("--seed", type=int, metavar="SEED",
                   help=f"RNG seed (default {DEFAULT_SEED})")
    p.add_argument("--db", action="store_true", help="print powers in dB")
    p.add_argument("--output", metavar="FILE", help="write one power per line to FILE")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("simulate",
                       help="run the chip-level Monte Carlo campaign")
    _add_channel_flags(p)
    _add_model_flags(p)
    _add_mc_flags(p)
    p.add_argument("--users", type=int, metavar="K",
                   help="users per slot; must equal the design load "
                        "1+round(beta*n), which is also the default")
    p.add_argument("--decode-rule", choices=("genie", "threshold"),
                   help="decoding model (default genie)")
    _add_pair(p, "decode-snir", "SNIR needed to decode under the threshold rule")
    p.add_argument("--output", metavar="FILE", help="write per-bin statistics CSV to FILE")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep",
                       help="tabulate the design over a parameter grid")
    _add_channel_flags(p)
    p.add_argument("--param", choices=("alpha", "epsilon"), required=True,
                   help="which residual parameter to sweep")
    p.add_argument("--values", metavar="V1,V2,...",
                   help="explicit comma-separated grid (must be strictly increasing)")
    p.add_argument("--start", type=float, metavar="A", help="grid start")
    p.add_argument("--stop", type=float, metavar="B", help="grid stop")
    p.add_argument("--points", type=int, metavar="N", help="grid size (default 50)")
    p.add_argument("--mc", action="store_true",
                   help="attach a Monte Carlo campaign to every grid point (slow)")
    _add_mc_flags(p)
    p.add_argument("--output", metavar="FILE", help="write the CSV to FILE")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("validate",
                       help="run the built-in invariant checks")
    p.set_defaults(func=cmd_validate)

    return parser


# --- config file / option resolution ---------------------------------

def load_config(path: str) -> dict[str, str]:
    cfg = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def _cast(value: str, kind, name: str):
    try:
        return kind(value)
    except ValueError as exc:
        raise UsageError(f"config value {name}={value!r} is not a valid "
                         f"{kind.__name__.lstrip('_')}") from exc


def _get(args, cfg, dest, kind, default):
    flag = getattr(args, dest, None)
    if flag is not None:
        return flag
    if dest in cfg:
        return _cast(cfg[dest], kind, dest)
    return default


def _get_pair(args, cfg, name, default):
    dest = name.replace("-", "_")
    lin = getattr(args, dest, None)
    db = getattr(args, dest + "_db", None)
    if lin is not None:
        return float(lin)
    if db is not None:
        return float(from_db(db))
    has_lin = dest in cfg
    has_db = dest + "_db" in cfg
    if has_lin and has_db:
        raise UsageError(f"config file sets both {dest} and {dest}_db")
    if has_lin:
        return _cast(cfg[dest], float, dest)
    if has_db:
        return float(from_db(_cast(cfg[dest + "_db"], float, dest + "_db")))
    return default


def _build_channel(args, cfg) -> ChannelParams:
    return ChannelParams(
        noise_power=_get_pair(args, cfg, "noise", 1.0),
        target_snir=_get_pair(args, cfg, "target-snir", 1.0),
        pmax=_get_pair(args, cfg, "pmax", 4.0),
    )


def _build_sic(args, cfg):
    kind = _get(args, cfg, "model", str, "perfect")
    alpha = _get(args, cfg, "alpha", float, None)
    epsilon = _get_pair(args, cfg, "epsilon", None)
    if kind == "perfect":
        if alpha is not None or epsilon is not None:
            raise UsageError("--alpha/--epsilon only apply to the fractional "
                             "and constant models")
        return PerfectSic()
    if kind == "fractional":
        if epsilon is not None:
            raise UsageError("--epsilon does not apply to the fractional model")
        if alpha is None:
            raise UsageError("the fractional model needs --alpha")
        return FractionalResidual(alpha=alpha)
    if kind == "constant":
        if alpha is not None:
            raise UsageError("--alpha does not apply to the constant model")
        if epsilon is None:
            raise UsageError("the constant model needs --epsilon or --epsilon-db")
        return ConstantResidual(epsilon=epsilon)
    raise UsageError(f"unknown model {kind!r}")


def _mc_settings(args, cfg) -> McSettings:
    mc = McSettings(
        spreading_factor=_get(args, cfg, "spreading_factor", int, 256),
        packet_len=_get(args, cfg, "packet_len", int, 100),
        slots=_get(args, cfg, "slots", int, 2000),
        seed=_get(args, cfg, "seed", int, DEFAULT_SEED),
        threads=_get(args, cfg, "threads", int, None),
        bins=_get(args, cfg, "bins", int, 20),
    )
    for name, value, lo in (("spreading-factor", mc.spreading_factor, 2),
                            ("packet-len", mc.packet_len, 1),
                            ("slots", mc.slots, 1), ("bins", mc.bins, 2)):
        if value < lo:
            raise UsageError(f"--{name} must be at least {lo}")
    if mc.threads is not None and mc.threads < 1:
        raise UsageError("--threads must be at least 1")
    return mc


def _resolve_output(raw: str) -> Path:
    path = Path(raw)
    if not path.is_absolute() and os.sep not in raw and "/" not in raw:
        base = os.environ.get("SSAPOWER_OUTDIR")
        if base:
            return Path(base) / path
    return path


def _deliver(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(_resolve_output(output), text)


# --- subcommands ------------------------------------------------------

def _model_lines(model) -> list[str]:
    sic = model.sic
    lines = []
    if isinstance(sic, PerfectSic):
        lines.append("model = perfect")
    elif isinstance(sic, FractionalResidual):
        lines.append("model = fractional")
        lines.append(f"alpha = {format_float(sic.alpha)}")
    else:
        lines.append("model = constant")
        lines.append(f"epsilon = {format_float(sic.epsilon)}")
    params = model.params
    lines.append(f"noise_power = {format_float(params.noise_power)}")
    lines.append(f"target_snir = {format_float(params.target_snir)}")
    lines.append(f"pmax = {format_float(params.pmax)}")
    lines.append(f"pmin = {format_float(model.pmin)}")
    lines.append(f"pmin_db = {format_float(to_db(model.pmin))}")
    lines.append(f"pmax_db = {format_float(to_db(params.pmax))}")
    lines.append(f"beta = {format_float(model.beta)}")
    lines.append(f"degenerate = {str(model.degenerate).lower()}")
    return lines


def cmd_analyze(args, cfg) -> int:
    model = solve_model(_build_sic(args, cfg), _build_channel(args, cfg))
    print("\n".join(_model_lines(model)))
    rows = _get(args, cfg, "table", int, None)
    if rows is not None:
        if rows < 2:
            raise UsageError("--table needs at least 2 rows")
        # a degenerate model raises here, which exits as infeasible
        p = model.quantile(np.linspace(0.0, 1.0, rows))
        header = "power,power_db,pdf,cdf,pdf_per_db"
        body = "\n".join(
            ",".join(format_float(v) for v in
                     (pi, to_db(pi), model.pdf(pi), model.cdf(pi),
                      model.pdf_db(to_db(pi))))
            for pi in p)
        _deliver(header + "\n" + body + "\n", args.output)
    elif args.output is not None:
        raise UsageError("--output needs --table for the analyze command")
    return EXIT_OK


def cmd_sample(args, cfg) -> int:
    model = solve_model(_build_sic(args, cfg), _build_channel(args, cfg))
    count = _get(args, cfg, "count", int, 10)
    if count < 0:
        raise UsageError("--count must be nonnegative")
    seed = _get(args, cfg, "seed", int, DEFAULT_SEED)
    powers = model.sample(np.random.default_rng(seed), count)
    if args.db or _cast(cfg.get("db", "false"), _parse_bool, "db"):
        powers = to_db(powers)
    text = "".join(format_float(v) + "\n" for v in powers)
    _deliver(text, args.output)
    return EXIT_OK


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _decode_rule(args, cfg):
    kind = _get(args, cfg, "decode_rule", str, "genie")
    threshold = _get_pair(args, cfg, "decode-snir", None)
    if kind == "genie":
        if threshold is not None:
            raise UsageError("--decode-snir only applies to the threshold rule")
        return Genie()
    if kind == "threshold":
        if threshold is None:
            raise UsageError("the threshold rule needs --decode-snir or --decode-snir-db")
        return Threshold(decode_snir=threshold)
    raise UsageError(f"unknown decode rule {kind!r}")


def cmd_simulate(args, cfg) -> int:
    model = solve_model(_build_sic(args, cfg), _build_channel(args, cfg))
    mc = _mc_settings(args, cfg)
    users = _get(args, cfg, "users", int, None)
    if users is None:
        users = design_users(model, mc.spreading_factor)
    elif users < 1:
        raise UsageError("--users must be at least 1")
    config = SystemConfig(
        spreading_factor=mc.spreading_factor,
        packet_len=mc.packet_len,
        users_per_slot=users,
        channel=model.params,
        sic=model.sic,
        decode_rule=_decode_rule(args, cfg),
        slots=mc.slots,
        seed=mc.seed,
    )
    stats = run_campaign(config, model, bins=mc.bins, threads=mc.threads)

    header = ("bin,power_lo,power_hi,count,power_mean,snir_mean,snir_var,"
              "interference_mean,interference_var")
    rows = []
    for i in range(len(stats.bin_counts)):
        rows.append(",".join(
            [str(i), format_float(stats.bin_edges[i]),
             format_float(stats.bin_edges[i + 1]), str(int(stats.bin_counts[i]))]
            + [format_float(col[i]) for col in
               (stats.power_mean, stats.snir_mean, stats.snir_var,
                stats.interference_mean, stats.interference_var)]))
    table = header + "\n" + "\n".join(rows) + "\n"

    summary = [
        f"spreading_factor = {mc.spreading_factor}",
        f"users_per_slot = {users}",
        f"slots = {mc.slots}",
        f"design_load = {format_float(model.beta)}",
        f"effective_load = {format_float(stats.beta_eff)}",
        f"decoded_fraction = {format_float(stats.decoded_fraction)}",
        f"mean_snir = {format_float(stats.snir_grand_mean)}",
        f"target_snir = {format_float(model.params.target_snir)}",
        f"probe_power = {format_float(stats.probe_power)}",
        f"weaker_than_probe_mean = {format_float(stats.weaker_mean)}",
    ]
    print("\n".join(summary))
    if args.output is not None:
        _deliver(table, args.output)
    else:
        sys.stdout.write(table)
    return EXIT_OK


def _sweep_values(args, cfg, param, channel):
    grid_flags = args.start is not None or args.stop is not None or args.points is not None
    raw = args.values
    if raw is not None and grid_flags:
        raise UsageError("--values excludes --start/--stop/--points")
    if raw is None and not grid_flags:
        raw = cfg.get("values")  # explicit grid flags shadow a config grid
    if raw is not None:
        try:
            values = tuple(float(v) for v in raw.split(","))
        except ValueError as exc:
            raise UsageError(f"bad --values entry: {exc}") from exc
    else:
        default_values = default_grid(param, channel)
        start = _get(args, cfg, "start", float, default_values[0])
        stop = _get(args, cfg, "stop", float, default_values[-1])
        points = _get(args, cfg, "points", int, len(default_values))
        if points < 2:
            raise UsageError("--points must be at least 2")
        values = tuple(float(v) for v in np.linspace(start, stop, points))
    if any(b <= a for a, b in zip(values, values[1:])):
        raise UsageError("the sweep grid must be strictly increasing")
    return values


def cmd_sweep(args, cfg) -> int:
    channel = _build_channel(args, cfg)
    values = _sweep_values(args, cfg, args.param, channel)
    use_mc = args.mc or _cast(cfg.get("mc", "false"), _parse_bool, "mc")
    spec = SweepSpec(
        param=args.param,
        values=values,
        channel=channel,
        mc=_mc_settings(args, cfg) if use_mc else None,
    )
    records = sweep(spec)
    _deliver(records_to_csv(records, mc_columns=use_mc), args.output)
    return EXIT_OK


def cmd_validate(args, cfg) -> int:
    failure = run_checks(emit=print)
    if failure is not None:
        return EXIT_VALIDATION
    print("all checks passed")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else {}
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"ssapower: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InfeasibleConfigError, ValueError) as exc:
        print(f"ssapower: infeasible configuration: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"ssapower: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())

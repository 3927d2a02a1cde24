"""Parameter sweeps and flatness reports, with deterministic CSV output.

The two stock experiments trace the carried load against the
cancellation impairment: beta versus the residual fraction alpha, and
beta versus the constant residual epsilon.  Each grid point records the
solved distribution and, optionally, a Monte Carlo campaign at the
design load.  Infeasible points become error rows instead of aborting
the sweep.

All numeric CSV fields are written with 17 significant digits so a
re-read reproduces the records bit for bit.
"""

import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .powermodel import (
    ChannelParams,
    ConstantResidual,
    FractionalResidual,
    PowerModel,
    solve_model,
)
from .simulator import (
    DEFAULT_SEED,
    AggregateStats,
    Genie,
    SystemConfig,
    design_users,
    effective_load,
    run_campaign,
)

__all__ = [
    "McSettings",
    "SweepSpec",
    "SweepRecord",
    "FlatnessRow",
    "FlatnessReport",
    "default_grid",
    "sweep",
    "write_records",
    "read_records",
    "flatness_report",
    "atomic_write_text",
    "format_float",
]

GRID_POINTS = 50
ALPHA_GRID_STOP = 0.98


def format_float(x: float) -> str:
    """17 significant digits: enough for exact float round-trips."""
    return format(float(x), ".17g")


def atomic_write_text(path, text: str):
    """Write via a temp file in the target directory, then rename.

    A failed run never leaves a partial output file behind.
    """
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


@dataclass(frozen=True)
class McSettings:
    """Monte Carlo knobs shared by sweeps and flatness reports."""

    spreading_factor: int = 256
    packet_len: int = 100
    slots: int = 2000
    seed: int = DEFAULT_SEED
    threads: int | None = None
    bins: int = 20


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: which residual knob moves, over which values.

    param is "alpha" or "epsilon"; mc=None keeps the sweep analytic.
    """

    param: str
    values: tuple
    channel: ChannelParams
    mc: McSettings | None = None

    def __post_init__(self):
        if self.param not in ("alpha", "epsilon"):
            raise ValueError(f'param must be "alpha" or "epsilon", got {self.param!r}')
        if len(self.values) == 0:
            raise ValueError("sweep needs at least one value")


@dataclass
class SweepRecord:
    """One grid point.  error holds the reason when solving failed."""

    param: str
    value: float
    pmin: float | None = None
    beta: float | None = None
    beta_eff: float | None = None
    mc_mean_snir: float | None = None
    mc_snir_rms: float | None = None
    mc_decoded_frac: float | None = None
    error: str | None = None


def default_grid(param: str, channel: ChannelParams, points: int = GRID_POINTS):
    """Stock sweep grids: alpha over [0, 0.98], epsilon over [0, pmax]."""
    if param == "alpha":
        return np.linspace(0.0, ALPHA_GRID_STOP, points)
    if param == "epsilon":
        return np.linspace(0.0, channel.pmax, points)
    raise ValueError(f'param must be "alpha" or "epsilon", got {param!r}')


def _solve_point(spec: SweepSpec, value: float) -> tuple[PowerModel | None, str | None]:
    try:
        sic = FractionalResidual(value) if spec.param == "alpha" else ConstantResidual(value)
        return solve_model(sic, spec.channel), None
    except ValueError as exc:  # includes InfeasibleConfigError
        return None, str(exc)


def sweep(spec: SweepSpec) -> list[SweepRecord]:
    """Solve (and optionally simulate) every grid point.

    beta_eff reflects the integer user count at the sweep's spreading
    factor (the MC one if given, 256 otherwise).  Degenerate points
    (epsilon == pmax) keep their analytic columns; the MC columns stay
    empty with a note, since a point mass cannot be sampled.
    """
    n = spec.mc.spreading_factor if spec.mc is not None else 256
    records = []
    for value in spec.values:
        value = float(value)
        model, err = _solve_point(spec, value)
        if model is None:
            records.append(SweepRecord(param=spec.param, value=value, error=err))
            continue
        users = design_users(model, n)
        rec = SweepRecord(
            param=spec.param,
            value=value,
            pmin=model.pmin,
            beta=model.beta,
            beta_eff=effective_load(users, n),
        )
        if spec.mc is not None:
            if model.degenerate:
                rec.error = "degenerate point mass at pmax; monte carlo skipped"
            else:
                stats = _campaign(model, spec.mc)
                rec.mc_mean_snir = stats.snir_grand_mean
                rec.mc_snir_rms = _snir_rms(stats, spec.channel.target_snir)
                rec.mc_decoded_frac = stats.decoded_fraction
        records.append(rec)
    return records


def _campaign(model: PowerModel, mc: McSettings,
              decode_rule=None) -> AggregateStats:
    config = SystemConfig(
        spreading_factor=mc.spreading_factor,
        packet_len=mc.packet_len,
        users_per_slot=design_users(model, mc.spreading_factor),
        channel=model.params,
        sic=model.sic,
        decode_rule=decode_rule if decode_rule is not None else Genie(),
        slots=mc.slots,
        seed=mc.seed,
    )
    return run_campaign(config, model, threads=mc.threads, bins=mc.bins)


def _snir_rms(stats: AggregateStats, target: float) -> float:
    """RMS relative deviation of per-bin mean SNIR from the target."""
    dev = stats.snir_mean / target - 1.0
    return float(np.sqrt(np.mean(dev * dev)))


# -- CSV ------------------------------------------------------------------

_BASE_COLUMNS = ("param", "value", "pmin", "beta", "beta_eff")
_MC_COLUMNS = ("mc_mean_snir", "mc_snir_rms", "mc_decoded_frac")


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, str):
        # error text rides in the last column of a bare-bones CSV;
        # keep it one unquoted cell
        return x.replace(",", ";").replace("\n", " ")
    return format_float(x)


def records_to_csv(records: list[SweepRecord], mc_columns: bool) -> str:
    """Render records; LF terminators, 17 significant digits."""
    cols = _BASE_COLUMNS + (_MC_COLUMNS if mc_columns else ()) + ("error",)
    lines = [",".join(cols)]
    for rec in records:
        lines.append(",".join(_cell(getattr(rec, c)) for c in cols))
    return "\n".join(lines) + "\n"


def write_records(records: list[SweepRecord], path, mc_columns: bool = False):
    atomic_write_text(path, records_to_csv(records, mc_columns))


def read_records(source) -> list[SweepRecord]:
    """Parse a sweep CSV back into records (inverse of write_records)."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text()
    lines = [ln for ln in text.split("\n") if ln]
    header = lines[0].split(",")
    records = []
    for ln in lines[1:]:
        cells = dict(zip(header, ln.split(","), strict=True))
        rec = SweepRecord(param=cells["param"], value=float(cells["value"]))
        for col in _BASE_COLUMNS[2:] + _MC_COLUMNS:
            raw = cells.get(col, "")
            setattr(rec, col, float(raw) if raw else None)
        rec.error = cells.get("error") or None
        records.append(rec)
    return records


# -- flatness of the simulated SNIR ----------------------------------------

@dataclass
class FlatnessRow:
    """One power bin: simulated means against the analytic targets.

    power is the mean power of the bin's users (the probability centroid
    of the bin); expected interference is evaluated there and scaled by
    beta_eff/beta to absorb the integer user count.
    """

    bin: int
    power: float
    count: int
    snir_mean: float
    snir_rel_dev: float
    interference_mean: float
    interference_expected: float
    interference_rel_dev: float


@dataclass
class FlatnessReport:
    stats: AggregateStats
    rows: list[FlatnessRow] = field(default_factory=list)
    max_snir_dev: float = math.nan
    max_interference_dev: float = math.nan


def flatness_report(model: PowerModel, mc: McSettings,
                    decode_rule=None) -> FlatnessReport:
    """Run a campaign and compare each power bin with the analytic line.

    The design promise is a flat SNIR: every bin's mean simulated SNIR
    should sit at target_snir and the bin's mean interference at the
    (load-scaled) analytic expectation.
    """
    stats = _campaign(model, mc, decode_rule)
    target = model.params.target_snir
    scale = stats.beta_eff / model.beta
    report = FlatnessReport(stats=stats)
    snir_devs, intf_devs = [], []
    for b in range(len(stats.bin_counts)):
        count = int(stats.bin_counts[b])
        if count == 0:
            continue
        power = float(stats.power_mean[b])
        expected = scale * model.expected_interference(power)
        snir_dev = float(stats.snir_mean[b] / target - 1.0)
        intf_dev = float(stats.interference_mean[b] / expected - 1.0)
        report.rows.append(FlatnessRow(
            bin=b,
            power=power,
            count=count,
            snir_mean=float(stats.snir_mean[b]),
            snir_rel_dev=snir_dev,
            interference_mean=float(stats.interference_mean[b]),
            interference_expected=expected,
            interference_rel_dev=intf_dev,
        ))
        snir_devs.append(abs(snir_dev))
        intf_devs.append(abs(intf_dev))
    if snir_devs:
        report.max_snir_dev = max(snir_devs)
        report.max_interference_dev = max(intf_devs)
    return report

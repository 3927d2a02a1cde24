"""Chip-synchronous Monte Carlo for the cancellation receiver.

Each slot draws K users with i.i.d. powers from a solved
:class:`~ssapower.powermodel.PowerModel`, random carrier phases, random
antipodal spreading signatures (n chips, unit energy) and BPSK packets
of L symbols, and synthesizes the received baseband waveform

    y[h, c] = sum_i sqrt(p_i) e^{j phi_i} b_i[h] s_i[c] + w[h, c]

with complex Gaussian noise of per-sample variance ``noise_power``
(sigma^2/2 per real dimension; the despreader output then carries the
full sigma^2 because signatures have unit energy).

The receiver despreads, decodes in descending power order and cancels.
Per-user SNIR and interference are evaluated in closed form over the
realized crosscorrelations and phases,

    I_i = sum_j  p~_j * rho_ij^2 * cos^2(phi_j - phi_i),

where p~_j is the full power of a not-yet-processed user or the model
residual of a cancelled one.  This is the exact conditional second
moment of the despreader-output interference given the slot (BPSK
symbols average out), so campaign statistics converge to the analytic
targets without symbol-estimation noise.  An optional waveform pass
performs the actual subtractions and estimates the same quantities from
the L symbols, for diagnostics.

Campaigns run slots independently, each on an RNG stream spawned from
(seed, slot index), and reduce partial statistics in slot order, so
results are identical for any worker-thread count.
"""

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .powermodel import (
    ChannelParams,
    ConstantResidual,
    FractionalResidual,
    PowerModel,
    SicModel,
)

__all__ = [
    "DEFAULT_SEED",
    "Genie",
    "Threshold",
    "DecodeRule",
    "SystemConfig",
    "SlotRealization",
    "SicTrace",
    "AggregateStats",
    "design_users",
    "effective_load",
    "synthesize_slot",
    "matched_filter",
    "run_sic",
    "run_campaign",
]

# fixed default seed so every tool invocation is reproducible by default
DEFAULT_SEED = 1729


@dataclass(frozen=True)
class Genie:
    """Decode rule that accepts every user; isolates interference stats."""


@dataclass(frozen=True)
class Threshold:
    """Accept users whose conditional SNIR clears ``decode_snir``.

    The receiver works strongest-first; the first user that misses the
    threshold stops it, stranding every weaker user undecoded.
    """

    decode_snir: float

    def __post_init__(self):
        if not self.decode_snir > 0.0:
            raise ValueError(f"decode_snir must be > 0, got {self.decode_snir!r}")


DecodeRule = Genie | Threshold


@dataclass(frozen=True)
class SystemConfig:
    """Full description of one simulated system.

    users_per_slot must sit at the design load of the power model it is
    paired with: K = 1 + round(beta * spreading_factor).  Campaign
    analytics then use the effective load (K-1)/spreading_factor, which
    absorbs the rounding.
    """

    spreading_factor: int
    packet_len: int
    users_per_slot: int
    channel: ChannelParams
    sic: SicModel
    decode_rule: DecodeRule = field(default_factory=Genie)
    slots: int = 1
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if self.spreading_factor < 2:
            raise ValueError(f"spreading_factor must be >= 2, got {self.spreading_factor!r}")
        if self.packet_len < 1:
            raise ValueError(f"packet_len must be >= 1, got {self.packet_len!r}")
        if self.users_per_slot < 1:
            raise ValueError(f"users_per_slot must be >= 1, got {self.users_per_slot!r}")
        if self.slots < 1:
            raise ValueError(f"slots must be >= 1, got {self.slots!r}")


def design_users(model: PowerModel, spreading_factor: int) -> int:
    """Users per slot at the model's load: 1 + round(beta * n)."""
    return 1 + round(model.beta * spreading_factor)


def effective_load(users_per_slot: int, spreading_factor: int) -> float:
    """Realized users-per-chip load (K-1)/n after integer rounding."""
    return (users_per_slot - 1) / spreading_factor


@dataclass(eq=False)
class SlotRealization:
    """Everything random about one slot, before receiver processing.

    signatures hold +-1/sqrt(n) chips (unit energy per row), symbols
    hold +-1 BPSK values, noise is the complex chip-rate noise field.
    """

    powers: np.ndarray      # (K,)
    phases: np.ndarray      # (K,)
    signatures: np.ndarray  # (K, n)
    symbols: np.ndarray     # (K, L)
    noise: np.ndarray       # (L, n) complex

    def waveform(self) -> np.ndarray:
        """Received chip matrix (L, n): superposed users plus noise."""
        amps = np.sqrt(self.powers) * np.exp(1j * self.phases)
        return (self.symbols * amps[:, None]).T @ self.signatures + self.noise


def synthesize_slot(config: SystemConfig, model: PowerModel,
                    rng: np.random.Generator) -> SlotRealization:
    """Draw one slot.

    Draw order is part of the reproducibility contract: powers, phases,
    signatures, symbols, noise.  Signatures and symbols are fresh for
    every user in every slot.
    """
    k, n, pkt = config.users_per_slot, config.spreading_factor, config.packet_len
    powers = model.sample(rng, k)
    phases = rng.uniform(0.0, 2.0 * np.pi, k)
    signatures = (2.0 * rng.integers(0, 2, (k, n)) - 1.0) / math.sqrt(n)
    symbols = 2.0 * rng.integers(0, 2, (k, pkt)) - 1.0
    scale = math.sqrt(config.channel.noise_power / 2.0)
    noise = scale * (rng.standard_normal((pkt, n)) + 1j * rng.standard_normal((pkt, n)))
    return SlotRealization(powers=powers, phases=phases, signatures=signatures,
                           symbols=symbols, noise=noise)


def matched_filter(waveform: np.ndarray, slot: SlotRealization, user: int,
                   symbol: int | None = None):
    """Despread one user: Re{ e^{-j phi_user} <waveform[h], s_user> }.

    Returns the real decision statistic for every symbol, or a single
    float when ``symbol`` is given.  With only user ``u`` present this
    is sqrt(p_u) * b_u[h]; each interferer leaks
    sqrt(p_i) cos(phi_i - phi_u) rho_iu b_i[h]; noise contributes
    variance noise_power/2 per symbol.
    """
    proj = waveform @ slot.signatures[user]
    stat = (np.exp(-1j * slot.phases[user]) * proj).real
    return stat if symbol is None else float(stat[symbol])


@dataclass(eq=False)
class SicTrace:
    """Receiver outcome for one slot, in processing order (strongest first).

    order maps processing position to the original user index; ties in
    power are broken by user index.  measured_interference is the exact
    conditional interference power at each user's despreader given the
    slot's signatures and phases; exact_snir is the matching SNIR with
    the full complex noise variance in the denominator.
    residual_applied is the power left in the slot per user: the model
    residual if the user was decoded and cancelled, its full power if
    not.  stop_index is the processing position of the first decode
    failure (== K when every user decoded).  empirical_snir and
    residual_waveform are filled only by the diagnostic waveform pass.
    """

    order: np.ndarray
    powers: np.ndarray
    decoded: np.ndarray
    exact_snir: np.ndarray
    measured_interference: np.ndarray
    residual_applied: np.ndarray
    mean_sq_crosscorr: float
    stop_index: int
    empirical_snir: np.ndarray | None = None
    residual_waveform: np.ndarray | None = None


def _residual_powers(sic: SicModel, powers: np.ndarray) -> np.ndarray:
    if isinstance(sic, FractionalResidual):
        return sic.alpha * powers
    if isinstance(sic, ConstantResidual):
        return np.full_like(powers, sic.epsilon)
    return np.zeros_like(powers)


def run_sic(slot: SlotRealization, config: SystemConfig,
            collect_empirical: bool = False) -> SicTrace:
    """Run the strongest-first cancellation receiver over one slot.

    The decode decision uses the exact conditional SNIR.  Under Genie
    everyone decodes; under Threshold the first failure freezes the
    slot.  With ``collect_empirical`` the waveform is actually
    despread, measured and cancelled user by user (perfect subtraction,
    sqrt(alpha)-scaled leftover, or a sqrt(epsilon)-amplitude replica,
    depending on the model), filling empirical_snir and
    residual_waveform.
    """
    k = config.users_per_slot
    noise_power = config.channel.noise_power
    order = np.argsort(-slot.powers, kind="stable")
    p = slot.powers[order]
    phi = slot.phases[order]

    rho = slot.signatures[order] @ slot.signatures[order].T
    np.fill_diagonal(rho, 0.0)
    c, s = np.cos(phi), np.sin(phi)
    cosd = np.outer(c, c) + np.outer(s, s)  # cos(phi_i - phi_j)
    coupling = (rho * rho) * (cosd * cosd)
    mean_sq = float((rho * rho).sum() / (k * (k - 1))) if k > 1 else 0.0

    residual = _residual_powers(config.sic, p)
    rule = config.decode_rule
    if isinstance(rule, Genie):
        interference = np.tril(coupling, -1) @ residual + np.triu(coupling, 1) @ p
        decoded = np.ones(k, dtype=bool)
        stop = k
    else:
        weights = p.copy()
        interference = np.empty(k)
        decoded = np.zeros(k, dtype=bool)
        stop = k
        for i in range(k):
            interference[i] = coupling[i] @ weights
            snir_i = p[i] / (noise_power + interference[i])
            if stop < k:
                continue  # receiver already stopped; record SNIR as-is
            if snir_i >= rule.decode_snir:
                decoded[i] = True
                weights[i] = residual[i]
            else:
                stop = i

    snir = p / (noise_power + interference)
    trace = SicTrace(
        order=order,
        powers=p,
        decoded=decoded,
        exact_snir=snir,
        measured_interference=interference,
        residual_applied=np.where(decoded, residual, p),
        mean_sq_crosscorr=mean_sq,
        stop_index=int(stop),
    )
    if collect_empirical:
        _waveform_pass(slot, config, trace)
    return trace


def _waveform_pass(slot: SlotRealization, config: SystemConfig, trace: SicTrace):
    """Despread/measure/cancel on the actual waveform (diagnostics).

    Mirrors the closed-form receiver: same order, same decode outcomes.
    The empirical interference estimate subtracts the known symbols and
    the noise floor from the per-symbol residual variance.
    """
    noise_power = config.channel.noise_power
    pkt = config.packet_len
    y = slot.waveform()
    empirical = np.empty(config.users_per_slot)
    for pos, user in enumerate(np.asarray(trace.order)):
        p_u = trace.powers[pos]
        b = slot.symbols[user]
        stat = matched_filter(y, slot, user)
        excess = stat - math.sqrt(p_u) * b
        i_hat = max(float(excess @ excess) / pkt - noise_power / 2.0, 0.0)
        empirical[pos] = p_u / (noise_power + i_hat)
        if trace.decoded[pos]:
            amp = math.sqrt(p_u) * np.exp(1j * slot.phases[user])
            if isinstance(config.sic, FractionalResidual):
                removed = (1.0 - math.sqrt(config.sic.alpha)) * amp
            elif isinstance(config.sic, ConstantResidual):
                removed = amp - math.sqrt(config.sic.epsilon) * np.exp(1j * slot.phases[user])
            else:
                removed = amp
            y -= removed * np.outer(b, slot.signatures[user])
    trace.empirical_snir = empirical
    trace.residual_waveform = y


@dataclass(eq=False)
class AggregateStats:
    """Campaign statistics over equal-probability power bins.

    Bin b covers [bin_edges[b], bin_edges[b+1]].  Means and variances
    are over every user landing in the bin across all slots.
    weaker_counts[s] counts, in slot s, the users among indices 1..K-1
    whose power falls below probe_power; with the first user excluded
    the count is Binomial(K-1, F(probe_power)) by construction.
    """

    bin_edges: np.ndarray
    bin_counts: np.ndarray
    power_mean: np.ndarray
    snir_mean: np.ndarray
    snir_var: np.ndarray
    interference_mean: np.ndarray
    interference_var: np.ndarray
    snir_grand_mean: float
    decoded_fraction: float
    mean_sq_crosscorr: float
    probe_power: float
    weaker_counts: np.ndarray
    weaker_mean: float
    beta_eff: float
    slots: int
    users_per_slot: int


def run_campaign(config: SystemConfig, model: PowerModel,
                 threads: int | None = None, bins: int = 20,
                 probe_power: float | None = None) -> AggregateStats:
    """Simulate ``config.slots`` independent slots and aggregate.

    The model must be the one the config was built around (same channel
    and cancellation model) and users_per_slot must equal
    design_users(model, spreading_factor).  Slots may be processed by a
    thread pool; per-slot RNG streams are spawned from the seed and the
    reduction runs in slot order, so any ``threads`` value yields
    bit-identical results.
    """
    if model.degenerate:
        raise ValueError("cannot simulate a degenerate (point-mass) power model")
    if model.params != config.channel or model.sic != config.sic:
        raise ValueError("power model was solved for a different channel or "
                         "cancellation model than the config describes")
    expected_k = design_users(model, config.spreading_factor)
    if config.users_per_slot != expected_k:
        raise ValueError(
            f"users_per_slot={config.users_per_slot!r} is off the design load; "
            f"1 + round(beta * spreading_factor) = {expected_k!r}"
        )
    if bins < 2:
        raise ValueError(f"bins must be >= 2, got {bins!r}")
    if probe_power is None:
        probe_power = model.quantile(0.5)

    k = config.users_per_slot
    edges = model.quantile(np.linspace(0.0, 1.0, bins + 1))
    interior = edges[1:-1]
    streams = np.random.SeedSequence(config.seed).spawn(config.slots)

    def one_slot(index: int):
        rng = np.random.default_rng(streams[index])
        slot = synthesize_slot(config, model, rng)
        trace = run_sic(slot, config)
        idx = np.searchsorted(interior, trace.powers)
        counts = np.bincount(idx, minlength=bins)
        psum = np.bincount(idx, weights=trace.powers, minlength=bins)
        ssum = np.bincount(idx, weights=trace.exact_snir, minlength=bins)
        ssq = np.bincount(idx, weights=trace.exact_snir ** 2, minlength=bins)
        isum = np.bincount(idx, weights=trace.measured_interference, minlength=bins)
        isq = np.bincount(idx, weights=trace.measured_interference ** 2, minlength=bins)
        weaker = int(np.count_nonzero(slot.powers[1:] < probe_power))
        return (counts, psum, ssum, ssq, isum, isq,
                int(trace.decoded.sum()), trace.mean_sq_crosscorr, weaker)

    n_workers = (os.cpu_count() or 1) if threads is None else threads
    if n_workers < 1:
        raise ValueError(f"threads must be >= 1, got {threads!r}")
    if n_workers == 1:
        partials = [one_slot(i) for i in range(config.slots)]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            partials = list(pool.map(one_slot, range(config.slots)))

    counts = np.zeros(bins, dtype=np.int64)
    psum = np.zeros(bins)
    ssum = np.zeros(bins)
    ssq = np.zeros(bins)
    isum = np.zeros(bins)
    isq = np.zeros(bins)
    decoded_total = 0
    rho2_total = 0.0
    weaker = np.empty(config.slots, dtype=np.int64)
    for i, part in enumerate(partials):  # fixed order: determinism
        counts += part[0]
        psum += part[1]
        ssum += part[2]
        ssq += part[3]
        isum += part[4]
        isq += part[5]
        decoded_total += part[6]
        rho2_total += part[7]
        weaker[i] = part[8]

    with np.errstate(divide="ignore", invalid="ignore"):
        power_mean = psum / counts
        snir_mean = ssum / counts
        interference_mean = isum / counts
        snir_var = np.where(counts > 1, (ssq - ssum ** 2 / counts) / (counts - 1), np.nan)
        interference_var = np.where(counts > 1, (isq - isum ** 2 / counts) / (counts - 1), np.nan)

    total = int(counts.sum())
    return AggregateStats(
        bin_edges=edges,
        bin_counts=counts,
        power_mean=power_mean,
        snir_mean=snir_mean,
        snir_var=snir_var,
        interference_mean=interference_mean,
        interference_var=interference_var,
        snir_grand_mean=float(ssum.sum() / total),
        decoded_fraction=decoded_total / (k * config.slots),
        mean_sq_crosscorr=rho2_total / config.slots,
        probe_power=float(probe_power),
        weaker_counts=weaker,
        weaker_mean=float(weaker.mean()),
        beta_eff=effective_load(k, config.spreading_factor),
        slots=config.slots,
        users_per_slot=k,
    )

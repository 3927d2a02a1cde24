"""Fast self-contained invariant checks behind ``ssapower validate``.

Everything here must hold for any correct build on any machine; the
checks favor breadth over statistical depth so the whole list runs in
seconds.  Each check returns None on success or a short failure string.
"""

import math

import numpy as np

from .lambertw import lambert_w0, _w0_from_ln
from .powermodel import (
    ChannelParams,
    ConstantResidual,
    FractionalResidual,
    PerfectSic,
    from_db,
    solve_model,
    to_db,
)
from .simulator import (
    Genie,
    SystemConfig,
    design_users,
    run_campaign,
    run_sic,
    synthesize_slot,
)

__all__ = ["run_checks", "CHECKS"]

_CHANNELS = (
    ChannelParams(noise_power=1.0, target_snir=1.0, pmax=4.0),
    ChannelParams(noise_power=0.5, target_snir=2.0, pmax=20.0),
    ChannelParams(noise_power=2.0, target_snir=1.5, pmax=50.0),
)


def _models_for(params):
    yield solve_model(PerfectSic(), params)
    yield solve_model(FractionalResidual(0.4), params)
    yield solve_model(ConstantResidual(0.3 * params.pmax), params)


def check_lambert_identity():
    for x in (0.0, 1e-9, 0.5, 1.0, math.e, 3.0, 25.0, 1e4, 1e12, 1e300):
        w = lambert_w0(x)
        if abs(w * math.exp(w) - x) > 1e-12 * max(1.0, x):
            return f"identity broken at x={x!r}"
    if abs(_w0_from_ln(50.0) - lambert_w0(math.exp(50.0))) > 1e-9:
        return "log-form and direct evaluations disagree"
    return None


def check_flat_snir():
    for params in _CHANNELS:
        for model in _models_for(params):
            grid = np.linspace(model.pmin, model.pmax, 1000)
            dev = np.max(np.abs(model.snir(grid) / params.target_snir - 1.0))
            if dev > 1e-9:
                return f"SNIR deviates by {dev:.3e} for {model.sic!r} on {params!r}"
    return None


def check_normalization_and_roundtrip():
    u = np.linspace(0.0, 1.0, 257)
    for params in _CHANNELS:
        for model in _models_for(params):
            if abs(model.cdf(model.pmax) - 1.0) > 1e-12:
                return f"cdf(pmax) != 1 for {model.sic!r}"
            err = np.max(np.abs(model.cdf(model.quantile(u)) - u))
            if err > 1e-12:
                return f"quantile/cdf roundtrip off by {err:.3e} for {model.sic!r}"
    return None


def check_db_identity():
    for params in _CHANNELS:
        for model in _models_for(params):
            theta = np.linspace(to_db(model.pmin), to_db(model.pmax), 101)
            p = from_db(theta)
            direct = model.pdf_db(theta)
            chained = model.pdf(p) * p * math.log(10.0) / 10.0
            if np.max(np.abs(direct - chained)) > 1e-12 * np.max(chained):
                return f"dB change of variables broken for {model.sic!r}"
            lin = np.linspace(model.pmin, model.pmax, 65)
            if np.max(np.abs(from_db(to_db(lin)) / lin - 1.0)) > 1e-12:
                return "dB conversion does not round-trip"
    return None


def check_reductions():
    grid_u = np.linspace(0.0, 1.0, 101)
    for params in _CHANNELS:
        perfect = solve_model(PerfectSic(), params)
        for sic in (FractionalResidual(0.0), ConstantResidual(0.0)):
            other = solve_model(sic, params)
            if other.pmin != perfect.pmin or other.beta != perfect.beta:
                return f"{sic!r} does not reduce to perfect cancellation"
            grid = perfect.quantile(grid_u)
            for op in ("pdf", "cdf", "expected_interference"):
                a = getattr(perfect, op)(grid)
                b = getattr(other, op)(grid)
                if np.max(np.abs(a - b)) > 1e-12 * max(1.0, np.max(np.abs(a))):
                    return f"{sic!r} {op} drifts from the perfect model"
    return None


def check_monotone_load():
    params = _CHANNELS[0]
    alphas = np.linspace(0.0, 0.99, 40)
    betas = [solve_model(FractionalResidual(float(a)), params).beta for a in alphas]
    if not all(b1 > b2 for b1, b2 in zip(betas, betas[1:])):
        return "beta is not strictly decreasing in alpha"
    epsilons = np.linspace(0.0, params.pmax - 1e-6, 40)
    betas = [solve_model(ConstantResidual(float(e)), params).beta for e in epsilons]
    if not all(b1 > b2 for b1, b2 in zip(betas, betas[1:])):
        return "beta is not strictly decreasing in epsilon"
    return None


def check_const_residual_equations():
    for params in _CHANNELS:
        for frac in (1e-6, 0.1, 0.5, 0.9, 0.999):
            eps = frac * params.pmax
            model = solve_model(ConstantResidual(eps), params)
            g, n0 = params.target_snir, params.noise_power
            lhs = model.pmin
            rhs = g * (n0 + eps * model.beta / 2.0)
            if abs(lhs - rhs) > 1e-9 * max(1.0, abs(lhs)):
                return f"power floor equation violated at eps={eps!r}"
            log_rhs = (2.0 / g) * math.log((params.pmax - eps) / (model.pmin - eps))
            if abs(model.beta - log_rhs) > 1e-9 * max(1.0, model.beta):
                return f"load equation violated at eps={eps!r}"
    return None


def check_degenerate():
    params = _CHANNELS[0]
    model = solve_model(ConstantResidual(params.pmax), params)
    if not model.degenerate or model.pmin != params.pmax:
        return "epsilon == pmax should give the degenerate point mass"
    try:
        model.pdf(params.pmax)
    except ValueError:
        return None
    return "degenerate model evaluated its pdf"


def check_trace_reductions():
    params = _CHANNELS[0]
    perfect = solve_model(PerfectSic(), params)
    base = SystemConfig(spreading_factor=64, packet_len=8,
                        users_per_slot=design_users(perfect, 64),
                        channel=params, sic=PerfectSic(), slots=1, seed=7)
    rng = np.random.default_rng(7)
    slot = synthesize_slot(base, perfect, rng)
    ref = run_sic(slot, base)
    for sic in (FractionalResidual(0.0), ConstantResidual(0.0)):
        model = solve_model(sic, params)
        config = SystemConfig(spreading_factor=64, packet_len=8,
                              users_per_slot=design_users(model, 64),
                              channel=params, sic=sic, slots=1, seed=7)
        other = run_sic(synthesize_slot(config, model, np.random.default_rng(7)), config)
        if not (np.array_equal(ref.exact_snir, other.exact_snir)
                and np.array_equal(ref.powers, other.powers)):
            return f"{sic!r} trace differs from perfect cancellation"
    return None


def check_cancellation_exactness():
    params = _CHANNELS[0]
    model = solve_model(PerfectSic(), params)
    config = SystemConfig(spreading_factor=32, packet_len=8, users_per_slot=12,
                          channel=params, sic=PerfectSic(), slots=1, seed=3)
    # users_per_slot here is off the design load on purpose; run_sic does
    # not mind, only run_campaign enforces the coupling
    slot = synthesize_slot(config, model, np.random.default_rng(3))
    trace = run_sic(slot, config, collect_empirical=True)
    resid = float(np.sum(np.abs(trace.residual_waveform) ** 2))
    noise = float(np.sum(np.abs(slot.noise) ** 2))
    if abs(resid - noise) > 1e-9 * noise:
        return f"residual energy {resid!r} != noise energy {noise!r}"
    return None


def check_small_campaign(threads=None):
    params = _CHANNELS[0]
    model = solve_model(PerfectSic(), params)
    config = SystemConfig(spreading_factor=64, packet_len=10,
                          users_per_slot=design_users(model, 64),
                          channel=params, sic=PerfectSic(), slots=30, seed=11)
    stats = run_campaign(config, model, threads=threads)
    if stats.decoded_fraction != 1.0:
        return "genie rule must decode everyone"
    if abs(stats.snir_grand_mean / params.target_snir - 1.0) > 0.1:
        return f"mean SNIR {stats.snir_grand_mean!r} far from target"
    expected_weaker = (config.users_per_slot - 1) * 0.5
    if abs(stats.weaker_mean / expected_weaker - 1.0) > 0.1:
        return f"weaker-user count {stats.weaker_mean!r} far from {expected_weaker!r}"
    if abs(stats.mean_sq_crosscorr * 64 - 1.0) > 0.1:
        return "crosscorrelation second moment far from 1/n"
    again = run_campaign(config, model, threads=threads)
    if not np.array_equal(stats.snir_mean, again.snir_mean):
        return "campaign is not reproducible at a fixed seed"
    forced = run_campaign(config, model, threads=2)
    if not np.array_equal(stats.snir_mean, forced.snir_mean):
        return "campaign result depends on the thread count"
    return None


def check_decodability():
    params = _CHANNELS[0]
    model = solve_model(PerfectSic(), params)
    config = SystemConfig(spreading_factor=256, packet_len=4,
                          users_per_slot=design_users(model, 256),
                          channel=params, sic=PerfectSic(), slots=10, seed=5)
    snirs = []
    streams = np.random.SeedSequence(config.seed).spawn(config.slots)
    for i in range(config.slots):
        slot = synthesize_slot(config, model, np.random.default_rng(streams[i]))
        snirs.append(run_sic(slot, config).exact_snir)
    snirs = np.concatenate(snirs)
    frac = float(np.mean(snirs >= 0.9 * params.target_snir))
    if frac < 0.95:
        return f"only {frac:.3f} of users clear 0.9x the target SNIR"
    return None


CHECKS = [
    ("lambert-identity", check_lambert_identity),
    ("flat-snir", check_flat_snir),
    ("normalization-roundtrip", check_normalization_and_roundtrip),
    ("db-identity", check_db_identity),
    ("model-reductions", check_reductions),
    ("monotone-load", check_monotone_load),
    ("const-residual-equations", check_const_residual_equations),
    ("degenerate-point-mass", check_degenerate),
    ("trace-reductions", check_trace_reductions),
    ("cancellation-exactness", check_cancellation_exactness),
    ("small-campaign", check_small_campaign),
    ("decodability", check_decodability),
]


def run_checks(emit=print) -> str | None:
    """Run every check; return the first failure as "name: detail"."""
    for name, fn in CHECKS:
        failure = fn()
        if failure is not None:
            emit(f"FAIL {name}: {failure}")
            return f"{name}: {failure}"
        emit(f"ok {name}")
    return None

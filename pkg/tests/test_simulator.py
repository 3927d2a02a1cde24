import dataclasses
import math

import numpy as np
import pytest

from ssapower.powermodel import (
    ChannelParams,
    ConstantResidual,
    FractionalResidual,
    PerfectSic,
    solve_model,
)
from ssapower.simulator import (
    DEFAULT_SEED,
    Genie,
    SlotRealization,
    SystemConfig,
    Threshold,
    design_users,
    effective_load,
    matched_filter,
    run_campaign,
    run_sic,
    synthesize_slot,
)

BASE = ChannelParams(noise_power=1.0, target_snir=1.0, pmax=4.0)
PERFECT = solve_model(PerfectSic(), BASE)


def small_config(**overrides):
    kwargs = dict(spreading_factor=64, packet_len=10,
                  users_per_slot=design_users(PERFECT, 64),
                  channel=BASE, sic=PerfectSic(), slots=1, seed=DEFAULT_SEED)
    kwargs.update(overrides)
    return SystemConfig(**kwargs)


def zero_noise(slot):
    return dataclasses.replace(slot, noise=np.zeros_like(slot.noise))


# -- configuration -------------------------------------------------------

def test_design_users_frozen():
    assert design_users(PERFECT, 256) == 711
    assert design_users(PERFECT, 64) == 178
    assert design_users(solve_model(FractionalResidual(0.3), BASE), 256) == 546
    assert design_users(solve_model(ConstantResidual(0.5), BASE), 256) == 600


def test_effective_load():
    assert effective_load(711, 256) == pytest.approx(2.7734375, rel=0)
    assert effective_load(1, 64) == 0.0


def test_config_validation():
    with pytest.raises(ValueError):
        small_config(spreading_factor=1)
    with pytest.raises(ValueError):
        small_config(packet_len=0)
    with pytest.raises(ValueError):
        small_config(users_per_slot=0)
    with pytest.raises(ValueError):
        small_config(slots=0)
    with pytest.raises(ValueError):
        Threshold(decode_snir=0.0)


# -- slot synthesis -------------------------------------------------------

def test_slot_shapes_and_alphabets():
    config = small_config(packet_len=7)
    slot = synthesize_slot(config, PERFECT, np.random.default_rng(0))
    k, n, pkt = config.users_per_slot, 64, 7
    assert slot.powers.shape == (k,)
    assert slot.phases.shape == (k,)
    assert slot.signatures.shape == (k, n)
    assert slot.symbols.shape == (k, pkt)
    assert slot.noise.shape == (pkt, n)
    assert np.iscomplexobj(slot.noise)
    assert np.all((slot.powers >= PERFECT.pmin) & (slot.powers <= PERFECT.pmax))
    assert np.all((slot.phases >= 0.0) & (slot.phases < 2.0 * np.pi))
    assert set(np.unique(slot.signatures * math.sqrt(n))) == {-1.0, 1.0}
    assert set(np.unique(slot.symbols)) == {-1.0, 1.0}
    # unit-energy rows
    assert np.allclose(np.sum(slot.signatures ** 2, axis=1), 1.0, rtol=1e-12)


def test_slot_draws_are_reproducible():
    config = small_config()
    a = synthesize_slot(config, PERFECT, np.random.default_rng(3))
    b = synthesize_slot(config, PERFECT, np.random.default_rng(3))
    for name in ("powers", "phases", "signatures", "symbols", "noise"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_noise_variance_per_dimension():
    config = small_config(spreading_factor=8, users_per_slot=1, packet_len=2000)
    slot = synthesize_slot(config, PERFECT, np.random.default_rng(1))
    # per complex chip: total variance noise_power, split evenly
    assert np.var(slot.noise.real) == pytest.approx(0.5, rel=0.05)
    assert np.var(slot.noise.imag) == pytest.approx(0.5, rel=0.05)


# -- matched filter -------------------------------------------------------

def test_single_user_despreads_exactly():
    config = small_config(users_per_slot=1, packet_len=16)
    slot = zero_noise(synthesize_slot(config, PERFECT, np.random.default_rng(2)))
    stat = matched_filter(slot.waveform(), slot, 0)
    expected = math.sqrt(slot.powers[0]) * slot.symbols[0]
    assert np.allclose(stat, expected, rtol=1e-12, atol=1e-14)
    assert matched_filter(slot.waveform(), slot, 0, symbol=3) == pytest.approx(
        expected[3], rel=1e-12)


def test_waveform_superposes():
    config = small_config(users_per_slot=5, packet_len=6)
    slot = synthesize_slot(config, PERFECT, np.random.default_rng(4))
    total = zero_noise(slot).waveform()
    parts = np.zeros_like(total)
    for u in range(5):
        single = SlotRealization(
            powers=slot.powers[u:u + 1], phases=slot.phases[u:u + 1],
            signatures=slot.signatures[u:u + 1], symbols=slot.symbols[u:u + 1],
            noise=np.zeros_like(slot.noise))
        parts += single.waveform()
    assert np.allclose(total, parts, rtol=1e-12, atol=1e-14)


def test_two_user_leakage_formula():
    n = 16
    powers = np.array([2.5, 1.3])
    phases = np.array([0.4, 1.9])
    rng = np.random.default_rng(5)
    signatures = (2.0 * rng.integers(0, 2, (2, n)) - 1.0) / math.sqrt(n)
    symbols = 2.0 * rng.integers(0, 2, (2, 9)) - 1.0
    slot = SlotRealization(powers=powers, phases=phases, signatures=signatures,
                           symbols=symbols, noise=np.zeros((9, n), complex))
    stat = matched_filter(slot.waveform(), slot, 0)
    rho = float(signatures[0] @ signatures[1])
    leak = math.sqrt(powers[1]) * math.cos(phases[1] - phases[0]) * rho
    expected = math.sqrt(powers[0]) * symbols[0] + leak * symbols[1]
    assert np.allclose(stat, expected, rtol=1e-12, atol=1e-14)


def test_matched_filter_noise_variance():
    config = SystemConfig(spreading_factor=8, packet_len=100_000,
                          users_per_slot=1, channel=BASE, sic=PerfectSic())
    slot = synthesize_slot(config, PERFECT, np.random.default_rng(6))
    stat = matched_filter(slot.waveform(), slot, 0)
    noise_part = stat - math.sqrt(slot.powers[0]) * slot.symbols[0]
    assert np.var(noise_part) == pytest.approx(0.5, rel=0.02)


# -- crosscorrelation and phase moments -----------------------------------

def test_crosscorr_moments():
    n = 256
    rng = np.random.default_rng(8)
    sig = (2.0 * rng.integers(0, 2, (2000, n)) - 1.0) / math.sqrt(n)
    rho = np.einsum("ij,ij->i", sig[:1000], sig[1000:])
    assert np.mean(rho ** 2) == pytest.approx(1.0 / n, rel=0.1)
    phases = rng.uniform(0.0, 2.0 * np.pi, 1000)
    proj = rho * np.cos(phases)
    assert np.mean(proj ** 2) == pytest.approx(0.5 / n, rel=0.15)


# -- closed-form receiver --------------------------------------------------

def test_single_user_snir_is_exact():
    config = small_config(users_per_slot=1)
    slot = synthesize_slot(config, PERFECT, np.random.default_rng(9))
    trace = run_sic(slot, config)
    assert trace.exact_snir[0] == slot.powers[0] / BASE.noise_power
    assert trace.measured_interference[0] == 0.0
    assert trace.decoded.all()
    assert trace.mean_sq_crosscorr == 0.0


def test_two_user_constant_residual_interference():
    params = ChannelParams(noise_power=0.5, target_snir=1.0, pmax=4.0)
    sic = ConstantResidual(0.25)
    config = SystemConfig(spreading_factor=16, packet_len=4, users_per_slot=2,
                          channel=params, sic=sic)
    model = solve_model(sic, params)
    slot = synthesize_slot(config, model, np.random.default_rng(10))
    trace = run_sic(slot, config)
    hi, lo = trace.order
    kappa = (float(slot.signatures[hi] @ slot.signatures[lo]) ** 2
             * math.cos(slot.phases[hi] - slot.phases[lo]) ** 2)
    # stronger user faces the weaker one at full power, weaker user
    # faces the epsilon leftover
    assert trace.measured_interference[0] == pytest.approx(
        kappa * slot.powers[lo], rel=1e-12)
    assert trace.measured_interference[1] == pytest.approx(kappa * 0.25, rel=1e-12)


def test_processing_order_strongest_first_stable_ties():
    slot = SlotRealization(
        powers=np.array([2.0, 3.0, 2.0, 1.0]),
        phases=np.zeros(4),
        signatures=np.eye(4),
        symbols=np.ones((4, 1)),
        noise=np.zeros((1, 4), complex))
    config = SystemConfig(spreading_factor=4, packet_len=1, users_per_slot=4,
                          channel=BASE, sic=PerfectSic())
    trace = run_sic(slot, config)
    assert list(trace.order) == [1, 0, 2, 3]
    assert list(trace.powers) == [3.0, 2.0, 2.0, 1.0]


def test_user_relabeling_does_not_change_outcomes():
    config = small_config(users_per_slot=12, spreading_factor=32)
    slot = synthesize_slot(config, PERFECT, np.random.default_rng(11))
    trace = run_sic(slot, config)
    perm = np.random.default_rng(12).permutation(12)
    shuffled = SlotRealization(powers=slot.powers[perm], phases=slot.phases[perm],
                               signatures=slot.signatures[perm],
                               symbols=slot.symbols[perm], noise=slot.noise)
    trace2 = run_sic(shuffled, config)
    # map both back to original user labels before comparing
    snir_by_user = np.empty(12)
    snir_by_user[trace.order] = trace.exact_snir
    snir2_by_user = np.empty(12)
    snir2_by_user[perm[trace2.order]] = trace2.exact_snir
    assert np.allclose(snir_by_user, snir2_by_user, rtol=1e-12)


def test_threshold_freeze_semantics():
    # three users, orthogonal strongest user, identical signatures for
    # the two weak ones so their mutual coupling is exactly 1
    root = np.array([1.0, 1.0, 1.0, 1.0]) / 2.0
    alt = np.array([1.0, -1.0, 1.0, -1.0]) / 2.0
    slot = SlotRealization(
        powers=np.array([4.0, 2.0, 1.5]),
        phases=np.zeros(3),
        signatures=np.stack([root, alt, alt]),
        symbols=np.ones((3, 2)),
        noise=np.zeros((2, 4), complex))
    channel = ChannelParams(noise_power=0.25, target_snir=1.0, pmax=4.0)
    config = SystemConfig(spreading_factor=4, packet_len=2, users_per_slot=3,
                          channel=channel, sic=PerfectSic(),
                          decode_rule=Threshold(decode_snir=2.0))
    trace = run_sic(slot, config)
    assert list(trace.order) == [0, 1, 2]
    assert list(trace.decoded) == [True, False, False]
    assert trace.stop_index == 1
    assert trace.exact_snir[0] == pytest.approx(16.0, rel=1e-13)
    # failing user sees the weaker one at full power
    assert trace.exact_snir[1] == pytest.approx(2.0 / 1.75, rel=1e-13)
    # frozen receiver: the failed user stays at full power in the last
    # user's interference, even though its own SNIR was recorded
    assert trace.exact_snir[2] == pytest.approx(1.5 / 2.25, rel=1e-13)
    assert np.array_equal(trace.residual_applied, [0.0, 2.0, 1.5])

    genie = run_sic(slot, dataclasses.replace(config, decode_rule=Genie()))
    assert genie.exact_snir[2] == pytest.approx(6.0, rel=1e-13)


def test_threshold_with_tiny_bar_matches_genie():
    config = small_config(users_per_slot=25, spreading_factor=32)
    slot = synthesize_slot(config, PERFECT, np.random.default_rng(13))
    genie = run_sic(slot, config)
    thr = run_sic(slot, dataclasses.replace(
        config, decode_rule=Threshold(decode_snir=1e-9)))
    assert thr.decoded.all()
    assert thr.stop_index == 25
    assert np.allclose(thr.exact_snir, genie.exact_snir, rtol=1e-12)
    assert np.array_equal(thr.order, genie.order)


@pytest.mark.parametrize("sic", [FractionalResidual(0.0), ConstantResidual(0.0)])
def test_zero_residual_traces_match_perfect(sic):
    config = small_config(users_per_slot=30, spreading_factor=32)
    slot = synthesize_slot(config, PERFECT, np.random.default_rng(14))
    ref = run_sic(slot, config)
    other = run_sic(slot, dataclasses.replace(config, sic=sic))
    assert np.array_equal(ref.exact_snir, other.exact_snir)
    assert np.array_equal(ref.measured_interference, other.measured_interference)
    assert np.array_equal(ref.residual_applied, other.residual_applied)


# -- waveform pass ----------------------------------------------------------

def test_perfect_cancellation_leaves_noise():
    config = small_config(users_per_slot=40, spreading_factor=32, packet_len=12)
    slot = synthesize_slot(config, PERFECT, np.random.default_rng(15))
    trace = run_sic(slot, config, collect_empirical=True)
    assert trace.decoded.all()
    scale = float(np.max(np.abs(slot.waveform())))
    assert np.allclose(trace.residual_waveform, slot.noise,
                       atol=1e-10 * scale, rtol=0.0)


def test_perfect_cancellation_no_noise_leaves_nothing():
    config = small_config(users_per_slot=40, spreading_factor=32, packet_len=12)
    slot = zero_noise(synthesize_slot(config, PERFECT, np.random.default_rng(16)))
    trace = run_sic(slot, config, collect_empirical=True)
    assert float(np.max(np.abs(trace.residual_waveform))) <= 1e-10


def test_fractional_cancellation_scales_amplitudes():
    params = BASE
    sic = FractionalResidual(0.36)
    model = solve_model(sic, params)
    config = SystemConfig(spreading_factor=32, packet_len=6,
                          users_per_slot=20, channel=params, sic=sic)
    slot = synthesize_slot(config, model, np.random.default_rng(17))
    trace = run_sic(slot, config, collect_empirical=True)
    leftover = dataclasses.replace(slot, powers=0.36 * slot.powers).waveform() \
        - slot.noise
    assert np.allclose(trace.residual_waveform - slot.noise, leftover,
                       rtol=0.0, atol=1e-10)


def test_constant_cancellation_leaves_epsilon_replicas():
    params = BASE
    sic = ConstantResidual(0.5)
    model = solve_model(sic, params)
    config = SystemConfig(spreading_factor=32, packet_len=6,
                          users_per_slot=20, channel=params, sic=sic)
    slot = synthesize_slot(config, model, np.random.default_rng(18))
    trace = run_sic(slot, config, collect_empirical=True)
    leftover = dataclasses.replace(
        slot, powers=np.full_like(slot.powers, 0.5)).waveform() - slot.noise
    assert np.allclose(trace.residual_waveform - slot.noise, leftover,
                       rtol=0.0, atol=1e-10)


def test_empirical_snir_tracks_exact():
    # nearly noiseless channel so the per-symbol variance estimate is
    # dominated by actual interference
    params = ChannelParams(noise_power=1e-9, target_snir=1.0, pmax=4.0)
    config = SystemConfig(spreading_factor=32, packet_len=4096,
                          users_per_slot=6, channel=params, sic=PerfectSic(),
                          decode_rule=Genie())
    rng = np.random.default_rng(19)
    slot = SlotRealization(
        powers=rng.uniform(1.0, 4.0, 6),
        phases=rng.uniform(0.0, 2.0 * np.pi, 6),
        signatures=(2.0 * rng.integers(0, 2, (6, 32)) - 1.0) / math.sqrt(32),
        symbols=2.0 * rng.integers(0, 2, (6, 4096)) - 1.0,
        noise=np.zeros((4096, 32), complex))
    trace = run_sic(slot, config, collect_empirical=True)
    # last processed user has had everyone above it cancelled perfectly:
    # its measured interference is zero and empirical SNIR explodes, so
    # compare only users that still see interference
    for pos in range(5):
        assert trace.empirical_snir[pos] == pytest.approx(
            trace.exact_snir[pos], rel=0.25)


# -- campaign ---------------------------------------------------------------

def campaign_config(**overrides):
    kwargs = dict(spreading_factor=64, packet_len=20,
                  users_per_slot=design_users(PERFECT, 64),
                  channel=BASE, sic=PerfectSic(), slots=40, seed=DEFAULT_SEED)
    kwargs.update(overrides)
    return SystemConfig(**kwargs)


def test_campaign_validation():
    config = campaign_config(users_per_slot=100)
    with pytest.raises(ValueError, match="design load"):
        run_campaign(config, PERFECT)
    other = solve_model(FractionalResidual(0.3), BASE)
    with pytest.raises(ValueError, match="different channel"):
        run_campaign(campaign_config(), other)
    degenerate = solve_model(ConstantResidual(4.0), BASE)
    with pytest.raises(ValueError, match="degenerate"):
        run_campaign(campaign_config(sic=ConstantResidual(4.0),
                                     users_per_slot=97), degenerate)
    with pytest.raises(ValueError, match="bins"):
        run_campaign(campaign_config(), PERFECT, bins=1)
    with pytest.raises(ValueError, match="threads"):
        run_campaign(campaign_config(), PERFECT, threads=0)


def test_campaign_statistics_sane():
    config = campaign_config()
    stats = run_campaign(config, PERFECT, bins=10)
    k = config.users_per_slot
    assert stats.bin_counts.sum() == k * config.slots
    assert stats.slots == 40 and stats.users_per_slot == k
    assert stats.decoded_fraction == 1.0
    assert stats.beta_eff == pytest.approx((k - 1) / 64, rel=0)
    assert stats.probe_power == pytest.approx(PERFECT.quantile(0.5), rel=1e-15)
    assert stats.snir_grand_mean == pytest.approx(1.0, rel=0.05)
    assert np.all(np.diff(stats.bin_edges) > 0)
    assert stats.bin_edges[0] == pytest.approx(PERFECT.pmin, rel=1e-12)
    assert stats.bin_edges[-1] == pytest.approx(PERFECT.pmax, rel=1e-12)
    # power means sit inside their bins
    assert np.all(stats.power_mean >= stats.bin_edges[:-1])
    assert np.all(stats.power_mean <= stats.bin_edges[1:])
    assert stats.mean_sq_crosscorr == pytest.approx(1.0 / 64, rel=0.05)
    assert stats.weaker_counts.shape == (40,)
    assert stats.weaker_mean == pytest.approx((k - 1) / 2.0, rel=0.1)


def test_campaign_thread_count_does_not_change_results():
    config = campaign_config()
    ref = run_campaign(config, PERFECT, threads=1)
    for threads in (2, 8):
        alt = run_campaign(config, PERFECT, threads=threads)
        for name in ("bin_edges", "bin_counts", "power_mean", "snir_mean",
                     "snir_var", "interference_mean", "interference_var",
                     "weaker_counts"):
            assert np.array_equal(getattr(ref, name), getattr(alt, name)), name
        for name in ("snir_grand_mean", "decoded_fraction",
                     "mean_sq_crosscorr", "probe_power", "weaker_mean"):
            assert getattr(ref, name) == getattr(alt, name), name


def test_campaign_custom_probe_and_bins():
    config = campaign_config(slots=10)
    stats = run_campaign(config, PERFECT, bins=5, probe_power=1.5)
    assert len(stats.bin_counts) == 5
    assert stats.probe_power == 1.5
    expected = (config.users_per_slot - 1) * PERFECT.cdf(1.5)
    assert stats.weaker_mean == pytest.approx(expected, rel=0.1)


def test_campaign_decodability_at_scale():
    config = campaign_config(spreading_factor=256, packet_len=10,
                             users_per_slot=design_users(PERFECT, 256),
                             slots=30)
    streams = np.random.SeedSequence(config.seed).spawn(config.slots)
    snirs = np.concatenate([
        run_sic(synthesize_slot(config, PERFECT,
                                np.random.default_rng(streams[i])), config).exact_snir
        for i in range(config.slots)])
    assert float(np.mean(snirs >= 0.9 * BASE.target_snir)) >= 0.95

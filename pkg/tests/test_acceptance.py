"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is echoed in the pytest terminal
summary. Tolerances are the pinned values; desk-scale models are trained
once per session (about 15-25 minutes on a single core).
"""

import time

import numpy as np
import pytest
import torch

from conftest import record_acceptance
from csilab.analog import AnalogDeepCMC, analog_layers
from csilab.channel_gen import (
    ArrayConfig,
    MultipathParams,
    OfdmConfig,
    ScenarioConfig,
    channel_response,
    generate_channels,
)
from csilab.codec.deepcmc import DeepCMC
from csilab.codec.entropy import EntropyModel, LatentTensor, arith_decode, arith_encode, entropy_rate
from csilab.codec.losses import ste_round
from csilab.feedback import FeedbackRealization, mrc_combine_all, simo_transmit
from csilab.metrics import nmse, nmse_ratio, to_db
from csilab.sweep import DigitalFeedbackSimulator, analog_rows, dct_rate_curve, interpolate_curve, summarize
from csilab.feedback import uplink_scenario

K_UPLINK = 256
DESK_LAYERS = ((32, (5, 5), (2, 2)), (32, (5, 5), (2, 2)), (16, (3, 3), (1, 1)))
BANK_LAMBDAS = (0.05, 0.2, 0.8)
ANALOG_HIDDEN = ((64, (5, 5), (2, 2)), (64, (5, 5), (4, 4)))
ANALOG_SNRS = (0.0, 5.0, 10.0)
FEEDBACK_SNR_DB = 10.0
RHO_GRID = (0.02, 0.03125, 0.04, 0.05, 0.0625, 0.09375, 0.125, 0.1875, 0.25, 0.3)
TRIALS = 1000


# -- shared desk-scale artefacts ---------------------------------------------
@pytest.fixture(scope="session")
def desk_scenario():
    return ScenarioConfig(rng_seed=1, name="desk-k32")


@pytest.fixture(scope="session")
def desk_data(desk_scenario):
    X = generate_channels(desk_scenario, 5000)
    return X[:4000], X[4000:]


@pytest.fixture(scope="session")
def bank(desk_data):
    Xtr, _ = desk_data
    return [DeepCMC(encoder_layers=DESK_LAYERS, rd_lambda=lam, n_epochs=40, random_state=0).fit(Xtr)
            for lam in BANK_LAMBDAS]


@pytest.fixture(scope="session")
def digital_sweep(bank, desk_data, desk_scenario):
    """Per model and rho: pooled NMSE, delivered NMSE and outage rate over TRIALS uplink draws."""
    _, Xte = desk_data
    up = uplink_scenario(desk_scenario, K_UPLINK)
    table = []
    for model in bank:
        sim = DigitalFeedbackSimulator(model, Xte, desk_scenario.scenario_id, up, K_UPLINK, seed=7)
        rows = [r for rho in RHO_GRID for r in sim.run(rho, FEEDBACK_SNR_DB, TRIALS)]
        table.append({"rd_lambda": model.rd_lambda, "trained_db": to_db(sim.delivered_ratio.mean()),
                      "summary": summarize(rows, "rho")})
    return table


def _best_of_bank(table):
    return [min(t["summary"][i]["nmse_db"] for t in table) for i in range(len(RHO_GRID))]


@pytest.fixture(scope="session")
def rho_star(digital_sweep):
    best = _best_of_bank(digital_sweep)
    saturated = [rho for rho, db in zip(RHO_GRID, best) if db >= -0.5]
    return max(saturated) if saturated else None


@pytest.fixture(scope="session")
def analog_models(desk_data, desk_scenario, rho_star):
    if rho_star is None:
        pytest.fail("digital path never averages >= -0.5 dB on the rho grid")
    n_f = int(round(rho_star * K_UPLINK))
    Xtr, _ = desk_data
    layers = analog_layers(ANALOG_HIDDEN, n_f, Xtr.shape[1:3])
    return {snr: AnalogDeepCMC(encoder_layers=layers, n_feedback_subcarriers=n_f, k_uplink=K_UPLINK,
                               snr_db=snr, uplink=uplink_scenario(desk_scenario, K_UPLINK),
                               n_epochs=30, random_state=0).fit(Xtr)
            for snr in ANALOG_SNRS}


# -- 1. lossless coder --------------------------------------------------------
def test_c01_coder_lossless():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    failures = 0
    n_tensors = 10_000
    for i in range(n_tensors):
        if i % 50 == 0:
            C = int(rng.integers(1, 5))
            lo = -int(rng.integers(0, 40))
            hi = int(rng.integers(0, 40))
            pmfs = rng.dirichlet(np.full(hi - lo + 1, rng.uniform(0.05, 2.0)), size=C) + 1e-6
            em = EntropyModel(pmfs / pmfs.sum(axis=1, keepdims=True), (lo, hi))
        shape = (C, int(rng.integers(0, 9)), int(rng.integers(1, 9)))
        idx = rng.integers(lo, hi + 1, size=shape)
        # bias half the tensors toward the model so both typical and atypical streams occur
        if i % 2:
            for c in range(C):
                idx[c] = rng.choice(np.arange(lo, hi + 1), size=shape[1:], p=em.pmfs[c])
        z = LatentTensor(idx.astype(float), quantized=True)
        out = arith_decode(arith_encode(z, em), em, shape)
        failures += not np.array_equal(out.values, z.values)
    elapsed = time.perf_counter() - start
    ok = failures == 0 and elapsed < 120
    record_acceptance(1, ok, f"{n_tensors} tensors, {failures} mismatches, {elapsed:.1f} s (limit 120 s)")
    assert ok


# -- 2. coder near-optimality ---------------------------------------------------
def test_c02_coder_near_optimal():
    rng = np.random.default_rng(202)
    worst = -np.inf
    ok = True
    for trial in range(20):
        M = int(rng.integers(2, 64))
        lo = -(M // 2)
        pmf = rng.dirichlet(np.full(M, rng.uniform(0.1, 3.0))) + 1e-9
        pmf /= pmf.sum()
        em = EntropyModel(pmf[None], (lo, lo + M - 1))
        idx = rng.choice(np.arange(lo, lo + M), size=(1, 100_000), p=pmf)
        coded = arith_encode(idx, em).bit_length
        cross_entropy = entropy_rate(idx, em)
        excess = coded - (1.02 * cross_entropy + 64)
        worst = max(worst, (coded - cross_entropy) / max(cross_entropy, 1.0))
        ok &= excess <= 0
    record_acceptance(2, ok, f"20 PMFs x 1e5 symbols, worst relative excess {100 * worst:.3f}% (limit 2% + 64 bits)")
    assert ok


# -- 3. channel model vs delay-tap DFT -------------------------------------------
def _ula(angle, n, d):
    return np.exp(-2j * np.pi * d * np.arange(n) * np.sin(angle)) / np.sqrt(n)


def test_c03_channel_matches_tap_dft():
    rng = np.random.default_rng(303)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        K = int(rng.choice([16, 32, 64]))
        fs = float(rng.choice([10e6, 20e6]))
        array = ArrayConfig(int(rng.integers(1, 17)), int(rng.integers(1, 4)), float(rng.uniform(0.3, 0.7)))
        L = int(rng.integers(1, 13))
        taps_n = rng.integers(0, K, size=L)
        mp = MultipathParams(gains=rng.standard_normal(L) + 1j * rng.standard_normal(L),
                             delays=taps_n / fs, aoa=rng.uniform(-np.pi / 2, np.pi / 2, L),
                             aod=rng.uniform(-np.pi / 2, np.pi / 2, L))
        n_u, n_b = array.n_ue_antennas, array.n_bs_antennas
        taps = np.zeros((K, n_u, n_b), dtype=complex)
        for l in range(L):
            outer = np.outer(_ula(mp.aoa[l], n_u, array.spacing_over_wavelength),
                             _ula(mp.aod[l], n_b, array.spacing_over_wavelength).conj())
            taps[taps_n[l]] += np.sqrt(n_u * n_b / L) * mp.gains[l] * outer
        oracle = np.fft.fft(taps, axis=0)
        H = channel_response(mp, array, OfdmConfig(K, fs))
        worst = max(worst, float(np.max(np.abs(H - oracle))))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 60
    record_acceptance(3, ok, f"100 draws, max abs error {worst:.2e} (limit 1e-9), {elapsed:.2f} s")
    assert ok


# -- 4. MRC contract ----------------------------------------------------------------
def test_c04_mrc_contract():
    rng = np.random.default_rng(404)
    snr = 10 ** (5 / 10)
    worst_dev, worst_noiseless = 0.0, 0.0
    for _ in range(10):
        n_b = int(rng.integers(1, 17))
        h = (rng.standard_normal(n_b) + 1j * rng.standard_normal(n_b)) / np.sqrt(2)
        draws = 10_000
        x = np.exp(2j * np.pi * rng.uniform(size=draws))
        fr = FeedbackRealization(np.tile(h, (draws, 1)), 1 / snr, np.arange(draws))
        x_hat = mrc_combine_all(simo_transmit(x, fr, rng), fr.channels)
        measured = np.mean(np.abs(x) ** 2) / np.mean(np.abs(x_hat - x) ** 2)
        expected = snr * np.vdot(h, h).real
        worst_dev = max(worst_dev, abs(measured / expected - 1))
        clean = FeedbackRealization(fr.channels, 0.0, fr.selected_indices)
        worst_noiseless = max(worst_noiseless,
                              float(np.max(np.abs(mrc_combine_all(simo_transmit(x, clean), h[None]) - x))))
    ok = worst_dev <= 0.05 and worst_noiseless <= 1e-12
    record_acceptance(4, ok, f"post-MRC SNR deviation {100 * worst_dev:.2f}% (limit 5%), "
                             f"noiseless error {worst_noiseless:.1e} (limit 1e-12)")
    assert ok


# -- 5. finite-difference gradient check -----------------------------------------
def test_c05_gradient_check():
    layers = ((4, (3, 3), (2, 2)), (4, (3, 3), (1, 1)), (2, (3, 3), (1, 1)))
    model = DeepCMC(encoder_layers=layers, residual_blocks=0, batch_norm=False, dtype="float64")
    model._build(1)
    params = model._parameters()
    n_params = sum(p.numel() for p in params)
    x = torch.as_tensor(np.random.default_rng(505).standard_normal((2, 2, 8, 4)))

    def loss():
        return ((model.decoder_(model.encoder_(x)) - x) ** 2).mean()

    grads = torch.autograd.grad(loss(), params)
    analytic = torch.cat([g.reshape(-1) for g in grads])
    numeric = torch.empty_like(analytic)
    eps = 1e-6
    i = 0
    with torch.no_grad():
        for p in params:
            flat = p.view(-1)
            for j in range(flat.numel()):
                orig = flat[j].item()
                flat[j] = orig + eps
                up = loss().item()
                flat[j] = orig - eps
                down = loss().item()
                flat[j] = orig
                numeric[i] = (up - down) / (2 * eps)
                i += 1
    rel = float(torch.linalg.norm(numeric - analytic) / torch.linalg.norm(analytic))
    ok = rel <= 1e-4 and n_params <= 1000
    record_acceptance(5, ok, f"{len(layers)}-layer miniature, {n_params} parameters, "
                             f"relative error {rel:.2e} (limit 1e-4)")
    assert ok


# -- 6. straight-through exactness -------------------------------------------------
def test_c06_straight_through_exact():
    torch.manual_seed(606)
    layers = ((8, (3, 3), (2, 2)), (4, (3, 3), (1, 1)))
    model = DeepCMC(encoder_layers=layers, batch_norm=False, dtype="float64")
    model._build(1)
    x = 3 * torch.randn(4, 2, 16, 8, dtype=torch.float64)
    params = model._parameters()

    def objective(x_hat):
        return ((x_hat - x) ** 2).mean()

    # quantizer in the graph
    with_q = torch.autograd.grad(objective(model.decoder_(ste_round(model.encoder_(x)))), params)

    # quantizer replaced by the identity: decoder fed a detached copy of the same quantized latent,
    # upstream gradient routed straight into the encoder output
    z = model.encoder_(x)
    q = torch.round(z).detach().requires_grad_(True)
    loss = objective(model.decoder_(q))
    dec_params = list(model.decoder_.parameters())
    g_q, *g_dec = torch.autograd.grad(loss, [q] + dec_params)
    g_enc = torch.autograd.grad(z, list(model.encoder_.parameters()), grad_outputs=g_q)
    bypass = list(g_enc) + list(g_dec)

    identical = all(torch.equal(a, b) for a, b in zip(with_q, bypass))
    nonzero = any(bool(torch.any(g != 0)) for g in with_q[: len(g_enc)])
    ok = identical and nonzero
    record_acceptance(6, ok, f"{len(with_q)} gradient tensors bit-identical: {identical}")
    assert ok


# -- 7. desk-scale rate-distortion ----------------------------------------------------
def test_c07_rate_distortion_bank(bank, desk_data):
    _, Xte = desk_data
    points = []
    for model in bank:
        streams = model.compress(Xte)
        rate = np.mean([bs.bit_length for bs in streams]) / np.prod(Xte.shape[1:])
        points.append((model.rd_lambda, rate, nmse(Xte, model.decompress(streams))))
    rates = [p[1] for p in points]
    dbs = [p[2] for p in points]
    rates_ordered = all(a > b for a, b in zip(rates, rates[1:]))
    by_rate = sorted(zip(rates, dbs))
    # higher rate must not be worse by more than the training-noise tolerance
    nmse_monotone = all(d_hi <= d_lo + 0.3 for (_, d_lo), (_, d_hi) in zip(by_rate, by_rate[1:]))
    curve = dct_rate_curve(Xte, [0.02, 0.03, 0.05, 0.07, 0.1, 0.14, 0.2, 0.3, 0.4])
    mid_rate, mid_db = rates[1], dbs[1]
    dct_db = interpolate_curve(curve, mid_rate)
    gain = dct_db - mid_db
    ok = rates_ordered and nmse_monotone and gain >= 2.0
    detail = ", ".join(f"lambda={lam}: {r:.3f} b/entry {d:.2f} dB" for lam, r, d in points)
    record_acceptance(7, ok, f"{detail}; DCT at {mid_rate:.3f} b/entry {dct_db:.2f} dB, "
                             f"gain {gain:.2f} dB (limit 2 dB)")
    assert ok


# -- 8. digital outage cliff ------------------------------------------------------------
def test_c08_digital_outage_cliff(digital_sweep):
    best = _best_of_bank(digital_sweep)
    plateau = best[0] >= -0.1
    outage_monotone = all(
        all(a["outage_rate"] >= b["outage_rate"] for a, b in zip(t["summary"], t["summary"][1:]))
        for t in digital_sweep
    )
    # at the largest rho some bank member delivers essentially always and reaches its trained NMSE
    transitioned = [t for t in digital_sweep
                    if t["summary"][-1]["outage_rate"] <= 0.01
                    and abs(t["summary"][-1]["nmse_db"] - t["trained_db"]) <= 0.5]
    reaches = bool(transitioned) and abs(best[-1] - min(t["trained_db"] for t in transitioned)) <= 0.5
    ok = plateau and outage_monotone and reaches
    curve = " ".join(f"{rho:.3f}:{db:.2f}" for rho, db in zip(RHO_GRID, best))
    record_acceptance(8, ok, f"best-of-bank pooled NMSE by rho [{curve}]; outage monotone: {outage_monotone}")
    assert ok


# -- 9. analog graceful degradation --------------------------------------------------------
def test_c09_analog_graceful(analog_models, digital_sweep, rho_star, desk_data, desk_scenario):
    _, Xte = desk_data
    up = uplink_scenario(desk_scenario, K_UPLINK)
    analog_db = {}
    for snr, model in analog_models.items():
        rows = analog_rows(model, Xte, snr, TRIALS, uplink=up, seed=7)
        analog_db[snr] = summarize(rows, "snr_db")[0]["nmse_db"]
    ordered = [analog_db[s] for s in ANALOG_SNRS]
    monotone = all(a > b for a, b in zip(ordered, ordered[1:]))
    digital_db = _best_of_bank(digital_sweep)[RHO_GRID.index(rho_star)]
    at_star = analog_db[FEEDBACK_SNR_DB]
    ok = monotone and digital_db >= -0.5 and at_star <= -3.0
    per_snr = ", ".join(f"{s:g} dB: {d:.2f}" for s, d in analog_db.items())
    record_acceptance(9, ok, f"analog NMSE [{per_snr}]; at rho*={rho_star:.4f} digital {digital_db:.2f} dB "
                             f"vs analog {at_star:.2f} dB (limit -3 dB)")
    assert ok


# -- 10. cross-configuration execution ----------------------------------------------------
def test_c10_cross_configuration(bank):
    big = ScenarioConfig(array=ArrayConfig(16, 1), ofdm=OfdmConfig(64), rng_seed=10)
    X = generate_channels(big, 50)
    model = bank[1]
    streams = model.compress(X)
    X_hat = model.decompress(streams, X.shape[1:])
    db = nmse(X, X_hat)
    ok = X_hat.shape == X.shape and model.transform(X).shape[2:] == (16, 4) and np.isfinite(db)
    record_acceptance(10, ok, f"trained at (32, 8), run at (64, 16): output {X_hat.shape[1:]}, NMSE {db:.2f} dB")
    assert ok

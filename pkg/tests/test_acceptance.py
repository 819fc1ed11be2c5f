"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances."""

import dataclasses
import itertools
import math
import time
from pathlib import Path

import mpmath
import numpy as np
import pytest

from sadre import _rng
from sadre.diffusion import (
    AttackConfig,
    AttackPipeline,
    OracleDenoiser,
    decode,
    encode,
    forward_step,
    make_schedule,
    masked_norm,
    reverse_chain,
    reverse_step,
    sadre_attack,
)
from sadre.harness.bench import BenchConfig, emit_report, rows_csv, run_bench
from sadre.harness.corpus import synth_corpus
from sadre.metrics import (
    calibrate_k_sigma,
    composite_d,
    norm_cdf,
    norm_ppf,
    psnr,
    ssim,
    tradeoff_check,
    wasserstein,
)
from sadre.perturb import NoiseSpec, sample_noise
from sadre.transforms import Subbands, dct2, haar_dwt2, haar_idwt2, idct2, svd_small
from sadre.watermarkers import METHODS, EmbedConfig, Payload, bra, embed, extract

ACCEPTANCE_CONFIG = Path(__file__).resolve().parents[1] / "configs" / "acceptance.json"

# corpus seeds fixed before any results were looked at
CAL9_SEED, HELD9_SEED = 101, 102
CAL8_SEED = 13


def _max_abs(a, b):
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def test_c01_transform_exactness(criterion):
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = dict(dct=0.0, dwt=0.0, codec=0.0, svd=0.0)
    for _ in range(100):
        b = rng.normal(size=(8, 8))
        worst["dct"] = max(worst["dct"], _max_abs(idct2(dct2(b)), b))
        p = rng.random((64, 64))
        worst["dwt"] = max(worst["dwt"], _max_abs(haar_idwt2(haar_dwt2(p, 3)), p))
        worst["codec"] = max(worst["codec"], _max_abs(decode(encode(p)), p))
        a = rng.normal(size=(8, 8))
        u, s, vt = svd_small(a)
        worst["svd"] = max(worst["svd"], float(np.linalg.norm(u * s @ vt - a) / np.linalg.norm(a)))
    elapsed = time.perf_counter() - t0
    ok = max(worst["dct"], worst["dwt"], worst["codec"]) <= 1e-10 and worst["svd"] <= 1e-8 and elapsed < 5
    criterion(1, ok, "dct {dct:.1e}, dwt {dwt:.1e}, codec {codec:.1e}, svd rel {svd:.1e}, ".format(**worst)
              + f"{elapsed:.2f} s")
    assert ok


def test_c02_isometry(criterion):
    rng = np.random.default_rng(2)
    ratios, slack = [], []
    for _ in range(50):
        a, b = rng.random((64, 64)), rng.random((64, 64))
        za, zb = encode(a), encode(b)
        gap = math.sqrt(sum(np.sum((p - q) ** 2) for p, q in zip(za.arrays(), zb.arrays())))
        ratios.append(gap / np.linalg.norm(a - b))
    for _ in range(50):
        a, b = rng.random((64, 64)), rng.random((64, 64))
        m = rng.random((8, 8))
        slack.append(np.linalg.norm(a - b) - masked_norm(encode(a), encode(b), m))
    dev = max(abs(r - 1) for r in ratios)
    ok = dev <= 1e-9 and min(slack) >= 0
    criterion(2, ok, f"max |ratio-1| {dev:.1e}; seminorm slack min {min(slack):.3f} over 50 masks")
    assert ok


def test_c03_diffusion_inversion(criterion):
    rng = np.random.default_rng(3)
    sched = make_schedule()
    z0 = encode(rng.random((32, 32)))
    eps, z = {}, z0
    for t in range(1, 51):
        eps[t] = z0.map(lambda a: rng.normal(size=a.shape))
        z = forward_step(z, t, sched, eps[t])
    chain = max(_max_abs(a, b) for a, b in zip(reverse_chain(z, 50, sched, OracleDenoiser(eps)).arrays(),
                                               z0.arrays()))
    one = max(_max_abs(a, b) for a, b in zip(
        reverse_step(forward_step(z0, 20, sched, eps[20]), 20, sched, OracleDenoiser(eps)).arrays(), z0.arrays()))

    trials, v0 = 10_000, 0.25
    shapes = [(trials, 1, 1)] + [(trials, s, s) for s in (4, 4, 4, 2, 2, 2, 1, 1, 1)]
    zb = Subbands.from_arrays([rng.normal(scale=math.sqrt(v0), size=s) for s in shapes])
    var_err = 0.0
    for t in range(1, 51):
        zb = forward_step(zb, t, sched, zb.map(lambda a: rng.normal(size=a.shape)))
        flat = np.concatenate([a.reshape(trials, -1) for a in zb.arrays()], axis=1)
        want = sched.alpha_bar(t) * v0 + (1 - sched.alpha_bar(t))
        var_err = max(var_err, abs(flat.var(axis=0).mean() / want - 1))
    ok = chain <= 1e-8 and one <= 1e-12 and var_err <= 0.03
    criterion(3, ok, f"50-step {chain:.1e}, one-step {one:.1e}, variance rel err max {var_err:.4f}")
    assert ok


def test_c04_sampler_statistics(criterion):
    n, sigma = 10**6, 0.1
    lap = sample_noise(n, NoiseSpec("laplace", sigma, seed=4))
    poi = sample_noise(n, NoiseSpec("poisson", sigma, seed=4))
    cau = sample_noise(n, NoiseSpec("cauchy", sigma, seed=4))
    # 3-sigma CLT band of the sample variance: 3 sigma^2 sqrt((kurtosis - 1) / n)
    band_lap = 3 * sigma**2 * math.sqrt(5 / n)
    band_poi = 3 * sigma**2 * math.sqrt((2 + 1 / 10) / n)
    d_lap = abs(lap.var() - sigma**2)
    d_poi = abs(poi.var() - sigma**2)
    q_lo, q_hi = np.mean(cau <= -sigma), np.mean(cau <= sigma)
    repro = all(
        sample_noise(1000, NoiseSpec(f, sigma, seed=9)).tobytes() == sample_noise(1000, NoiseSpec(f, sigma, seed=9)).tobytes()
        for f in ("laplace", "cauchy", "poisson"))
    ok = d_lap <= band_lap and d_poi <= band_poi and abs(q_lo - 0.25) <= 0.01 and abs(q_hi - 0.75) <= 0.01 and repro
    criterion(4, ok, f"laplace |dvar| {d_lap:.2e} (band {band_lap:.2e}), poisson {d_poi:.2e} (band {band_poi:.2e}), "
                     f"cauchy F(-g) {q_lo:.4f} F(g) {q_hi:.4f}, reproducible {repro}")
    assert ok


def test_c05_round_trip(criterion, corpus20):
    worst_bra, worst_psnr = {}, {}
    for method in METHODS:
        bras, psnrs = [], []
        for i, x in enumerate(corpus20):
            cfg = EmbedConfig(method, seed=i)
            p = Payload.random(32, i)
            x_w = embed(x, p, cfg)
            bras.append(bra(extract(x_w, cfg), p))
            psnrs.append(psnr(x, x_w))
        worst_bra[method], worst_psnr[method] = min(bras), min(psnrs)
    ok = all(v == 1.0 for v in worst_bra.values()) and all(v >= 38.0 for v in worst_psnr.values())
    criterion(5, ok, ", ".join(f"{m}: min BRA {worst_bra[m]:.2f}, min PSNR {worst_psnr[m]:.2f} dB" for m in METHODS))
    assert ok


@pytest.fixture(scope="module")
def acceptance_bench():
    cfg = BenchConfig.load(ACCEPTANCE_CONFIG)
    t0 = time.perf_counter()
    res = run_bench(cfg)
    return res, time.perf_counter() - t0


def test_c06_attack_grid_directional(criterion, acceptance_bench):
    res, elapsed = acceptance_bench
    rows = {(r.method, r.attack): r for r in res.rows}
    parts, ok = [], elapsed <= 300
    for m in METHODS:
        s, j, g = rows[m, "sadre"], rows[m, "jpeg50"], rows[m, "regen"]
        checks = {
            "a": s.bra_mean <= 0.65,
            "b": s.bra_mean < j.bra_mean,
            "c": s.psnr_mean > g.psnr_mean,
            "d": s.ssim_mean >= 0.85,
        }
        ok &= all(checks.values())
        failed = "".join(k for k, v in checks.items() if not v) or "-"
        parts.append(f"{m}: BRA sadre {s.bra_mean:.3f} jpeg {j.bra_mean:.3f}, PSNR sadre {s.psnr_mean:.2f} "
                     f"regen {g.psnr_mean:.2f}, SSIM {s.ssim_mean:.4f} [failed: {failed}]")
    criterion(6, ok, "; ".join(parts) + f"; {elapsed:.1f} s")
    assert ok


def test_c07_metric_oracles(criterion):
    rng = np.random.default_rng(7)
    a, b = rng.random((48, 48)), rng.random((48, 48))
    mse = sum((float(a[i, j]) - float(b[i, j])) ** 2 for i in range(48) for j in range(48)) / a.size
    d_psnr = abs(psnr(a, b) - 10 * math.log10(1 / mse))
    d_ssim = abs(ssim(a, a) - 1.0)

    d_w1 = 0.0
    for _ in range(5):
        u, v = rng.random(8), rng.random(8)
        brute = min(sum(abs(u[i] - v[j]) for i, j in enumerate(perm)) / 8
                    for perm in itertools.permutations(range(8)))
        d_w1 = max(d_w1, abs(wasserstein(u, v) - brute))
    d_shift = max(abs(wasserstein(a * 0.5, a * 0.5 + c) - abs(c)) for c in (0.05, 0.2, -0.3))

    mpmath.mp.dps = 40
    probes = np.linspace(-5, 5, 20)
    d_cdf = max(abs(norm_cdf(x) - float(mpmath.ncdf(x))) for x in probes)
    ps = [float(mpmath.ncdf(x)) for x in probes]
    d_ppf = max(abs(norm_ppf(p) - float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1))) for p in ps)
    ok = d_psnr <= 1e-9 and d_ssim <= 1e-12 and d_w1 <= 1e-15 and d_shift <= 1e-12 and max(d_cdf, d_ppf) <= 1e-7
    criterion(7, ok, f"psnr {d_psnr:.1e} dB, ssim {d_ssim:.1e}, W1 brute {d_w1:.1e}, shift {d_shift:.1e}, "
                     f"Phi {d_cdf:.1e}, Phi^-1 {d_ppf:.1e}")
    assert ok


def _tradeoff_cases(planes, seed_tag):
    """(x, x_w, mask, sigma) per image and method, with SADRE's own mask and sigma."""
    cases = []
    for i, x in enumerate(planes):
        for m in METHODS:
            cfg = EmbedConfig(m, seed=i)
            x_w = embed(x, Payload.random(32, i), cfg)
            acfg = AttackConfig(seed=_rng.derive_seed(seed_tag, i, m))
            _, trace = sadre_attack(x_w, acfg)
            cases.append((x, x_w, AttackPipeline(x_w, acfg).mask, trace.sigma))
    return cases


def test_c08_composite_and_tradeoff(criterion, corpus20):
    d = composite_d(0.182, (1 - 0.9452) / 2)
    cal_cases = _tradeoff_cases([c.plane for c in synth_corpus(10, 256, CAL8_SEED)], 8)
    cal = [tradeoff_check(*c) for c in cal_cases]
    k = calibrate_k_sigma([(r.lhs, r.delta_m, c[3]) for r, c in zip(cal, cal_cases)])
    held = [tradeoff_check(*c, k_sigma=k) for c in _tradeoff_cases(corpus20, 9)]
    frac = np.mean([r.holds for r in held])
    worst = max(r.lhs / r.rhs for r in held)
    ok = abs(d - 0.1753) <= 5e-4 and frac == 1.0
    criterion(8, ok, f"D = {d:.5f}; k_sigma = {k:.4f}; trade-off holds on {frac:.0%} of {len(held)} cases "
                     f"(max lhs/rhs {worst:.2e})")
    assert ok


def _relative_errors(planes, seeds):
    out = []
    for i, x in enumerate(planes):
        x_w = embed(x, Payload.random(32, i), EmbedConfig(seed=i))
        for s in seeds:
            x_hat, _ = sadre_attack(x_w, AttackConfig(sigma=0.05, seed=s))
            out.append(np.linalg.norm(x_hat - x) / np.linalg.norm(x))
    return np.array(out)


def test_c09_reconstruction_stability(criterion):
    cal = _relative_errors([c.plane for c in synth_corpus(20, 256, CAL9_SEED)], range(20))
    eps_emp = float(np.percentile(cal, 95))
    held = _relative_errors([c.plane for c in synth_corpus(10, 256, HELD9_SEED)], range(100, 120))
    frac = float(np.mean(held <= eps_emp))
    ok = len(held) == 200 and frac >= 0.95
    criterion(9, ok, f"eps_emp {eps_emp:.4f} (95th pct of {len(cal)} calibration runs); "
                     f"held-out {frac:.3f} of {len(held)} within bound")
    assert ok


def test_c10_determinism(criterion, acceptance_bench, tmp_path):
    first, _ = acceptance_bench
    cfg = BenchConfig.load(ACCEPTANCE_CONFIG)
    second = run_bench(cfg)
    threaded = run_bench(dataclasses.replace(cfg, workers=2))
    blobs = []
    for name, res in (("a", first), ("b", second), ("c", threaded)):
        emit_report(res.rows, ("csv",), tmp_path / name)
        blobs.append((tmp_path / name / "report.csv").read_bytes())
    ok = blobs[0] == blobs[1] == blobs[2] and rows_csv(first.rows).encode() == blobs[0]
    criterion(10, ok, f"report.csv identical across two runs and workers 1 vs 2: {ok} ({len(blobs[0])} bytes)")
    assert ok

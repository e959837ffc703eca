"""Acceptance suite: one test per criterion, run at the stated tolerances.

Each test records a PASS/FAIL line that is printed in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from seqclt.clt import (berry_esseen, center_sequence, char_fn, condition_diagnostics,
                        default_T, monte_carlo, sigma_n, variance)
from seqclt.cones import (ConeContext, complex_gauge, contraction_report, hilbert_distance,
                          membership_margin, random_cone_element)
from seqclt.growth import (coboundary_solve, growth_criterion, martingale_decomposition,
                           no_trend, random_dichotomy)
from seqclt.maps import (CircleMap, Observable, SequenceSpec, cosine, distortion_constant,
                         doubling, iid, periodic)
from seqclt.spectral import OperatorChainSpec, grid, transfer_matrix

from oracles import bessel_j0

DOUBLING_COS = SequenceSpec([doubling()], [cosine()])
F1 = CircleMap(2, ((1, 0.05, 0.0),))
F2 = CircleMap(3, ((2, 0.03, 0.3),))
PERTURBED = SequenceSpec([F1, F2], [cosine(), Observable(((1, 0.0, 1.0), (2, 0.5, 0.0)))],
                         periodic([0, 1, 1]), periodic([0, 1]),
                         Observable(((0, 1.0, 0.0), (1, 0.3, 0.0))))
COB2 = Observable(((1, 0.0, 1.0), (2, 0.0, -1.0)))         # sin 2 pi x - sin 4 pi x
COB3 = Observable(((1, 0.0, 1.0), (3, 0.0, -1.0)))         # sin 2 pi x - sin 6 pi x
SLOPE_FLOOR = 1e-12


def doubling_cone(n_grid: int = 256) -> ConeContext:
    nu = 0.55
    a = 10.0 * max(1.0, distortion_constant([doubling()]) / (nu - 0.5))
    return ConeContext(a, nu, n_grid, theta=2.0)


def test_criterion_01_exact_variance(record):
    t0 = time.perf_counter()
    cs = center_sequence(DOUBLING_COS, 256, 256)
    errs = {n: abs(variance(cs, n).sigma2 - n / 2) for n in (1, 16, 64, 256)}
    dt = time.perf_counter() - t0
    ok = max(errs.values()) <= 1e-10 and dt < 10
    record(1, ok, f"max |sigma_n^2 - n/2| = {max(errs.values()):.2e}, {dt:.2f} s")
    assert ok


def test_criterion_02_bessel(record):
    cs = center_sequence(DOUBLING_COS, 1)
    lam = [0.5, 1.0, 2.0]
    tab = char_fn(cs, lam, 1, cap=None)
    err = max(abs(v - bessel_j0(math.sqrt(2) * l)) for l, v in zip(lam, tab.values))
    ok = err <= 1e-8
    record(2, ok, f"max |Upsilon_1 - J0(sqrt2 lam)| = {err:.2e}")
    assert ok


def test_criterion_03_gaussian_order(record):
    t0 = time.perf_counter()
    ns = [64, 256, 1024]
    cs = center_sequence(DOUBLING_COS, max(ns), 256)
    lam = np.linspace(-2, 2, 81)
    E = []
    for n in ns:
        tab = char_fn(cs, lam, n)
        assert not tab.flagged.any()
        E.append(float(np.max(tab.abs_err)))
    slope = float(np.polyfit(np.log(ns), np.log(E), 1)[0])
    dt = time.perf_counter() - t0
    ok = slope <= -0.4 and dt < 120
    record(3, ok, f"E(n) = {', '.join(f'{e:.4g}' for e in E)}; slope {slope:.4f}; {dt:.1f} s")
    assert ok


def test_criterion_04_berry_esseen(record):
    t0 = time.perf_counter()
    n = 400
    cs = center_sequence(DOUBLING_COS, n, 256)
    mc = monte_carlo(cs, 100_000, seed=20240101, n=n, workers=4)
    s = sigma_n(cs, n)
    T = default_T(s, n)
    fb = berry_esseen(cs, T, n)
    dt = time.perf_counter() - t0
    ok = mc.ks <= 0.02 and fb.bound >= mc.ks - mc.dkw and dt < 120
    record(4, ok, f"KS = {mc.ks:.5f}, DKW99 = {mc.dkw:.5f}, Feller bound = {fb.bound:.4f} "
                  f"at T = {fb.T:.4f}; {dt:.1f} s")
    assert ok


@pytest.fixture(scope="module")
def cone_reports():
    out = {}
    for N in (256, 512):
        ctx = doubling_cone(N)
        out[N] = contraction_report(OperatorChainSpec(DOUBLING_COS, 0, 0), ctx, trials=20, seed=1)
    return out


def test_criterion_05_cone_mapping_and_diameter(record, cone_reports):
    rep = cone_reports[256]
    ctx = doubling_cone()
    bound = 2 * ctx.a + math.log(1.55 / 0.45)
    ok = rep.min_margin_nu >= -1e-10 and rep.dh_to_one_max <= bound + 1e-6
    # direct check on 20 independently generated cone elements
    rng = np.random.Generator(np.random.Philox(5))
    M = transfer_matrix(doubling(), 256)
    x = grid(256)
    for _ in range(20):
        Lh = M @ random_cone_element(rng, ctx.a)(x)
        ok &= membership_margin(Lh, ctx, ctx.nu * ctx.a).margin >= -1e-10
        ok &= hilbert_distance(Lh, np.ones(256), ctx) <= bound + 1e-6
    record(5, ok, f"min margin(Lh, nu a) = {rep.min_margin_nu:.4g}; "
                  f"max d_H(Lh, 1) = {rep.dh_to_one_max:.4f} <= {bound:.4f}")
    assert ok


def test_criterion_06_complex_contraction(record, cone_reports):
    res = {N: (r.ratio_max, r.tanh_bound, r.contraction_ok) for N, r in cone_reports.items()}
    ok = all(v[2] for v in res.values()) and len(cone_reports[256].ratios) >= 15
    r = cone_reports[256]
    record(6, ok, f"max ratio {r.ratio_max:.4f} <= tanh(Delta_C/4) + 0.05 = {r.tanh_bound + 0.05:.4f}"
                  f" (Delta_C = {r.delta_complex:.4f}); N=512: ratio {res[512][0]:.4f}, "
                  f"{'PASS' if res[512][2] else 'FAIL'}")
    assert ok


def test_criterion_07_perturbation_certificate(record):
    ctx = doubling_cone()
    cs = center_sequence(DOUBLING_COS, 8)
    ts = (1e-3, 1e-2, 1e-1)
    rep = contraction_report(OperatorChainSpec(DOUBLING_COS, 0, 0), ctx, trials=20, seed=1,
                             t_values=ts, centered=cs)
    r = [rep.eps_table[t] / t for t in ts]
    linear = max(r) / min(r) - 1 <= 0.10
    below = rep.eps_table[1e-3] < rep.eps_threshold
    t_star = rep.eps_threshold / min(r)
    ok = linear and below
    record(7, ok, f"eps_t/t = {', '.join(f'{v:.4f}' for v in r)} (linear: {linear}); "
                  f"eps(1e-3) = {rep.eps_table[1e-3]:.3e} vs threshold {rep.eps_threshold:.3e}; "
                  f"certificate holds only for t <= {t_star:.2e}")
    assert linear, "eps_t is not linear in t"
    assert below, (f"eps(1e-3) = {rep.eps_table[1e-3]:.3e} exceeds "
                   f"kappa^2 e^(-2 Delta_R)/(12 sqrt 2) = {rep.eps_threshold:.3e}")


def test_criterion_08_condition_suite(record):
    out = {}
    for N in (256, 512):
        cs = center_sequence(PERTURBED, 256, N)
        out[N] = condition_diagnostics(cs, ConeContext(10.0, 0.7, N), lambdas=(0.0, 0.5, 1.0),
                                       n=256, seed=3)
    a, b = out[256], out[512]
    change = {k: abs(getattr(b, k) - getattr(a, k)) / abs(getattr(a, k))
              for k in ("C_star", "K", "K_twist")}
    finite = all(math.isfinite(getattr(d, k)) for d in (a, b) for k in ("C_star", "K", "K_twist"))
    lam_ok = [l for l in a.theta_fit if abs(l) / a.sigma <= 0.5]
    theta_ok = all(d.theta_fit[l] < 1 for d in (a, b) for l in lam_ok)
    ok = finite and max(change.values()) < 0.05 and theta_ok and min(a.ell_min, b.ell_min) >= 0.1
    record(8, ok, f"C* = {a.C_star:.4f}, K = {a.K:.4f}, K_twist = {a.K_twist:.4f} "
                  f"(max change under N doubling {max(change.values()):.1e}); "
                  f"theta_fit max {max(a.theta_fit[l] for l in lam_ok):.3f}; ell_min {a.ell_min:.3f}")
    assert ok


def test_criterion_09_growth(record):
    rep = growth_criterion([doubling()], [cosine()], 64, a=0.9)
    witness = rep.rows[0][3]
    pass_ok = rep.verdict == "PASS" and min(witness, 1 - witness) < 1e-12

    cob_seq = SequenceSpec([doubling()], [COB2])
    cs = center_sequence(cob_seq, 800)
    ns = np.arange(50, 801, 50)
    s2 = [variance(cs, int(n)).sigma2 for n in ns]
    flat, slope, se = no_trend(ns, s2, SLOPE_FLOOR)

    cob = coboundary_solve([doubling()], COB2)
    bounded = random_dichotomy([doubling(), CircleMap(3)], [COB2, COB3], trials=12, n=256, seed=1)
    linear = random_dichotomy([doubling(), CircleMap(3)], cosine(), trials=12, n=256, seed=1)
    conflicts = int(bounded.conflict) + int(linear.conflict)
    ok = (pass_ok and flat and max(cob.residuals) <= 1e-6 and bounded.classification == "BOUNDED"
          and linear.classification == "LINEAR" and conflicts == 0)
    record(9, ok, f"doubling+cos {rep.verdict} (witness x = {witness:.1e}); coboundary slope "
                  f"{slope:.1e} (SE {se:.1e}); residual {max(cob.residuals):.1e}; random: "
                  f"{bounded.classification}/{linear.classification}; conflicts {conflicts}")
    assert ok


def test_criterion_10_martingale(record):
    cs = center_sequence(PERTURBED, 512)
    mr = martingale_decomposition(cs)
    ns = np.arange(16, 513, 16)
    diff = [abs(mr.sigma2_upto(int(n)) - cs.sigma2(int(n))) for n in ns]
    flat, slope, se = no_trend(ns, diff, SLOPE_FLOOR)
    ok = flat and mr.orthogonality <= 1e-10
    record(10, ok, f"slope of |sigma2_mart - sigma2_full| = {slope:.2e} (SE {se:.2e}); "
                   f"max |Lhat_k Y_k| = {mr.orthogonality:.1e}")
    assert ok


def test_criterion_11_invariants(record):
    t0 = time.perf_counter()
    rng = np.random.Generator(np.random.Philox(11))
    x = grid(256)
    checks = {}
    ctx = ConeContext(6.0, 0.6, 256)
    maps = [F1, F2, doubling(), CircleMap(3, ((1, 0.1, 1.0),))]
    g = cosine()(x)
    mass = pos = l1 = True
    for f in maps:
        M = transfer_matrix(f, 256)
        for _ in range(10):
            h = random_cone_element(rng, ctx.a)(x)
            Lh = M @ h
            mass &= abs(np.mean(Lh) - np.mean(h)) <= 1e-13
            pos &= np.min(Lh) > 0
            t = rng.uniform(-2, 2)
            l1 &= np.mean(np.abs(M @ (np.exp(1j * t * g) * h))) <= np.mean(h) + 1e-13
    checks["mass"], checks["positivity"], checks["twist_l1"] = mass, pos, l1

    proj = True
    for _ in range(10):
        p = [random_cone_element(rng, ctx.a)(x) for _ in range(4)]
        c = rng.uniform(0.1, 10)
        d = hilbert_distance(p[0], p[1], ctx)
        proj &= abs(hilbert_distance(c * p[0], p[1], ctx) - d) <= 1e-10 * max(1, d)
        z = c * np.exp(1j * rng.uniform(0, 2 * np.pi))
        h, k = p[0] + 1j * p[1], p[2] + 1j * p[3]
        dc = complex_gauge(h, k, ctx, stride=4).value
        proj &= abs(complex_gauge(z * h, k, ctx, stride=4).value - dc) <= 1e-9 * max(1, dc)
    checks["projective"] = proj

    seq = SequenceSpec([F1, F2], PERTURBED.observables, iid(2, 4), iid(2, 5), PERTURBED.rho)
    cs = center_sequence(seq, 64)
    tab = char_fn(cs, [-1.0, 0.0, 1.0])
    checks["upsilon0"] = abs(tab.values[1] - 1) <= 1e-12
    checks["conjugate"] = abs(tab.values[0] - np.conj(tab.values[2])) <= 1e-13
    checks["centering"] = float(np.max(np.abs(cs.centering_residual()))) <= 1e-12

    a = monte_carlo(cs, 20000, seed=7, workers=1, chunk=2048)
    b = monte_carlo(cs, 20000, seed=7, workers=4, chunk=2048)
    r1 = random_dichotomy([doubling(), F2], cosine(), trials=3, n=16, seed=2, workers=1)
    r2 = random_dichotomy([doubling(), F2], cosine(), trials=3, n=16, seed=2, workers=3)
    checks["reproducible"] = a.samples.tobytes() == b.samples.tobytes() and r1.to_dict() == r2.to_dict()
    dt = time.perf_counter() - t0
    ok = all(checks.values()) and dt < 60
    failed = [k for k, v in checks.items() if not v]
    record(11, ok, f"{len(checks) - len(failed)}/{len(checks)} invariants green in {dt:.1f} s"
                   + (f"; failed: {', '.join(failed)}" if failed else ""))
    assert ok, failed

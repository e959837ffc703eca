"""Variance growth: the finite-orbit criterion, martingale decomposition,
coboundary detection and the random-sequence dichotomy.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from .clt import CenteredSequence, center_sequence, variance
from .maps import (CircleMap, Observable, SequenceSpec, expansion_constants, iid,
                   specification_gap)
from .spectral import grid, interpolation_matrix, transfer_matrix

MAX_EXHAUSTIVE = 10**6


# regression helpers ---------------------------------------------------------------

def fit_slope(x, y):
    """Ordinary least squares slope and its standard error."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < 3:
        raise ValueError("slope fit needs at least three points")
    X = np.column_stack([np.ones_like(x), x])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    dof = x.size - 2
    s2 = float(resid @ resid) / dof
    cov = s2 * np.linalg.inv(X.T @ X)
    return float(coef[1]), float(math.sqrt(max(cov[1, 1], 0.0)))


def no_trend(x, y, floor: float = 1e-12) -> tuple:
    """``|slope| <= 2 SE``; ``floor`` stands in for a round-off level SE.

    Returns
    -------
    ok, slope, se
    """
    b, se = fit_slope(x, y)
    return abs(b) <= 2.0 * max(se, floor), b, se


# truncated centers ------------------------------------------------------------------

def truncated_centers(seq: SequenceSpec, S: int, k: int, n_grid: int = 256) -> float:
    """``gamma_{S,k} = int g_k L_{k-1} ... L_{max(k-S,0)} 1``."""
    if S < 0:
        raise ValueError("S must be >= 0")
    v = np.ones(n_grid)
    idx = seq.map_indices(k) if k else np.zeros(0, int)
    for i in range(max(k - S, 0), k):
        v = transfer_matrix(seq.maps[idx[i]], n_grid) @ v
    g = seq.obs_at(k)(grid(n_grid))
    return float(np.mean(g * v))


def center_decay(seq: SequenceSpec, k: int, S_max: int, n_grid: int = 256) -> dict:
    """Tabulate ``|gamma_{S,k} - c_k|`` for ``S = 0..S_max`` and fit ``A nu^S``.

    ``c_k`` is the untruncated center ``gamma_{k,k}``.
    """
    c = truncated_centers(seq, k, k, n_grid)
    S = np.arange(0, min(S_max, k) + 1)
    err = np.array([abs(truncated_centers(seq, int(s), k, n_grid) - c) for s in S])
    ok = err > 1e-14
    if np.count_nonzero(ok) >= 3:
        p = np.polyfit(S[ok], np.log(err[ok]), 1)
        nu, A = math.exp(p[0]), math.exp(p[1])
    elif np.any(ok):
        nu, A = 1e-14 ** (1.0 / max(1, int(S[ok][-1]) + 1)), float(err[ok][0])
    else:
        nu, A = 0.0, 0.0
    return {"S": S.tolist(), "err": err.tolist(), "nu": nu, "A": A, "center": c}


# growth criterion ---------------------------------------------------------------

@dataclass
class GrowthReport:
    mode: str
    L: int
    a: float
    eps: float
    threshold: float
    S: Optional[int]
    n_sequences: int
    n_evaluated: int
    exhaustive: bool
    coverage: float
    rows: list                      # per omega-bar
    ledger: dict
    sums_ok: bool
    ledger_ok: bool
    verdict: str                    # PASS | INCONCLUSIVE
    failing: list
    params: dict = field(default_factory=dict)

    def to_dict(self, rows: bool = False) -> dict:
        d = asdict(self)
        if not rows:
            d.pop("rows")
        return d


class _DPGrid:
    """Fine grid with cached inverse-branch interpolation data per map."""

    def __init__(self, maps, observables, G: int):
        self.G = G
        self.y = np.arange(G) / G
        self.maps = maps
        self.pre = []
        for f in maps:
            ys = f.preimages(self.y)
            s = ys * G
            i0 = np.floor(s).astype(np.int64)
            w = s - i0
            i0 %= G
            self.pre.append((i0, (i0 + 1) % G, w))
        self.obs = list(observables)
        self.g = [o(self.y) for o in observables]

    def step(self, U: np.ndarray, m: int):
        i0, i1, w = self.pre[m]
        cand = (1 - w) * U[i0] + w * U[i1]
        b = np.argmax(cand, axis=0)
        return cand[b, np.arange(self.G)], b


def _birkhoff_dp(dp: _DPGrid, ms, gt):
    """Forward DP for ``max_x sum_{i=1}^{L} gt_i(x_i)``, ``x_{i+1} = f_{ms[i]}(x_i)``.

    ``gt`` holds the centered observables sampled on the DP grid.
    Returns the final value array and the branch choices.
    """
    U = gt[0].copy()
    B = [None]
    for i in range(1, len(gt)):
        best, b = dp.step(U, ms[i])
        U = gt[i] + best
        B.append(b)
    return U, B


def _backtrack(dp: _DPGrid, ms, obs_ids, gamma, U, B, candidates: int = 8):
    """Exact Birkhoff sums along orbits reconstructed from the DP argmax.

    The orbit is built backwards by exact branch inversion, so it is a true
    orbit and its sum is a certified lower bound for the maximum.  The
    ``candidates`` best grid endpoints are traced together.
    """
    L = len(obs_ids)
    top = np.argpartition(U, -candidates)[-candidates:] if U.size > candidates else np.arange(U.size)
    x = dp.y[top]
    cols = np.arange(x.size)
    total = dp.obs[obs_ids[L - 1]](x) - gamma[L - 1]
    for i in range(L - 1, 0, -1):
        idx = np.rint(x * dp.G).astype(np.int64) % dp.G
        x = dp.maps[ms[i]].preimages(x)[B[i][idx], cols]
        total = total + (dp.obs[obs_ids[i - 1]](x) - gamma[i - 1])
    j = int(np.argmax(total))
    x0 = float(dp.maps[ms[0]].preimages(x[j:j + 1])[0, 0])
    return float(total[j]), x0, float(x[j])


def growth_criterion(maps: Sequence[CircleMap], observables: Sequence[Observable], L: int,
                     mode: str = "prop_variance", a: float = 0.5, eps: Optional[float] = None,
                     kappa: float = 1.0, b: float = 2.0, grid_size: int = 4096,
                     n_grid: int = 256, exhaustive: bool = True, samples: int = 1000,
                     seed: int = 0, max_sequences: int = MAX_EXHAUSTIVE,
                     candidates: int = 8) -> GrowthReport:
    """Check the finite-orbit sufficient condition for linear variance growth.

    Parameters
    ----------
    mode : {"prop_variance", "cor_verify"}
        ``prop_variance`` uses threshold ``a L`` with full centering along the
        block; ``cor_verify`` uses ``2 kappa ln L`` with centers truncated to
        ``S = ceil(b ln L)`` maps.
    exhaustive : bool
        Enumerate every block sequence (refused above ``max_sequences``);
        otherwise ``samples`` uniformly drawn sequences.
    """
    maps, observables = list(maps), list(observables)
    Nm, No = len(maps), len(observables)
    if L < 1:
        raise ValueError("L must be >= 1")
    n_seq = (Nm * No) ** (L + 1)
    if exhaustive and n_seq > max_sequences:
        raise ValueError(
            f"exhaustive enumeration of (N_maps*N_obs)^(L+1) = {n_seq} sequences "
            f"exceeds the limit {max_sequences}; use sampled mode")
    theta, _ = expansion_constants(maps)
    Dg = max(o.lipschitz for o in observables)
    gsup = max(o.sup_norm for o in observables)
    if mode == "prop_variance":
        if not 0 < a < 1:
            raise ValueError("prop_variance needs a in (0, 1)")
        eps_max = a / (4 * Dg) if Dg > 0 else 1.0
        eps_used = min(eps_max, 1.0) if eps is None else eps
        threshold = a * L
        S = None
        a_used = a
    elif mode == "cor_verify":
        a_used = kappa * math.log(L) / L
        Gamma = max(Dg, 2 * gsup)
        eps_used = a_used / (4 * Gamma) if Gamma > 0 else 1.0
        threshold = 2 * kappa * math.log(L)
        S = int(math.ceil(b * math.log(L)))
    else:
        raise ValueError(f"unknown growth mode {mode!r}")

    dp = _DPGrid(maps, observables, grid_size)
    mats = [transfer_matrix(f, n_grid) for f in maps]
    gspec = [o(grid(n_grid)) for o in observables]
    pairs = [(m, o) for m in range(Nm) for o in range(No)]
    rows, failing = [], []
    max_ghat = 0.0

    one = np.ones(n_grid)

    @lru_cache(maxsize=8192)
    def pushed(window):
        # L_{window[-1]} ... L_{window[0]} 1, reusing the cached prefix
        if not window:
            return one
        return mats[window[-1]] @ pushed(window[:-1])

    def center(ms_prefix, o):
        # gamma for the observable at time i = len(ms_prefix)
        i = len(ms_prefix)
        lo = 0 if S is None else max(i - S, 0)
        return float(np.mean(gspec[o] * pushed(tuple(ms_prefix[lo:]))))

    def leaf(ms, os_, gamma, U, B):
        total, x0, x1 = _backtrack(dp, ms, os_, gamma, U, B, candidates)
        ok = total >= threshold - 1e-12 * max(1.0, abs(threshold))
        key = ",".join(f"{m}:{o}" for m, o in zip(ms, os_))
        rows.append((key, total, float(np.max(U)), x0, x1, ok))
        if not ok:
            failing.append(key)

    if exhaustive:
        # depth-first over (map_{i-1}, obs_i) pairs with prefix reuse
        def rec(ms, os_, gamma, U, B):
            nonlocal max_ghat
            i = len(ms)
            if i == L:
                leaf(ms, os_, gamma, U, B)
                return
            for m, o in pairs:
                ms2 = ms + [m]
                g = center(ms2, o)
                gt = dp.g[o] - g
                max_ghat = max(max_ghat, float(np.max(np.abs(gt))))
                if i == 0:
                    U2, b2 = gt.copy(), None
                else:
                    best, b2 = dp.step(U, m)
                    U2 = gt + best
                rec(ms2, os_ + [o], gamma + [g], U2, B + [b2])

        rec([], [], [], None, [])
        evaluated = len(rows)
        coverage = 1.0
    else:
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
        for _ in range(samples):
            choice = rng.integers(0, len(pairs), size=L)
            ms = [pairs[c][0] for c in choice]
            os_ = [pairs[c][1] for c in choice]
            gamma = [center(ms[:i + 1], os_[i]) for i in range(L)]
            gt = [dp.g[o] - g for o, g in zip(os_, gamma)]
            max_ghat = max(max_ghat, max(float(np.max(np.abs(v))) for v in gt))
            U, B = _birkhoff_dp(dp, ms, gt)
            leaf(ms, os_, gamma, U, B)
        evaluated = samples
        coverage = min(1.0, samples / (len(pairs) ** L))

    ledger = {}
    if mode == "prop_variance":
        D_F = specification_gap(eps_used, theta) if eps_used < 1 else 0
        need_L = 8.0 / a_used * D_F * max_ghat
        ledger["eps <= a/(4 sup|Dg|)"] = {"eps": eps_used, "bound": eps_max,
                                         "ok": eps_used <= eps_max * (1 + 1e-12)}
        ledger["L >= (8/a) D_F max|ghat|"] = {"L": L, "bound": need_L, "D_F": D_F,
                                              "max_ghat": max_ghat, "ok": L >= need_L}
    else:
        D_F = specification_gap(eps_used, theta) if eps_used < 1 else 0
        Gamma = max(Dg, 2 * gsup)
        need_L = D_F * Gamma / a_used
        ledger["L >= D_F Gamma / a"] = {"L": L, "bound": need_L, "D_F": D_F,
                                        "Gamma": Gamma, "a": a_used, "ok": L >= need_L}
        # A nu^S <= a, with (A, nu) fitted from the center decay of a probe sequence
        probe = SequenceSpec(maps, observables, iid(Nm, seed), iid(No, seed + 1))
        dec = center_decay(probe, k=min(4 * S + 8, 64), S_max=min(4 * S + 8, 64), n_grid=n_grid)
        ok_b = dec["nu"] == 0.0 or b > -1.0 / math.log(dec["nu"])
        ledger["b > -1/ln nu"] = {"b": b, "nu_fit": dec["nu"], "ok": bool(ok_b)}
        ledger["A nu^S <= a"] = {"A_fit": dec["A"], "nu_fit": dec["nu"], "S": S,
                                 "value": dec["A"] * dec["nu"] ** S, "a": a_used,
                                 "ok": dec["A"] * dec["nu"] ** S <= a_used}
    ledger_ok = all(v["ok"] for v in ledger.values())
    sums_ok = not failing
    verdict = "PASS" if (sums_ok and ledger_ok) else "INCONCLUSIVE"
    return GrowthReport(mode, L, a_used, eps_used, threshold, S, n_seq, evaluated,
                        exhaustive, coverage, rows, ledger, sums_ok, ledger_ok, verdict,
                        failing[:20], {"theta": theta, "grid_size": grid_size,
                                       "kappa": kappa if mode == "cor_verify" else None,
                                       "b": b if mode == "cor_verify" else None})


# martingale decomposition ------------------------------------------------------------

@lru_cache(maxsize=64)
def composition_matrix(fmap: CircleMap, n: int) -> np.ndarray:
    """Matrix realizing ``phi -> phi o f`` on grid samples."""
    M = interpolation_matrix(fmap(grid(n)), n)
    M.setflags(write=False)
    return M


@dataclass
class MartingaleResult:
    phi: np.ndarray          # (n+1, N), phi_0 = 0
    Y: np.ndarray            # (n, N)
    sigma2_mart: float
    orthogonality: float     # max_k sup |Lhat_k Y_k|
    n: int
    terms: np.ndarray = field(repr=False, default=None)   # int h_k Y_k^2

    def sigma2_upto(self, m: int) -> float:
        """``sigma^2_mart`` at horizon ``m <= n`` (the decomposition is causal)."""
        return math.fsum(self.terms[:m])


class DensityDomainError(ValueError):
    pass


def martingale_decomposition(cs: CenteredSequence, n: Optional[int] = None) -> MartingaleResult:
    """``ghat_k = phi_{k+1} o f_k - phi_k + Y_k`` with ``Lhat_k Y_k = 0``.

    ``Lhat_k u = L_k(h_k u) / h_{k+1}`` and
    ``phi_{k+1} = Lhat_k(ghat_k + phi_k)``.
    """
    n = cs.n if n is None else n
    N = cs.n_grid
    chain = cs.chain
    for k in range(n + 1):
        h = cs.h(k)
        if np.min(h) <= 1e-12 * np.max(np.abs(h)):
            raise DensityDomainError(f"pushed density h_{k} touches zero on the grid")
    phi = np.zeros((n + 1, N))
    Y = np.zeros((n, N))
    orth = 0.0
    terms = []
    for k in range(n):
        h, h1 = cs.h(k), cs.h(k + 1)
        g = cs.hatg[k].values
        phi[k + 1] = chain.apply(k, h * (g + phi[k])) / h1
        C = composition_matrix(cs.seq.maps[chain.map_index(k)], N)
        Y[k] = g - C @ phi[k + 1] + phi[k]
        # residual level transport: skip the resolution monitor
        orth = max(orth, float(np.max(np.abs(chain.matrix(k) @ (h * Y[k]) / h1))))
        terms.append(float(np.mean(h * Y[k] ** 2)))
    return MartingaleResult(phi, Y, math.fsum(terms), orth, n, np.array(terms))


# coboundary solver ---------------------------------------------------------------------

@dataclass
class CoboundaryReport:
    psi: list
    residuals: list
    consistency: float
    tail_ratio: list
    verdict: str             # COBOUNDARY | NOT_COBOUNDARY | INCONCLUSIVE
    M_terms: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("psi")
        return d


def invariant_density(fmap: CircleMap, n_grid: int = 256, tol: float = 1e-14,
                      maxiter: int = 2000) -> np.ndarray:
    """Fixed point of ``L`` with unit mass, by power iteration."""
    M = transfer_matrix(fmap, n_grid)
    v = np.ones(n_grid)
    for _ in range(maxiter):
        w = M @ v
        w /= np.mean(w)
        if np.max(np.abs(w - v)) <= tol:
            return w
        v = w
    return v


def coboundary_solve(maps: Sequence[CircleMap], g: Union[Observable, Sequence[Observable]],
                     M_terms: int = 60, n_grid: int = 256, tol: float = 1e-6) -> CoboundaryReport:
    """Solve ``g_a = psi - psi o f_a`` per map by a Neumann series.

    With the normalized operator ``Lhat u = L(h u)/h`` (``h`` the invariant
    density of ``f_a``), ``psi = -sum_{m=1}^{M} Lhat^m g``.  Each ``psi`` is
    normalized to zero Lebesgue mean so the per-map solutions can be
    compared.
    """
    maps = list(maps)
    gs = list(g) if isinstance(g, (list, tuple)) else [g] * len(maps)
    if len(gs) != len(maps):
        raise ValueError("need one observable per map")
    x = grid(n_grid)
    psis, res, tails = [], [], []
    inconclusive = False
    for f, ga in zip(maps, gs):
        gv = ga(x)
        h = invariant_density(f, n_grid)
        mean = float(np.mean(gv * h))
        if abs(mean) > 1e-10 * max(1.0, float(np.max(np.abs(gv)))):
            raise ValueError(f"observable has nonzero invariant mean {mean:.3g}")
        M = transfer_matrix(f, n_grid)
        u = gv.copy()
        psi = np.zeros(n_grid)
        first = last = 0.0
        for m in range(1, M_terms + 1):
            u = (M @ (h * u)) / h
            psi -= u
            s = float(np.max(np.abs(u)))
            if m == 1:
                first = s
            last = s
        ratio = last / first if first > 1e-13 else 0.0
        tails.append(ratio)
        if ratio > 1e-3:
            inconclusive = True
        psi -= np.mean(psi)
        C = composition_matrix(f, n_grid)
        res.append(float(np.max(np.abs(gv - psi + C @ psi))))
        psis.append(psi)
    cons = max((float(np.max(np.abs(p - q))) for p, q in itertools.combinations(psis, 2)),
               default=0.0)
    if inconclusive:
        verdict = "INCONCLUSIVE"
    elif max(res) <= tol and cons <= tol:
        verdict = "COBOUNDARY"
    else:
        verdict = "NOT_COBOUNDARY"
    return CoboundaryReport(psis, res, cons, tails, verdict, M_terms)


# random dichotomy ------------------------------------------------------------------------

@dataclass
class RandomReport:
    n: int
    trials: int
    sigma2_over_n: list
    sigma2_half: list
    growth_rate: list
    mean_sigma2_over_n: float
    se_sigma2_over_n: float
    beta_hat: float
    beta_series: list
    growth: bool
    trend_ok: bool
    coboundary: dict
    classification: str       # LINEAR | BOUNDED | CONFLICT | INCONCLUSIVE
    conflict: bool

    def to_dict(self) -> dict:
        return asdict(self)


def beta_series(maps, obs_per_map, omega: np.ndarray, n_grid: int = 256,
                tol: float = 1e-12) -> float:
    """``beta(omega) = int g_{w0}^2 + 2 sum_j int g_{wj} L_{w(j-1)} ... L_{w0} g_{w0}``.

    Lebesgue is the reference measure; the series stops once a term falls
    below ``tol``.
    """
    x = grid(n_grid)
    gv = [o(x) for o in obs_per_map]
    v = gv[omega[0]].copy()
    total = [float(np.mean(v * v))]
    for j in range(1, omega.size):
        v = transfer_matrix(maps[omega[j - 1]], n_grid) @ v
        term = float(np.mean(gv[omega[j]] * v))
        total.append(2 * term)
        if abs(term) < tol and np.max(np.abs(v)) < tol:
            break
    return math.fsum(total)


def random_dichotomy(maps: Sequence[CircleMap], obs: Union[Observable, Sequence[Observable]],
                     trials: int = 12, n: int = 256, seed: int = 0, n_grid: int = 256,
                     M_terms: int = 60, workers: int = 1,
                     growth_floor: float = 1e-8) -> RandomReport:
    """Classify variance growth along i.i.d. random sequences of maps.

    Each trial draws ``omega`` uniformly; ``g_k = g_{omega_k}`` is tied to the
    map index.  Growth is detected from ``(sigma_n^2 - sigma_{n/2}^2)/(n/2)``
    across trials and is combined with the coboundary verdict.
    """
    maps = list(maps)
    per_map = list(obs) if isinstance(obs, (list, tuple)) else [obs] * len(maps)
    if len(per_map) != len(maps):
        raise ValueError("need one observable per map (or a single shared one)")
    if n < 8:
        raise ValueError("random_dichotomy needs n >= 8")

    def one(i):
        om = iid(len(maps), int(np.random.SeedSequence(seed, spawn_key=(0xD1C, i))
                                .generate_state(1)[0]))
        seq = SequenceSpec(maps, per_map, om, om)
        cs = center_sequence(seq, n, n_grid)
        s_n = variance(cs, n).sigma2
        s_h = variance(cs, n // 2).sigma2
        beta = beta_series(maps, per_map, om.take(n), n_grid)
        return s_n, s_h, beta

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            out = list(ex.map(one, range(trials)))
    else:
        out = [one(i) for i in range(trials)]
    s_n = np.array([o[0] for o in out])
    s_h = np.array([o[1] for o in out])
    betas = [o[2] for o in out]
    per_n = s_n / n
    rate = (s_n - s_h) / (n - n // 2)
    mean_pn = float(np.mean(per_n))
    se_pn = float(np.std(per_n, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    mean_r = float(np.mean(rate))
    se_r = float(np.std(rate, ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    growth = (mean_pn >= 10 * se_pn) and (mean_r >= max(10 * se_r, growth_floor))
    trend_ok = not growth
    cob = coboundary_solve(maps, per_map, M_terms, n_grid)
    if cob.verdict == "INCONCLUSIVE":
        cls = "INCONCLUSIVE"
    elif growth and cob.verdict == "NOT_COBOUNDARY":
        cls = "LINEAR"
    elif not growth and cob.verdict == "COBOUNDARY":
        cls = "BOUNDED"
    else:
        cls = "CONFLICT"
    return RandomReport(n, trials, per_n.tolist(), s_h.tolist(), rate.tolist(), mean_pn,
                        se_pn, float(np.mean(betas)), betas, bool(growth), bool(trend_ok), cob.to_dict(), cls,
                        cls == "CONFLICT")


def fit_growth_constant(ns, sigma2) -> float:
    """Post hoc ``B`` in ``sigma_n^2 >= B n`` (least squares slope through zero)."""
    ns = np.asarray(ns, float)
    s = np.asarray(sigma2, float)
    return float(ns @ s / (ns @ ns))

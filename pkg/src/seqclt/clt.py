"""Centering, variance, characteristic functions and CLT error diagnostics.

For a sequential system with pushed densities ``h_k = L_{k-1} ... L_0 rho``
the centered observables are ``ghat_k = g_k - int g_k h_k`` and the
normalized Birkhoff sum is ``S_n / sigma_n`` with ``sigma_n^2 = E S_n^2``.
Its characteristic function is computed exactly (up to discretization) by
iterating twisted operators::

    Upsilon_n(lam) = int L_{n-1,lam} ... L_{0,lam} rho,
    L_{k,lam} h = L_k(exp(i lam ghat_k / sigma_n) h).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from .cones import ConeContext, cone_norm, extremal_elements, random_cone_element
from .maps import SequenceSpec
from .spectral import DensityCache, GridFunction, OperatorChain, grid

#: default twist cap on |lambda| / sigma_n
TWIST_CAP = 0.5
#: default constant in the window L_n = C_L ln sigma_n
C_L_DEFAULT = 4.0
#: columns below this fraction of the initial scale are dropped in full variance
PRUNE_TOL = 1e-20
MC_CHUNK = 4096
DEGENERATE_TOL = 1e-20


class DegenerateVarianceError(ValueError):
    """sigma_n = 0: the normalized sum is undefined."""


@dataclass
class CenteredSequence:
    """Centered observables and pushed densities up to horizon ``n``.

    Attributes
    ----------
    centers : ndarray, shape (n,)
    hatg : list of GridFunction
    densities : DensityCache
        ``h_0 = rho, ..., h_n``.
    """

    seq: SequenceSpec
    n: int
    n_grid: int
    centers: np.ndarray
    hatg: list
    chain: OperatorChain
    densities: DensityCache
    _sigma2: dict = field(default_factory=dict, repr=False)

    @property
    def hatg_values(self) -> np.ndarray:
        return np.stack([g.values for g in self.hatg])

    def h(self, k: int) -> np.ndarray:
        return self.densities.get(k)

    def centering_residual(self) -> np.ndarray:
        return np.array([np.mean(self.hatg[k].values * self.h(k)) for k in range(self.n)])

    def obs_at(self, k: int):
        return self.seq.obs_at(k)

    def sigma2(self, n: Optional[int] = None) -> float:
        """Cached full-mode variance."""
        n = self.n if n is None else n
        if n not in self._sigma2:
            self._sigma2[n] = variance(self, n).sigma2
        return self._sigma2[n]


def center_sequence(seq: SequenceSpec, n: int, n_grid: int = 256,
                    check: bool = True) -> CenteredSequence:
    """Push ``rho`` forward and center every ``g_k`` against ``h_k``."""
    if n < 1:
        raise ValueError("horizon n must be >= 1")
    chain = OperatorChain(seq, n_grid, check=check)
    dens = DensityCache(chain)
    x = grid(n_grid)
    obs_idx = seq.obs_indices(n)
    samples = {i: seq.observables[i](x) for i in np.unique(obs_idx)}
    centers = np.empty(n)
    hatg = []
    for k in range(n):
        g = samples[obs_idx[k]]
        h = dens.get(k)
        c = np.mean(g * h) / np.mean(h)
        centers[k] = c
        hatg.append(GridFunction(g - c))
    dens.get(n)
    chain.hatg = [g.values for g in hatg]
    return CenteredSequence(seq, n, n_grid, centers, hatg, chain, dens)


# variance ---------------------------------------------------------------------

@dataclass
class VarianceResult:
    sigma2: float
    mode: str
    n: int
    window: Optional[int] = None
    C_L: Optional[float] = None
    table: Optional[np.ndarray] = None     # table[k, lag] = Sigma_{k, k-lag}
    iterations: int = 0


def _variance_pass(cs: CenteredSequence, n: int, max_lag: Optional[int],
                   table_lags: int = 0):
    """Sum pair covariances ``Sigma_{k,j}`` with ``k - j <= max_lag``."""
    chain = cs.chain
    N = cs.n_grid
    scale = max(np.max(np.abs(cs.hatg[k].values * cs.h(k))) for k in range(n))
    if scale == 0.0:
        return 0.0, np.zeros((n, table_lags + 1)) if table_lags else None
    W = np.zeros((N, 0))
    births = np.zeros(0, dtype=int)
    diag, cross = [], []
    table = np.zeros((n, table_lags + 1)) if table_lags else None
    for k in range(n):
        g = cs.hatg[k].values
        h = cs.h(k)
        skk = float(np.mean(g * g * h))
        diag.append(skk)
        if table is not None:
            table[k, 0] = skk
        if W.shape[1]:
            terms = (g @ W) / N
            cross.append(math.fsum(terms))
            if table is not None:
                lags = k - births
                sel = lags <= table_lags
                table[k, lags[sel]] = terms[sel]
        W = np.concatenate([W, (g * h)[:, None]], axis=1)
        births = np.append(births, k)
        if k + 1 < n:
            W = chain.apply(k, W)
            keep = np.max(np.abs(W), axis=0) > PRUNE_TOL * scale
            if max_lag is not None:
                keep &= (k + 1 - births) <= max_lag
            W, births = W[:, keep], births[keep]
    return math.fsum(diag) + 2.0 * math.fsum(cross), table


def variance(cs: CenteredSequence, n: Optional[int] = None, mode: str = "full",
             window: Optional[int] = None, C_L: float = C_L_DEFAULT,
             table_lags: int = 0) -> VarianceResult:
    """``sigma_n^2`` in full or banded mode.

    Parameters
    ----------
    mode : {"full", "banded"}
        Banded mode keeps pairs with ``|k - j| <= L_n``.
    window : int, optional
        Explicit ``L_n``; otherwise ``L_n = floor(C_L ln sigma_n)`` is found by
        fixed-point iteration starting from the diagonal variance.
    table_lags : int
        Store ``Sigma_{k,k-lag}`` for ``lag <= table_lags``.
    """
    n = cs.n if n is None else n
    if not 1 <= n <= cs.n:
        raise ValueError(f"n must lie in [1, {cs.n}]")
    if mode == "full":
        s2, table = _variance_pass(cs, n, None, table_lags)
        return VarianceResult(s2, "full", n, table=table)
    if mode != "banded":
        raise ValueError(f"unknown variance mode {mode!r}")
    if window is not None:
        if window < 1:
            raise ValueError(f"banded window L_n = {window} < 1 rejected")
        s2, table = _variance_pass(cs, n, window, table_lags)
        return VarianceResult(s2, "banded", n, window, None, table)
    s2, _ = _variance_pass(cs, n, 0)
    seen = []
    for it in range(1, 20):
        L = int(math.floor(C_L * 0.5 * math.log(s2))) if s2 > 0 else 0
        if L < 1:
            raise ValueError(
                f"banded window L_n = floor(C_L ln sigma_n) = {L} < 1 rejected "
                f"(sigma_n^2 = {s2:.6g})")
        if L in seen:
            break
        seen.append(L)
        s2, table = _variance_pass(cs, n, L, table_lags)
    return VarianceResult(s2, "banded", n, L, C_L, table, it)


def sigma_n(cs: CenteredSequence, n: Optional[int] = None) -> float:
    """``sigma_n``; rejects variances at round-off level.

    The reference scale is the raw second moment ``sum_k int g_k^2 h_k``.
    """
    n = cs.n if n is None else n
    s2 = cs.sigma2(n)
    raw = math.fsum(float(np.mean((cs.hatg[k].values + cs.centers[k]) ** 2 * cs.h(k)))
                    for k in range(n))
    if not s2 > DEGENERATE_TOL * raw:
        raise DegenerateVarianceError(f"sigma_n^2 = {s2:.3g}: degenerate normalized sum")
    return math.sqrt(s2)


# characteristic function ---------------------------------------------------------

@dataclass
class UpsilonTable:
    lam: np.ndarray
    values: np.ndarray        # complex, NaN where flagged
    flagged: np.ndarray       # bool, |lam|/sigma_n above the cap
    sigma: float
    n: int
    cap: Optional[float]

    @property
    def abs_err(self) -> np.ndarray:
        return np.abs(self.values - np.exp(-0.5 * self.lam**2))

    def rows(self):
        for l, v, e in zip(self.lam, self.values, self.abs_err):
            yield (l, v.real, v.imag, e)


def twisted_integrals(cs: CenteredSequence, n: int, t: np.ndarray,
                      start: Optional[np.ndarray] = None) -> np.ndarray:
    """``int L_{n-1,t} ... L_{0,t} v`` for each twist in ``t`` (batched)."""
    v = cs.h(0) if start is None else start
    V = np.repeat(np.asarray(v, dtype=complex)[:, None], t.size, axis=1)
    for k in range(n):
        V = cs.chain.apply(k, V, t=t)
    return np.mean(V, axis=0)


def char_fn(cs: CenteredSequence, lambdas, n: Optional[int] = None,
            cap: Optional[float] = TWIST_CAP, sigma: Optional[float] = None) -> UpsilonTable:
    """Characteristic function of ``S_n / sigma_n`` on a grid of ``lambda``.

    Entries with ``|lambda| / sigma_n > cap`` are flagged and left as NaN;
    ``cap=None`` disables the cap.
    """
    n = cs.n if n is None else n
    lam = np.atleast_1d(np.asarray(lambdas, dtype=float))
    sig = sigma_n(cs, n) if sigma is None else sigma
    t = lam / sig
    flagged = np.zeros(lam.size, bool) if cap is None else np.abs(t) > cap
    vals = np.full(lam.size, np.nan + 1j * np.nan)
    ok = ~flagged
    if np.any(ok):
        vals[ok] = twisted_integrals(cs, n, t[ok])
    return UpsilonTable(lam, vals, flagged, sig, n, cap)


def theorem_bound_terms(table: UpsilonTable, varpi: float = 4.0) -> dict:
    """Shape terms ``(ln s)^2 lam^4/s^2``, ``lam^2 s^-varpi``, ``n lam^3/s^3``.

    The constant ``C`` multiplying the first term is fitted as the smallest
    value making the sum dominate the observed error; ``varpi`` is displayed
    only.
    """
    s, n = table.sigma, table.n
    lam = np.abs(table.lam)
    t1 = math.log(s) ** 2 * lam**4 / s**2
    t2 = lam**2 * s**(-varpi)
    t3 = n * lam**3 / s**3
    err = table.abs_err
    ok = np.isfinite(err) & (t1 > 0)
    C = float(np.max(np.maximum(err[ok] - t2[ok] - t3[ok], 0.0) / t1[ok])) if np.any(ok) else 0.0
    return {"C_fit": C, "varpi": varpi, "bound": C * t1 + t2 + t3}


# Berry-Esseen ---------------------------------------------------------------------

@dataclass
class FellerBound:
    T: float
    integral: float
    tail: float
    bound: float
    truncated: bool
    quad_error: float
    nodes: int


def berry_esseen(cs: CenteredSequence, T: float, n: Optional[int] = None,
                 cap: Optional[float] = TWIST_CAP, intervals: int = 128) -> FellerBound:
    """Smoothing-inequality bound on ``sup_x |F_n(x) - Phi(x)|``.

    ``(1/pi) int_{-T}^{T} |Upsilon_n(z) - e^{-z^2/2}| / |z| dz + 24/(pi T)``,
    integrated by composite Simpson on ``[0, T]`` (the integrand is even)
    with an extra refined panel near zero.  At ``z = 0`` the integrand is
    replaced by its limit ``|Upsilon_n'(0)| = |sum_k int ghat_k h_k| / sigma_n``.
    """
    n = cs.n if n is None else n
    if T <= 0:
        raise ValueError("T must be positive")
    sig = sigma_n(cs, n)
    truncated = False
    if cap is not None and T > cap * sig:
        T, truncated = cap * sig, True
    limit0 = abs(float(np.sum(cs.centering_residual()[:n]))) / sig

    def integrand(z):
        z = np.asarray(z, float)
        pos = z > 0
        out = np.full(z.shape, limit0)
        if np.any(pos):
            ups = twisted_integrals(cs, n, z[pos] / sig)
            out[pos] = np.abs(ups - np.exp(-0.5 * z[pos] ** 2)) / z[pos]
        return out

    def simpson(f, h):
        return h / 3 * (f[0] + f[-1] + 4 * np.sum(f[1:-1:2]) + 2 * np.sum(f[2:-1:2]))

    z0 = T / intervals
    fine = np.linspace(0.0, z0, 17)
    coarse = np.linspace(z0, T, intervals)           # intervals - 1 panels (made even below)
    if (coarse.size - 1) % 2:
        coarse = np.linspace(z0, T, intervals + 1)
    f_all = integrand(np.concatenate([fine, coarse]))
    ff, fc = f_all[:fine.size], f_all[fine.size:]
    hc = coarse[1] - coarse[0]
    I = simpson(ff, fine[1] - fine[0]) + simpson(fc, hc)
    # Richardson-style error estimate from the half-resolution rule
    if fc.size >= 5 and (fc.size - 1) % 4 == 0:
        I_half = simpson(ff[::2], 2 * (fine[1] - fine[0])) + simpson(fc[::2], 2 * hc)
        qerr = abs(I - I_half) / 15
    else:
        qerr = float("nan")
    integral = 2.0 * I / math.pi
    tail = 24.0 / (math.pi * T)
    return FellerBound(T, integral, tail, integral + tail, truncated,
                       2.0 * qerr / math.pi, int(f_all.size))


def default_T(sigma: float, n: int) -> float:
    """``T = sigma^3 / (n (ln sigma)^2)``."""
    return sigma**3 / (n * math.log(sigma) ** 2)


# Monte Carlo ----------------------------------------------------------------------

@dataclass
class MonteCarloResult:
    M: int
    seed: int
    n: int
    sigma: float
    ks: float
    dkw: float
    samples: np.ndarray = field(repr=False)        # sorted S_n / sigma_n
    quantiles: dict = field(default_factory=dict)

    def cdf_rows(self, xs=None):
        xs = np.linspace(-4, 4, 161) if xs is None else np.asarray(xs)
        F = np.searchsorted(self.samples, xs, side="right") / self.M
        P = norm.cdf(xs)
        return [(x, f, p, f - p) for x, f, p in zip(xs, F, P)]


def _periodic_table(v: np.ndarray, up: int) -> np.ndarray:
    """Zero-padded upsampling by ``up``, periodically extended by one point."""
    g = GridFunction(v).resample(v.size * up).values
    return np.append(g, g[0])


def _cdf_table(v: np.ndarray, up: int):
    """Exact cumulative of the trigonometric interpolant on a fine grid."""
    N = v.size
    M = N * up
    c = np.fft.fft(v) / N
    k = np.fft.fftfreq(N, 1.0 / N)
    x = np.arange(M + 1) / M
    cum = c[0].real * x
    for kk in range(1, N):
        ck = c[kk]
        kv = k[kk]
        if kk == N // 2:
            cum = cum + (ck.real * np.sin(np.pi * N * x) / (np.pi * N))
        else:
            cum = cum + (ck * (np.exp(2j * np.pi * kv * x) - 1) / (2j * np.pi * kv)).real
    cum = np.maximum.accumulate(cum / cum[-1])
    return x, cum


def _interp_periodic(table: np.ndarray, x: np.ndarray) -> np.ndarray:
    M = table.size - 1
    s = x * M
    i = np.minimum(s.astype(np.int64), M - 1)
    w = s - i
    return (1 - w) * table[i] + w * table[i + 1]


class _BackwardSampler:
    """Exact-in-law orbit sampler running the time-reversed chain.

    ``x_{n-1} ~ h_{n-1}``; then ``x_k`` is the preimage ``y_b`` of
    ``x_{k+1}`` under ``f_k`` chosen with probability
    ``h_k(y_b) / (f_k'(y_b) h_{k+1}(x_{k+1}))``.  Inverse branches contract,
    so the recursion is numerically stable, unlike forward iteration.
    """

    def __init__(self, cs: CenteredSequence, n: int, up: int = 16):
        self.cs, self.n = cs, n
        seq = cs.seq
        self.map_idx = seq.map_indices(n)
        self.obs_idx = seq.obs_indices(n)
        self.const = []
        self.tables = []
        for k in range(n):
            h = cs.h(k)
            flat = np.ptp(h) <= 1e-14 * np.max(np.abs(h))
            self.const.append(flat)
            self.tables.append(None if flat else _periodic_table(h, up))
        self.cdf_x, self.cdf = _cdf_table(cs.h(n - 1), up)

    def chunk(self, seed: int, index: int, size: int) -> np.ndarray:
        ss = np.random.SeedSequence(seed, spawn_key=(0xC17, index))
        rng = np.random.Generator(np.random.Philox(ss))
        U = rng.random((self.n, size))
        seq, cs = self.cs.seq, self.cs
        x = np.interp(U[0], self.cdf, self.cdf_x)
        x = np.minimum(x, np.nextafter(1.0, 0.0))
        S = np.zeros(size)
        for k in range(self.n - 1, -1, -1):
            if k < self.n - 1:
                f = seq.maps[self.map_idx[k]]
                ys = f.preimages(x)                             # (D, size)
                D = f.degree
                if f.is_linear and self.const[k]:
                    b = np.minimum((U[k + 1] * D).astype(np.int64), D - 1)
                    x = ys[b, np.arange(size)]
                else:
                    w = 1.0 / f.derivative(ys)
                    if not self.const[k]:
                        w = w * _interp_periodic(self.tables[k], ys)
                    cw = np.cumsum(w, axis=0)
                    b = np.sum(cw < (U[k + 1] * cw[-1])[None, :], axis=0)
                    b = np.minimum(b, D - 1)
                    x = ys[b, np.arange(size)]
            g = seq.observables[self.obs_idx[k]]
            S += g(x) - cs.centers[k]
        return S


def monte_carlo(cs: CenteredSequence, M: int, seed: int, n: Optional[int] = None,
                workers: int = 1, chunk: int = MC_CHUNK) -> MonteCarloResult:
    """Empirical law of ``S_n / sigma_n`` and its KS distance to ``Phi``.

    Randomness is drawn per fixed-size chunk from a counter-based stream
    keyed by ``(seed, chunk index)``, so the result is bit-identical for
    any number of workers.
    """
    n = cs.n if n is None else n
    if M < 1000:
        raise ValueError("monte_carlo needs M >= 1000")
    sig = sigma_n(cs, n)
    sampler = _BackwardSampler(cs, n)
    sizes = [min(chunk, M - i * chunk) for i in range((M + chunk - 1) // chunk)]
    jobs = [(seed, i, s) for i, s in enumerate(sizes)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(lambda a: sampler.chunk(*a), jobs))
    else:
        parts = [sampler.chunk(*a) for a in jobs]
    z = np.sort(np.concatenate(parts) / sig)
    i = np.arange(1, M + 1)
    P = norm.cdf(z)
    ks = float(max(np.max(i / M - P), np.max(P - (i - 1) / M)))
    dkw = math.sqrt(math.log(2 / 0.01) / (2 * M))
    qs = {str(p): float(np.quantile(z, p)) for p in (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)}
    return MonteCarloResult(M, seed, n, sig, ks, dkw, z, qs)


def mc_char_fn(cs: CenteredSequence, lam: float, M: int, seed: int,
               n: Optional[int] = None, workers: int = 1):
    """Monte Carlo estimate of ``E exp(i lam S_n / sigma_n)`` and its standard error."""
    n = cs.n if n is None else n
    sig = sigma_n(cs, n)
    sampler = _BackwardSampler(cs, n)
    sizes = [min(MC_CHUNK, M - i * MC_CHUNK) for i in range((M + MC_CHUNK - 1) // MC_CHUNK)]
    jobs = [(seed, i, s) for i, s in enumerate(sizes)]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        S = np.concatenate(list(ex.map(lambda a: sampler.chunk(*a), jobs)))
    e = np.exp(1j * lam * S / sig)
    se = math.sqrt((np.var(e.real) + np.var(e.imag)) / M)
    return complex(np.mean(e)), se


# condition diagnostics ------------------------------------------------------------

@dataclass
class Diagnostics:
    C_star: float
    C_star_window: tuple
    K: float
    K_by_power: dict
    K_twist: float
    theta_fit: dict           # lambda -> fitted rank-one decay rate
    rank_one_const: dict      # lambda -> fitted constant
    residuals: dict           # lambda -> list of residual r(length)
    ell_min: float
    ell_min_where: tuple
    theta1: dict              # lambda -> list of (k, |Theta^1_k(0, lambda)|)
    window_L: int
    flagged_lambdas: list
    failed: list
    sigma: float

    @property
    def passed(self) -> bool:
        return not self.failed

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        for key in ("theta_fit", "rank_one_const", "residuals", "theta1"):
            d[key] = {repr(k): v for k, v in d[key].items()}
        return d


def _probe_functions(a: float, n_grid: int, count: int, seed: int) -> np.ndarray:
    """Cone probes: random interior elements plus near-boundary ones."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    x = grid(n_grid)
    cols = [random_cone_element(rng, a)(x) for _ in range(count)]
    cols += [e(x) for e in extremal_elements(a, 4)]
    return np.stack(cols, axis=1)


def _fit_decay(lengths: np.ndarray, r: np.ndarray, floor: float = 1e-12):
    """Log-linear fit ``r ~ C theta^length`` over points above ``floor``."""
    ok = r > floor
    if np.count_nonzero(ok) >= 3:
        p = np.polyfit(lengths[ok], np.log(r[ok]), 1)
        return float(math.exp(p[0])), float(math.exp(p[1]))
    if not np.any(ok):
        return 0.0, float(r[0]) if r.size else 0.0
    # residual hits the floor after at most two points: the decay per step
    # is at least the drop from the last resolved value to the floor
    last = int(np.nonzero(ok)[0][-1])
    nxt = last + 1 if last + 1 < r.size else last
    steps = max(1, lengths[nxt] - lengths[last])
    return float(min(1.0, (floor / r[last]) ** (1.0 / steps))), float(r[ok][0])


def condition_diagnostics(cs: CenteredSequence, ctx: ConeContext,
                          lambdas: Sequence[float] = (0.0, 0.5, 1.0),
                          windows: Sequence[int] = (1, 2, 4, 8, 16, 32, 64),
                          n: Optional[int] = None, cap: float = TWIST_CAP,
                          probes: int = 12, seed: int = 0, starts: int = 3,
                          max_rank_len: int = 24, C_L: float = C_L_DEFAULT,
                          theta1_points: int = 12) -> Diagnostics:
    """Fit the constants of the abstract conditions on one system.

    Parameters
    ----------
    ctx : ConeContext
        Supplies the aperture ``a`` for cone norms and probe generation.
    lambdas : sequence of float
        Twist values; those with ``|lambda|/sigma_n > cap`` are flagged.
    windows : sequence of int
        Composition lengths (at most 64) for the power-boundedness fit.
    starts : int
        Number of window starting points spread over ``[0, n)``.
    """
    n = cs.n if n is None else n
    sig = sigma_n(cs, n)
    chain = cs.chain
    a = ctx.a
    P = _probe_functions(a, cs.n_grid, probes, seed)
    pnorm = np.array([cone_norm(P[:, i], ctx) for i in range(P.shape[1])])
    failed = []

    def norms(V):
        return np.array([cone_norm(V[:, i], ctx) for i in range(V.shape[1])])

    # (C-4) power boundedness over windows of length <= 64
    starts_at = sorted({int(s) for s in np.linspace(0, max(0, n - 1), starts)})
    C_star, C_where = 0.0, (0, 0)
    for j in starts_at:
        V = P.copy()
        for length in range(1, max(windows) + 1):
            if j + length - 1 >= n:
                break
            V = chain.apply(j + length - 1, V)
            if length in windows:
                r = float(np.max(norms(V) / pnorm))
                if r > C_star:
                    C_star, C_where = r, (j, j + length - 1)

    # (O-1) multiplier bounds with raw g_k powers
    x = grid(cs.n_grid)
    K_by = {}
    ks = sorted({int(k) for k in np.linspace(0, n - 1, min(n, 8))})
    for p in (1, 2, 3):
        best = 0.0
        for k in ks:
            g = cs.obs_at(k)(x)
            V = chain.apply(k, P, mult=g**p)
            best = max(best, float(np.max(norms(V) / pnorm)) ** (1.0 / p))
        K_by[p] = best
    K = max(K_by.values())

    lam_ok = [float(l) for l in lambdas if abs(l) / sig <= cap]
    flagged = [float(l) for l in lambdas if abs(l) / sig > cap]
    Pc = P.astype(complex)

    # (O-2) twisted power boundedness
    K_twist = 0.0
    for lam in lam_ok:
        t = lam / sig
        for j in starts_at:
            V = Pc.copy()
            for length in range(1, max(windows) + 1):
                if j + length - 1 >= n:
                    break
                V = chain.apply(j + length - 1, V, t=t)
                if length in windows:
                    K_twist = max(K_twist, float(np.max(norms(V) / pnorm)))

    # (O-3) rank-one structure and the lower bound on l_{k,j}
    theta_fit, consts, resid = {}, {}, {}
    ell_min, ell_where = math.inf, (0, 0, 0)
    for lam in lam_ok:
        t = lam / sig
        rmax = np.zeros(max_rank_len)
        for j in starts_at:
            V = np.concatenate([np.ones((cs.n_grid, 1)), P], axis=1).astype(complex)
            for length in range(1, max_rank_len + 1):
                k = j + length
                if k > n:
                    break
                V = chain.apply(k - 1, V, t=t)
                alpha = np.mean(V[:, 0])
                ell = np.mean(V[:, 1:], axis=0) / alpha
                R = V[:, 1:] - np.outer(V[:, 0], ell)
                r = norms(R) / (abs(alpha) * pnorm)
                rmax[length - 1] = max(rmax[length - 1], float(np.max(r)))
        lengths = np.arange(1, max_rank_len + 1)
        th, C = _fit_decay(lengths, rmax)
        theta_fit[lam], consts[lam], resid[lam] = th, C, rmax.tolist()
        if not th < 1:
            failed.append(f"O-3 rank-one decay theta_fit={th:.4g} at lambda={lam}")
        # lower bound: l_{k,j}(h_{j,l}) for l < j < k
        for l0 in starts_at:
            for gap1 in (1, 4, 16):
                j = l0 + gap1
                if j >= n:
                    continue
                hj = chain.push(np.ones(cs.n_grid, dtype=complex), l0, j - 1, t=t)
                hj = hj / np.mean(hj)
                for gap2 in (1, 4, 16):
                    k = j + gap2
                    if k > n:
                        continue
                    num = np.mean(chain.push(hj, j, k - 1, t=t))
                    den = np.mean(chain.push(np.ones(cs.n_grid, dtype=complex), j, k - 1, t=t))
                    v = abs(num / den)
                    if v < ell_min:
                        ell_min, ell_where = v, (k, j, l0)

    # Theta^1_k(0, lambda): twist lambda outside the window |i - k| <= L_n, none inside
    L_n = max(1, int(math.floor(C_L * math.log(sig)))) if sig > 1 else 1
    theta1 = {}
    kk = sorted({int(k) for k in np.linspace(0, n - 1, min(n, theta1_points))})
    for lam in lam_ok:
        t = lam / sig
        rows = []
        for k in kk:
            v = cs.h(0).astype(complex)
            for i in range(n):
                if i == k:
                    v = cs.hatg[k].values * v
                v = chain.apply(i, v, t=0.0 if abs(i - k) <= L_n else t)
            rows.append((k, float(abs(np.mean(v)))))
        theta1[lam] = rows

    for name, val in (("C_star", C_star), ("K", K), ("K_twist", K_twist)):
        if not math.isfinite(val):
            failed.append(f"{name} not finite")
    return Diagnostics(C_star, C_where, K, K_by, K_twist, theta_fit, consts, resid,
                       float(ell_min), ell_where, theta1, L_n, flagged, failed, sig)

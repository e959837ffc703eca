"""Real and complex cones of log-Lipschitz densities.

The real cone is ``C_a = {h : |h'| <= a h}``.  It is described by the dual
functionals ``l_{x,v}(h) = a h(x) - v h'(x)`` with ``v = +-1``; sampling
``x`` on the grid gives finite-resolution versions of the Hilbert metric,
the complex cone ``C_C = C*(C_a + i C_a)`` and its gauge ``delta_C``.
Sampled metrics are lower bounds of the exact suprema.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .maps import CircleMap, Observable, expansion_constants
from .spectral import GridFunction, OperatorChain, OperatorChainSpec, grid, wavenumbers

#: membership tolerance on the margin ``min(a h - |h'|)``
MEMBER_TOL = 1e-10
#: angles used by the complexified norm sweep (multiple of 4)
N_ANGLES = 256


class ConeDomainError(ValueError):
    """Argument outside the cone where a metric is undefined."""


@dataclass(frozen=True)
class ConeContext:
    """Cone parameters.

    Parameters
    ----------
    a : float
        Aperture, ``a > 1``.
    nu : float
        Contraction target for the aperture, ``L C_a ⊂ C_{nu a}``.
    n_grid : int
        Grid used when sampling cone elements.
    tau : float, optional
        Interior offset of the complex dual functionals; defaults to ``kappa/10``.
    theta : float, optional
        Expansion constant; when given, ``nu`` must lie in ``(1/theta, 1)``.
    """

    a: float
    nu: float
    n_grid: int = 256
    tau: Optional[float] = None
    theta: Optional[float] = None

    def __post_init__(self):
        if not self.a > 1:
            raise ValueError(f"cone aperture must satisfy a > 1, got a = {self.a}")
        lo = 0.0 if self.theta is None else 1.0 / self.theta
        if not lo < self.nu < 1:
            raise ValueError(
                f"nu = {self.nu} violates ν ∈ (ϑ⁻¹, 1) = ({lo:.6g}, 1)"
            )
        if self.tau is None:
            object.__setattr__(self, "tau", self.kappa / 10)
        if not 0 < self.tau < self.kappa:
            raise ValueError(f"tau = {self.tau} must lie in (0, kappa) = (0, {self.kappa:.6g})")

    @classmethod
    def for_family(cls, family: Sequence[CircleMap], a: float, nu: float,
                   n_grid: int = 256, tau: Optional[float] = None) -> "ConeContext":
        theta, _ = expansion_constants(family)
        return cls(a, nu, n_grid, tau, theta)

    @property
    def kappa(self) -> float:
        return 0.5 * math.exp(-self.a)

    def dual(self, h) -> np.ndarray:
        """Values of all sampled ``l_{x,v}``; shape ``(2N,) + batch``."""
        return dual_values(_samples(h), self.a)

    def mass(self, h):
        return np.mean(_samples(h), axis=0)


def _samples(h) -> np.ndarray:
    return h.values if isinstance(h, GridFunction) else np.asarray(h)


def spectral_derivative(v: np.ndarray) -> np.ndarray:
    """Derivative of sample arrays along axis 0."""
    n = v.shape[0]
    k = wavenumbers(n)
    k[n // 2] = 0.0
    k = k.reshape((n,) + (1,) * (v.ndim - 1))
    d = np.fft.ifft(2j * np.pi * k * np.fft.fft(v, axis=0), axis=0)
    return d if np.iscomplexobj(v) else d.real


def dual_values(v: np.ndarray, a: float) -> np.ndarray:
    d = spectral_derivative(v)
    return np.concatenate([a * v - d, a * v + d], axis=0)


# real cone --------------------------------------------------------------------

@dataclass(frozen=True)
class Margin:
    margin: float
    min_value: float
    member: bool


def membership_margin(h, ctx: ConeContext, aperture: Optional[float] = None) -> Margin:
    """``min (a h - |h'|)`` and ``min h`` over the grid.

    ``aperture`` overrides ``ctx.a`` (e.g. ``nu * a`` for the image cone).
    """
    v = _samples(h)
    if np.iscomplexobj(v):
        raise ValueError("membership_margin needs a real function")
    a = ctx.a if aperture is None else aperture
    margin = float(np.min(a * v - np.abs(spectral_derivative(v))))
    mn = float(np.min(v))
    return Margin(margin, mn, margin >= -MEMBER_TOL and mn > 0)


def _real_norms(v: np.ndarray, a: float) -> np.ndarray:
    return np.max(np.abs(v) + np.abs(spectral_derivative(v)) / a, axis=0)


def cone_norm(h, ctx: ConeContext, complex_flag: Optional[bool] = None) -> float:
    """``sup |h| + |h'|/a``; complex functions via the ``theta``-sweep norm."""
    v = _samples(h)
    if complex_flag is None:
        complex_flag = np.iscomplexobj(v)
    if not complex_flag:
        return float(_real_norms(np.real(v), ctx.a))
    v = v.astype(complex)
    ang = np.exp(2j * np.pi * np.arange(N_ANGLES) / N_ANGLES)
    rot = (v[:, None] * ang[None, :]).real            # Re(e^{i theta} h), one column per angle
    nx = _real_norms(rot, ctx.a)
    # Im(e^{i theta} h) = -Re(e^{i(theta + pi/2)} h): quarter-turn index shift
    ny = np.roll(nx, -N_ANGLES // 4)
    return float(np.max(np.sqrt(nx**2 + ny**2)))


def hilbert_distance(h, g, ctx: ConeContext) -> float:
    """Sampled Hilbert projective distance between two strict cone members."""
    dh, dg = ctx.dual(h), ctx.dual(g)
    if np.iscomplexobj(dh) or np.iscomplexobj(dg):
        raise ValueError("hilbert_distance needs real functions")
    if np.min(dh) <= 0 or np.min(dg) <= 0:
        raise ConeDomainError("hilbert_distance: argument is not a strict cone member")
    r = dh / dg
    return float(math.log(np.max(r) / np.min(r)))


# complex cone -----------------------------------------------------------------

@dataclass(frozen=True)
class Membership:
    member: bool
    worst: float
    worst_pair: tuple


def complex_membership(h, ctx: ConeContext, stride: int = 1) -> Membership:
    """Test ``Re(l(h) conj(m(h))) >= 0`` over sampled dual pairs.

    The sampled duals are the ``l_{x,v}`` at grid stride ``stride`` plus the
    mass functional.
    """
    v = _samples(h).astype(complex)
    d = ctx.dual(v)[::stride]
    d = np.append(d, ctx.a * np.mean(v))
    if not np.any(d):
        return Membership(False, 0.0, (0, 0))
    u, w = d.real, d.imag
    P = np.outer(u, u) + np.outer(w, w)
    i, j = np.unravel_index(int(np.argmin(P)), P.shape)
    worst = float(P[i, j])
    scale = cone_norm(v, ctx) ** 2
    return Membership(worst >= -MEMBER_TOL * scale, worst, (int(i), int(j)))


@dataclass(frozen=True)
class GaugeResult:
    value: float
    infinite: bool
    witness_max: tuple
    witness_min: tuple
    sample_count: int


def _gauge_samples(v: np.ndarray, ctx: ConeContext, stride: int) -> np.ndarray:
    d = ctx.dual(v)[::stride]
    m = np.mean(v, axis=0)
    d = np.concatenate([d, (ctx.a * m)[None, ...]], axis=0)
    return d + ctx.tau * m


def complex_gauge(h, g, ctx: ConeContext, stride: int = 1, check: bool = True) -> GaugeResult:
    """Sampled gauge ``delta_C(h, g)``.

    ``l = (q1 + tau m) +- i (q2 + tau m)`` with ``q1, q2`` over the sampled
    real duals (and ``a m``).  The overall sign of ``l`` cancels in the
    ratio, so two sign patterns cover all four.
    """
    vh = _samples(h).astype(complex)
    vg = _samples(g).astype(complex)
    if check:
        for name, v in (("h", vh), ("g", vg)):
            if not complex_membership(v, ctx, stride).member:
                raise ConeDomainError(f"complex_gauge: {name} is not in the complex cone")
    Ah = _gauge_samples(vh, ctx, stride)
    Ag = _gauge_samples(vg, ctx, stride)
    best_max, best_min = -np.inf, np.inf
    wmax = wmin = (0, 0, 1)
    infinite = False
    for s in (1, -1):
        num = np.abs(Ah[:, None] + 1j * s * Ah[None, :])
        den = np.abs(Ag[:, None] + 1j * s * Ag[None, :])
        if np.min(den) <= 1e-15 * np.max(den) or np.min(num) <= 1e-15 * np.max(num):
            infinite = True
            continue
        r = num / den
        i = np.unravel_index(int(np.argmax(r)), r.shape)
        j = np.unravel_index(int(np.argmin(r)), r.shape)
        if r[i] > best_max:
            best_max, wmax = float(r[i]), (int(i[0]), int(i[1]), s)
        if r[j] < best_min:
            best_min, wmin = float(r[j]), (int(j[0]), int(j[1]), s)
    count = 2 * Ah.size**2
    if infinite:
        return GaugeResult(math.inf, True, wmax, wmin, count)
    return GaugeResult(float(math.log(best_max / best_min)), False, wmax, wmin, count)


# cone elements ----------------------------------------------------------------

def random_cone_element(rng: np.random.Generator, a: float, n_modes: int = 8,
                        fill: float = 0.8) -> Observable:
    """``1 + sum u_m cos(2 pi m x + psi_m)`` strictly inside ``C_a``.

    Amplitudes satisfy ``sum 2 pi m |u_m| <= fill a (1 - sum |u_m|)``, which
    gives ``|h'| <= fill a min h``.
    """
    m = np.arange(1, n_modes + 1)
    r = rng.uniform(0.0, 1.0, n_modes) / m**2
    psi = rng.uniform(0.0, 2 * np.pi, n_modes)
    frac = rng.uniform(0.3, 1.0)
    c = frac * fill * a
    s = c / (np.sum(2 * np.pi * m * r) + c * np.sum(r))
    u = s * r
    terms = [(0, 1.0, 0.0)] + [(int(k), uk * math.cos(p), -uk * math.sin(p))
                               for k, uk, p in zip(m, u, psi)]
    return Observable(terms)


@dataclass(frozen=True)
class ExpSine:
    """``exp(c sin(2 pi (x - x0)))``; in ``C_a`` iff ``2 pi c <= a``."""

    c: float
    x0: float

    def __call__(self, x):
        return np.exp(self.c * np.sin(2 * np.pi * (np.asarray(x) - self.x0)))


def extremal_elements(a: float, count: int = 8, fill: float = 0.95) -> list:
    """Near-boundary cone elements with maximal log-derivative ``fill a``."""
    return [ExpSine(fill * a / (2 * np.pi), j / count) for j in range(count)]


# contraction certificates -------------------------------------------------------

@dataclass
class ContractionReport:
    delta_real: float
    delta_complex: float
    ratio_max: float
    tanh_bound: float
    eps_t: float
    eps_threshold: float
    eps_ok: bool
    t: float
    eps_table: dict
    ratios: list
    skipped: int
    dh_to_one_max: float
    dh_bound: float
    min_margin_nu: float
    diam_bound: float
    compare_violations: int
    mass_lower_ok: bool
    trials: int
    n_grid: int
    extra: dict = field(default_factory=dict)

    @property
    def contraction_ok(self) -> bool:
        return self.ratio_max <= self.tanh_bound + 0.05

    def to_dict(self) -> dict:
        d = asdict(self)
        d["contraction_ok"] = self.contraction_ok
        d["eps_table"] = {repr(k): v for k, v in self.eps_table.items()}
        return d


def _pairwise_max(items, fn) -> float:
    best = 0.0
    for i in range(len(items)):
        for j in range(i + 1, len(items)):
            best = max(best, fn(items[i], items[j]))
    return best


def eps_certificate(chain: OperatorChain, start: int, end: int, hs: np.ndarray,
                    ctx: ConeContext, t: float) -> float:
    """``max |l(L_t h - L h)| / l(L h)`` over sampled duals and columns of ``hs``."""
    if t == 0:
        return 0.0
    base = chain.push(hs, start, end)
    tw = chain.push(hs.astype(complex), start, end, t=t)
    return float(np.max(np.abs(dual_values(tw - base, ctx.a)) / dual_values(base, ctx.a)))


def contraction_report(spec: OperatorChainSpec, ctx: ConeContext, trials: int = 20,
                       seed: int = 0, t_values: Sequence[float] = (),
                       centered=None, n_extremal: int = 8) -> ContractionReport:
    """Sampled contraction and perturbation certificates for one operator window.

    Parameters
    ----------
    spec : OperatorChainSpec
        Window ``L_end ... L_start``; its twist (if any) defines ``eps_t``.
    ctx : ConeContext
    trials : int
        Number of random complex pairs (and of real trial elements).
    seed : int
    t_values : sequence of float
        Extra twist parameters tabulated in ``eps_table``.
    centered : object with ``hatg``, optional
        Centering used for ``t_values`` when ``spec`` is untwisted.
    n_extremal : int
        Near-boundary elements added to the diameter samples.
    """
    if trials < 2:
        raise ValueError("contraction_report needs trials >= 2")
    n = ctx.n_grid
    t0 = spec.t
    if centered is None and spec.twist is not None:
        centered = spec.twist[2]
    hatg = None if centered is None else [g.values for g in centered.hatg]
    if (t0 or any(t_values)) and hatg is None:
        raise ValueError("twisted certificates need centered observables")
    chain = OperatorChain(spec.sequence, n, hatg=hatg)
    push = lambda v: chain.push(v, spec.start, spec.end)
    x = grid(n)
    stride = max(1, n // 256)

    ss = np.random.SeedSequence(seed)
    rng = np.random.Generator(np.random.Philox(ss))
    real_trials = np.stack([random_cone_element(rng, ctx.a)(x) for _ in range(trials)], axis=1)
    cplx = []
    for _ in range(trials):
        parts = [random_cone_element(rng, ctx.a)(x) for _ in range(4)]
        z1 = np.exp(1j * rng.uniform(0, 2 * np.pi)) * rng.uniform(0.5, 2.0)
        z2 = np.exp(1j * rng.uniform(0, 2 * np.pi)) * rng.uniform(0.5, 2.0)
        cplx.append((z1 * (parts[0] + 1j * parts[1]), z2 * (parts[2] + 1j * parts[3])))
    ext = np.stack([e(x) for e in extremal_elements(ctx.a, n_extremal)], axis=1)

    # real diameter and cone mapping
    pool = np.concatenate([real_trials, ext, np.ones((n, 1))], axis=1)
    img = push(pool)
    cols = [img[:, i] for i in range(img.shape[1])]
    delta_real = _pairwise_max(cols, lambda p, q: hilbert_distance(p, q, ctx))
    one = np.ones(n)
    dh_one = max(hilbert_distance(c, one, ctx) for c in cols)
    min_margin = min(membership_margin(c, ctx, ctx.nu * ctx.a).margin for c in cols)

    # complex diameter: images of trial pairs and of extremal combinations
    gauge = lambda p, q: complex_gauge(p, q, ctx, stride=stride, check=False).value
    cimg = [push(ext[:, j] + 1j * ext[:, (j + n_extremal // 2) % n_extremal])
            for j in range(n_extremal)]
    cimg += [img[:, trials + j].astype(complex) for j in range(n_extremal)]
    cimg += [push(h) for h, _ in cplx[: max(2, trials // 2)]]
    delta_complex = _pairwise_max(cimg, gauge)

    ratios, skipped, violations = [], 0, 0
    sq2k = math.sqrt(2) / ctx.kappa
    for h, g in cplx:
        d0 = gauge(h, g)
        if not d0 >= 1e-8:
            skipped += 1
            continue
        d1 = gauge(push(h), push(g))
        ratios.append(d1 / d0)
        hn, gn = h / np.mean(h), g / np.mean(g)
        if cone_norm(hn - gn, ctx) > sq2k * d0 + 1e-6 * cone_norm(hn, ctx):
            violations += 1
    mass_ok = all(np.mean(real_trials[:, i]) >= ctx.kappa * cone_norm(real_trials[:, i], ctx)
                  for i in range(trials))

    eps_table = {float(t): eps_certificate(chain, spec.start, spec.end, real_trials, ctx, t)
                 for t in t_values}
    eps_t = eps_certificate(chain, spec.start, spec.end, real_trials, ctx, t0) if t0 else 0.0
    thr = ctx.kappa**2 * math.exp(-2 * delta_real) / (12 * math.sqrt(2))
    return ContractionReport(
        delta_real=delta_real,
        delta_complex=delta_complex,
        ratio_max=max(ratios) if ratios else 0.0,
        tanh_bound=math.tanh(delta_complex / 4),
        eps_t=eps_t,
        eps_threshold=thr,
        eps_ok=eps_t < thr,
        t=t0,
        eps_table=eps_table,
        ratios=ratios,
        skipped=skipped,
        dh_to_one_max=dh_one,
        dh_bound=2 * ctx.a + math.log((1 + ctx.nu) / (1 - ctx.nu)),
        min_margin_nu=min_margin,
        diam_bound=8 * delta_real + 2 * math.log(3 * math.sqrt(2) / ctx.kappa**2),
        compare_violations=violations,
        mass_lower_ok=bool(mass_ok),
        trials=trials,
        n_grid=n,
    )

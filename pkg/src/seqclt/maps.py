"""Expanding circle maps, trigonometric observables and index sequences.

A map in the family is a full-branch perturbation of ``x -> D x``::

    f(x) = D x + sum_m eps_m sin(2 pi m x + phi_m)   (mod 1)

and an observable is a real trigonometric polynomial.  Sequential systems
are described by two index sequences selecting, at every time ``k``, the
map ``f_k`` and the observable ``g_k`` from finite families.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

TWO_PI = 2.0 * np.pi

#: absolute tolerance on ``f(y_b) = x`` for branch inverses
BRANCH_TOL = 1e-12
BRANCH_MAXITER = 50

#: block length used by seeded i.i.d. index sequences
_IID_BLOCK = 4096


class MapDomainError(ValueError):
    """Raised when a map or family violates the uniform expansion contract."""


def _as_terms(terms, width: int) -> tuple:
    out = []
    for t in terms:
        t = tuple(t)
        if len(t) != width:
            raise ValueError(f"expected {width}-tuples of Fourier data, got {t!r}")
        out.append((int(t[0]),) + tuple(float(v) for v in t[1:]))
    return tuple(out)


def _sin_derivative(m: int, x, phase: float, order: int):
    """``d^order/dx^order sin(2 pi m x + phase)``."""
    w = TWO_PI * m
    return w**order * np.sin(w * x + phase + order * np.pi / 2)


@dataclass(frozen=True)
class CircleMap:
    """Uniformly expanding degree-``D`` map of the circle.

    Parameters
    ----------
    degree : int
        Topological degree ``D >= 2``.
    terms : sequence of (m, eps, phi)
        Perturbation harmonics ``eps sin(2 pi m x + phi)``.

    Notes
    -----
    The construction enforces ``sum 2 pi m |eps_m| < D - 1`` so that
    ``f' >= D - sum 2 pi m |eps_m| > 1`` everywhere.
    """

    degree: int
    terms: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "terms", _as_terms(self.terms, 3))
        if int(self.degree) != self.degree or self.degree < 2:
            raise MapDomainError(f"degree must be an integer >= 2, got {self.degree}")
        object.__setattr__(self, "degree", int(self.degree))
        for m, _, _ in self.terms:
            if m < 1:
                raise MapDomainError(f"harmonic index must be >= 1, got {m}")
        budget = sum(TWO_PI * m * abs(e) for m, e, _ in self.terms)
        if not budget < self.degree - 1:
            raise MapDomainError(
                f"sum 2 pi m |eps_m| = {budget:.6g} must be < D - 1 = {self.degree - 1}"
                " (uniform expansion)"
            )

    @property
    def is_linear(self) -> bool:
        return all(e == 0.0 for _, e, _ in self.terms)

    @property
    def theta_lower(self) -> float:
        """Analytic lower bound ``D - sum 2 pi m |eps_m|`` on ``f'``."""
        return self.degree - sum(TWO_PI * m * abs(e) for m, e, _ in self.terms)

    def lift(self, x):
        """Lift ``R -> R`` of the map (no reduction mod 1)."""
        x = np.asarray(x, dtype=float)
        out = self.degree * x
        for m, e, p in self.terms:
            out = out + e * np.sin(TWO_PI * m * x + p)
        return out

    def __call__(self, x):
        return np.mod(self.lift(x), 1.0)

    def derivative(self, x, order: int = 1):
        """``order``-th derivative of the lift, ``order >= 1``."""
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, float(self.degree) if order == 1 else 0.0)
        for m, e, p in self.terms:
            out = out + e * _sin_derivative(m, x, p, order)
        return out

    def preimages(self, x) -> np.ndarray:
        """All branch inverses of the points ``x``.

        Returns
        -------
        ndarray, shape (D,) + x.shape
            ``y[b]`` is the preimage on branch ``b``; the branches are
            ordered so that ``0 <= y[0] < y[1] < ... < y[D-1] < 1``.
        """
        x = np.asarray(x, dtype=float)
        D = self.degree
        if self.is_linear:
            b = np.arange(D).reshape((D,) + (1,) * x.ndim)
            return (x + b) / D
        c0 = float(self.lift(0.0))
        j0 = np.ceil(c0 - x)
        b = np.arange(D).reshape((D,) + (1,) * x.ndim)
        target = x + j0 + b                     # lies in [c0, c0 + D)
        lo = np.zeros(target.shape)
        hi = np.ones(target.shape)
        y = np.clip((target - c0) / D, 0.0, 1.0)
        for _ in range(BRANCH_MAXITER):
            F = self.lift(y) - target
            if np.all(np.abs(F) <= 0.1 * BRANCH_TOL):
                break
            neg = F < 0
            lo = np.where(neg, y, lo)
            hi = np.where(neg, hi, y)
            step = y - F / self.derivative(y)
            bad = (step <= lo) | (step >= hi)
            y = np.where(bad, 0.5 * (lo + hi), step)
        else:
            F = self.lift(y) - target
            if np.max(np.abs(F)) > BRANCH_TOL:
                raise MapDomainError(
                    "branch inversion did not converge in "
                    f"{BRANCH_MAXITER} steps (residual {np.max(np.abs(F)):.3g}); "
                    "map is ill-conditioned or not expanding"
                )
        return np.minimum(y, np.nextafter(1.0, 0.0))


@dataclass(frozen=True)
class Observable:
    """Real trigonometric polynomial ``sum c_m cos(2 pi m x) + s_m sin(2 pi m x)``.

    The ``m = 0`` entry carries the constant term (its sine part is ignored).
    """

    terms: tuple = ()

    def __post_init__(self):
        terms = _as_terms(self.terms, 3)
        for m, _, _ in terms:
            if m < 0:
                raise ValueError(f"harmonic index must be >= 0, got {m}")
        object.__setattr__(self, "terms", terms)

    @classmethod
    def constant(cls, c: float) -> "Observable":
        return cls(((0, c, 0.0),))

    @property
    def mean(self) -> float:
        """Lebesgue integral over the circle."""
        return float(sum(c for m, c, _ in self.terms if m == 0))

    @property
    def max_harmonic(self) -> int:
        return max((m for m, _, _ in self.terms), default=0)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for m, c, s in self.terms:
            if m == 0:
                out = out + c
            else:
                out = out + c * np.cos(TWO_PI * m * x) + s * np.sin(TWO_PI * m * x)
        return out

    def derivative(self, x, order: int = 1):
        """``order``-th derivative, ``order >= 1``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for m, c, s in self.terms:
            if m:
                w = TWO_PI * m
                # d^j/dx^j cos(wx) = w^j cos(wx + j pi/2)
                sh = order * np.pi / 2
                out = out + w**order * (c * np.cos(w * x + sh) + s * np.sin(w * x + sh))
        return out

    def cumulative(self, x):
        """``int_0^x g(u) du``; used for inverse-CDF sampling of densities."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for m, c, s in self.terms:
            if m == 0:
                out = out + c * x
            else:
                w = TWO_PI * m
                out = out + (c * np.sin(w * x) + s * (1.0 - np.cos(w * x))) / w
        return out

    def _dense_sup(self, order: int) -> float:
        """``sup |g^(order)|``: grid maximum polished by Newton on ``g^(order+1)``."""
        fn = self if order == 0 else (lambda x: self.derivative(x, order))
        n = max(4096, 64 * self.max_harmonic)
        x = np.arange(n) / n
        v = np.abs(fn(x))
        best = float(np.max(v))
        for i in np.argsort(v)[-4:]:
            y = x[i]
            for _ in range(4):
                d2 = float(self.derivative(y, order + 2))
                if d2 == 0.0:
                    break
                y = y - float(self.derivative(y, order + 1)) / d2
            if abs(y - x[i]) <= 1.0 / n:
                best = max(best, float(abs(fn(y))))
        return best

    @property
    def sup_norm(self) -> float:
        return _cached_norms(self)[0]

    @property
    def lipschitz(self) -> float:
        """``sup |g'|``."""
        return _cached_norms(self)[1]

    @property
    def c1_norm(self) -> float:
        """``sup |g| + sup |g'|``."""
        s, d = _cached_norms(self)
        return s + d


@lru_cache(maxsize=256)
def _cached_norms(obs: Observable) -> tuple:
    return obs._dense_sup(0), obs._dense_sup(1)


class IndexSequence:
    """Index sequence ``omega`` into a finite family.

    Use the constructors :func:`explicit`, :func:`periodic` or :func:`iid`.
    """

    def __init__(self, kind: str, values: Sequence[int] = (), n_choices: int = 0,
                 seed: int = 0):
        if kind not in ("explicit", "periodic", "iid"):
            raise ValueError(f"unknown sequence kind {kind!r}")
        self.kind = kind
        self.values = tuple(int(v) for v in values)
        self.seed = int(seed)
        if kind == "iid":
            if n_choices < 1:
                raise ValueError("iid sequence needs n_choices >= 1")
            self.n_choices = int(n_choices)
        else:
            if not self.values:
                raise ValueError(f"{kind} sequence needs at least one index")
            if min(self.values) < 0:
                raise ValueError("sequence indices must be non-negative")
            self.n_choices = max(self.values) + 1

    def __repr__(self):
        if self.kind == "iid":
            return f"iid(n_choices={self.n_choices}, seed={self.seed})"
        return f"{self.kind}({list(self.values)})"

    @property
    def max_index(self) -> int:
        return self.n_choices - 1

    def take(self, n: int, start: int = 0) -> np.ndarray:
        """Indices ``omega_start, ..., omega_{start+n-1}``."""
        k = np.arange(start, start + n)
        if self.kind == "periodic":
            return np.asarray(self.values)[k % len(self.values)]
        if self.kind == "explicit":
            if start + n > len(self.values):
                raise IndexError(
                    f"explicit sequence has {len(self.values)} entries, "
                    f"requested up to index {start + n - 1}"
                )
            return np.asarray(self.values[start:start + n], dtype=int)
        out = np.empty(n, dtype=int)
        for blk in range(start // _IID_BLOCK, (start + n - 1) // _IID_BLOCK + 1 if n else 0):
            vals = _iid_block(self.seed, self.n_choices, blk)
            lo = max(start, blk * _IID_BLOCK)
            hi = min(start + n, (blk + 1) * _IID_BLOCK)
            out[lo - start:hi - start] = vals[lo - blk * _IID_BLOCK:hi - blk * _IID_BLOCK]
        return out

    def __getitem__(self, k: int) -> int:
        return int(self.take(1, start=k)[0])


@lru_cache(maxsize=64)
def _iid_block(seed: int, n_choices: int, block: int) -> np.ndarray:
    ss = np.random.SeedSequence(seed, spawn_key=(0x5EC, block))
    rng = np.random.Generator(np.random.Philox(ss))
    vals = rng.integers(0, n_choices, size=_IID_BLOCK)
    vals.setflags(write=False)
    return vals


def explicit(values: Sequence[int]) -> IndexSequence:
    return IndexSequence("explicit", values)


def periodic(pattern: Sequence[int]) -> IndexSequence:
    return IndexSequence("periodic", pattern)


def iid(n_choices: int, seed: int) -> IndexSequence:
    """Seeded i.i.d. uniform indices; block-wise counter-based generation."""
    return IndexSequence("iid", n_choices=n_choices, seed=seed)


@dataclass(frozen=True)
class SequenceSpec:
    """Sequential system ``(f_k, g_k)`` together with the initial density.

    Parameters
    ----------
    maps, observables : sequence
        Finite families the index sequences point into.
    omega_f, omega_g : IndexSequence
        ``f_k = maps[omega_f[k]]`` and ``g_k = observables[omega_g[k]]``.
    rho : Observable, optional
        Initial density, positive with unit mass. Defaults to ``1``.
    """

    maps: tuple
    observables: tuple
    omega_f: IndexSequence = field(default_factory=lambda: periodic([0]))
    omega_g: IndexSequence = field(default_factory=lambda: periodic([0]))
    rho: Observable = field(default_factory=lambda: Observable.constant(1.0))

    def __post_init__(self):
        object.__setattr__(self, "maps", tuple(self.maps))
        object.__setattr__(self, "observables", tuple(self.observables))
        if not self.maps or not self.observables:
            raise ValueError("map and observable families must be non-empty")
        if self.omega_f.max_index >= len(self.maps):
            raise IndexError(
                f"omega_f refers to map {self.omega_f.max_index}, "
                f"family has {len(self.maps)}"
            )
        if self.omega_g.max_index >= len(self.observables):
            raise IndexError(
                f"omega_g refers to observable {self.omega_g.max_index}, "
                f"family has {len(self.observables)}"
            )
        if abs(self.rho.mean - 1.0) > 1e-12:
            raise ValueError(f"initial density must have unit mass, got {self.rho.mean!r}")
        n = max(4096, 64 * self.rho.max_harmonic)
        if np.min(self.rho(np.arange(n) / n)) <= 0.0:
            raise ValueError("initial density must be strictly positive")

    def map_indices(self, n: int, start: int = 0) -> np.ndarray:
        return self.omega_f.take(n, start)

    def obs_indices(self, n: int, start: int = 0) -> np.ndarray:
        return self.omega_g.take(n, start)

    def map_at(self, k: int) -> CircleMap:
        return self.maps[self.omega_f[k]]

    def obs_at(self, k: int) -> Observable:
        return self.observables[self.omega_g[k]]

    def __hash__(self):
        return id(self)


class BranchEval(NamedTuple):
    value: float
    derivative: float
    preimages: list


def eval_branches(fmap: CircleMap, x: float) -> BranchEval:
    """Evaluate ``f(x)``, ``f'(x)`` and every preimage of ``x``.

    Returns
    -------
    BranchEval
        ``preimages`` is a list of ``(y_b, f'(y_b))`` for ``b = 0..D-1``.
    """
    x = float(x)
    if not 0.0 <= x < 1.0:
        raise ValueError(f"x must lie in [0, 1), got {x}")
    ys = fmap.preimages(np.array([x]))[:, 0]
    pre = [(float(y), float(fmap.derivative(y))) for y in ys]
    return BranchEval(float(fmap(x)), float(fmap.derivative(x)), pre)


def _refined_extremum(fn, dfn, ddfn, n_grid: int, kind: str) -> float:
    x = np.arange(n_grid) / n_grid
    v = fn(x)
    i = int(np.argmin(v) if kind == "min" else np.argmax(v))
    best = float(v[i])
    d2 = float(ddfn(x[i]))
    if d2 != 0.0:
        xr = x[i] - float(dfn(x[i])) / d2
        if abs(xr - x[i]) <= 1.0 / n_grid:
            vr = float(fn(xr))
            best = min(best, vr) if kind == "min" else max(best, vr)
    return best


def expansion_constants(family: Sequence[CircleMap], n_grid: int = 4096) -> tuple:
    """Expansion ``theta = min f'`` and ``A = max |f''|`` over a family.

    Grid extrema are refined by one Newton step on the extremizer.

    Returns
    -------
    theta, A : float
    """
    family = list(family)
    if not family:
        raise ValueError("family must be non-empty")
    theta, A = np.inf, 0.0
    for f in family:
        theta = min(theta, _refined_extremum(
            lambda x: f.derivative(x, 1), lambda x: f.derivative(x, 2),
            lambda x: f.derivative(x, 3), n_grid, "min"))
        if not f.is_linear:
            # |f''| is extremal where f''' = 0; both signs checked
            for sgn in (1.0, -1.0):
                A = max(A, _refined_extremum(
                    lambda x: sgn * f.derivative(x, 2), lambda x: sgn * f.derivative(x, 3),
                    lambda x: sgn * f.derivative(x, 4), n_grid, "max"))
    if theta <= 1.0:
        raise MapDomainError(f"family is not uniformly expanding (theta = {theta:.6g})")
    return float(theta), float(A)


def distortion_constant(family: Sequence[CircleMap], n_grid: int = 4096) -> float:
    """``D_bar = max sup |f''| / f'^2``.

    This is the constant in ``|(Lh)'| <= theta^-1 L|h'| + D_bar L h``.
    """
    x = np.arange(n_grid) / n_grid
    out = 0.0
    for f in family:
        if not f.is_linear:
            out = max(out, float(np.max(np.abs(f.derivative(x, 2)) / f.derivative(x) ** 2)))
    return out


def specification_gap(eps: float, theta: float) -> int:
    """Smallest ``n >= 0`` with ``eps * theta**n >= 1``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if theta <= 1:
        raise ValueError("theta must exceed 1")
    n, v = 0, float(eps)
    while v < 1.0:
        v *= theta
        n += 1
    return n


def doubling() -> CircleMap:
    return CircleMap(2)


def cosine(m: int = 1, amplitude: float = 1.0) -> Observable:
    return Observable(((m, amplitude, 0.0),))


def sine(m: int = 1, amplitude: float = 1.0) -> Observable:
    return Observable(((m, 0.0, amplitude),))


def min_expansion(family: Sequence[CircleMap]) -> float:
    """Cheap analytic lower bound of ``theta`` (no grid search)."""
    return min(f.theta_lower for f in family)

"""Grid functions and collocation transfer operators on the circle.

Functions are stored as samples on the uniform grid ``x_i = i / N`` and
identified with their trigonometric interpolant.  The transfer operator of
a map ``f``::

    (L h)(x) = sum_{f(y) = x} h(y) / f'(y)

is evaluated at the grid points by interpolating ``h`` at the preimages.
Because this is linear in the samples, each map gets a cached ``N x N``
collocation matrix, so applying a (twisted, weighted) operator is a
diagonal scaling followed by a matrix product.
"""

from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .maps import CircleMap, Observable, SequenceSpec

#: relative size of the top-band Fourier tail that triggers a warning
TAIL_TOL = 1e-8


class ResolutionWarning(UserWarning):
    """Grid too coarse for the function being transported."""


def _check_n(n: int) -> int:
    n = int(n)
    if n < 4 or n & (n - 1):
        raise ValueError(f"grid size must be a power of two >= 4, got {n}")
    return n


def grid(n: int) -> np.ndarray:
    return np.arange(n) / n


def wavenumbers(n: int) -> np.ndarray:
    return np.fft.fftfreq(n, 1.0 / n)


def tail_ratio(values: np.ndarray) -> float:
    """Largest Fourier coefficient in the top band ``|k| >= 3N/8`` over the peak.

    ``values`` may carry trailing batch dimensions; the worst column is
    reported.
    """
    n = values.shape[0]
    c = np.abs(np.fft.fft(values, axis=0))
    peak = np.max(c)
    if peak == 0.0:
        return 0.0
    k = np.abs(wavenumbers(n))
    return float(np.max(c[k >= 3 * n // 8]) / peak)


def _warn_tail(values: np.ndarray, what: str = "function") -> None:
    r = tail_ratio(values)
    if r > TAIL_TOL:
        n = values.shape[0]
        warnings.warn(
            f"{what} is under-resolved on N={n} (tail/peak = {r:.2e}); "
            f"try N={2 * n}", ResolutionWarning, stacklevel=3)


def interpolation_matrix(points: np.ndarray, n: int) -> np.ndarray:
    """Real matrix ``E`` with ``E @ v`` = trigonometric interpolant of ``v`` at ``points``.

    The Nyquist mode is split symmetrically so real data interpolate to
    real values.
    """
    points = np.asarray(points, dtype=float).ravel()
    k = wavenumbers(n)
    B = np.exp(2j * np.pi * np.outer(points, k))
    B[:, n // 2] = np.cos(np.pi * n * points)
    F = np.exp(-2j * np.pi * np.outer(k, grid(n))) / n
    return np.ascontiguousarray((B @ F).real)


def trig_eval(coef: np.ndarray, x) -> np.ndarray:
    """Evaluate the interpolant with DFT coefficients ``coef`` (``fft / N``)."""
    n = coef.shape[0]
    x = np.asarray(x, dtype=float)
    k = wavenumbers(n)
    B = np.exp(2j * np.pi * np.multiply.outer(x, k))
    B[..., n // 2] = np.cos(np.pi * n * x)
    return B @ coef


class GridFunction:
    """Real or complex samples on the uniform ``N``-point circle grid.

    Parameters
    ----------
    values : array_like
        Samples at ``x_i = i / N``; ``N`` must be a power of two.  A real
        dtype marks the function as real.

    Notes
    -----
    Instances are immutable; the trigonometric coefficients are computed on
    first use and cached.
    """

    __slots__ = ("_v", "_coef")

    def __init__(self, values):
        v = np.array(values)
        if v.ndim != 1:
            raise ValueError("grid function samples must be one-dimensional")
        _check_n(v.size)
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function has NaN/Inf samples")
        if np.iscomplexobj(v):
            v = v.astype(complex)
        else:
            v = v.astype(float)
        v.setflags(write=False)
        self._v = v
        self._coef = None

    # construction -------------------------------------------------------
    @classmethod
    def from_function(cls, fn: Callable, n: int) -> "GridFunction":
        return cls(fn(grid(_check_n(n))))

    @classmethod
    def from_observable(cls, obs: Observable, n: int) -> "GridFunction":
        return cls(obs(grid(_check_n(n))))

    @classmethod
    def constant(cls, c, n: int) -> "GridFunction":
        return cls(np.full(_check_n(n), c))

    # basic attributes ---------------------------------------------------
    @property
    def values(self) -> np.ndarray:
        return self._v

    @property
    def n(self) -> int:
        return self._v.size

    @property
    def x(self) -> np.ndarray:
        return grid(self.n)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(self._v)

    @property
    def coefficients(self) -> np.ndarray:
        """DFT coefficients ``c_k`` with ``h(x) = sum c_k e^{2 pi i k x}``."""
        if self._coef is None:
            c = np.fft.fft(self._v) / self.n
            c.setflags(write=False)
            self._coef = c
        return self._coef

    def __repr__(self):
        kind = "real" if self.is_real else "complex"
        return f"GridFunction(N={self.n}, {kind})"

    # calculus -----------------------------------------------------------
    def interpolate(self, x) -> np.ndarray:
        out = trig_eval(self.coefficients, x)
        return out.real if self.is_real else out

    def derivative(self) -> "GridFunction":
        n = self.n
        k = wavenumbers(n)
        k[n // 2] = 0.0
        d = np.fft.ifft(2j * np.pi * k * np.fft.fft(self._v))
        return GridFunction(d.real if self.is_real else d)

    def integral(self):
        m = np.mean(self._v)
        return float(m) if self.is_real else complex(m)

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self._v)))

    def tail_ratio(self) -> float:
        return tail_ratio(self._v)

    def resample(self, n: int) -> "GridFunction":
        """Same trigonometric interpolant sampled on an ``n``-point grid."""
        n = _check_n(n)
        if n == self.n:
            return self
        c = np.fft.fft(self._v)
        m = self.n
        out = np.zeros(n, dtype=complex)
        if n > m:
            half = m // 2
            out[:half] = c[:half]
            out[n - half + 1:] = c[half + 1:]
            out[half] += 0.5 * c[half]
            out[n - half] += 0.5 * c[half]
        else:
            half = n // 2
            out[:half] = c[:half]
            out[half + 1:] = c[m - half + 1:]
            out[half] = c[half] + c[m - half]
        vals = np.fft.ifft(out) * (n / m)
        return GridFunction(vals.real if self.is_real else vals)

    # arithmetic ---------------------------------------------------------
    def _other(self, other):
        if isinstance(other, GridFunction):
            if other.n != self.n:
                raise ValueError("grid functions live on different grids")
            return other._v
        return other

    def __add__(self, other):
        return GridFunction(self._v + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self._v - self._other(other))

    def __rsub__(self, other):
        return GridFunction(self._other(other) - self._v)

    def __mul__(self, other):
        return GridFunction(self._v * self._other(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridFunction(self._v / self._other(other))

    def __neg__(self):
        return GridFunction(-self._v)

    @property
    def real(self) -> "GridFunction":
        return GridFunction(self._v.real.copy())

    @property
    def imag(self) -> "GridFunction":
        return GridFunction(self._v.imag.copy() if not self.is_real else np.zeros(self.n))

    def to_csv(self, path) -> None:
        """Write ``x, re, im`` columns."""
        from .io import write_csv

        v = self._v.astype(complex)
        write_csv(path, ["x", "re", "im"], zip(self.x, v.real, v.imag))


def calculus(h: GridFunction, mode: str, x=None):
    """Interpolate, differentiate or integrate a grid function.

    Parameters
    ----------
    mode : {"interpolate", "derivative", "integral"}
    x : array_like, optional
        Evaluation points for ``mode="interpolate"``.
    """
    if mode == "interpolate":
        if x is None:
            raise ValueError("interpolate needs evaluation points")
        return h.interpolate(x)
    if mode == "derivative":
        return h.derivative()
    if mode == "integral":
        return h.integral()
    raise ValueError(f"unknown calculus mode {mode!r}")


# transfer operators --------------------------------------------------------

@lru_cache(maxsize=64)
def transfer_matrix(fmap: CircleMap, n: int) -> np.ndarray:
    """Collocation matrix of the transfer operator of ``fmap`` on ``n`` points."""
    n = _check_n(n)
    x = grid(n)
    ys = fmap.preimages(x)                       # (D, n)
    M = np.zeros((n, n))
    for b in range(fmap.degree):
        E = interpolation_matrix(ys[b], n)
        M += E / fmap.derivative(ys[b])[:, None]
    M.setflags(write=False)
    return M


@dataclass(frozen=True)
class Phase:
    """Multiplier ``exp(i t ghat)`` used to twist an operator."""

    t: float
    ghat: GridFunction

    def values(self) -> np.ndarray:
        return np.exp(1j * self.t * self.ghat.values)


Weight = Union[None, GridFunction, Phase]


def apply_transfer(fmap: CircleMap, h: GridFunction, weight: Weight = None,
                   check: bool = True) -> GridFunction:
    """Apply ``L_f`` to ``w h``.

    Parameters
    ----------
    fmap : CircleMap
    h : GridFunction
    weight : GridFunction or Phase, optional
        Plain multiplier (e.g. ``ghat`` or ``ghat**2``) or a twist phase.
    check : bool
        Emit :class:`ResolutionWarning` when ``w h`` has a heavy Fourier tail.
    """
    v = h.values
    if isinstance(weight, Phase):
        v = v * weight.values()
    elif isinstance(weight, GridFunction):
        if weight.n != h.n:
            raise ValueError("weight and h live on different grids")
        v = v * weight.values
    elif weight is not None:
        raise TypeError(f"unsupported weight {type(weight).__name__}")
    if check:
        _warn_tail(v, "weighted density")
    return GridFunction(transfer_matrix(fmap, h.n) @ v)


class OperatorChain:
    """Operators ``L_k`` of a sequential system on a fixed grid.

    Parameters
    ----------
    seq : SequenceSpec
    n_grid : int
    hatg : sequence of ndarray, optional
        Centered observable samples ``ghat_k``; required for twisting.
    check : bool
        Monitor Fourier tails of every transported function.
    """

    def __init__(self, seq: SequenceSpec, n_grid: int = 256,
                 hatg: Optional[Sequence[np.ndarray]] = None, check: bool = True):
        self.seq = seq
        self.n = _check_n(n_grid)
        self.hatg = hatg
        self.check = check
        self._map_idx = np.zeros(0, dtype=int)
        self._mats = {}

    def _ensure(self, k: int) -> None:
        if k >= self._map_idx.size:
            m = max(k + 1, 2 * self._map_idx.size, 64)
            self._map_idx = self.seq.map_indices(m)

    def matrix(self, k: int) -> np.ndarray:
        self._ensure(k)
        i = int(self._map_idx[k])
        M = self._mats.get(i)
        if M is None:
            M = transfer_matrix(self.seq.maps[i], self.n)
            self._mats[i] = M
        return M

    def map_index(self, k: int) -> int:
        self._ensure(k)
        return int(self._map_idx[k])

    def apply(self, k: int, v: np.ndarray, t=None, mult: Optional[np.ndarray] = None) -> np.ndarray:
        """``L_k`` applied to sample array(s) ``v`` (shape ``(N,)`` or ``(N, B)``).

        ``t`` is a twist parameter ``lambda / sigma_n`` (scalar, or a length-B
        array matching the batch columns); ``mult`` an extra multiplier.
        """
        if mult is not None:
            v = (mult if v.ndim == 1 else mult[:, None]) * v
        if t is not None and np.any(np.asarray(t) != 0):
            if self.hatg is None:
                raise ValueError("twisting requires centered observables")
            g = self.hatg[k]
            if np.ndim(t) == 0:
                v = np.exp(1j * t * g) * v if v.ndim == 1 else np.exp(1j * t * g)[:, None] * v
            else:
                v = np.exp(1j * np.outer(g, t)) * v
        if self.check:
            _warn_tail(v, f"weighted density at step {k}")
        return self.matrix(k) @ v

    def push(self, v: np.ndarray, start: int, end: int, t=None) -> np.ndarray:
        """``L_end ... L_start v`` (identity when ``end < start``)."""
        for k in range(start, end + 1):
            v = self.apply(k, v, t)
        return v


class DensityCache:
    """Append-only prefix cache of ``h_k = L_{k-1} ... L_0 rho``.

    Safe for concurrent readers; extension is serialized by a lock.
    """

    def __init__(self, chain: OperatorChain, rho: Optional[np.ndarray] = None):
        self.chain = chain
        if rho is None:
            rho = chain.seq.rho(grid(chain.n))
        self._h = [np.asarray(rho, dtype=float)]
        self._lock = threading.Lock()

    def __len__(self):
        return len(self._h)

    def get(self, k: int) -> np.ndarray:
        if k < len(self._h):
            return self._h[k]
        with self._lock:
            while len(self._h) <= k:
                j = len(self._h) - 1
                self._h.append(self.chain.apply(j, self._h[j]))
        return self._h[k]


@dataclass(frozen=True)
class OperatorChainSpec:
    """Composition window ``L_end ... L_start``, optionally twisted.

    ``twist`` is ``(lam, sigma_n, centered)`` where ``centered`` exposes the
    centered observables as ``centered.hatg``.
    """

    sequence: SequenceSpec
    start: int
    end: int
    twist: Optional[tuple] = None

    def __post_init__(self):
        if self.start < 0 or self.end < self.start:
            raise ValueError(f"invalid window [{self.start}, {self.end}]")
        if self.twist is not None:
            lam, sigma, centered = self.twist
            if sigma <= 0:
                raise ValueError("twist needs sigma_n > 0")
            if centered is None or not hasattr(centered, "hatg"):
                raise ValueError("twist requires a completed centering pass")

    @property
    def t(self) -> float:
        return 0.0 if self.twist is None else self.twist[0] / self.twist[1]

    def chain(self, n_grid: int) -> OperatorChain:
        hatg = None
        if self.twist is not None:
            hatg = [g.values for g in self.twist[2].hatg]
        return OperatorChain(self.sequence, n_grid, hatg=hatg)


def push_sequence(spec: OperatorChainSpec, h: GridFunction) -> GridFunction:
    """Apply the window of (possibly twisted) operators to ``h``."""
    chain = spec.chain(h.n)
    t = spec.t if spec.twist is not None else None
    return GridFunction(chain.push(h.values, spec.start, spec.end, t))

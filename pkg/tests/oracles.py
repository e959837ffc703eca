"""Independent reference computations used by the tests.

Nothing here calls the collocation machinery: maps are inverted by plain
bisection, operators are evaluated pointwise from preimage sums and
integrals are dense periodic trapezoid rules of exactly evaluated
integrands.
"""

from __future__ import annotations

import math

import numpy as np


def bessel_j0(x: float) -> float:
    """``J_0(x)`` from its power series, summed until terms vanish."""
    terms, k, term = [], 0, 1.0
    while True:
        terms.append(term)
        k += 1
        term *= -(x * x / 4.0) / (k * k)
        if abs(term) < 1e-18 and k > x:
            break
    return math.fsum(terms)


def bisection_preimages(fmap, x: float, iters: int = 200) -> list:
    """Sorted preimages of ``x`` by bisection on the monotone lift."""
    F0 = float(fmap.lift(0.0))
    out = []
    for b in range(fmap.degree):
        target = (x - F0) % 1.0 + b + F0
        lo, hi = 0.0, 1.0
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            if fmap.lift(mid) < target:
                lo = mid
            else:
                hi = mid
        out.append(0.5 * (lo + hi) % 1.0)
    return sorted(out)


def transfer_pointwise(fmap, h, x: float) -> float:
    """``(L h)(x) = sum_b h(y_b) / f'(y_b)`` with bisection preimages."""
    return math.fsum(float(h(y)) / float(fmap.derivative(y))
                     for y in bisection_preimages(fmap, x))


def dense_grid(m: int = 1 << 15) -> np.ndarray:
    return np.arange(m) / m


def forward_orbit(maps_seq, x: np.ndarray, n: int) -> list:
    """``[x, f_0 x, f_1 f_0 x, ...]`` (``n`` points) by forward evaluation."""
    out = [x]
    for k in range(n - 1):
        x = maps_seq[k](x)
        out.append(x)
    return out


def birkhoff_quadrature(seq, n: int, m: int = 1 << 15):
    """Centers, ``sigma_n^2`` and a characteristic function by dense quadrature.

    The Birkhoff sum is evaluated by forward iteration of the exact maps, so
    only short horizons are reliable.
    """
    x = dense_grid(m)
    rho = seq.rho(x)
    maps = [seq.map_at(k) for k in range(n)]
    orbit = forward_orbit(maps, x, n)
    gk = [seq.obs_at(k)(orbit[k]) for k in range(n)]
    centers = [float(np.mean(g * rho)) for g in gk]
    S = sum(g - c for g, c in zip(gk, centers))
    sigma2 = float(np.mean(S * S * rho))

    def upsilon(lam: float) -> complex:
        return complex(np.mean(np.exp(1j * lam * S / math.sqrt(sigma2)) * rho))

    return centers, sigma2, upsilon


def grid_search_birkhoff(maps, observables, ms, os_, grid_size: int = 4096):
    """Forward grid search for ``max_x sum_i g_{os[i]}(x_i)``, ``x_{i+1} = f_{ms[i+1]}(x_i)``."""
    x = np.arange(grid_size) / grid_size
    total = np.zeros(grid_size)
    for i, o in enumerate(os_):
        total += observables[o](x)
        if i + 1 < len(os_):
            x = maps[ms[i + 1]](x)
    j = int(np.argmax(total))
    return float(total[j]), j / grid_size

"""Property tests for the structural invariants."""

import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from seqclt.clt import center_sequence, char_fn
from seqclt.cones import (ConeContext, complex_gauge, hilbert_distance, random_cone_element)
from seqclt.maps import (CircleMap, Observable, SequenceSpec, expansion_constants, iid,
                         specification_gap)
from seqclt.spectral import grid, transfer_matrix

N = 128
X = grid(N)
SETTINGS = dict(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@st.composite
def circle_maps(draw):
    D = draw(st.integers(2, 4))
    k = draw(st.integers(0, 2))
    terms, budget = [], 0.9 * (D - 1)
    for _ in range(k):
        m = draw(st.integers(1, 3))
        eps = draw(st.floats(-1, 1)) * budget / (2 * math.pi * m * (k + 1))
        terms.append((m, eps, draw(st.floats(0, 2 * math.pi))))
    return CircleMap(D, tuple(terms))


@st.composite
def densities(draw):
    """Positive trigonometric densities with unit mass."""
    terms = [(0, 1.0, 0.0)]
    total = 0.0
    for m in range(1, draw(st.integers(1, 4)) + 1):
        c, s = draw(st.floats(-1, 1)), draw(st.floats(-1, 1))
        terms.append((m, c, s))
        total += abs(c) + abs(s)
    if total > 0.8:
        terms = [terms[0]] + [(m, 0.8 * c / total, 0.8 * s / total) for m, c, s in terms[1:]]
    return Observable(tuple(terms))


@settings(**SETTINGS)
@given(circle_maps(), st.floats(0, 1, exclude_max=True))
def test_branch_round_trip(f, x):
    ys = f.preimages(np.array([x]))[:, 0]
    assert np.all(np.diff(ys) > 0)
    assert np.max(np.abs((f(ys) - x + 0.5) % 1.0 - 0.5)) <= 1e-12


@settings(**SETTINGS)
@given(circle_maps())
def test_preimage_weights_integrate_to_one(f):
    ys = f.preimages(X)
    assert abs(np.mean(np.sum(1.0 / f.derivative(ys), axis=0)) - 1.0) < 1e-12


@settings(**SETTINGS)
@given(st.lists(circle_maps(), min_size=1, max_size=3), circle_maps())
def test_expansion_constants_monotone(family, extra):
    th, A = expansion_constants(family)
    th2, A2 = expansion_constants(family + [extra])
    assert th2 <= th + 1e-15 and A2 >= A - 1e-15


@settings(**SETTINGS)
@given(st.floats(1e-6, 0.999), st.floats(1.01, 5))
def test_specification_gap_is_minimal(eps, theta):
    n = specification_gap(eps, theta)
    assert eps * theta**n >= 1
    assert n == 0 or eps * theta ** (n - 1) < 1


@settings(**SETTINGS)
@given(circle_maps(), densities())
def test_transfer_mass_and_positivity(f, rho):
    h = rho(X)
    Lh = transfer_matrix(f, N) @ h
    assert abs(np.mean(Lh) - np.mean(h)) < 1e-13
    assert np.min(Lh) > 0


@settings(**SETTINGS)
@given(circle_maps(), densities(), st.floats(-3, 3))
def test_twisted_operator_l1_contraction(f, rho, t):
    g = np.cos(2 * np.pi * X) + 0.3 * np.sin(4 * np.pi * X)
    h = rho(X)
    Lt = transfer_matrix(f, N) @ (np.exp(1j * t * g) * h)
    assert np.mean(np.abs(Lt)) <= np.mean(np.abs(h)) + 1e-13


@settings(**SETTINGS)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100), st.floats(0.01, 100),
       st.floats(0, 2 * math.pi))
def test_metrics_projective(seed, c1, c2, phase):
    ctx = ConeContext(6.0, 0.6, N)
    rng = np.random.Generator(np.random.Philox(seed))
    p = [random_cone_element(rng, ctx.a)(X) for _ in range(4)]
    d = hilbert_distance(p[0], p[1], ctx)
    assert math.isclose(hilbert_distance(c1 * p[0], c2 * p[1], ctx), d, rel_tol=1e-10, abs_tol=1e-12)
    h, g = p[0] + 1j * p[1], p[2] + 1j * p[3]
    z = c1 * np.exp(1j * phase)
    dc = complex_gauge(h, g, ctx, stride=4).value
    assert math.isclose(complex_gauge(z * h, c2 * g, ctx, stride=4).value, dc,
                        rel_tol=1e-9, abs_tol=1e-11)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**16), st.floats(0.05, 1.5))
def test_char_fn_normalization_and_symmetry(seed, lam):
    maps = [CircleMap(2, ((1, 0.05, 0.0),)), CircleMap(3)]
    obs = [Observable(((1, 1.0, 0.0),)), Observable(((1, 0.0, 1.0), (2, 0.5, 0.0)))]
    seq = SequenceSpec(maps, obs, iid(2, seed), iid(2, seed + 1),
                       Observable(((0, 1.0, 0.0), (1, 0.2, 0.1))))
    cs = center_sequence(seq, 24, N)
    assert np.max(np.abs(cs.centering_residual())) < 1e-12
    tab = char_fn(cs, [-lam, 0.0, lam], cap=None)
    assert abs(tab.values[1] - 1.0) < 1e-12
    assert abs(tab.values[0] - np.conj(tab.values[2])) < 1e-13
    assert abs(tab.values[2]) <= 1 + 1e-12

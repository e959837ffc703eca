import math

import numpy as np
import pytest

from seqclt.cones import (ConeContext, ConeDomainError, ExpSine, complex_gauge,
                          complex_membership, cone_norm, extremal_elements,
                          hilbert_distance, membership_margin, random_cone_element)
from seqclt.maps import Observable
from seqclt.spectral import grid

N = 256
X = grid(N)


@pytest.fixture
def ctx():
    return ConeContext(10.0, 0.55, N, theta=2.0)


def test_context_validation():
    with pytest.raises(ValueError, match="a > 1"):
        ConeContext(1.0, 0.6)
    with pytest.raises(ValueError, match=r"ν|nu"):
        ConeContext(5.0, 0.4, theta=2.0)
    with pytest.raises(ValueError, match="tau"):
        ConeContext(5.0, 0.6, tau=1.0)
    c = ConeContext(3.0, 0.6)
    assert c.kappa == pytest.approx(0.5 * math.exp(-3.0))
    assert c.tau == pytest.approx(c.kappa / 10)


def test_real_cone_norm_closed_form(ctx):
    # sup_x |cos| + |2 pi sin| / a = sqrt(1 + (2 pi / a)^2)
    h = np.cos(2 * np.pi * X)
    assert cone_norm(h, ctx) == pytest.approx(math.hypot(1.0, 2 * math.pi / ctx.a), rel=1e-4)


def test_complex_cone_norm_closed_form(ctx):
    # every rotation of e^{2 pi i x} is a shifted cosine
    h = np.exp(2j * np.pi * X)
    expect = math.sqrt(2.0) * math.hypot(1.0, 2 * math.pi / ctx.a)
    assert cone_norm(h, ctx) == pytest.approx(expect, rel=1e-4)


def test_membership_margin_of_exp_sine():
    a = 4.0
    ctx = ConeContext(a, 0.6, N)
    inside = ExpSine(0.9 * a / (2 * np.pi), 0.1)(X)
    outside = ExpSine(1.1 * a / (2 * np.pi), 0.1)(X)
    assert membership_margin(inside, ctx).member
    assert not membership_margin(outside, ctx).member
    # log-derivative of exp(c sin) is 2 pi c cos: margin attained where cos = +-1
    h = ExpSine(0.5, 0.0)
    m = membership_margin(h(X), ctx).margin
    ref = np.min(a * h(X) - np.abs(2 * np.pi * 0.5 * np.cos(2 * np.pi * X)) * h(X))
    assert m == pytest.approx(ref, abs=1e-10)


def test_hilbert_distance_against_analytic_duals(ctx):
    g = Observable(((0, 1.0, 0.0), (1, 0.1, 0.05), (2, 0.0, 0.02)))
    xs = np.linspace(0, 1, N, endpoint=False)
    hv, dv = g(xs), g.derivative(xs)
    duals = np.concatenate([ctx.a * hv - dv, ctx.a * hv + dv])
    ref = math.log(np.max(duals / ctx.a) / np.min(duals / ctx.a))
    assert hilbert_distance(hv, np.ones(N), ctx) == pytest.approx(ref, abs=1e-12)


def test_hilbert_distance_projective_and_symmetric(ctx):
    rng = np.random.Generator(np.random.Philox(3))
    h = random_cone_element(rng, ctx.a)(X)
    g = random_cone_element(rng, ctx.a)(X)
    d = hilbert_distance(h, g, ctx)
    assert d > 0
    assert hilbert_distance(3.7 * h, 0.2 * g, ctx) == pytest.approx(d, rel=1e-12)
    assert hilbert_distance(g, h, ctx) == pytest.approx(d, rel=1e-12)
    assert hilbert_distance(h, h, ctx) == pytest.approx(0.0, abs=1e-12)


def test_hilbert_distance_rejects_non_member(ctx):
    with pytest.raises(ConeDomainError):
        hilbert_distance(np.cos(2 * np.pi * X), np.ones(N), ctx)


def test_random_elements_inside_cone(ctx):
    rng = np.random.Generator(np.random.Philox(0))
    for _ in range(20):
        h = random_cone_element(rng, ctx.a)(X)
        assert membership_margin(h, ctx, 0.8 * ctx.a).margin >= -1e-10
    for e in extremal_elements(ctx.a):
        assert membership_margin(e(X), ctx).member


def test_complex_membership_and_gauge(ctx):
    rng = np.random.Generator(np.random.Philox(1))
    p = [random_cone_element(rng, ctx.a)(X) for _ in range(4)]
    h = p[0] + 1j * p[1]
    g = p[2] + 1j * p[3]
    assert complex_membership(h, ctx, stride=4).member
    d = complex_gauge(h, g, ctx, stride=4).value
    assert 0 < d < math.inf
    z = 0.3 - 2.1j
    assert complex_gauge(z * h, g, ctx, stride=4).value == pytest.approx(d, rel=1e-10)
    assert complex_gauge(h, z * h, ctx, stride=4).value == pytest.approx(0.0, abs=1e-10)


def test_complex_gauge_rejects_non_member(ctx):
    h = np.exp(2j * np.pi * X)
    with pytest.raises(ConeDomainError):
        complex_gauge(h, np.ones(N, complex), ctx, stride=4)

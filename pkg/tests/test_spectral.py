import numpy as np
import pytest

from seqclt.maps import CircleMap, Observable, cosine, doubling
from seqclt.spectral import (GridFunction, Phase, ResolutionWarning, apply_transfer,
                             calculus, grid, interpolation_matrix, transfer_matrix)

from oracles import transfer_pointwise

PERTURBED = CircleMap(2, ((1, 0.05, 0.0),))
TRIPLE = CircleMap(3, ((2, 0.03, 0.3),))


def test_interpolation_exact_for_trig_polynomials():
    g = Observable(((0, 0.3, 0.0), (1, 1.0, -0.2), (5, 0.1, 0.4), (31, 0.0, 0.05)))
    h = GridFunction.from_observable(g, 64)
    x = np.linspace(0, 1, 97)
    assert np.allclose(h.interpolate(x), g(x), atol=1e-13)
    M = interpolation_matrix(x, 64)
    assert np.allclose(M @ h.values, g(x), atol=1e-13)


def test_derivative_and_integral():
    g = Observable(((0, 0.5, 0.0), (3, 1.0, 2.0)))
    h = GridFunction.from_observable(g, 32)
    assert h.integral() == pytest.approx(0.5, abs=1e-15)
    x = grid(32)
    assert np.allclose(h.derivative().values, g.derivative(x), atol=1e-12)


def test_calculus_modes():
    h = GridFunction.from_observable(cosine(), 16)
    assert calculus(h, "integral") == pytest.approx(0.0, abs=1e-15)
    assert np.allclose(calculus(h, "derivative").values, -2 * np.pi * np.sin(2 * np.pi * grid(16)))
    assert calculus(h, "interpolate", [0.0])[0] == pytest.approx(1.0)
    with pytest.raises(ValueError):
        calculus(h, "sup")


def test_doubling_annihilates_cos():
    h = GridFunction.from_observable(cosine(), 64)
    assert np.max(np.abs(apply_transfer(doubling(), h).values)) < 1e-14


@pytest.mark.parametrize("fmap", [PERTURBED, TRIPLE])
def test_transfer_matches_pointwise_preimage_sum(fmap):
    rho = Observable(((0, 1.0, 0.0), (1, 0.3, 0.1), (2, -0.05, 0.02)))
    n = 256
    Lh = apply_transfer(fmap, GridFunction.from_observable(rho, n))
    for x in (0.0, 0.123, 0.5, 0.77):
        assert Lh.interpolate(x) == pytest.approx(transfer_pointwise(fmap, rho, x), abs=1e-12)


def test_lebesgue_not_invariant_for_perturbed_map():
    L1 = apply_transfer(PERTURBED, GridFunction.constant(1.0, 256))
    assert L1.integral() == pytest.approx(1.0, abs=1e-13)
    assert np.max(np.abs(L1.values - 1.0)) > 1e-2


def test_twisted_operator_matches_phase_product():
    n = 128
    g = GridFunction.from_observable(cosine(), n)
    h = GridFunction.constant(1.0, n)
    out = apply_transfer(PERTURBED, h, Phase(0.7, g))
    ref = transfer_matrix(PERTURBED, n) @ np.exp(0.7j * g.values)
    assert np.allclose(out.values, ref, atol=1e-14)


def test_resolution_warning_for_rough_function():
    x = grid(16)
    with pytest.warns(ResolutionWarning, match="N=32"):
        apply_transfer(doubling(), GridFunction(np.exp(6 * np.sin(2 * np.pi * x))))


def test_resample_round_trip():
    h = GridFunction.from_observable(Observable(((1, 1.0, 0.5), (7, 0.2, 0.0))), 32)
    up = h.resample(128)
    assert np.allclose(up.resample(32).values, h.values, atol=1e-14)
    assert np.allclose(up.values, h.interpolate(grid(128)), atol=1e-13)


def test_grid_size_validation():
    with pytest.raises(ValueError):
        transfer_matrix(doubling(), 12)

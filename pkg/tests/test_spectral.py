from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from halfwave.spectral import (
    GridFunction,
    GridMismatchError,
    Multiplier,
    SpectralGrid,
    _turns,
    apply_multiplier,
    dealias,
    energy,
    halfnorm_sq,
    inner,
    norm,
    resample,
    scaling_generator,
    trig_eval_uniform,
)

GRID = SpectralGrid(32.0, 1024)


def gaussian(g, a=1.0, x0=0.0):
    return GridFunction(g, np.exp(-a * (g.x - x0) ** 2))


def d_by_quadrature(f, x):
    """``D f(x) = (1/pi) p.v. int (f(x) - f(y)) / (x - y)^2 dy`` after symmetrizing in ``y - x``."""

    def integrand(h):
        if h < 1e-6:
            # second-order Taylor remainder of 2f(x) - f(x+h) - f(x-h) over h^2
            return -(f(x + 1e-6) - 2 * f(x) + f(x - 1e-6)) / 1e-12
        return (2 * f(x) - f(x + h) - f(x - h)) / h**2

    val, _ = integrate.quad(integrand, 0, np.inf, limit=400, epsabs=1e-13, epsrel=1e-12)
    return val / np.pi


def test_half_wave_matches_singular_integral_quadrature():
    # D e^{-x^2} decays like x^-2, so periodic images cost ~1/L^2: L must be large
    g = SpectralGrid(4096.0, 2**17)
    u = gaussian(g)
    du = apply_multiplier(u, Multiplier.half_wave(g)).values.real
    f = lambda y: np.exp(-y * y)  # noqa: E731
    for x0 in (0.0, 0.5, 1.0, 2.0, 3.5):
        j = int(np.argmin(np.abs(g.x - x0)))
        assert abs(du[j] - d_by_quadrature(f, g.x[j])) < 1e-6


def test_single_mode_is_an_eigenfunction():
    g = GRID
    m = 7
    xi = np.pi * m / g.L
    u = GridFunction(g, np.exp(1j * xi * g.x))
    du = apply_multiplier(u, Multiplier.half_wave(g))
    assert np.max(np.abs(du.values - abs(xi) * u.values)) < 1e-12


def test_multiplier_grid_mismatch():
    with pytest.raises(GridMismatchError):
        apply_multiplier(gaussian(GRID), Multiplier.half_wave(SpectralGrid(16.0, 1024)))


def test_multiplier_must_be_finite():
    with pytest.raises(ValueError), np.errstate(divide="ignore"):
        Multiplier.from_function(GRID, lambda xi: 1.0 / xi)


def test_bad_grids_rejected():
    with pytest.raises(ValueError):
        SpectralGrid(1.0, 15)
    with pytest.raises(ValueError):
        SpectralGrid(-1.0, 64)


def test_real_kind_is_checked():
    with pytest.raises(ValueError):
        GridFunction(GRID, 1j * np.ones(GRID.N), kind="real")


def test_halfnorm_of_gaussian_closed_form():
    # ||D^{1/2} e^{-x^2}||^2 = (1/2pi) int |xi| pi e^{-xi^2/2} dxi = 1; the kink of
    # |xi| at 0 gives an O(1/L^2) quadrature error
    errs = [abs(halfnorm_sq(gaussian(SpectralGrid(L, int(L) * 32))) - 1.0) for L in (64.0, 128.0)]
    assert errs[1] < 2e-4
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_scaling_generator_on_gaussian():
    g = SpectralGrid(40.0, 2048)
    u = gaussian(g)
    exact = (0.5 - 2 * g.x**2) * np.exp(-(g.x**2))
    assert np.max(np.abs(scaling_generator(u).values - exact)) < 1e-9


def test_energy_of_rescaled_ground_state_vanishes(gs):
    # zero energy is invariant under the mass-critical rescaling
    from halfwave.ground_state import rescaled

    for lam in (0.5, 2.0):
        q = rescaled(gs.Q, lam)
        g = q.grid
        direct = 0.5 * halfnorm_sq(q) - 0.25 * g.dx * np.sum(np.abs(q.values) ** 4)
        assert abs(energy(q)) < 1e-6
        assert abs(direct - energy(q)) < 1e-12


def test_dealias_keeps_two_thirds():
    u = GridFunction(GRID, np.random.default_rng(1).normal(size=GRID.N))
    uh = np.fft.fft(dealias(u).values)
    m = np.abs(np.fft.fftfreq(GRID.N) * GRID.N)
    assert np.max(np.abs(uh[m > GRID.N / 3])) < 1e-12


def test_resample_identity_and_scaling():
    g = SpectralGrid(20.0, 1024)
    u = gaussian(g, 0.5)
    same = resample(u, g)
    assert np.max(np.abs(same.values - u.values)) < 1e-13
    h = SpectralGrid(10.0, 512)
    half = resample(u, h, scale=2.0)
    assert np.max(np.abs(half.values - np.exp(-0.5 * (2 * h.x) ** 2))) < 1e-12


def test_trig_eval_matches_direct_sum():
    rng = np.random.default_rng(3)
    N, L = 64, 3.0
    v = rng.normal(size=N) + 1j * rng.normal(size=N)
    y = -1.3 + 0.037 * np.arange(50)
    got = trig_eval_uniform(v, L, y[0], y[1] - y[0], len(y))
    c = np.fft.fft(v) / N
    m = np.fft.fftfreq(N) * N
    x0 = -L
    ref = []
    for yy in y:
        terms = c * np.exp(1j * np.pi * m * (yy - x0) / L)
        nyq = N // 2
        # split the Nyquist mode symmetrically
        terms[nyq] = c[nyq] * np.cos(np.pi * nyq * (yy - x0) / L)
        ref.append(terms.sum())
    assert np.max(np.abs(got - np.array(ref))) < 1e-12


def test_turns_is_accurate_for_huge_arguments():
    beta = np.pi / 1e5
    n = np.array([2.0**38 + 1, 2.0**37 + 12345])
    exact = [float((Fraction(beta) * int(k)) % 1) for k in n]
    assert np.max(np.abs(_turns(beta, n) - exact)) < 1e-10


# --------------------------------------------------------------------------- properties

fields = st.lists(st.floats(-1, 1), min_size=16, max_size=16)


def _smooth(coeffs, g, shift=0.0):
    x = g.x
    return GridFunction(g, sum(c * (x - shift) ** j for j, c in enumerate(coeffs[:4])) * np.exp(-((x - shift) ** 2) / 2) * (1 + 1j * coeffs[4]))


@settings(max_examples=30, deadline=None)
@given(fields, fields)
def test_inner_is_hermitian_and_parseval(a, b):
    u, v = _smooth(a, GRID), _smooth(b, GRID, 0.7)
    assert abs(inner(u, v) - np.conj(inner(v, u))) < 1e-12
    uh = np.fft.fft(u.values)
    assert abs(norm(u) ** 2 - GRID.dx / GRID.N * np.sum(np.abs(uh) ** 2)) < 1e-10 * max(1.0, norm(u) ** 2)


@settings(max_examples=30, deadline=None)
@given(fields, fields)
def test_half_wave_is_symmetric_and_nonnegative(a, b):
    u, v = _smooth(a, GRID), _smooth(b, GRID, -0.4)
    D = Multiplier.half_wave(GRID)
    lhs = inner(apply_multiplier(u, D), v)
    rhs = inner(u, apply_multiplier(v, D))
    assert abs(lhs - rhs) < 1e-10
    assert inner(u, apply_multiplier(u, D)).real >= -1e-12


@settings(max_examples=30, deadline=None)
@given(fields, fields)
def test_scaling_generator_is_skew(a, b):
    g = SpectralGrid(40.0, 2048)
    u, v = _smooth(a, g), _smooth(b, g, 0.3)
    assert abs(inner(scaling_generator(u), v) + inner(u, scaling_generator(v))) < 1e-8


@settings(max_examples=20, deadline=None)
@given(st.floats(0.3, 3.0))
def test_mass_is_scale_invariant(lam):
    g = SpectralGrid(64.0, 4096)
    u = gaussian(g)
    scaled = GridFunction(g, lam**-0.5 * np.exp(-((g.x / lam) ** 2)))
    assert abs(norm(scaled) - norm(u)) < 1e-12

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from halfwave import inhomogeneity as inh
from halfwave.modulation import _restrict
from halfwave.spectral import GridFunction, SpectralGrid, halfnorm_sq, norm
from halfwave.virial import (
    CutoffPhi,
    ResolventQuadrature,
    biharmonic_bound,
    evaluate_JA,
    halfnorm_identity,
    localized_coercivity,
    localized_forms,
    resolvent_smooth,
)

G = SpectralGrid(64.0, 4096)
SMALL = SpectralGrid(256.0, 2**13)


def gauss(g=G, c=0.0, w=1.0, p=0.0):
    return GridFunction(g, np.exp(-(((g.x - c) / w) ** 2) + 1j * p * g.x))


@pytest.fixture(scope="module")
def small(coeffs):
    def r(f):
        return GridFunction(SMALL, _restrict(f, SMALL).real)

    return {"Q": r(coeffs.Q), "S10": r(coeffs.S10), "rho1": r(coeffs.rho1)}


# --------------------------------------------------------------------------- cutoff


def test_cutoff_shape():
    x = np.linspace(-6, 6, 2401)
    d = CutoffPhi.derivative
    inner = np.abs(x) <= 1
    assert np.allclose(d(x[inner], 0), 0.5 * x[inner] ** 2)
    assert np.allclose(d(x[inner], 1), x[inner])
    outer = np.abs(x) >= 2
    assert np.allclose(d(x[outer], 1), np.sign(x[outer]) * (3 - np.exp(-np.abs(x[outer]))))
    assert np.allclose(d(x, 0), d(-x, 0)) and np.allclose(d(x, 1), -d(-x, 1))
    assert np.min(d(x, 2)) > 0
    assert CutoffPhi().certify_bridge() > 0.1
    with pytest.raises(ValueError):
        CutoffPhi(0.0)


@pytest.mark.parametrize("knot", [1.0, 2.0])
@pytest.mark.parametrize("order", [0, 1, 2, 3])
def test_cutoff_is_smooth_at_knots(knot, order):
    h = 1e-9
    a, b = CutoffPhi.derivative(np.array([knot - h, knot + h]), order)
    assert abs(a - b) < 1e-7


@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_cutoff_derivatives_match_differences(order):
    x = np.linspace(0.2, 3.5, 41)
    h = 1e-6
    fd = (CutoffPhi.derivative(x + h, order - 1) - CutoffPhi.derivative(x - h, order - 1)) / (2 * h)
    assert np.max(np.abs(fd - CutoffPhi.derivative(x, order))) < 1e-5


def test_scaled_cutoff():
    phi = CutoffPhi(50.0)
    x = np.array([-40.0, 0.0, 10.0, 50.0])
    assert np.allclose(phi(x), 0.5 * x**2)
    assert np.allclose(phi.dphi(x), x)
    assert np.allclose(phi.laplacian(x), 1.0)
    assert phi.bilaplacian(np.array([75.0]))[0] == pytest.approx(CutoffPhi.derivative(1.5, 4) / 2500)


# --------------------------------------------------------------------------- quadrature and identity


@pytest.mark.parametrize("a", [1e-4, 1.0, 30.0, 1e4])
def test_quadrature_against_closed_form(a):
    q = ResolventQuadrature(count=80, scale=1.0)
    val = q.integrate(lambda s: 1.0 / (s + a) ** 2)
    # int_0^inf sqrt(s) / (s + a)^2 ds = pi / (2 sqrt(a))
    assert val == pytest.approx(math.pi / (2 * math.sqrt(a)), rel=1e-6)
    assert "tan^2" in q.mapping


def test_resolvent_on_a_mode():
    xi = math.pi * 3 / G.L
    u = GridFunction(G, np.exp(1j * xi * G.x))
    us = resolvent_smooth(u, 2.0)
    assert np.allclose(us.values, math.sqrt(2 / math.pi) / (xi**2 + 2.0) * u.values, atol=1e-14)
    with pytest.raises(ValueError):
        resolvent_smooth(u, 0.0)


def test_identity_examples(gs):
    assert halfnorm_identity(gauss())[2] < 1e-12
    assert halfnorm_identity(GridFunction(G, np.zeros(G.N, complex))) == (0.0, 0.0, 0.0)
    assert halfnorm_identity(gauss(p=2.0), alpha=0.75)[2] < 1e-12
    assert halfnorm_identity(gs.Q)[2] < 1e-6


@settings(max_examples=25, deadline=None)
@given(
    st.lists(st.tuples(st.floats(-1, 1), st.floats(-10, 10), st.floats(0.3, 4.0), st.floats(-3, 3)), min_size=1, max_size=4)
)
def test_identity_property(parts):
    u = sum(a * gauss(c=c, w=w, p=p).values for a, c, w, p in parts)
    f = GridFunction(G, u)
    lhs, rhs, rel = halfnorm_identity(f)
    assert lhs == pytest.approx(rhs, rel=1e-6, abs=1e-14)
    assert rhs == pytest.approx(halfnorm_sq(f), rel=1e-12, abs=1e-14)


# --------------------------------------------------------------------------- localized forms


def _direct_forms(v, Q, k):
    g = v.grid
    kq2 = k(g.x) * Q.values.real**2
    out = []
    for w, c in ((v.values.real, 3.0), (v.values.imag, 1.0)):
        f = GridFunction(g, w + 0j)
        out.append(halfnorm_sq(f) + norm(f) ** 2 - c * g.dx * np.sum(kq2 * w**2))
    return out


@pytest.mark.parametrize("A,tol", [(100.0, 1e-4), (1000.0, 1e-8)])
def test_localized_forms_converge(small, A, tol):
    g = SMALL
    v = GridFunction(g, np.exp(-(g.x**2)) * (1 + g.x) + 1j * np.exp(-((g.x - 0.5) ** 2) / 2))
    k = inh.default()
    got = localized_forms(v, small["Q"], k, CutoffPhi(A))
    want = _direct_forms(v, small["Q"], k)
    assert np.allclose(got, want, rtol=tol, atol=0)


def test_plus_form_is_negative_on_ground_state(small):
    q = small["Q"]
    plus, minus = localized_forms(GridFunction(SMALL, q.values + 0j), q, inh.default(), CutoffPhi(100.0))
    assert plus < 0 and minus == 0.0


def test_coercivity_sample(small):
    out = localized_coercivity(small["Q"], small["S10"], small["rho1"], inh.default(), A=100.0, samples=20, seed=3)
    assert out["plus"] > 0 and out["minus"] > 0
    assert out["samples"] == 20 and out["seed"] == 3


def test_biharmonic_term_decays_like_inverse_A():
    g = SpectralGrid(3000.0, 2**16)
    u = GridFunction(g, np.exp(-(g.x**2)) + 0j)
    r = [biharmonic_bound(u, CutoffPhi(A)) * A / norm(u) ** 2 for A in (25.0, 50.0)]
    assert 1.6 <= r[0] / r[1] <= 2.4


# --------------------------------------------------------------------------- J_A


def _jq(gs):
    q = GridFunction(G, _restrict(gs.Q, G).real + 0j)
    return q


def test_JA_zero_perturbation(gs):
    q = _jq(gs)
    out = evaluate_JA(GridFunction(G, np.zeros(G.N, complex)), q, 0.3, 0.5, inh.default(), CutoffPhi(10.0))
    assert all(v == 0.0 for v in out.values())


def test_JA_virial_term(gs):
    q = _jq(gs)
    k = inh.default()
    e = gauss(c=0.3, p=1.5)
    assert evaluate_JA(e, q, 0.0, 0.5, k, CutoffPhi(10.0))["virial"] == 0.0
    assert abs(evaluate_JA(GridFunction(G, e.values.real + 0j), q, 0.2, 0.5, k, CutoffPhi(10.0))["virial"]) < 1e-14
    v1 = evaluate_JA(e, q, 0.2, 0.5, k, CutoffPhi(10.0))["virial"]
    v2 = evaluate_JA(GridFunction(G, e.values * np.exp(0.7j)), q, 0.2, 0.5, k, CutoffPhi(10.0))["virial"]
    assert v1 != 0 and v2 == pytest.approx(v1, rel=1e-12)
    with pytest.raises(ValueError):
        evaluate_JA(e, q, 0.2, 0.0, k, CutoffPhi(10.0))


def test_JA_second_variation(gs):
    q = _jq(gs)
    k = inh.default()
    e = GridFunction(G, gauss(c=0.3).values + 0.5j * gauss(w=2.0).values)
    want = 0.5 * sum(_direct_forms(e, q, k))
    ratios = [evaluate_JA(GridFunction(G, t * e.values), q, 0.0, 1.0, k, CutoffPhi(10.0))["J_A"] / t**2 for t in (1e-2, 5e-3)]
    errs = [abs(r - want) for r in ratios]
    assert errs[1] < 1e-2 * abs(want)
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.1)

import numpy as np

from halfwave.linearized import lowest_spectrum
from halfwave.spectral import inner, norm


def test_kernels(pair):
    c = pair.certificates
    assert c["Lminus_Q"] < 1e-6
    assert c["Lplus_dQ"] < 1e-6
    assert c["Lplus_LambdaQ_plus_Q"] < 1e-5


def test_one_negative_eigenvalue(pair):
    w = [e for e, _ in lowest_spectrum(pair, "plus", 4)]
    assert sum(e < -1e-8 for e in w) == 1
    assert abs(w[1]) < 1e-6  # translation mode
    assert w[2] > 0.1


def test_lminus_is_nonnegative(pair):
    w = [e for e, _ in lowest_spectrum(pair, "minus", 3)]
    assert abs(w[0]) < 1e-6
    assert w[1] > 0.1


def test_e1_positive(coeffs):
    # frozen from the default-grid coefficient solve
    assert coeffs.e1 > 0
    assert abs(coeffs.e1 - 0.102071) < 2e-6


def test_mass_identity(coeffs):
    s = inner(coeffs.S10, coeffs.S10).real
    assert abs(s + 2 * inner(coeffs.Q, coeffs.T20).real) / s < 1e-6


def test_solvability_residuals(coeffs):
    assert all(v < 1e-6 for v in coeffs.solvability_residuals.values())


def test_q_rho1_equals_minus_two_e1(coeffs):
    # (Q, rho1) = -(L+ Lambda Q, rho1) = -(Lambda Q, S10) = -(L- S10, S10) = -2 e1
    q_rho = inner(coeffs.Q, coeffs.rho1).real
    assert abs(q_rho + 2 * coeffs.e1) / (2 * coeffs.e1) < 1e-6


def test_s10_solves_its_equation(pair, coeffs):
    r = pair.apply("minus", coeffs.S10) - pair.gs.lambda_Q
    assert norm(r) / norm(pair.gs.lambda_Q) < 1e-8


def test_coefficients_are_even(coeffs):
    g = coeffs.grid
    for name, f in coeffs.functions().items():
        v = f.values.real
        assert np.max(np.abs(v - v[g.mirror])) < 1e-10 * max(1.0, np.max(np.abs(v))), name

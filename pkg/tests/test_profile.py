import numpy as np
import pytest

from halfwave import inhomogeneity as inh
from halfwave.profile import (
    ParameterRangeError,
    ProfileParams,
    assemble_profile,
    energy_lambda_coefficient,
    loglog_slope,
    profile_energy,
    profile_residual,
    scan,
)
from halfwave.spectral import mass, norm


def test_parameter_box():
    with pytest.raises(ParameterRangeError):
        ProfileParams(0.25, 0.1)
    with pytest.raises(ParameterRangeError):
        ProfileParams(0.1, -0.01)
    ProfileParams(0.15, 0.1)
    ProfileParams(-0.2, 0.1)


def test_reduces_to_q(coeffs):
    prof = assemble_profile(coeffs, ProfileParams(0.0, 0.0))
    assert np.max(np.abs(prof.qp.values - coeffs.Q.values)) == 0


def test_residual_slope(coeffs, k_default):
    bs = np.geomspace(0.02, 0.2, 7)
    rows = scan(coeffs, k_default, bs)
    assert abs(loglog_slope(bs, [r["phi_l2"] for r in rows]) - 5.0) < 0.4
    w = [r["weighted_ratio"] for r in rows]
    assert max(w) / min(w) < 10


def test_b4_taylor_coefficient_vanishes(coeffs):
    # at lambda = 0 the residual is a degree-12 polynomial in b: an exact fit
    # through 17 Chebyshev nodes recovers its Taylor coefficients
    k = inh.homogeneous()
    bs = 0.2 * np.cos(np.pi * (np.arange(17) + 0.5) / 17)
    vals = np.array([profile_residual(coeffs, ProfileParams(b, 0.0), k).values for b in bs])
    fit = np.linalg.lstsq(np.vander(bs, 13, increasing=True), vals, rcond=None)[0]
    g = coeffs.grid
    size = lambda v: np.sqrt(g.dx * np.sum(np.abs(v) ** 2))  # noqa: E731
    assert max(size(fit[j]) for j in range(5)) < 1e-7
    assert size(fit[5]) > 0.5


def test_mass_deviation_bounded(coeffs):
    m0 = mass(coeffs.Q)
    ratios = []
    for b in (0.05, 0.1, 0.2):
        for lam in (0.0, 0.02, 0.05):
            ratios.append((mass(assemble_profile(coeffs, ProfileParams(b, lam)).qp) - m0) / (b**4 + lam**2))
    assert max(abs(r) for r in ratios) < 0.1


def test_energy_tends_to_e1_b2(coeffs, k_default):
    e = profile_energy(coeffs, ProfileParams(0.02, 0.02**3), k_default)
    assert abs(e / 0.02**2 / coeffs.e1 - 1) < 0.02


def test_energy_lambda_coefficient_is_doubled(coeffs, k_default):
    # the T02 correction contributes as much as the explicit k-term
    A = energy_lambda_coefficient(coeffs)
    assert abs(A - 0.026349) < 1e-5
    for lam in (0.05, 0.1):
        e = profile_energy(coeffs, ProfileParams(0.0, lam), k_default)
        assert abs(e / lam**2 / (2 * A) - 1) < 0.01


def test_derivatives_match_finite_differences(coeffs):
    p = ProfileParams(0.1, 0.05)
    prof = assemble_profile(coeffs, p)
    h = 1e-6
    fd_b = (assemble_profile(coeffs, ProfileParams(0.1 + h, 0.05)).qp.values - assemble_profile(coeffs, ProfileParams(0.1 - h, 0.05)).qp.values) / (2 * h)
    fd_l = (assemble_profile(coeffs, ProfileParams(0.1, 0.05 + h)).qp.values - assemble_profile(coeffs, ProfileParams(0.1, 0.05 - h)).qp.values) / (2 * h)
    assert np.max(np.abs(fd_b - prof.d_b.values)) < 1e-7
    assert np.max(np.abs(fd_l - prof.d_lambda.values)) < 1e-7


def test_residual_norms_reported(coeffs, k_default):
    rows = scan(coeffs, k_default, [0.1])
    assert rows[0]["phi_h1"] >= rows[0]["phi_l2"] > 0
    assert norm(profile_residual(coeffs, ProfileParams(0.1, 0.01), k_default)) == pytest.approx(scan(coeffs, k_default, [0.1], coupling=lambda b: 0.01)[0]["phi_l2"])

"""Approximate blowup profile ``Q_P(b, lambda)`` and its residual in rescaled variables."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .inhomogeneity import InhomogeneityProfile
from .linearized import ProfileCoefficientSet
from .spectral import GridFunction, Multiplier, energy, inner, mass, norm, scaling_generator

ETA_STAR = 0.3


class ParameterRangeError(ValueError):
    pass


@dataclass(frozen=True)
class ProfileParams:
    b: float
    lam: float
    eta: float = ETA_STAR

    def __post_init__(self):
        if self.lam < 0:
            raise ParameterRangeError(f"lambda must be non-negative, got {self.lam}")
        if abs(self.b) + self.lam > self.eta * (1 + 1e-12):  # closed box; 0.2 + 0.1 rounds above 0.3
            raise ParameterRangeError(f"|b| + lambda = {abs(self.b) + self.lam:.3g} exceeds eta* = {self.eta}")


@dataclass
class BlowupProfile:
    qp: GridFunction
    d_b: GridFunction
    d_lambda: GridFunction
    params: ProfileParams
    coeffs: ProfileCoefficientSet


def assemble_profile(coeffs: ProfileCoefficientSet, p: ProfileParams) -> BlowupProfile:
    """``Q + b^2 T20 + lam^2 T02 + b^4 T40 + i (b S10 + b^3 S30)`` and its exact b, lambda derivatives."""
    b, lam = p.b, p.lam
    c = {name: f.values.real for name, f in coeffs.functions().items()}
    re = c["Q"] + b**2 * c["T20"] + lam**2 * c["T02"] + b**4 * c["T40"]
    im = b * c["S10"] + b**3 * c["S30"]
    d_b = 2 * b * c["T20"] + 4 * b**3 * c["T40"] + 1j * (c["S10"] + 3 * b**2 * c["S30"])
    d_lam = 2 * lam * c["T02"]
    g = coeffs.grid
    return BlowupProfile(
        qp=GridFunction(g, re + 1j * im),
        d_b=GridFunction(g, d_b),
        d_lambda=GridFunction(g, d_lam.astype(complex)),
        params=p,
        coeffs=coeffs,
    )


def profile_residual(coeffs: ProfileCoefficientSet, p: ProfileParams, k: InhomogeneityProfile) -> GridFunction:
    """``Phi_P`` defined by

    ``-i b^2/2 d_b Q_P - i b lam d_lam Q_P - D Q_P - Q_P + i b Lambda Q_P + k(lam y)|Q_P|^2 Q_P = -Phi_P``.
    """
    prof = assemble_profile(coeffs, p)
    g = coeffs.grid
    b, lam = p.b, p.lam
    q = prof.qp.values
    dq = np.fft.ifft(np.abs(g.xi) * np.fft.fft(q))
    lam_q = scaling_generator(prof.qp).values
    ky = k(lam * g.x)
    lhs = (
        -0.5j * b**2 * prof.d_b.values
        - 1j * b * lam * prof.d_lambda.values
        - dq
        - q
        + 1j * b * lam_q
        + ky * np.abs(q) ** 2 * q
    )
    return GridFunction(g, -lhs)


def h1_norm(f: GridFunction) -> float:
    df = np.fft.ifft(Multiplier.derivative(f.grid).symbol * np.fft.fft(f.values))
    return float(np.sqrt(norm(f) ** 2 + f.grid.dx * np.sum(np.abs(df) ** 2)))


def weighted_gradient_sup(f: GridFunction) -> float:
    """``max <x>^2 |f'|``."""
    g = f.grid
    df = np.fft.ifft(Multiplier.derivative(g).symbol * np.fft.fft(f.values))
    return float(np.max((1 + g.x**2) * np.abs(df)))


def profile_energy(coeffs: ProfileCoefficientSet, p: ProfileParams, k: InhomogeneityProfile) -> float:
    """Energy of ``Q_P`` with the nonlinearity weighted by ``k(lam y)``."""
    prof = assemble_profile(coeffs, p)
    lam = p.lam
    return energy(prof.qp, lambda y: k(lam * y))


def energy_lambda_coefficient(coeffs: ProfileCoefficientSet) -> float:
    """``-(1/8) sum k''(0) y^2 Q^4 dx``, the coefficient of ``lam^2`` in the energy expansion."""
    g = coeffs.grid
    q = coeffs.Q.values.real
    return float(-0.125 * coeffs.k_second_deriv_at_0 * g.dx * np.sum(g.x**2 * q**4))


def scan(
    coeffs: ProfileCoefficientSet,
    k: InhomogeneityProfile,
    bs,
    coupling=lambda b: b**2,
) -> list[dict]:
    """Residual, mass and energy along ``(b, coupling(b))``."""
    m0 = mass(coeffs.Q)
    q = coeffs.Q
    dq_hat = np.fft.ifft(Multiplier.derivative(q.grid).symbol * np.fft.fft(q.values))
    dQ = GridFunction(q.grid, dq_hat.real)
    rows = []
    for b in bs:
        lam = float(coupling(b))
        p = ProfileParams(float(b), lam)
        phi = profile_residual(coeffs, p, k)
        prof = assemble_profile(coeffs, p)
        size = b**5 + lam**2 * np.hypot(b, lam)
        rows.append(
            {
                "b": float(b),
                "lambda": lam,
                "phi_l2": norm(phi),
                "phi_h1": h1_norm(phi),
                "phi_weighted_grad": weighted_gradient_sup(phi),
                "weighted_ratio": weighted_gradient_sup(phi) / size,
                "phi_Q": abs(inner(q, phi)),
                "phi_dQ": abs(inner(dQ, phi)),
                "mass_deviation": mass(prof.qp) - m0,
                "energy": energy(prof.qp, lambda y, lam=lam: k(lam * y)),
            }
        )
    return rows


def loglog_slope(x, y) -> float:
    slope, _ = np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)
    return float(slope)

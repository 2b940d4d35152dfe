"""Linearized operators ``L+ = D + 1 - 3Q^2`` and ``L- = D + 1 - Q^2`` around the ground state.

Two representations are kept:

* matrix-free application on the main grid, used for the constrained solves
  that produce the profile coefficients (bordered MINRES, certified by the
  main-grid residual);
* dense symmetric matrices on a coarser secondary grid, used for spectra and
  for direct bordered solves there.  The secondary grid carries its own
  ground state, so its discrete kernels are exact up to the solver tolerance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, minres

from .ground_state import GroundState, SolverConfig, solve_petviashvili
from .inhomogeneity import InhomogeneityProfile
from .spectral import GridFunction, SpectralGrid, norm, resample, scaling_generator

log = logging.getLogger(__name__)

DENSE_GRID = SpectralGrid(32.0, 2**11)
SOLVE_RTOL = 1e-8  # certified main-grid residual, relative to ||rhs||
SOLVABILITY_TOL = 1e-6


class IllConditionedError(RuntimeError):
    def __init__(self, message, condition=None, residual=None):
        super().__init__(message)
        self.condition = condition
        self.residual = residual


class KernelCertificateError(RuntimeError):
    pass


class SolvabilityError(RuntimeError):
    pass


def _lap_half(values: np.ndarray, g: SpectralGrid) -> np.ndarray:
    return np.fft.ifft(np.abs(g.xi) * np.fft.fft(values)).real


def _even(v: np.ndarray, g: SpectralGrid) -> np.ndarray:
    return 0.5 * (v + v[g.mirror])


def _unit(v: np.ndarray, dx: float) -> np.ndarray:
    return v / np.sqrt(dx * np.dot(v, v))


def dense_half_wave(g: SpectralGrid) -> np.ndarray:
    """Dense symmetric circulant matrix of ``D`` on ``g``."""
    col = np.fft.ifft(np.abs(g.xi)).real
    col = 0.5 * (col + col[g.mirror])  # exact symmetry of the circulant
    return sla.circulant(col)


@dataclass
class LinearizedPair:
    """``L+`` and ``L-`` around a certified ground state."""

    gs: GroundState
    dense_gs: GroundState
    Lplus: np.ndarray  # dense, on dense_gs.grid
    Lminus: np.ndarray
    kernel_plus: GridFunction  # Q', unit L2 norm, main grid
    kernel_minus: GridFunction  # Q, unit L2 norm, main grid
    certificates: dict = field(default_factory=dict)

    @property
    def grid(self) -> SpectralGrid:
        return self.gs.grid

    @property
    def dense_grid(self) -> SpectralGrid:
        return self.dense_gs.grid

    def potential(self, which: str) -> np.ndarray:
        q = self.gs.values
        return 1.0 - (3.0 if which == "plus" else 1.0) * q**2

    def apply(self, which: str, f) -> GridFunction:
        """Matrix-free ``L_which f`` on the main grid (real and imaginary parts separately)."""
        v = f.values if isinstance(f, GridFunction) else np.asarray(f)
        g = self.grid
        out = np.fft.ifft(np.abs(g.xi) * np.fft.fft(v)) + self.potential(which) * v
        return GridFunction(g, out)

    def kernel(self, which: str) -> GridFunction:
        return self.kernel_plus if which == "plus" else self.kernel_minus


def assemble(gs: GroundState, dense_grid: SpectralGrid = DENSE_GRID, kernel_tol: float = 1e-6) -> LinearizedPair:
    """Build the pair and its kernel certificates.

    Raises :class:`KernelCertificateError` when either discrete kernel
    certificate exceeds ``kernel_tol`` (grid too coarse).
    """
    g = gs.grid
    q = gs.values
    dq = np.fft.ifft(1j * g.xi * np.where(np.arange(g.N) == g.N // 2, 0, 1) * np.fft.fft(q)).real
    kp = GridFunction(g, _unit(dq, g.dx), kind="real")
    km = GridFunction(g, _unit(q, g.dx), kind="real")

    guess = resample(gs.Q, dense_grid).values.real
    dense_gs = solve_petviashvili(dense_grid, SolverConfig(initial_guess=guess))
    D = dense_half_wave(dense_grid)
    qd = dense_gs.values
    Lp = D + np.diag(1.0 - 3.0 * qd**2)
    Lm = D + np.diag(1.0 - qd**2)

    pair = LinearizedPair(gs, dense_gs, Lp, Lm, kp, km)
    lam_q = gs.lambda_Q
    cert = {
        "Lminus_Q": norm(pair.apply("minus", gs.Q)) / norm(gs.Q),
        "Lplus_dQ": norm(pair.apply("plus", kp)),
        "Lplus_LambdaQ_plus_Q": norm(pair.apply("plus", lam_q) + gs.Q) / norm(gs.Q),
        "dense_symmetry_plus": float(np.max(np.abs(Lp - Lp.T))),
        "dense_symmetry_minus": float(np.max(np.abs(Lm - Lm.T))),
    }
    pair.certificates = cert
    if cert["Lminus_Q"] > kernel_tol or cert["Lplus_dQ"] > kernel_tol:
        raise KernelCertificateError(f"kernel certificate failed: {cert}")
    return pair


# --------------------------------------------------------------------------- solves


def _bordered_operator(pair: LinearizedPair, which: str, kvec: np.ndarray, even: bool):
    g = pair.grid
    pot = pair.potential(which)
    xi = np.abs(g.xi)
    N = g.N

    def mv(z):
        v = z[:N]
        mu = z[N]
        if even:
            v = _even(v, g)
        out = np.empty(N + 1)
        Lv = np.fft.ifft(xi * np.fft.fft(v)).real + pot * v
        if even:
            Lv = _even(Lv, g)
        out[:N] = Lv + mu * kvec
        out[N] = kvec @ v
        return out

    prec_sym = 1.0 / (xi + 1.0)
    kk = kvec @ np.fft.ifft(prec_sym * np.fft.fft(kvec)).real
    schur = 1.0 / max(kvec @ np.fft.ifft((xi + 1.0) * np.fft.fft(kvec)).real, kk)

    def pv(z):
        out = np.empty(N + 1)
        out[:N] = np.fft.ifft(prec_sym * np.fft.fft(z[:N])).real
        out[N] = schur * z[N]
        return out

    A = LinearOperator((N + 1, N + 1), matvec=mv, dtype=float)
    M = LinearOperator((N + 1, N + 1), matvec=pv, dtype=float)
    return A, M


def solve_on_complement(
    pair: LinearizedPair,
    which: str,
    rhs,
    rtol: float = SOLVE_RTOL,
    return_info: bool = False,
):
    """Solve ``L_which f = P rhs`` with ``f`` orthogonal to the kernel vector.

    ``P`` removes the kernel component of ``rhs`` (reported in the info dict
    as ``kernel_component``).  The solve is a Lagrange-bordered MINRES on the
    main grid preconditioned by ``(D+1)^{-1}``; the answer is certified by
    recomputing ``||L f - P rhs|| / ||rhs||`` and raises
    :class:`IllConditionedError` above ``rtol``.
    """
    if which not in ("plus", "minus"):
        raise ValueError("which must be 'plus' or 'minus'")
    g = pair.grid
    r = rhs.values if isinstance(rhs, GridFunction) else np.asarray(rhs)
    if np.max(np.abs(np.imag(r))) > 1e-12 * max(1.0, np.max(np.abs(r))):
        raise ValueError("solve_on_complement expects a real right-hand side")
    r = np.real(r).astype(float)
    kv = pair.kernel(which).values.real
    comp = g.dx * np.dot(kv, r)
    r_proj = r - comp * kv
    even = np.max(np.abs(r_proj - r_proj[g.mirror])) <= 1e-12 * max(np.max(np.abs(r_proj)), 1e-300)
    rnorm = np.sqrt(g.dx * np.dot(r, r))
    if rnorm == 0:
        out = GridFunction(g, np.zeros(g.N), kind="real")
        return (out, {"kernel_component": 0.0, "residual": 0.0, "iterations": 0}) if return_info else out

    kvec = kv * np.sqrt(g.dx)  # Euclidean unit vector
    A, M = _bordered_operator(pair, which, kvec, even)
    b = np.concatenate([r_proj, [0.0]])
    iters = [0]

    def count(_):
        iters[0] += 1

    sol, info = minres(A, b, M=M, rtol=1e-14, maxiter=2000, callback=count)
    f = sol[: g.N]
    if even:
        f = _even(f, g)
    f = f - g.dx * np.dot(kv, f) * kv
    Lf = np.fft.ifft(np.abs(g.xi) * np.fft.fft(f)).real + pair.potential(which) * f
    res = float(np.sqrt(g.dx * np.sum((Lf - r_proj) ** 2)) / rnorm)
    if res > rtol:
        raise IllConditionedError(
            f"constrained solve for L{'+' if which == 'plus' else '-'} missed the residual target "
            f"({res:.2e} > {rtol:.0e}, minres info {info})",
            condition=_condition_estimate(pair, which),
            residual=res,
        )
    out = GridFunction(g, f, kind="real")
    if return_info:
        return out, {"kernel_component": float(comp), "residual": res, "iterations": iters[0]}
    return out


def _condition_estimate(pair: LinearizedPair, which: str) -> float:
    """Condition number of the dense bordered matrix on the secondary grid."""
    A = _dense_bordered(pair, which)
    return float(np.linalg.cond(A))


def _dense_bordered(pair: LinearizedPair, which: str) -> np.ndarray:
    gd = pair.dense_grid
    qd = pair.dense_gs.values
    if which == "plus":
        kv = np.fft.ifft(1j * gd.xi * np.where(np.arange(gd.N) == gd.N // 2, 0, 1) * np.fft.fft(qd)).real
    else:
        kv = qd
    kv = kv / np.linalg.norm(kv)
    L = pair.Lplus if which == "plus" else pair.Lminus
    n = gd.N
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = L
    A[:n, n] = kv
    A[n, :n] = kv
    return A


def solve_dense(pair: LinearizedPair, which: str, rhs: np.ndarray) -> np.ndarray:
    """Direct bordered solve on the secondary grid (``rhs`` sampled there)."""
    n = pair.dense_grid.N
    A = _dense_bordered(pair, which)
    kv = A[:n, n]
    r = np.asarray(rhs, dtype=float)
    r = r - np.dot(kv, r) * kv
    sol = sla.solve(A, np.concatenate([r, [0.0]]), assume_a="sym")
    return sol[:n]


def lowest_spectrum(pair: LinearizedPair, which: str, count: int = 5):
    """Lowest ``count`` eigenpairs of the dense matrix, ascending.  Eigenvectors
    are returned as :class:`GridFunction` on the secondary grid, unit L2 norm."""
    A = pair.Lplus if which == "plus" else pair.Lminus
    try:
        w, v = sla.eigh(A, subset_by_index=[0, count - 1])
    except sla.LinAlgError as exc:
        raise sla.LinAlgError(f"eigh failed on a {A.shape} matrix (max |A| = {np.max(np.abs(A)):.3e})") from exc
    gd = pair.dense_grid
    return [(float(w[i]), GridFunction(gd, _unit(v[:, i], gd.dx), kind="real")) for i in range(count)]


# --------------------------------------------------------------------------- coefficients


@dataclass
class ProfileCoefficientSet:
    """Correction functions of the approximate blowup profile and the ``rho`` directions."""

    Q: GridFunction
    S10: GridFunction
    T20: GridFunction
    T02: GridFunction
    S30: GridFunction
    T40: GridFunction
    rho1: GridFunction
    rho2_hat: GridFunction
    e1: float
    k_second_deriv_at_0: float
    solvability_residuals: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    FIELDS = ("Q", "S10", "T20", "T02", "S30", "T40", "rho1", "rho2_hat")

    @property
    def grid(self) -> SpectralGrid:
        return self.Q.grid

    def functions(self) -> dict:
        return {name: getattr(self, name) for name in self.FIELDS}


def _lam(f: np.ndarray, g: SpectralGrid) -> np.ndarray:
    return scaling_generator(GridFunction(g, f)).values.real


def _solvability(q: np.ndarray, rhs: np.ndarray, g: SpectralGrid) -> float:
    """``|(Q, rhs)| / (||Q|| ||rhs||)``."""
    nr = np.sqrt(g.dx * np.dot(rhs, rhs))
    if nr == 0:
        return 0.0
    return float(abs(g.dx * np.dot(q, rhs)) / (np.sqrt(g.dx * np.dot(q, q)) * nr))


def build_profile_coefficients(
    pair: LinearizedPair,
    k: InhomogeneityProfile,
    t40_rhs: str = "complete",
    rho2_rhs: str = "complete",
) -> ProfileCoefficientSet:
    """Solve the hierarchy of constrained linear problems in dependency order.

    ``L- S10 = Lambda Q``
    ``L+ T20 = S10/2 - Lambda S10 + S10^2 Q``
    ``L+ T02 = k''(0)/2 y^2 Q^3``
    ``L- S30 = -T20 + Lambda T20 + 2 Q T20 S10 + S10^3``
    ``L+ T40 = 3/2 S30 - Lambda S30 + 3 Q T20^2 + 2 Q S10 S30 + S10^2 T20``
    ``L+ rho1 = S10``
    ``L- rho2_hat = 2 Q S10 rho1 + Lambda rho1 - 2 T20``

    The ``b^4`` right-hand side includes ``S10^2 T20``, which comes from
    ``|Q_P|^2 Q_P`` at fourth order; ``t40_rhs="short"`` drops it (the
    profile residual then only decays like ``b^4``).  Likewise
    ``rho2_rhs="short"`` uses ``S10 rho1`` in place of ``2 Q S10 rho1``; that
    variant is not orthogonal to ``Q`` and is reported only as a diagnostic.
    """
    if t40_rhs not in ("complete", "short") or rho2_rhs not in ("complete", "short"):
        raise ValueError("unknown right-hand-side variant")
    g = pair.grid
    q = pair.gs.values
    y = g.x
    k2 = k.second_derivative_at_0
    if not k.homogeneous and not k2 < 0:
        raise ValueError("k''(0) must be negative")
    lam = lambda f: _lam(f, g)  # noqa: E731
    dq = pair.kernel_plus.values.real
    infos = {}

    def solve(name, which, rhs):
        f, info = solve_on_complement(pair, which, rhs, return_info=True)
        infos[name] = info
        return f.values.real

    S10 = solve("S10", "minus", pair.gs.lambda_Q.values.real)
    rhs_T20 = 0.5 * S10 - lam(S10) + S10**2 * q
    T20 = solve("T20", "plus", rhs_T20)
    rhs_T02 = 0.5 * k2 * y**2 * q**3
    T02 = solve("T02", "plus", rhs_T02)
    rhs_S30 = -T20 + lam(T20) + 2 * q * T20 * S10 + S10**3
    S30 = solve("S30", "minus", rhs_S30)
    rhs_T40 = 1.5 * S30 - lam(S30) + 3 * q * T20**2 + 2 * q * S10 * S30
    if t40_rhs == "complete":
        rhs_T40 = rhs_T40 + S10**2 * T20
    T40 = solve("T40", "plus", rhs_T40)
    rho1 = solve("rho1", "plus", S10)
    rhs_rho2_short = S10 * rho1 + lam(rho1) - 2 * T20
    rhs_rho2_complete = 2 * q * S10 * rho1 + lam(rho1) - 2 * T20
    rhs_rho2 = rhs_rho2_complete if rho2_rhs == "complete" else rhs_rho2_short

    rho2_solv = _solvability(q, rhs_rho2, g)
    if rho2_solv > SOLVABILITY_TOL:
        raise SolvabilityError(f"solvability violated for rho2 (normalized residual {rho2_solv:.2e})")
    rho2_hat = solve("rho2_hat", "minus", rhs_rho2)

    def gf(v):
        return GridFunction(g, v, kind="real")

    Lm_S10 = pair.apply("minus", S10).values.real
    e1 = 0.5 * g.dx * np.dot(Lm_S10, S10)
    residuals = {
        "r1_T02": float(abs(g.dx * np.dot(rhs_T02, dq)) / (np.sqrt(g.dx * np.dot(rhs_T02, rhs_T02)) + 1e-300)),
        "r2_S30": _solvability(q, rhs_S30, g),
        "r3_rho2": rho2_solv,
    }
    for name, val in residuals.items():
        if val > SOLVABILITY_TOL:
            raise SolvabilityError(f"solvability violated: {name} = {val:.2e}")
    ss = g.dx * np.dot(S10, S10)
    diagnostics = {
        "mass_identity_rel": float(abs(ss + 2 * g.dx * np.dot(q, T20)) / ss),
        "Q_rho1": float(g.dx * np.dot(q, rho1)),
        "rho2_short_solvability": _solvability(q, rhs_rho2_short, g),
        "S10_Q": float(g.dx * np.dot(S10, q)),
        "solves": infos,
        "t40_rhs": t40_rhs,
        "rho2_rhs": rho2_rhs,
    }
    return ProfileCoefficientSet(
        Q=pair.gs.Q,
        S10=gf(S10),
        T20=gf(T20),
        T02=gf(T02),
        S30=gf(S30),
        T40=gf(T40),
        rho1=gf(rho1),
        rho2_hat=gf(rho2_hat),
        e1=float(e1),
        k_second_deriv_at_0=float(k2),
        solvability_residuals=residuals,
        diagnostics=diagnostics,
        provenance={"grid": {"L": g.L, "N": g.N}, "k": k.describe()},
    )


def coercivity_sample(pair: LinearizedPair, S10: GridFunction, samples: int = 100, seed: int = 0) -> float:
    """Smallest ``(L+ v, v) / ||v||^2`` over random even ``v`` orthogonal to ``Q``, ``S10`` and ``Q'``."""
    g = pair.grid
    rng = np.random.default_rng(seed)
    basis = [pair.gs.values, S10.values.real, pair.kernel_plus.values.real]
    ortho = []
    for b in basis:  # Gram-Schmidt in the dx-weighted product
        v = b.copy()
        for o in ortho:
            v -= g.dx * np.dot(o, v) * o
        ortho.append(_unit(v, g.dx))
    ratios = []
    for _ in range(samples):
        width = rng.uniform(0.3, 5.0)
        coeffs = rng.normal(size=6)
        z = g.x / width
        v = sum(c * z ** (2 * j) for j, c in enumerate(coeffs)) * np.exp(-0.5 * z**2)
        v = _even(v, g)
        for o in ortho:
            v -= g.dx * np.dot(o, v) * o
        Lv = pair.apply("plus", v).values.real
        ratios.append(g.dx * np.dot(Lv, v) / (g.dx * np.dot(v, v)))
    return float(min(ratios))

"""Modulation decomposition ``u = lam^{-1/2} (Q_P + eps)(x/lam) e^{i gamma}``.

The parameters ``(b, lam, gamma)`` are fixed by three orthogonality
conditions ``Im (f, eps) = 0`` with ``f`` running over ``Lambda Q_P``,
``d_b Q_P`` and ``rho = rho1 + i b rho2_hat``.  All profile functions live on
a moderate "y-grid" obtained by restricting the coefficient grid.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .inhomogeneity import InhomogeneityProfile
from .linearized import SOLVABILITY_TOL, ProfileCoefficientSet, SolvabilityError
from .profile import BlowupProfile, ParameterRangeError, ProfileParams, assemble_profile
from .spectral import (
    GridFunction,
    SpectralGrid,
    halfnorm_sq,
    norm,
    resample,
    scaling_generator,
)

log = logging.getLogger(__name__)

Y_GRID = SpectralGrid(128.0, 2**13)
DELTA = 0.1
NEWTON_TOL = 1e-12  # on |G| / ||Q||^2
MAX_NEWTON = 30
MAX_HALVINGS = 8
MIN_RESOLUTION = 8.0  # lam * xi_max of the physical grid


class DecompositionError(RuntimeError):
    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = residuals


class ScaleUnresolvedError(DecompositionError):
    pass


def _restrict(f: GridFunction, target: SpectralGrid) -> np.ndarray:
    """Values of ``f`` at the nodes of ``target``: exact slicing when the nodes
    coincide, band-limited interpolation otherwise."""
    src = f.grid
    offset = (target.L - src.L) / src.dx
    if abs(src.dx - target.dx) < 1e-15 * src.dx and abs(offset - round(offset)) < 1e-9 and target.L <= src.L:
        j0 = int(round((target.x[0] - src.x[0]) / src.dx))
        return f.values[j0 : j0 + target.N].copy()
    return resample(f, target).values


@dataclass
class ModulationBasis:
    """Coefficient functions and their scaling derivatives on the y-grid."""

    grid: SpectralGrid
    c: dict  # name -> real array
    lam_c: dict  # name -> real array (Lambda of each coefficient)
    e1: float
    q_mass: float
    residuals: dict

    @classmethod
    def build(cls, coeffs: ProfileCoefficientSet, grid: SpectralGrid = Y_GRID) -> "ModulationBasis":
        c, lam_c = {}, {}
        for name, f in coeffs.functions().items():
            c[name] = _restrict(f, grid).real
            lam_c[name] = _restrict(scaling_generator(f), grid).real
        return cls(grid, c, lam_c, coeffs.e1, norm(coeffs.Q) ** 2, dict(coeffs.solvability_residuals))

    def profile(self, b: float, lam: float) -> dict:
        """``Q_P``, its parameter derivatives and ``Lambda`` of each, as complex arrays."""
        c, lc = self.c, self.lam_c
        qp = c["Q"] + b**2 * c["T20"] + lam**2 * c["T02"] + b**4 * c["T40"] + 1j * (b * c["S10"] + b**3 * c["S30"])
        lam_qp = lc["Q"] + b**2 * lc["T20"] + lam**2 * lc["T02"] + b**4 * lc["T40"] + 1j * (b * lc["S10"] + b**3 * lc["S30"])
        d_b = 2 * b * c["T20"] + 4 * b**3 * c["T40"] + 1j * (c["S10"] + 3 * b**2 * c["S30"])
        d_bb = 2 * c["T20"] + 12 * b**2 * c["T40"] + 6j * b * c["S30"]
        d_lam = 2 * lam * c["T02"] + 0j
        lam_d_b = 2 * b * lc["T20"] + 4 * b**3 * lc["T40"] + 1j * (lc["S10"] + 3 * b**2 * lc["S30"])
        rho = c["rho1"] + 1j * b * c["rho2_hat"]
        return {
            "qp": qp,
            "lam_qp": lam_qp,
            "d_b": d_b,
            "d_bb": d_bb,
            "d_lam": d_lam,
            "lam_d_b": lam_d_b,
            "lam_d_lam": 2 * lam * lc["T02"] + 0j,
            "rho": rho,
            "d_b_rho": 1j * c["rho2_hat"] + 0j,
        }


@dataclass
class ModulationState:
    b: float
    lam: float
    gamma: float
    eps: GridFunction
    ortho_residuals: tuple
    eps_norms: dict
    iterations: int = 0
    coverage: float = 1.0

    @property
    def gamma_mod(self) -> float:
        return float(np.mod(self.gamma, 2 * np.pi))


# --------------------------------------------------------------------------- synthesis


def synthesize(
    coeffs: ProfileCoefficientSet,
    b: float,
    lam: float,
    gamma: float,
    target: SpectralGrid,
    eps: GridFunction | None = None,
    eta: float | None = None,
) -> GridFunction:
    """``lam^{-1/2} (Q_P + eps)(x / lam) e^{i gamma}`` sampled on ``target``."""
    p = ProfileParams(b, lam) if eta is None else ProfileParams(b, lam, eta)
    v = assemble_profile(coeffs, p).qp
    u = resample(v, target, scale=1.0 / lam).values
    if eps is not None:
        u = u + resample(eps, target, scale=1.0 / lam).values
    return GridFunction(target, lam**-0.5 * np.exp(1j * gamma) * u)


# --------------------------------------------------------------------------- decomposition


def _pullback(u: GridFunction, lu: GridFunction, lam: float, y: SpectralGrid):
    """``lam^{1/2} u(lam y)`` and ``lam^{1/2} (Lambda u)(lam y)`` on the y-grid, plus coverage."""
    v = resample(u, y, scale=lam).values * math.sqrt(lam)
    lv = resample(lu, y, scale=lam).values * math.sqrt(lam)
    inside = np.abs(lam * y.x) < u.grid.L
    return v, lv, float(np.mean(inside))


def _conditions(fs, eps, dx):
    return np.array([np.imag(dx * np.vdot(f, eps)) for f in fs])


def decompose(
    u: GridFunction,
    basis: ModulationBasis,
    guess: tuple,
    tol: float = NEWTON_TOL,
    max_iter: int = MAX_NEWTON,
    delta: float = DELTA,
    lambda_u: GridFunction | None = None,
) -> ModulationState:
    """Newton solve of the three orthogonality conditions in ``(b, lam, gamma)``.

    The Jacobian is analytic: ``d eps / d lam = Lambda v / lam - d_lam Q_P``,
    ``d eps / d gamma = -i v`` and ``d eps / d b = -d_b Q_P``, together with
    the parameter derivatives of the three test functions.  A step that
    increases the residual is halved up to eight times.
    """
    y = basis.grid
    dx = y.dx
    b, lam, gamma = (float(g) for g in guess)
    if not lam > 0:
        raise DecompositionError("lambda guess must be positive")
    lu = lambda_u if lambda_u is not None else scaling_generator(u)
    scale = basis.q_mass

    def check_scale(lam_):
        if lam_ * u.grid.xi_max < MIN_RESOLUTION:
            raise ScaleUnresolvedError(
                f"scale unresolved: lam * xi_max = {lam_ * u.grid.xi_max:.2f} < {MIN_RESOLUTION}"
            )

    def evaluate(b_, lam_, gamma_):
        check_scale(lam_)
        v, lv, cover = _pullback(u, lu, lam_, y)
        phase = np.exp(-1j * gamma_)
        v, lv = v * phase, lv * phase
        pr = basis.profile(b_, lam_)
        eps = v - pr["qp"]
        fs = (pr["lam_qp"], pr["d_b"], pr["rho"])
        return _conditions(fs, eps, dx), (v, lv, pr, eps, fs, cover)

    G, cache = evaluate(b, lam, gamma)
    it = 0
    while np.max(np.abs(G)) > tol * scale:
        if it >= max_iter:
            raise DecompositionError(f"Newton did not converge in {max_iter} iterations", residuals=G / scale)
        v, lv, pr, eps, fs, _ = cache
        dfs_b = (pr["lam_d_b"], pr["d_bb"], pr["d_b_rho"])
        dfs_l = (pr["lam_d_lam"], np.zeros_like(eps), np.zeros_like(eps))
        deps_b = -pr["d_b"]
        deps_l = lv / lam - pr["d_lam"]
        deps_g = -1j * v
        J = np.empty((3, 3))
        for i, f in enumerate(fs):
            J[i, 0] = np.imag(dx * np.vdot(dfs_b[i], eps)) + np.imag(dx * np.vdot(f, deps_b))
            J[i, 1] = np.imag(dx * np.vdot(dfs_l[i], eps)) + np.imag(dx * np.vdot(f, deps_l))
            J[i, 2] = np.imag(dx * np.vdot(f, deps_g))
        step = np.linalg.solve(J, -G)
        t = 1.0
        for _ in range(MAX_HALVINGS + 1):
            nb, nl, ng = b + t * step[0], lam + t * step[1], gamma + t * step[2]
            if nl > 0:
                try:
                    G_new, cache_new = evaluate(nb, nl, ng)
                except ScaleUnresolvedError:
                    G_new = None
                if G_new is not None and np.max(np.abs(G_new)) < np.max(np.abs(G)):
                    break
            t *= 0.5
        else:
            raise DecompositionError("Newton step failed after 8 halvings", residuals=G / scale)
        b, lam, gamma, G, cache = nb, nl, ng, G_new, cache_new
        it += 1
    eps = GridFunction(y, cache[3])
    return ModulationState(
        b=b,
        lam=lam,
        gamma=gamma,
        eps=eps,
        ortho_residuals=tuple(float(g) for g in G),
        eps_norms=eps_norms(eps, delta),
        iterations=it,
        coverage=cache[5],
    )


def eps_norms(eps: GridFunction, delta: float = DELTA) -> dict:
    l2 = norm(eps)
    return {
        "l2": l2,
        "h_half": math.sqrt(l2**2 + halfnorm_sq(eps, 0.5)),
        "d_half_delta": math.sqrt(halfnorm_sq(eps, 0.5 + delta)),
    }


# --------------------------------------------------------------------------- rho and M


def compute_rho(coeffs: ProfileCoefficientSet, b: float) -> tuple[GridFunction, GridFunction]:
    """``(rho1, b rho2_hat)``; refuses coefficient sets whose ``rho2`` equation was not solvable."""
    r3 = coeffs.solvability_residuals.get("r3_rho2", math.inf)
    if not r3 < SOLVABILITY_TOL:
        raise SolvabilityError(f"rho2 right-hand side is not orthogonal to Q (residual {r3:.2e})")
    g = coeffs.grid
    return coeffs.rho1, GridFunction(g, b * coeffs.rho2_hat.values.real, kind="real")


def apply_M(
    eps: GridFunction,
    profile: BlowupProfile,
    k: InhomogeneityProfile,
    lam: float,
    which: str,
    printed: bool = False,
) -> GridFunction:
    """Linearization of ``eps -> (D + 1) eps - k(lam y) |Q_P + eps|^2 (Q_P + eps)``.

    ``which="plus"`` returns the real component, ``"minus"`` the imaginary
    one (both as real fields).  ``printed=True`` uses ``2 Q1^2 eps2`` in the
    minus form instead of ``2 Q2^2 eps2``.
    """
    g = eps.grid
    q = profile.qp.values
    q1, q2 = q.real, q.imag
    e1, e2 = eps.values.real, eps.values.imag
    ky = k(lam * g.x)
    mod2 = q1**2 + q2**2
    absxi = np.abs(g.xi)
    if which == "plus":
        lin = np.fft.ifft(absxi * np.fft.fft(e1)).real + e1
        out = lin - ky * (mod2 * e1 + 2 * q1**2 * e1 + 2 * q1 * q2 * e2)
    elif which == "minus":
        lin = np.fft.ifft(absxi * np.fft.fft(e2)).real + e2
        sq = q1**2 if printed else q2**2
        out = lin - ky * (mod2 * e2 + 2 * sq * e2 + 2 * q1 * q2 * e1)
    else:
        raise ValueError("which must be 'plus' or 'minus'")
    return GridFunction(g, out, kind="real")


def inner_product_defect(eps: GridFunction, profile: BlowupProfile, k: InhomogeneityProfile, lam: float) -> float:
    """``(M-(eps) - b Lambda eps1, d_b Q2P) + (M+(eps) + b Lambda eps2, d_b Q1P)``; ``O(|P|^2 ||eps||)``."""
    g = eps.grid
    b = profile.params.b
    lam_e1 = scaling_generator(GridFunction(g, eps.values.real)).values.real
    lam_e2 = scaling_generator(GridFunction(g, eps.values.imag)).values.real
    mp = apply_M(eps, profile, k, lam, "plus").values.real
    mm = apply_M(eps, profile, k, lam, "minus").values.real
    db = profile.d_b.values
    return float(g.dx * (np.dot(mm - b * lam_e1, db.imag) + np.dot(mp + b * lam_e2, db.real)))


# --------------------------------------------------------------------------- tracking


@dataclass
class ModTrack:
    records: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    COLUMNS = (
        "t",
        "s",
        "b",
        "lambda",
        "gamma",
        "gamma_mod",
        "mod_b",
        "mod_gamma",
        "mod_lambda",
        "eps_l2",
        "eps_h_half",
        "eps_d_half_delta",
        "ortho_max",
        "iterations",
        "status",
    )

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if r[name] is None else r[name] for r in self.records], dtype=float)

    def ok(self) -> list:
        return [r for r in self.records if r["status"] == "ok"]


def track(
    snapshots: list,
    basis: ModulationBasis,
    A0: float | None = None,
    scale_ref: float | None = None,
    first_guess: tuple | None = None,
    delta: float = DELTA,
) -> ModTrack:
    """Decompose each ``(t, u)`` snapshot, warm-starting from the previous one.

    The first guess takes ``lam`` from the ``||D^{1/2}||`` proxy and
    ``b = sqrt(lam) / A0`` when ``A0`` is given (else ``b = 0``).  The
    rescaled time ``s`` is the cumulative trapezoid of ``1/lam`` in ``t``.
    ``Mod = (b_s + b^2/2, gamma_s - 1, lam_s/lam + b)`` uses
    ``numpy.gradient`` in ``s`` (second-order centered differences on the
    nonuniform grid, one-sided at the ends).  ``gamma_s - 1`` is the
    derivative of ``gamma - s``, the phase relative to the soliton rotation.
    A failed decomposition is recorded with its message and skipped.
    """
    scale_ref = math.sqrt(basis.q_mass) if scale_ref is None else scale_ref
    out = ModTrack(meta={"y_grid": {"L": basis.grid.L, "N": basis.grid.N}, "delta": delta, "A0": A0})
    prev = None
    for t, u in snapshots:
        if prev is None:
            if first_guess is not None:
                guess = first_guess
            else:
                lam0 = (scale_ref**2) / halfnorm_sq(u)
                b0 = math.sqrt(lam0) / A0 if A0 else 0.0
                v = resample(u, basis.grid, scale=lam0).values
                gamma0 = float(np.angle(np.vdot(basis.c["Q"], v)))
                guess = (b0, lam0, gamma0)
        else:
            # advance the phase by the elapsed rescaled time
            guess = (prev[1].b, prev[1].lam, prev[1].gamma + (t - prev[0]) / prev[1].lam)
        rec = {"t": float(t), "status": "ok", "message": ""}
        try:
            st = decompose(u, basis, guess, delta=delta)
        except (DecompositionError, ParameterRangeError, np.linalg.LinAlgError) as exc:
            rec.update(status="failed", message=str(exc))
            out.records.append(_blank(rec))
            continue
        rec.update(
            b=st.b,
            **{"lambda": st.lam},
            gamma=st.gamma,
            gamma_mod=st.gamma_mod,
            eps_l2=st.eps_norms["l2"],
            eps_h_half=st.eps_norms["h_half"],
            eps_d_half_delta=st.eps_norms["d_half_delta"],
            ortho_max=float(np.max(np.abs(st.ortho_residuals)) / basis.q_mass),
            iterations=st.iterations,
        )
        out.records.append(rec)
        prev = (t, st)
    _fill_mod(out)
    return out


def _blank(rec: dict) -> dict:
    for key in ModTrack.COLUMNS:
        rec.setdefault(key, None)
    return rec


def _fill_mod(track_: ModTrack) -> None:
    ok = track_.ok()
    for r in track_.records:
        r.setdefault("s", None)
        for key in ("mod_b", "mod_gamma", "mod_lambda"):
            r[key] = None
    if len(ok) < 3:
        return
    t = np.array([r["t"] for r in ok])
    lam = np.array([r["lambda"] for r in ok])
    b = np.array([r["b"] for r in ok])
    gamma = np.array([r["gamma"] for r in ok])
    s = np.concatenate([[0.0], np.cumsum(0.5 * (1 / lam[1:] + 1 / lam[:-1]) * np.diff(t))])
    if np.any(np.diff(s) <= 0):
        raise ValueError("rescaled time is not strictly increasing")
    b_s = np.gradient(b, s)
    g_s = np.gradient(gamma, s)
    l_s = np.gradient(np.log(lam), s)
    for i, r in enumerate(ok):
        r["s"] = float(s[i])
        r["mod_b"] = float(b_s[i] + 0.5 * b[i] ** 2)
        r["mod_gamma"] = float(g_s[i] - 1.0)
        r["mod_lambda"] = float(l_s[i] + b[i])

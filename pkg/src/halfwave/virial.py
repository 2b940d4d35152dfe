"""Localized virial toolbox: cutoff ``phi``, resolvent smoothing and the
half-derivative identity

    int_0^inf sqrt(s) ||grad u_s||^2 ds = ||D^{1/2} u||^2,
    u_s = sqrt(2/pi) (-Delta + s)^{-1} u,

the functional ``J_A`` and the localized quadratic forms built on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .inhomogeneity import InhomogeneityProfile
from .spectral import GridFunction, halfnorm_sq, norm

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


# --------------------------------------------------------------------------- cutoff


def _bridge_coefficients() -> np.ndarray:
    """Quintic bridge for ``phi'`` on ``[1, 2]``.

    ``phi'`` is ``x`` on ``[0, 1]`` and ``3 - e^{-x}`` on ``[2, inf)``; the
    bridge matches value, slope and curvature of ``phi'`` at both ends.
    """
    e2 = math.exp(-2.0)
    rows, rhs = [], []
    for x0, vals in ((1.0, (1.0, 1.0, 0.0)), (2.0, (3.0 - e2, e2, -e2))):
        for order, val in enumerate(vals):
            row = [0.0] * 6
            for p in range(order, 6):
                row[p] = math.factorial(p) / math.factorial(p - order) * x0 ** (p - order)
            rows.append(row)
            rhs.append(val)
    return np.linalg.solve(np.array(rows), np.array(rhs))


_BRIDGE = _bridge_coefficients()  # coefficients of phi' on [1, 2], increasing powers


def _poly(c: np.ndarray, x: np.ndarray, order: int) -> np.ndarray:
    """``order``-th derivative of ``sum c_p x^p``."""
    out = np.zeros_like(x)
    for p in range(order, len(c)):
        out = out + c[p] * math.factorial(p) / math.factorial(p - order) * x ** (p - order)
    return out


def _bridge_integral(x: np.ndarray) -> np.ndarray:
    return sum(c / (p + 1) * (x ** (p + 1) - 1.0) for p, c in enumerate(_BRIDGE))


_PHI_AT_2 = 0.5 + float(_bridge_integral(np.array(2.0)))


@dataclass(frozen=True)
class CutoffPhi:
    """Even convex cutoff with ``phi'(x) = x`` on ``[0, 1]`` and ``3 - e^{-x}`` beyond 2.

    The scaled version used by the localized forms is
    ``phi_A(x) = A^2 phi(x / A)``, so that ``Delta phi_A = phi''(x/A) -> 1``
    on compact sets as ``A`` grows.
    """

    A: float = 1.0

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("A must be positive")

    @staticmethod
    def derivative(x, order: int = 1) -> np.ndarray:
        """``phi^{(order)}(x)`` of the unscaled cutoff, ``order`` in 0..4."""
        x = np.asarray(x, dtype=float)
        ax = np.abs(x)
        sign = np.sign(x) if order % 2 else 1.0
        inner = ax <= 1.0
        mid = (ax > 1.0) & (ax < 2.0)
        outer = ax >= 2.0
        out = np.zeros_like(ax)
        if order == 0:
            out = np.where(inner, 0.5 * ax**2, out)
            out = np.where(mid, 0.5 + _bridge_integral(np.clip(ax, 1.0, 2.0)), out)
            out = np.where(outer, _PHI_AT_2 + 3.0 * (ax - 2.0) + np.exp(-ax) - math.exp(-2.0), out)
            return out
        # derivative of phi' of order ``order - 1``
        m = order - 1
        lin = {0: ax, 1: np.ones_like(ax)}.get(m, np.zeros_like(ax))
        tail = (3.0 - np.exp(-ax)) if m == 0 else (-1.0) ** (m + 1) * np.exp(-ax)
        out = np.where(inner, lin, out)
        out = np.where(mid, _poly(_BRIDGE, np.clip(ax, 1.0, 2.0), m), out)
        out = np.where(outer, tail, out)
        return sign * out

    def __call__(self, x) -> np.ndarray:
        return self.A**2 * self.derivative(np.asarray(x) / self.A, 0)

    def dphi(self, x) -> np.ndarray:
        return self.A * self.derivative(np.asarray(x) / self.A, 1)

    def laplacian(self, x) -> np.ndarray:
        return self.derivative(np.asarray(x) / self.A, 2)

    def bilaplacian(self, x) -> np.ndarray:
        return self.derivative(np.asarray(x) / self.A, 4) / self.A**2

    def certify_bridge(self, samples: int = 1000) -> float:
        """Smallest ``phi''`` on the bridge; must be non-negative."""
        x = np.linspace(1.0, 2.0, samples)
        return float(np.min(self.derivative(x, 2)))


# --------------------------------------------------------------------------- s-quadrature


@dataclass(frozen=True)
class ResolventQuadrature:
    """Nodes and weights for ``int_0^inf sqrt(s) g(s) ds``.

    ``s = scale * tan^2(theta)`` with Gauss-Legendre in ``theta`` on
    ``(0, pi/2)``; the ``sqrt(s)`` factor and the Jacobian are folded into the
    weights.
    """

    count: int = 80
    scale: float = 1.0

    @property
    def mapping(self) -> str:
        return f"s = {self.scale:g} tan^2(theta), Gauss-Legendre({self.count}) on (0, pi/2)"

    def nodes_weights(self) -> tuple[np.ndarray, np.ndarray]:
        z, w = np.polynomial.legendre.leggauss(self.count)
        th = (z + 1.0) * np.pi / 4.0
        wt = w * np.pi / 4.0
        tan = np.tan(th)
        s = self.scale * tan**2
        ds = self.scale * 2.0 * tan / np.cos(th) ** 2
        return s, wt * ds * np.sqrt(s)

    def integrate(self, g) -> float:
        s, w = self.nodes_weights()
        return float(sum(wq * g(sq) for sq, wq in zip(s, w)))


def resolvent_symbol(xi: np.ndarray, s: float) -> np.ndarray:
    return SQRT_2_OVER_PI / (xi**2 + s)


def resolvent_smooth(u: GridFunction, s: float) -> GridFunction:
    """``u_s = sqrt(2/pi) (-Delta + s)^{-1} u``."""
    if not s > 0:
        raise ValueError("s must be positive")
    g = u.grid
    return GridFunction(g, np.fft.ifft(resolvent_symbol(g.xi, s) * np.fft.fft(u.values)), trusted=u.trusted)


def _grad_smooth(uh: np.ndarray, xi: np.ndarray, s: float, grad_sym: np.ndarray) -> np.ndarray:
    return np.fft.ifft(grad_sym * resolvent_symbol(xi, s) * uh)


def halfnorm_identity(u: GridFunction, quad: ResolventQuadrature | None = None, alpha: float = 1.0):
    """Both sides of ``int_0^inf sqrt(s) ||D^alpha u_s||^2 ds = ||D^{alpha - 1/2} u||^2``.

    ``alpha = 1`` is the gradient form.  The left side goes through the
    s-quadrature, the right side through the direct multiplier
    ``|xi|^{2 alpha - 1}``.  Returns ``(lhs, rhs, relerr)``.
    """
    quad = quad or ResolventQuadrature()
    g = u.grid
    uh2 = np.abs(np.fft.fft(u.values)) ** 2
    axi = np.abs(g.xi)
    if alpha == 1.0:
        sym2 = g.xi**2
        sym2[g.N // 2] = 0.0  # the derivative multiplier drops the Nyquist mode
    else:
        sym2 = axi ** (2 * alpha)
    s_nodes, w = quad.nodes_weights()
    # Parseval: dx * sum |f|^2 = dx / N * sum |f_hat|^2
    lhs = sum(wq * g.dx / g.N * np.sum(sym2 * resolvent_symbol(g.xi, s) ** 2 * uh2) for s, wq in zip(s_nodes, w))
    rhs_sym = np.where(axi > 0, axi ** (2 * alpha - 1), 0.0)
    if alpha == 1.0:
        rhs_sym[g.N // 2] = 0.0
    rhs = g.dx / g.N * np.sum(rhs_sym * uh2)
    if rhs == 0:
        return float(lhs), 0.0, 0.0 if lhs == 0 else math.inf
    return float(lhs), float(rhs), float(abs(lhs - rhs) / abs(rhs))


def localized_gradient_form(u: np.ndarray, grid, weight: np.ndarray, quad: ResolventQuadrature) -> float:
    """``int_0^inf sqrt(s) int weight |grad u_s|^2 dx ds``."""
    uh = np.fft.fft(u)
    sym = 1j * grid.xi
    sym[grid.N // 2] = 0.0
    s_nodes, w = quad.nodes_weights()
    total = 0.0
    for s, wq in zip(s_nodes, w):
        gs = _grad_smooth(uh, grid.xi, s, sym)
        total += wq * grid.dx * np.sum(weight * np.abs(gs) ** 2)
    return float(total)


def localized_forms(
    eps: GridFunction,
    Q,
    k: InhomogeneityProfile,
    phi: CutoffPhi,
    quad: ResolventQuadrature | None = None,
) -> tuple[float, float]:
    """``(L_{+,A}(eps1), L_{-,A}(eps2))``.

    ``L_{+,A}(v) = int sqrt(s) int Delta phi_A |grad v_s|^2 + ||v||^2 - 3 int k Q^2 v^2``
    and the minus form with ``k Q^2``; as ``A -> inf`` they tend to
    ``(L+ v, v)`` and ``(L- v, v)``.  ``Q`` is a GridFunction or anything
    carrying one as ``.Q``.
    """
    Q = getattr(Q, "Q", Q)
    quad = quad or ResolventQuadrature()
    g = eps.grid
    weight = phi.laplacian(g.x)
    kx = k(g.x)
    q2 = Q.values.real**2
    out = []
    for v, c in ((eps.values.real, 3.0), (eps.values.imag, 1.0)):
        if not np.any(v):
            out.append(0.0)
            continue
        loc = localized_gradient_form(v.astype(complex), g, weight, quad)
        out.append(float(loc + g.dx * np.sum(v**2) - c * g.dx * np.sum(kx * q2 * v**2)))
    return out[0], out[1]


def localized_coercivity(
    Q: GridFunction,
    S10: GridFunction,
    rho1: GridFunction,
    k: InhomogeneityProfile,
    A: float = 100.0,
    samples: int = 200,
    seed: int = 0,
    quad: ResolventQuadrature | None = None,
) -> dict:
    """Sampled lower bounds ``min L_{+-,A}(v) / ||v||^2`` over random even directions.

    Plus form: ``v`` orthogonal to ``Q`` and ``S10``.  Minus form: ``v``
    orthogonal to ``rho1``.  All fields must share one grid.  The forms are
    evaluated in one batch: each s-node costs a single 2-D FFT.
    """
    quad = quad or ResolventQuadrature()
    g = Q.grid
    rng = np.random.default_rng(seed)
    V = np.empty((samples, g.N))
    for i in range(samples):
        width = rng.uniform(0.3, 5.0)
        z = g.x / width
        V[i] = sum(c * z ** (2 * j) for j, c in enumerate(rng.normal(size=6))) * np.exp(-0.5 * z**2)
    weight = CutoffPhi(A).laplacian(g.x)
    kq2 = k(g.x) * Q.values.real**2
    out = {"A": A, "samples": samples, "seed": seed}
    for name, against, c in (("plus", (Q, S10), 3.0), ("minus", (rho1,), 1.0)):
        W = V.copy()
        ortho = []
        for f in against:
            o = f.values.real.copy()
            for p in ortho:
                o -= g.dx * np.dot(p, o) * p
            ortho.append(o / np.sqrt(g.dx * np.dot(o, o)))
        for o in ortho:
            W -= np.outer(W @ o * g.dx, o)
        Wh = np.fft.fft(W, axis=1)
        sym = 1j * g.xi
        sym[g.N // 2] = 0.0
        loc = np.zeros(samples)
        for s, wq in zip(*quad.nodes_weights()):
            grad = np.fft.ifft(Wh * (sym * resolvent_symbol(g.xi, s)), axis=1)
            loc += wq * g.dx * (np.abs(grad) ** 2 @ weight)
        m = g.dx * np.sum(W**2, axis=1)
        vals = loc + m - c * g.dx * (W**2 @ kq2)
        out[name] = float(np.min(vals / m))
    return out


def biharmonic_term(u: GridFunction, phi: CutoffPhi, quad: ResolventQuadrature | None = None) -> float:
    """``int_0^inf sqrt(s) int Delta^2 phi_A |u_s|^2 dx ds``.

    On the torus the weight is shifted to zero mean: the zero mode of
    ``u_s`` is spatially constant and grows like ``1/s``, and the
    whole-line weight integrates to zero.
    """
    quad = quad or ResolventQuadrature()
    g = u.grid
    weight = phi.bilaplacian(g.x)
    weight = weight - weight.mean()
    uh = np.fft.fft(u.values)
    s_nodes, w = quad.nodes_weights()
    total = 0.0
    for s, wq in zip(s_nodes, w):
        us = np.fft.ifft(resolvent_symbol(g.xi, s) * uh)
        total += wq * g.dx * np.sum(weight * np.abs(us) ** 2)
    return float(total)


def biharmonic_bound(u: GridFunction, phi: CutoffPhi, quad: ResolventQuadrature | None = None) -> float:
    """The lhs of the ``1/A`` estimate; compare with ``||u||^2 / A``."""
    return biharmonic_term(u, phi, quad)


# --------------------------------------------------------------------------- J_A


def evaluate_JA(
    eps_tilde: GridFunction,
    Q_tilde: GridFunction,
    b: float,
    lam: float,
    k: InhomogeneityProfile,
    phi: CutoffPhi,
) -> dict:
    """Localized energy plus the ``b``-weighted virial term, on the physical grid.

    ``J_A = 1/2 ||D^{1/2} e||^2 + 1/(2 lam) ||e||^2
    - int k [F(u) - F(Q) - F'(Q).e] + (b/2) Im int A phi'(x/(A lam)) e' conj(e)``
    with ``u = Q + e``, ``F(u) = |u|^4 / 4``, ``F'(Q).h = Re(|Q|^2 Q conj h)``.
    """
    if not lam > 0:
        raise ValueError("lambda must be positive")
    g = eps_tilde.grid
    e = eps_tilde.values
    q = Q_tilde.values
    u = q + e
    kx = k(g.x)
    t1 = 0.5 * halfnorm_sq(eps_tilde)
    t2 = 0.5 * norm(eps_tilde) ** 2 / lam
    F = lambda z: 0.25 * np.abs(z) ** 4  # noqa: E731
    dF = np.real(np.abs(q) ** 2 * q * np.conj(e))
    t3 = -float(g.dx * np.sum(kx * (F(u) - F(q) - dF)))
    if b == 0:
        t4 = 0.0
    else:
        sym = 1j * g.xi
        sym[g.N // 2] = 0.0
        de = np.fft.ifft(sym * np.fft.fft(e))
        A = phi.A
        weight = A * CutoffPhi.derivative(g.x / (A * lam), 1)
        t4 = float(0.5 * b * np.imag(g.dx * np.sum(weight * de * np.conj(e))))
    terms = {"kinetic": float(t1), "mass": float(t2), "potential": t3, "virial": t4}
    return {"J_A": sum(terms.values()), **terms}

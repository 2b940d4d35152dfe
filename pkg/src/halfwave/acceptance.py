"""The eleven acceptance checks, each returning a pass flag and the measured values."""

from __future__ import annotations

import filecmp
import math
import tempfile
import time
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from . import inhomogeneity as inh
from . import virial
from .experiments import ExperimentConfig, certification_suite, run_blowup_experiment, write_experiment
from .ground_state import DEFAULT_GRID, solve_gradient_flow_oracle, solve_petviashvili
from .linearized import assemble, build_profile_coefficients, lowest_spectrum
from .modulation import ModulationBasis, decompose, synthesize
from .profile import ProfileParams, assemble_profile, loglog_slope, profile_energy, scan
from .spectral import GridFunction, SpectralGrid, inner, mass, norm

# pinned tolerances
GS_RESIDUAL = 1e-9
GS_DUAL = 1e-6
GS_LAMBDA_Q = 1e-8
GS_POHOZAEV = 1e-6
GS_SECONDS = 120.0
LIN_KERNEL = 1e-6
LIN_LAMBDA_Q = 1e-5
LIN_SECONDS = 300.0
IDENTITY_REL = 1e-6
SOLVABILITY = 1e-6
RESIDUAL_SLOPE = (5.0, 0.4)
WEIGHTED_SPREAD = 10.0  # max/min of the weighted residual ratio over the ladder
MASS_RATIO_BOUND = 1.0
ENERGY_REL = 0.02
HALFNORM_REL = 1e-6
BIHARMONIC_HALVING = (1.6, 2.4)
ROUND_TRIP = 1e-9
COVARIANCE = 1e-8
LAMBDA_EXPONENT = (1.9, 2.1)
RATE_SPREAD = 0.15
MASS_DRIFT = 1e-8
LAMBDA_STAR = (0.8, 1.2)
B_RATIO = 0.2
SMALLNESS_SPREAD = 0.5


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.number:2d} {self.title}"


class Context:
    """Shared, lazily built objects (ground state, linearized pair, coefficients)."""

    def __init__(self, cache_dir: str | Path | None = None, seed: int = 0):
        self.cache_dir = cache_dir
        self.seed = seed
        self.timings: dict = {}

    def _timed(self, name, fn):
        t = time.perf_counter()
        out = fn()
        self.timings[name] = time.perf_counter() - t
        return out

    @cached_property
    def gs(self):
        return self._timed("petviashvili", lambda: solve_petviashvili(DEFAULT_GRID))

    @cached_property
    def gs_oracle(self):
        return self._timed("gradient_flow", lambda: solve_gradient_flow_oracle(DEFAULT_GRID))

    @cached_property
    def pair(self):
        return self._timed("assemble", lambda: assemble(self.gs))

    @cached_property
    def coeffs(self):
        return self._timed("coefficients", lambda: build_profile_coefficients(self.pair, inh.default()))

    @cached_property
    def coeffs_homogeneous(self):
        return build_profile_coefficients(self.pair, inh.homogeneous())

    @cached_property
    def basis(self):
        return ModulationBasis.build(self.coeffs)

    @cached_property
    def basis_homogeneous(self):
        return ModulationBasis.build(self.coeffs_homogeneous)


def _run(number, title, ctx, fn) -> CriterionResult:
    t = time.perf_counter()
    passed, details = fn(ctx)
    return CriterionResult(number, title, bool(passed), details, time.perf_counter() - t)


# --------------------------------------------------------------------------- 1-3


def _c1(ctx):
    gs, oracle = ctx.gs, ctx.gs_oracle
    cert = gs.certificate()
    dual = norm(GridFunction(gs.grid, gs.values - oracle.values))
    seconds = ctx.timings["petviashvili"] + ctx.timings["gradient_flow"]
    d = {
        "residual_sup": cert["residual_sup"],
        "dual_solver_l2": dual,
        "lambdaQ_Q_rel": cert["lambdaQ_Q_rel"],
        "pohozaev_rel": cert["pohozaev_rel"],
        "seconds": seconds,
    }
    ok = (
        cert["residual_sup"] < GS_RESIDUAL
        and dual < GS_DUAL
        and cert["lambdaQ_Q_rel"] < GS_LAMBDA_Q
        and cert["pohozaev_rel"] < GS_POHOZAEV
        and seconds <= GS_SECONDS
    )
    return ok, d


def _c2(ctx):
    t = time.perf_counter()
    pair = ctx.pair
    eig = [w for w, _ in lowest_spectrum(pair, "plus", 4)]
    coeffs = ctx.coeffs
    seconds = time.perf_counter() - t
    cert = pair.certificates
    negatives = sum(w < -1e-8 for w in eig)
    d = {**cert, "lowest_Lplus": eig, "negative_count": negatives, "e1": coeffs.e1, "seconds": seconds}
    ok = (
        cert["Lminus_Q"] < LIN_KERNEL
        and cert["Lplus_dQ"] < LIN_KERNEL
        and cert["Lplus_LambdaQ_plus_Q"] < LIN_LAMBDA_Q
        and negatives == 1
        and coeffs.e1 > 0
        and seconds <= LIN_SECONDS
    )
    return ok, d


def _c3(ctx):
    c = ctx.coeffs
    s10 = inner(c.S10, c.S10).real
    mass_id = abs(s10 + 2 * inner(c.Q, c.T20).real) / s10
    q_rho = inner(c.Q, c.rho1).real
    rel = abs(q_rho - 2 * c.e1) / (2 * c.e1)
    d = {
        "mass_identity_rel": mass_id,
        "solvability": dict(c.solvability_residuals),
        "Q_rho1": q_rho,
        "two_e1": 2 * c.e1,
        "Q_rho1_vs_plus_2e1_rel": rel,
        "Q_rho1_vs_minus_2e1_rel": abs(q_rho + 2 * c.e1) / (2 * c.e1),
    }
    ok = mass_id < 1e-6 and all(v < SOLVABILITY for v in c.solvability_residuals.values()) and rel < 1e-6
    return ok, d


# --------------------------------------------------------------------------- 4-5


def _c4(ctx):
    bs = np.geomspace(0.02, 0.2, 7)
    rows = scan(ctx.coeffs, inh.default(), bs)
    slope = loglog_slope(bs, [r["phi_l2"] for r in rows])
    w = np.array([r["weighted_ratio"] for r in rows])
    spread = float(w.max() / w.min())
    d = {"slope": slope, "weighted_ratio": w.tolist(), "weighted_spread": spread}
    return abs(slope - RESIDUAL_SLOPE[0]) <= RESIDUAL_SLOPE[1] and spread < WEIGHTED_SPREAD, d


def _c5(ctx):
    c, k = ctx.coeffs, inh.default()
    m0 = mass(c.Q)
    ratios = []
    for b in (-0.2, -0.1, 0.0, 0.05, 0.1, 0.2):
        for lam in (0.0, 0.02, 0.05, 0.1):
            if b == 0 and lam == 0:
                continue
            m = mass(assemble_profile(c, ProfileParams(b, lam)).qp)
            ratios.append(abs(m - m0) / (b**4 + lam**2))
    ladder = [0.2, 0.1, 0.05, 0.02]
    e_ratio = [profile_energy(c, ProfileParams(b, b**3), k) / b**2 / c.e1 for b in ladder]
    d = {"mass_ratio_max": max(ratios), "energy_over_b2_e1": dict(zip(map(str, ladder), e_ratio))}
    return max(ratios) < MASS_RATIO_BOUND and abs(e_ratio[-1] - 1) < ENERGY_REL, d


# --------------------------------------------------------------------------- 6-8


def _c6(ctx):
    rel = {name: virial.halfnorm_identity(f)[2] for name, f in certification_suite(ctx.gs).items()}
    return max(rel.values()) < HALFNORM_REL, {"relerr": rel}


def _c7(ctx):
    g = SpectralGrid(3000.0, 2**16)
    u = GridFunction(g, np.exp(-(g.x**2)))
    As = [25.0, 50.0, 100.0]
    ratios = [virial.biharmonic_bound(u, virial.CutoffPhi(A)) * A / norm(u) ** 2 for A in As]
    halving = [ratios[i] / ratios[i + 1] for i in range(2)]
    small = SpectralGrid(256.0, 2**13)
    from .modulation import _restrict

    def r(f):
        return GridFunction(small, _restrict(f, small).real)

    c = ctx.coeffs
    coer = virial.localized_coercivity(r(c.Q), r(c.S10), r(c.rho1), inh.default(), A=100.0, samples=200, seed=ctx.seed)
    d = {"ratios": ratios, "halving": halving, "coercivity": coer}
    ok = all(BIHARMONIC_HALVING[0] <= h <= BIHARMONIC_HALVING[1] for h in halving) and coer["plus"] > 0 and coer["minus"] > 0
    return ok, d


def _perturbed_fields(coeffs, basis, g, seed):
    truth = (0.1, 0.01, 0.7)
    u = synthesize(coeffs, *truth, g)
    st = decompose(u, basis, (0.11, 0.009, 0.8))
    rt = max(abs(st.b - truth[0]), abs(st.lam - truth[1]) / truth[1], abs(st.gamma - truth[2]))
    # a perturbed field, so that eps is not zero
    rng = np.random.default_rng(seed)
    bump = sum(a * np.exp(-((g.x - x0) / 0.02) ** 2) for a, x0 in zip(rng.normal(size=3) * 0.3, rng.uniform(-0.05, 0.05, 3)))
    w = GridFunction(g, u.values + bump * (1 + 0.5j))
    return rt, w, decompose(w, basis, (st.b, st.lam, st.gamma))


def _scaling_error(w, ref, basis, mu=2.0):
    g = w.grid
    scaled = GridFunction(SpectralGrid(mu * g.L, g.N), w.values / math.sqrt(mu))
    sc = decompose(scaled, basis, (ref.b, mu * ref.lam, ref.gamma))
    return max(
        abs(sc.b - ref.b),
        abs(sc.lam / (mu * ref.lam) - 1),
        abs(sc.gamma - ref.gamma),
        abs(sc.eps_norms["l2"] - ref.eps_norms["l2"]),
    )


def _c8(ctx):
    g = SpectralGrid(4.0, 2**15)
    rt, w, ref = _perturbed_fields(ctx.coeffs, ctx.basis, g, ctx.seed)
    theta = 1.3
    gauge = decompose(GridFunction(g, w.values * np.exp(1j * theta)), ctx.basis, (ref.b, ref.lam, ref.gamma + theta))
    gauge_err = max(abs(gauge.b - ref.b), abs(gauge.lam - ref.lam) / ref.lam, abs(gauge.gamma - ref.gamma - theta))
    # scaling is a symmetry only for constant k; with k(lam y) in the profile it moves (b, gamma) by O(lam^2)
    rt_h, w_h, ref_h = _perturbed_fields(ctx.coeffs_homogeneous, ctx.basis_homogeneous, g, ctx.seed)
    scale_err = _scaling_error(w_h, ref_h, ctx.basis_homogeneous)
    d = {
        "round_trip": rt,
        "round_trip_homogeneous": rt_h,
        "gauge": gauge_err,
        "scaling": scale_err,
        "scaling_inhomogeneous": _scaling_error(w, ref, ctx.basis),
        "perturbed_eps_l2": ref.eps_norms["l2"],
    }
    return max(rt, rt_h) < ROUND_TRIP and gauge_err < COVARIANCE and scale_err < COVARIANCE, d


# --------------------------------------------------------------------------- 9-11


def _dynamics_details(report):
    return {
        "lambda_law": report.lambda_law,
        "rate": report.rate,
        "b_over_sqrt_lambda": report.b_over_sqrt_lambda,
        "gamma_law": report.gamma_law,
        "smallness": report.smallness,
        "window": report.window,
        "run": {k: v for k, v in report.run.items() if k != "provenance"},
        "partial": report.partial,
    }


def _c9(ctx, out=None):
    cfg = ExperimentConfig(k="homogeneous")
    report, *_ = run_blowup_experiment(cfg, out=out, coeffs=ctx.coeffs_homogeneous, gs=ctx.gs)
    ll = report.lambda_law
    ok = (
        not report.partial
        and LAMBDA_EXPONENT[0] <= ll.get("exponent", 0) <= LAMBDA_EXPONENT[1]
        and report.rate["spread"] < RATE_SPREAD
        and report.run["mass_drift"] < MASS_DRIFT
    )
    return ok, _dynamics_details(report)


def _c10(ctx, out=None):
    cfg = ExperimentConfig(k="default")
    report, *_ = run_blowup_experiment(cfg, out=out, coeffs=ctx.coeffs, gs=ctx.gs)
    ll, br, sm = report.lambda_law, report.b_over_sqrt_lambda, report.smallness
    ok = (
        not report.partial
        and LAMBDA_STAR[0] <= ll.get("lambda_star_times_4A0sq", 0) <= LAMBDA_STAR[1]
        and br.get("max_rel_deviation", 1) < B_RATIO
        and sm.get("spread", 1) < SMALLNESS_SPREAD
    )
    return ok, _dynamics_details(report)


def determinism_config() -> ExperimentConfig:
    """A short run exercising the whole pipeline."""
    return ExperimentConfig(k="default", b1=0.25, N=2**13, L_factor=200.0, shrink=1.5, snapshot_every=20, sample_every=5)


def _c11(ctx):
    cfg = determinism_config()
    with tempfile.TemporaryDirectory() as tmp:
        dirs = [Path(tmp) / f"run{i}" for i in range(2)]
        for d in dirs:
            report, series, mt = run_blowup_experiment(cfg, coeffs=ctx.coeffs, gs=ctx.gs)
            report.run.pop("simulation_seconds", None)
            write_experiment(d, cfg, report, series, mt)
        files = ["timeseries.csv", "modtrack.csv", "fit_report.json"]
        same = {f: filecmp.cmp(dirs[0] / f, dirs[1] / f, shallow=False) for f in files}
    return all(same.values()), {"identical": same}


CRITERIA = {
    1: ("ground-state certificate", _c1),
    2: ("linearized structure", _c2),
    3: ("profile algebraic identities", _c3),
    4: ("residual scaling", _c4),
    5: ("mass and energy expansions", _c5),
    6: ("half-derivative identity", _c6),
    7: ("biharmonic bound and localized coercivity", _c7),
    8: ("modulation round trip and covariance", _c8),
    9: ("homogeneous blowup regression", _c9),
    10: ("inhomogeneous blowup window fits", _c10),
    11: ("determinism", _c11),
}


def evaluate(number: int, ctx: Context, out: str | Path | None = None) -> CriterionResult:
    title, fn = CRITERIA[number]
    if number in (9, 10) and out is not None:
        return _run(number, title, ctx, lambda c: fn(c, out=Path(out) / f"criterion_{number}"))
    return _run(number, title, ctx, fn)


def evaluate_all(ctx: Context | None = None, numbers=None, out=None) -> list[CriterionResult]:
    ctx = ctx or Context()
    return [evaluate(n, ctx, out) for n in (numbers or CRITERIA)]

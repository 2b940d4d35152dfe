"""End-to-end runs: coefficient preparation, blowup simulation with law fits,
and the aggregated invariant suites."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import inhomogeneity as inh
from . import io
from .evolution import Sampling, StopCriteria, TimeSeries, run
from .ground_state import DEFAULT_GRID, GroundState, solve_petviashvili
from .linearized import ProfileCoefficientSet, assemble, build_profile_coefficients
from .modulation import MIN_RESOLUTION, ModTrack, ModulationBasis, ScaleUnresolvedError, track
from .profile import ETA_STAR, ParameterRangeError, ProfileParams, assemble_profile
from .spectral import GridFunction, SpectralGrid, norm, resample

log = logging.getLogger(__name__)

WINDOW_DECADES = 1.0


@dataclass
class ExperimentConfig:
    """Blowup run settings.

    The start is given either by ``t1`` or, when ``t1`` is ``None``, by the
    starting rate ``b1``; the two are tied by ``b1 = |t1| E0 / (2 e1)``.
    The physical grid is ``(L_factor * lambda1, N)`` unless ``L`` is set.
    """

    k: str = "default"
    E0: float = 1.0
    t1: float | None = None
    b1: float = 0.25
    gamma0: float = 0.0
    shrink: float = 30.0
    N: int = 2**17
    L: float | None = None
    L_factor: float = 200.0
    c_dt: float = 0.02
    order: int = 4
    max_phase: float = math.pi
    sample_every: int = 20
    snapshot_every: int = 100
    max_steps: int = 200_000
    save_snapshots: bool = False
    match_mass: bool = True
    seed: int = 0

    def __post_init__(self):
        if not self.E0 > 0:
            raise ValueError("E0 must be positive")
        if self.t1 is not None and not self.t1 < 0:
            raise ValueError("t1 must be negative")
        if not self.shrink > 1:
            raise ValueError("shrink must exceed 1")

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        data = json.loads(Path(path).read_text())
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class FitReport:
    lambda_law: dict = field(default_factory=dict)
    rate: dict = field(default_factory=dict)
    b_over_sqrt_lambda: dict = field(default_factory=dict)
    gamma_law: dict = field(default_factory=dict)
    smallness: dict = field(default_factory=dict)
    window: dict = field(default_factory=dict)
    run: dict = field(default_factory=dict)
    partial: bool = False

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# --------------------------------------------------------------------------- preparation


def provenance(k: inh.InhomogeneityProfile | None = None, **extra) -> dict:
    out = {"code_version": __version__, **extra}
    if k is not None:
        out["k"] = k.describe()
    return out


def prepare_coefficients(
    k: inh.InhomogeneityProfile,
    cache_dir: str | Path | None = None,
    gs: GroundState | None = None,
) -> tuple[GroundState, ProfileCoefficientSet]:
    """Ground state and profile coefficients for ``k``, reusing ``cache_dir`` when it holds them."""
    if cache_dir is not None:
        d = Path(cache_dir)
        tag = hashlib.sha1(json.dumps(k.describe(), sort_keys=True).encode()).hexdigest()[:12]
        gs_dir, c_dir = d / "ground_state", d / f"coefficients_{tag}"
        if gs is None and (gs_dir / "ground_state.json").exists():
            gs = io.load_ground_state(gs_dir)
        if (c_dir / "manifest.json").exists() and gs is not None:
            return gs, io.load_coefficients(c_dir)
    if gs is None:
        gs = solve_petviashvili(DEFAULT_GRID)
    coeffs = build_profile_coefficients(assemble(gs), k)
    if cache_dir is not None:
        io.save_ground_state(gs, gs_dir)
        io.save_coefficients(coeffs, c_dir)
    return gs, coeffs


def initial_parameters(e1: float, E0: float, t1: float | None = None, b1: float | None = None) -> dict:
    """``A0 = sqrt(e1/E0)``, ``lambda1 = t1^2 / (4 A0^2)`` and ``b1 = sqrt(lambda1) / A0``."""
    A0 = math.sqrt(e1 / E0)
    if t1 is None:
        if b1 is None or not b1 > 0:
            raise ValueError("give t1 < 0 or b1 > 0")
        lam1 = (b1 * A0) ** 2
        t1 = -2.0 * A0 * math.sqrt(lam1)
    else:
        lam1 = t1**2 / (4 * A0**2)
        b1 = math.sqrt(lam1) / A0
    return {"A0": A0, "lambda1": lam1, "b1": b1, "t1": t1}


def build_initial_data(
    coeffs: ProfileCoefficientSet,
    E0: float,
    t1: float,
    gamma0: float = 0.0,
    grid: SpectralGrid | None = None,
    L_factor: float = 200.0,
    N: int = 2**17,
    match_mass: bool = False,
) -> GridFunction:
    """``lambda1^{-1/2} Q_P1(x / lambda1) e^{i gamma0}`` with ``P1 = (b1, lambda1)``.

    ``match_mass`` rescales the amplitude so that the mass equals ``||Q||^2``
    exactly.  The profile itself is ``O(b^4 + lambda^2)`` below the threshold,
    and a solution below the threshold mass cannot blow up: left alone it
    concentrates more and more slowly and finally disperses.
    """
    p = initial_parameters(coeffs.e1, E0, t1=t1)
    lam1, b1 = p["lambda1"], p["b1"]
    try:
        params = ProfileParams(b1, lam1)
    except ParameterRangeError as exc:
        top = 2 * coeffs.e1 * (ETA_STAR - lam1) / E0
        raise ParameterRangeError(f"{exc}; starting rate b1 = {b1:.3g} needs |t1| < {top:.3g} at E0 = {E0}") from None
    grid = grid or SpectralGrid(L_factor * lam1, N)
    if lam1 * grid.xi_max < MIN_RESOLUTION:
        need = int(2 ** math.ceil(math.log2(MIN_RESOLUTION * grid.L / (math.pi * lam1))))
        raise ScaleUnresolvedError(f"lambda1 = {lam1:.3g} is not resolved on {grid}; use N >= {need}")
    qp = assemble_profile(coeffs, params).qp
    u = GridFunction(grid, lam1**-0.5 * np.exp(1j * gamma0) * resample(qp, grid, scale=1.0 / lam1).values)
    if match_mass:
        u = GridFunction(grid, u.values * (norm(coeffs.Q) / norm(u)))
    return u


# --------------------------------------------------------------------------- fitting


def _window(lam: np.ndarray, decades: float = WINDOW_DECADES) -> np.ndarray:
    """Mask of samples with ``lam`` within ``decades`` of its smallest value."""
    top = np.nanmin(lam) * 10.0**decades
    return np.isfinite(lam) & (lam <= top)


def _spread(v: np.ndarray) -> float:
    return float((np.max(v) - np.min(v)) / np.mean(v))


def fit_laws(series: TimeSeries, mt: ModTrack, A0: float, decades: float = WINDOW_DECADES) -> FitReport:
    """Least-squares fits over the last ``decades`` of the scale."""
    rep = FitReport()
    t_s = series.column("t")
    lam_est = series.column("lambda_est") ** 2
    h = series.column("halfnorm")
    ws = _window(lam_est, decades)
    rate = h[ws] * np.abs(t_s[ws])
    rep.rate = {
        "C": float(np.mean(rate)),
        "spread": _spread(rate),
        "exponent": float(-np.polyfit(np.log(np.abs(t_s[ws])), np.log(h[ws]), 1)[0]),
    }
    ok = [r for r in mt.records if r["status"] == "ok"]
    rep.window = {
        "decades": decades,
        "series": {"t": [float(t_s[ws][0]), float(t_s[ws][-1])], "count": int(ws.sum())},
    }
    if len(ok) < 3:
        rep.partial = True
        return rep
    t = np.array([r["t"] for r in ok])
    lam = np.array([r["lambda"] for r in ok])
    b = np.array([r["b"] for r in ok])
    gamma = np.array([r["gamma"] for r in ok])
    eps_h = np.array([r["eps_h_half"] for r in ok])
    w = _window(lam, decades)
    rep.window["modulation"] = {"t": [float(t[w][0]), float(t[w][-1])], "count": int(w.sum())}
    lt, ll = np.log(np.abs(t[w])), np.log(lam[w])
    slope, icpt = np.polyfit(lt, ll, 1)
    resid = ll - (slope * lt + icpt)
    lam_star = float(np.exp(np.mean(ll - 2 * lt)))
    # blowup time from sqrt(lam) = sqrt(lam*) (T - t)
    g1, g0 = np.polyfit(t[w], np.sqrt(lam[w]), 1)
    T = float(-g0 / g1)
    rep.lambda_law = {
        "exponent": float(slope),
        "residual": float(np.sqrt(np.mean(resid**2))),
        "lambda_star": lam_star,
        "lambda_star_times_4A0sq": lam_star * 4 * A0**2,
        "fitted_blowup_time": T,
        "lambda_star_fitted_T": float(g1**2),
    }
    ratio = b[w] / np.sqrt(lam[w])
    rep.b_over_sqrt_lambda = {
        "mean": float(np.mean(ratio)),
        "target": 1.0 / A0,
        "max_rel_deviation": float(np.max(np.abs(ratio * A0 - 1.0))),
    }
    a, g0 = np.polyfit(-1.0 / t[w], gamma[w], 1)
    rep.gamma_law = {"coefficient": float(a), "target": 4 * A0**2, "gamma0": float(g0)}
    small = (b[w] ** 2 + eps_h[w] ** 2) / lam[w]
    rep.smallness = {"C": float(np.max(small)), "min": float(np.min(small)), "spread": _spread(small)}
    return rep


# --------------------------------------------------------------------------- runs


def run_blowup_experiment(
    config: ExperimentConfig,
    out: str | Path | None = None,
    cache_dir: str | Path | None = None,
    coeffs: ProfileCoefficientSet | None = None,
    gs: GroundState | None = None,
) -> tuple[FitReport, TimeSeries, ModTrack]:
    """Simulate from the constructed initial data, track the modulation parameters and fit the laws."""
    k = inh.parse(config.k)
    if coeffs is None:
        gs, coeffs = prepare_coefficients(k, cache_dir, gs)
    p = initial_parameters(coeffs.e1, config.E0, config.t1, config.b1)
    lam1 = p["lambda1"]
    grid = SpectralGrid(config.L if config.L else config.L_factor * lam1, config.N)
    u0 = build_initial_data(coeffs, config.E0, p["t1"], config.gamma0, grid=grid, match_mass=config.match_mass)
    stop = StopCriteria(t_end=-1e-12, min_scale=lam1 / config.shrink, max_steps=config.max_steps)
    sampling = Sampling(every=config.sample_every, snapshot_every=config.snapshot_every)
    started = time.perf_counter()
    q_norm = norm(coeffs.Q)
    series = run(
        u0, p["t1"], k, stop, sampling, scale_ref=q_norm,
        c_dt=config.c_dt, order=config.order, max_phase=config.max_phase,
    )
    sim_time = time.perf_counter() - started
    basis = ModulationBasis.build(coeffs)
    mt = track(series.snapshots, basis, A0=p["A0"], scale_ref=q_norm,
               first_guess=(p["b1"], lam1, config.gamma0))
    report = fit_laws(series, mt, p["A0"])
    m = series.column("mass")
    report.run = {
        **p,
        "stop_reason": series.stop_reason,
        "steps": series.final_state.step_count,
        "grid": {"L": grid.L, "N": grid.N},
        "simulation_seconds": round(sim_time, 1),
        "mass_drift": float(np.max(np.abs(m - m[0])) / m[0]),
        "mass_start_minus_Q": float(m[0] - q_norm**2),
        "energy_start": float(series.records[0]["energy"]),
        "energy_end": float(series.records[-1]["energy"]),
        "decomposition_failures": sum(r["status"] != "ok" for r in mt.records),
        "provenance": provenance(k, config=config.to_dict(), tolerances={"window_decades": WINDOW_DECADES}),
    }
    report.partial = report.partial or series.stop_reason != "minimum scale reached"
    if out is not None:
        write_experiment(Path(out), config, report, series, mt)
    return report, series, mt


def write_experiment(d: Path, config: ExperimentConfig, report: FitReport, series: TimeSeries, mt: ModTrack) -> None:
    d.mkdir(parents=True, exist_ok=True)
    io.write_json(d / "config.json", config.to_dict())
    io.write_rows(d / "timeseries.csv", series.rows(), list(series.COLUMNS))
    io.write_rows(d / "modtrack.csv", mt.records, list(mt.COLUMNS))
    io.write_json(d / "fit_report.json", report.to_dict())
    if config.save_snapshots:
        io.save_snapshots(series.snapshots, d / "snapshots", extra={"meta": series.meta})
    from . import plotting

    plotting.experiment_figures(d, series, mt, report)


# --------------------------------------------------------------------------- invariant suites


def _entry(name: str, value: float, tol: float, passed: bool | None = None, kind: str = "DERIVED") -> dict:
    value = float(value)
    return {"name": name, "kind": kind, "value": value, "tol": tol, "passed": bool(value < tol if passed is None else passed)}


def run_property_suites(gs: GroundState, coeffs: ProfileCoefficientSet, seed: int = 0) -> dict:
    """Machine-readable pass/fail per invariant, with measured values."""
    from . import virial
    from .modulation import apply_M
    from .profile import assemble_profile as _assemble
    from .spectral import inner, resample as _res

    rng = np.random.default_rng(seed)
    entries = []
    g = gs.Q.grid
    q_mass = norm(gs.Q) ** 2
    cert = gs.certificate()
    entries.append(_entry("ground state residual sup", cert.get("residual_sup", gs.residual_norm), 1e-9))
    entries.append(_entry("(Lambda Q, Q) / ||Q||^2", abs(inner(gs.lambda_Q, gs.Q).real) / q_mass, 1e-8))
    for key, val in coeffs.solvability_residuals.items():
        entries.append(_entry(f"solvability {key}", val, 1e-6))
    # trivial checks
    small = SpectralGrid(16.0, 256)
    xi0 = small.xi[5]
    mode = GridFunction(small, np.exp(1j * xi0 * small.x))
    s = 0.7
    got = virial.resolvent_smooth(mode, s).values / mode.values
    entries.append(_entry("resolvent on a single mode", np.max(np.abs(got - virial.SQRT_2_OVER_PI / (xi0**2 + s))), 1e-14, kind="TRIVIAL"))
    zero = GridFunction(small, np.zeros(small.N))
    entries.append(_entry("halfnorm identity at u = 0", sum(virial.halfnorm_identity(zero)), 1e-300, passed=sum(virial.halfnorm_identity(zero)) == 0, kind="TRIVIAL"))
    Qs = GridFunction(small, _res(gs.Q, small).values.real)
    ja = virial.evaluate_JA(GridFunction(small, np.zeros(small.N, complex)), Qs, 0.1, 0.5, inh.default(), virial.CutoffPhi(10.0))
    entries.append(_entry("J_A at eps = 0", abs(ja["J_A"]), 0.0, passed=ja["J_A"] == 0.0, kind="TRIVIAL"))
    v = rng.normal(size=small.N) + 1j * rng.normal(size=small.N)
    jb = virial.evaluate_JA(GridFunction(small, 1e-3 * v), Qs, 0.0, 0.5, inh.default(), virial.CutoffPhi(10.0))
    entries.append(_entry("J_A cross-term at b = 0", abs(jb["virial"]), 0.0, passed=jb["virial"] == 0.0, kind="TRIVIAL"))
    prof = _assemble(coeffs, ProfileParams(0.0, 0.0))
    mq = apply_M(GridFunction(g, 1j * gs.Q.values), prof, inh.homogeneous(), 0.0, "minus")
    entries.append(_entry("M- on iQ at P = 0", norm(mq) / math.sqrt(q_mass), 1e-8))
    # identity certification
    for name, f in certification_suite(gs).items():
        entries.append(_entry(f"halfnorm identity: {name}", virial.halfnorm_identity(f)[2], 1e-6))
    return {"entries": entries, "passed": all(e["passed"] for e in entries), "provenance": provenance(seed=seed)}


def certification_suite(gs: GroundState) -> dict:
    """Five test functions for the s-quadrature, including the ground state."""
    g = SpectralGrid(64.0, 4096)
    x = g.x
    return {
        "gaussian": GridFunction(g, np.exp(-(x**2))),
        "wide gaussian": GridFunction(g, np.exp(-(x**2) / 16)),
        "sech": GridFunction(g, 1 / np.cosh(x)),
        "modulated gaussian": GridFunction(g, np.exp(-(x**2) / 2 + 3j * x)),
        "ground state": gs.Q,
    }

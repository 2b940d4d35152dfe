"""Time integration of ``i u_t = D u - k(x)|u|^2 u`` by Strang splitting."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .inhomogeneity import InhomogeneityProfile
from .spectral import GridFunction, SpectralGrid, halfnorm_sq, norm

log = logging.getLogger(__name__)

C_DT = 0.05
STABILITY_GUARD = 0.5  # dt * max k|u|^2 stays below this
# symmetric triple jump: three Strang steps composing to fourth order
_CBRT2 = 2.0 ** (1.0 / 3.0)
YOSHIDA = (1.0 / (2.0 - _CBRT2), -_CBRT2 / (2.0 - _CBRT2), 1.0 / (2.0 - _CBRT2))


class BlowupResolutionError(RuntimeError):
    """The field left the range the grid can represent.  ``state`` is the last good state."""

    def __init__(self, message="blowup resolution exceeded", state=None, series=None):
        super().__init__(message)
        self.state = state
        self.series = series


@dataclass
class FieldState:
    t: float
    u: GridFunction
    step_count: int = 0
    dt_last: float = 0.0


@dataclass
class StopCriteria:
    t_end: float = -1e-12
    min_scale: float = 0.0
    max_halfnorm: float = math.inf
    max_steps: int = 100_000
    # fraction of ||u||^2 in the top third of the spectrum
    max_spectral_tail: float = math.inf

    def __post_init__(self):
        if not self.t_end < 0:
            raise ValueError("t_end must be negative")


@dataclass
class Sampling:
    every: int = 10
    snapshot_every: int = 0  # 0 disables snapshots


@dataclass
class TimeSeries:
    records: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)  # (t, GridFunction)
    stop_reason: str = ""
    final_state: FieldState | None = None
    meta: dict = field(default_factory=dict)

    COLUMNS = ("step", "t", "dt", "mass", "energy", "halfnorm", "lambda_est", "snapshot")

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records], dtype=float)

    def rows(self) -> list[dict]:
        return [dict(r) for r in self.records]


class _Stepper:
    """Caches ``k(x)`` and the half-wave symbol for a fixed grid."""

    def __init__(self, grid: SpectralGrid, k: InhomogeneityProfile, nonlinear: bool = True):
        self.grid = grid
        self.absxi = np.abs(grid.xi)
        self.kx = np.asarray(k(grid.x), dtype=float)
        self.nonlinear = nonlinear

    def linear(self, v: np.ndarray, tau: float) -> np.ndarray:
        return np.fft.ifft(np.exp(-1j * self.absxi * tau) * np.fft.fft(v))

    def strang(self, v: np.ndarray, dt: float) -> np.ndarray:
        v = self.linear(v, 0.5 * dt)
        if self.nonlinear:
            v = v * np.exp(1j * dt * self.kx * np.abs(v) ** 2)
        return self.linear(v, 0.5 * dt)

    def step(self, v: np.ndarray, dt: float, order: int = 2) -> np.ndarray:
        if order == 2:
            return self.strang(v, dt)
        for w in YOSHIDA:
            v = self.strang(v, w * dt)
        return v

    def guard_dt(self, v: np.ndarray, guard: float) -> float:
        peak = float(np.max(self.kx * np.abs(v) ** 2))
        return math.inf if peak == 0 or not self.nonlinear else guard / peak


def step_strang(
    state: FieldState,
    dt: float,
    k: InhomogeneityProfile,
    nonlinear: bool = True,
    guard: float | None = STABILITY_GUARD,
) -> FieldState:
    """One symmetric step: linear half step, exact nonlinear phase rotation, linear half step.

    ``nonlinear=False`` runs the linear flow only (diagnostic mode).  A
    negative ``dt`` integrates backwards.
    """
    if dt == 0 or not math.isfinite(dt):
        raise ValueError("dt must be finite and nonzero")
    st = _Stepper(state.u.grid, k, nonlinear)
    if guard is not None and abs(dt) > st.guard_dt(state.u.values, guard):
        raise ValueError(f"dt = {dt:.3e} exceeds the stability guard {st.guard_dt(state.u.values, guard):.3e}")
    v = st.step(state.u.values, dt)
    if not np.all(np.isfinite(v)):
        raise BlowupResolutionError(state=state)
    return FieldState(state.t + dt, GridFunction(state.u.grid, v), state.step_count + 1, dt)


def threshold_mass(k: InhomogeneityProfile, Q: GridFunction, x: np.ndarray | None = None) -> float:
    """``||Q||_2 / sqrt(max_j k(x_j))``: the mass below which solutions stay bounded."""
    x = Q.grid.x if x is None else x
    return norm(Q) / math.sqrt(k.max_on(x))


def lambda_est(u: GridFunction, scale_ref: float) -> float:
    """``||D^{1/2} Q|| / ||D^{1/2} u||``; its square tracks the scale of a rescaled profile."""
    h = math.sqrt(halfnorm_sq(u))
    return scale_ref / h if h > 0 else math.inf


def spectral_tail(u: GridFunction) -> float:
    uh = np.abs(np.fft.fft(u.values)) ** 2
    top = np.abs(u.grid.xi) > (2.0 / 3.0) * u.grid.xi_max
    tot = uh.sum()
    return float(uh[top].sum() / tot) if tot > 0 else 0.0


def _record(step, t, dt, u, kx, scale_ref, snap) -> dict:
    g = u.grid
    h2 = halfnorm_sq(u)
    m = float(g.dx * np.sum(np.abs(u.values) ** 2))
    e = 0.5 * h2 - 0.25 * float(g.dx * np.sum(kx * np.abs(u.values) ** 4))
    return {
        "step": step,
        "t": t,
        "dt": dt,
        "mass": m,
        "energy": e,
        "halfnorm": math.sqrt(h2),
        "lambda_est": scale_ref / math.sqrt(h2) if h2 > 0 else math.inf,
        "snapshot": snap,
    }


def run(
    u0: GridFunction,
    t0: float,
    k: InhomogeneityProfile,
    stop: StopCriteria,
    sampling: Sampling | None = None,
    scale_ref: float = 1.0,
    c_dt: float = C_DT,
    guard: float = STABILITY_GUARD,
    nonlinear: bool = True,
    order: int = 2,
    max_phase: float | None = math.pi,
) -> TimeSeries:
    """Integrate from ``t0`` with ``dt = c_dt * lambda_est^2``.

    ``scale_ref`` is ``||D^{1/2} Q||_2`` (equal to ``||Q||_2``).  The step is
    also capped by ``guard / max k|u|^2`` and by the distance to
    ``stop.t_end``, and so that the linear phase ``|xi| dt`` of every
    substep stays below ``max_phase`` at the largest grid wavenumber (beyond
    that, split-step resonances between high modes grow).  Stops, in order of precedence: non-finite field (raises
    :class:`BlowupResolutionError` with the series so far), ``t_end``
    reached, ``lambda_est^2 < min_scale``, halfnorm above ``max_halfnorm``,
    spectral tail above ``max_spectral_tail``, ``max_steps``.
    """
    if not t0 < stop.t_end:
        raise ValueError("t0 must precede t_end")
    sampling = sampling or Sampling()
    st = _Stepper(u0.grid, k, nonlinear)
    g = u0.grid
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    series = TimeSeries(meta={"c_dt": c_dt, "guard": guard, "order": order, "max_phase": max_phase, "k": k.describe(), "grid": {"L": g.L, "N": g.N}})
    widest = 1.0 if order == 2 else max(abs(w) for w in YOSHIDA)
    phase_dt = math.inf if max_phase is None else max_phase / (widest * g.xi_max)
    v = u0.values.copy()
    t = float(t0)
    step = 0
    dt = 0.0

    def sample(force_snapshot=False):
        u = GridFunction(g, v)
        snap = ""
        want = force_snapshot or (sampling.snapshot_every and step % sampling.snapshot_every == 0)
        if want:
            snap = f"snap_{len(series.snapshots):05d}"
            series.snapshots.append((t, u))
        series.records.append(_record(step, t, dt, u, st.kx, scale_ref, snap))
        return series.records[-1]

    rec = sample(force_snapshot=bool(sampling.snapshot_every))
    reason = ""
    while True:
        lam = rec["lambda_est"] if step % sampling.every == 0 else lambda_est(GridFunction(g, v), scale_ref)
        if t >= stop.t_end:
            reason = "t_end reached"
        elif lam**2 < stop.min_scale:
            reason = "minimum scale reached"
        elif scale_ref / lam > stop.max_halfnorm:
            reason = "halfnorm limit reached"
        elif stop.max_spectral_tail < math.inf and spectral_tail(GridFunction(g, v)) > stop.max_spectral_tail:
            reason = "resolution limit reached"
        elif step >= stop.max_steps:
            reason = "step limit reached"
        if reason:
            break
        dt = min(c_dt * lam**2, st.guard_dt(v, guard), stop.t_end - t, phase_dt)
        v_new = st.step(v, dt, order)
        if not np.all(np.isfinite(v_new)):
            series.stop_reason = "blowup resolution exceeded"
            series.final_state = FieldState(t, GridFunction(g, v), step, dt)
            raise BlowupResolutionError(state=series.final_state, series=series)
        v = v_new
        t += dt
        step += 1
        if step % sampling.every == 0:
            rec = sample()
    if series.records[-1]["step"] != step:
        sample(force_snapshot=bool(sampling.snapshot_every))
    elif sampling.snapshot_every and not series.records[-1]["snapshot"]:
        series.records.pop()
        sample(force_snapshot=True)
    series.stop_reason = reason
    series.final_state = FieldState(t, GridFunction(g, v), step, dt)
    log.info("run stopped after %d steps at t=%.6g: %s", step, t, reason)
    return series


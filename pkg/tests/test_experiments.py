import json
import math

import numpy as np
import pytest

from halfwave import inhomogeneity as inh
from halfwave.acceptance import determinism_config
from halfwave.evolution import TimeSeries, _record
from halfwave.experiments import (
    ExperimentConfig,
    build_initial_data,
    fit_laws,
    initial_parameters,
    run_blowup_experiment,
    run_property_suites,
)
from halfwave.modulation import ModTrack, ScaleUnresolvedError
from halfwave.profile import ParameterRangeError
from halfwave.spectral import SpectralGrid, norm


def test_initial_parameters_branches_agree():
    e1 = 0.1
    by_t = initial_parameters(e1, 2.0, t1=-0.03)
    by_b = initial_parameters(e1, 2.0, b1=by_t["b1"])
    for key in ("A0", "lambda1", "b1", "t1"):
        assert by_b[key] == pytest.approx(by_t[key], rel=1e-12)
    assert by_t["A0"] == pytest.approx(math.sqrt(0.05))
    assert by_t["b1"] == pytest.approx(abs(by_t["t1"]) * 2.0 / (2 * e1))
    with pytest.raises(ValueError):
        initial_parameters(e1, 1.0)


def test_config_validation_and_file(tmp_path):
    for bad in ({"E0": 0.0}, {"t1": 0.1}, {"shrink": 1.0}):
        with pytest.raises(ValueError):
            ExperimentConfig(**bad)
    cfg = ExperimentConfig(k="homogeneous", N=2**12, shrink=2.0)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_file(p) == cfg
    p.write_text(json.dumps({"grid": 3}))
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_file(p)


def _t1(coeffs, b1, E0=1.0):
    return initial_parameters(coeffs.e1, E0, b1=b1)["t1"]


def test_initial_data_mass_energy_and_phase(coeffs):
    t1 = _t1(coeffs, 0.25)
    q2 = norm(coeffs.Q) ** 2
    u = build_initial_data(coeffs, 1.0, t1, N=2**14)
    assert -1e-3 < (norm(u) ** 2 - q2) / q2 < 0
    # E is a difference of two O(1 / lambda1) terms, so the torus bias is amplified
    m = build_initial_data(coeffs, 1.0, t1, N=2**14, match_mass=True)
    assert norm(m) ** 2 == pytest.approx(q2, rel=1e-12)
    e = _record(0, t1, 0.0, m, inh.default()(m.grid.x), 1.0, "")["energy"]
    assert e == pytest.approx(1.0, rel=0.02)
    rot = build_initial_data(coeffs, 1.0, t1, gamma0=0.8, N=2**14)
    assert np.allclose(rot.values, np.exp(0.8j) * u.values, atol=1e-14)


def test_initial_data_errors(coeffs):
    with pytest.raises(ParameterRangeError, match="needs"):
        build_initial_data(coeffs, 1.0, -5.0)
    with pytest.raises(ScaleUnresolvedError, match="use N >="):
        build_initial_data(coeffs, 1.0, _t1(coeffs, 0.1), grid=SpectralGrid(100.0, 256))


def _synthetic(A0=0.5, T=0.0, n=60):
    # exact self-similar law, lambda = (T - t)^2 / (4 A0^2)
    t = -np.geomspace(0.2, 0.01, n) + T
    lam = (T - t) ** 2 / (4 * A0**2)
    series = TimeSeries()
    for i, (ti, li) in enumerate(zip(t, lam)):
        series.records.append({"step": i, "t": ti, "dt": 0.0, "mass": 1.0, "energy": 1.0, "halfnorm": 1 / math.sqrt(li), "lambda_est": math.sqrt(li), "snapshot": ""})
    mt = ModTrack()
    for ti, li in zip(t[::5], lam[::5]):
        mt.records.append({"t": ti, "lambda": li, "b": math.sqrt(li) / A0, "gamma": 4 * A0**2 / (T - ti), "eps_h_half": 0.1 * math.sqrt(li), "status": "ok"})
    return series, mt


def test_fit_laws_recovers_exact_law():
    A0 = 0.5
    series, mt = _synthetic(A0)
    rep = fit_laws(series, mt, A0)
    assert not rep.partial
    assert rep.lambda_law["exponent"] == pytest.approx(2.0, abs=1e-10)
    assert rep.lambda_law["lambda_star_times_4A0sq"] == pytest.approx(1.0, rel=1e-10)
    assert abs(rep.lambda_law["fitted_blowup_time"]) < 1e-10
    assert rep.rate["spread"] < 1e-10 and rep.rate["exponent"] == pytest.approx(1.0)
    assert rep.b_over_sqrt_lambda["max_rel_deviation"] < 1e-10
    assert rep.gamma_law["coefficient"] == pytest.approx(4 * A0**2)
    assert rep.smallness["spread"] < 1e-10
    assert rep.smallness["C"] == pytest.approx(1 / A0**2 + 0.01)
    assert rep.window["modulation"]["t"][1] == mt.records[-1]["t"]
    assert rep.window["series"]["t"][1] == pytest.approx(-0.01)


def test_fit_laws_with_shifted_blowup_time():
    rep = fit_laws(*_synthetic(0.5, T=0.003), 0.5)
    assert rep.lambda_law["fitted_blowup_time"] == pytest.approx(0.003, abs=1e-10)
    assert rep.lambda_law["lambda_star_fitted_T"] == pytest.approx(1.0, rel=1e-10)


def test_fit_laws_partial_without_modulation():
    series, mt = _synthetic()
    mt.records = mt.records[:2]
    rep = fit_laws(series, mt, 0.5)
    assert rep.partial and rep.lambda_law == {} and rep.rate["spread"] < 1e-10


def test_short_experiment_writes_outputs(tmp_path, coeffs, gs):
    cfg = determinism_config()
    rep, series, mt = run_blowup_experiment(cfg, out=tmp_path, coeffs=coeffs, gs=gs)
    for name in ("config.json", "timeseries.csv", "modtrack.csv", "fit_report.json", "timeseries.png"):
        assert (tmp_path / name).exists()
    assert series.stop_reason == "minimum scale reached"
    assert rep.run["mass_drift"] < 1e-8
    assert abs(rep.run["mass_start_minus_Q"]) < 1e-12
    assert rep.run["decomposition_failures"] == 0


def test_property_suites_pass(gs, coeffs):
    out = run_property_suites(gs, coeffs)
    failed = [e["name"] for e in out["entries"] if not e["passed"]]
    assert out["passed"], failed

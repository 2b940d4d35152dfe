import base64
import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from halfwave import io
from halfwave.ground_state import SolverConfig, solve_petviashvili
from halfwave.spectral import GridFunction, SpectralGrid

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=40, deadline=None)
@given(
    st.sampled_from([16, 32, 64]),
    st.floats(0.5, 1e4),
    st.data(),
    st.sampled_from([io.B64, io.ARRAY]),
)
def test_gridfunction_round_trip_is_bit_exact(N, L, data, encoding):
    re = data.draw(hnp.arrays(np.float64, N, elements=finite))
    im = data.draw(hnp.arrays(np.float64, N, elements=finite))
    f = GridFunction(SpectralGrid(L, N), re + 1j * im)
    g = io.gridfunction_from_dict(io.gridfunction_to_dict(f, encoding))
    assert g.grid == f.grid and g.kind == f.kind
    assert g.values.real.tobytes() == f.values.real.tobytes()
    assert g.values.imag.tobytes() == f.values.imag.tobytes()


def test_payload_layout(tmp_path):
    f = GridFunction(SpectralGrid(1.0, 16), np.r_[1.0 + 2.0j, -0.5 + 0.25j, np.zeros(14)])
    d = io.gridfunction_to_dict(f)
    assert d["encoding"] == "base64-float64-le-pairs"
    raw = base64.b64decode(d["data"])
    assert np.frombuffer(raw, "<f8")[:4].tolist() == [1.0, 2.0, -0.5, 0.25]
    p = io.save_gridfunction(f, tmp_path / "f.json")
    assert np.array_equal(io.load_gridfunction(p).values, f.values)


def test_malformed_records():
    f = GridFunction(SpectralGrid(1.0, 16), np.zeros(16, complex))
    d = io.gridfunction_to_dict(f)
    with pytest.raises(io.FormatError):
        io.gridfunction_from_dict({**d, "format": "other"})
    with pytest.raises(io.FormatError):
        io.gridfunction_from_dict({**d, "encoding": "hex"})
    with pytest.raises(io.FormatError):
        io.gridfunction_from_dict({**d, "N": 32})
    with pytest.raises(io.FormatError):
        io.gridfunction_to_dict(f, "hex")


def test_csv_export(tmp_path):
    g = SpectralGrid(2.0, 16)
    f = GridFunction(g, np.exp(-(g.x**2)) + 0.1j * g.x)
    p = io.export_csv(f, tmp_path / "f.csv")
    with p.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["x", "re", "im"]
    back = np.array([[float(c) for c in r] for r in rows[1:]])
    assert np.array_equal(back[:, 0], g.x)
    assert np.array_equal(back[:, 1] + 1j * back[:, 2], f.values)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.fixed_dictionaries({"a": finite, "b": st.one_of(st.none(), finite), "s": st.sampled_from(["ok", "failed"])}), max_size=5))
def test_rows_round_trip(tmp_path_factory, rows):
    p = tmp_path_factory.mktemp("rows") / "r.csv"
    io.write_rows(p, rows, ["a", "b", "s"])
    assert io.read_rows(p) == rows


def test_json_sanitizes_numpy_and_nonfinite(tmp_path):
    p = io.write_json(tmp_path / "x.json", {"a": np.float64(1.5), "b": np.int64(3), "c": np.array([1.0, 2.0]), "d": math.inf, "e": np.bool_(True)})
    assert io.read_json(p) == {"a": 1.5, "b": 3, "c": [1.0, 2.0], "d": "inf", "e": True}


def test_ground_state_bundle(tmp_path):
    gs = solve_petviashvili(SpectralGrid(64.0, 2048), SolverConfig(tol=1e-9))
    side = io.save_ground_state(gs, tmp_path)
    assert (tmp_path / "Q.json").exists() and side["function"] == "Q.json"
    back = io.load_ground_state(tmp_path)
    assert np.array_equal(back.Q.values, gs.Q.values)
    assert back.mass == gs.mass and back.residual_norm == gs.residual_norm
    assert np.allclose(back.lambda_Q.values, gs.lambda_Q.values)


def test_coefficient_bundle(tmp_path, coeffs):
    man = io.save_coefficients(coeffs, tmp_path)
    assert set(man["files"]) == set(coeffs.FIELDS)
    back = io.load_coefficients(tmp_path)
    for name in coeffs.FIELDS:
        assert np.array_equal(getattr(back, name).values, getattr(coeffs, name).values)
    assert back.e1 == coeffs.e1
    io.write_json(tmp_path / "manifest.json", {"format": "other"})
    with pytest.raises(io.FormatError):
        io.load_coefficients(tmp_path)


def test_snapshots(tmp_path):
    g = SpectralGrid(4.0, 16)
    snaps = [(-1.0 + 0.1 * i, GridFunction(g, np.full(16, i + 0.5j))) for i in range(3)]
    man = io.save_snapshots(snaps, tmp_path, extra={"k": "default"})
    assert [e["t"] for e in man["snapshots"]] == [t for t, _ in snaps]
    back, man2 = io.load_snapshots(tmp_path)
    assert man2["k"] == "default"
    for (t, u), (t2, u2) in zip(snaps, back):
        assert t == t2 and np.array_equal(u.values, u2.values)

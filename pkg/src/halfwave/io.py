"""File formats.

GridFunction file (JSON)::

    {"format": "gridfunction", "L": ..., "N": ..., "kind": "real"|"complex",
     "encoding": "base64-float64-le-pairs", "data": "<base64>"}

``data`` is the base64 encoding of ``2N`` little-endian IEEE-754 float64
numbers laid out as ``re_0, im_0, re_1, im_1, ...``.  The same payload can be
written as a plain JSON list with ``encoding = "array-float64-pairs"``.
CSV export has the header ``x,re,im``.
"""

from __future__ import annotations

import base64
import csv
import json
import math
from pathlib import Path

import numpy as np

from .ground_state import GroundState
from .linearized import ProfileCoefficientSet
from .spectral import GridFunction, SpectralGrid, scaling_generator

B64 = "base64-float64-le-pairs"
ARRAY = "array-float64-pairs"


class FormatError(ValueError):
    pass


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def read_json(path):
    return json.loads(Path(path).read_text())


def gridfunction_to_dict(f: GridFunction, encoding: str = B64) -> dict:
    pairs = np.empty(2 * f.grid.N, dtype="<f8")
    pairs[0::2] = f.values.real
    pairs[1::2] = f.values.imag
    if encoding == B64:
        data = base64.b64encode(pairs.tobytes()).decode("ascii")
    elif encoding == ARRAY:
        data = pairs.tolist()
    else:
        raise FormatError(f"unknown encoding {encoding!r}")
    return {"format": "gridfunction", "L": f.grid.L, "N": f.grid.N, "kind": f.kind, "encoding": encoding, "data": data}


def gridfunction_from_dict(d: dict) -> GridFunction:
    if d.get("format") != "gridfunction":
        raise FormatError("not a gridfunction record")
    grid = SpectralGrid(float(d["L"]), int(d["N"]))
    if d["encoding"] == B64:
        pairs = np.frombuffer(base64.b64decode(d["data"]), dtype="<f8")
    elif d["encoding"] == ARRAY:
        pairs = np.asarray(d["data"], dtype="<f8")
    else:
        raise FormatError(f"unknown encoding {d['encoding']!r}")
    if pairs.shape != (2 * grid.N,):
        raise FormatError(f"payload has {pairs.size} numbers, expected {2 * grid.N}")
    return GridFunction(grid, pairs[0::2] + 1j * pairs[1::2], kind=d.get("kind", "complex"))


def save_gridfunction(f: GridFunction, path, encoding: str = B64) -> Path:
    return write_json(path, gridfunction_to_dict(f, encoding))


def load_gridfunction(path) -> GridFunction:
    return gridfunction_from_dict(read_json(path))


def export_csv(f: GridFunction, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "re", "im"])
        for x, v in zip(f.grid.x, f.values):
            w.writerow([repr(float(x)), repr(float(v.real)), repr(float(v.imag))])
    return path


def write_rows(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    """CSV with a header; floats written with ``repr`` (round-trip exact)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = columns or (list(rows[0].keys()) if rows else [])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in columns])
    return path


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_rows(path) -> list[dict]:
    with Path(path).open() as fh:
        out = []
        for r in csv.DictReader(fh):
            out.append({k: _parse(v) for k, v in r.items()})
        return out


def _parse(v: str):
    if v == "":
        return None
    try:
        return float(v)
    except ValueError:
        return v


# --------------------------------------------------------------------------- composite objects


def save_ground_state(gs: GroundState, directory) -> dict:
    d = Path(directory)
    save_gridfunction(gs.Q, d / "Q.json")
    report = {k: v for k, v in gs.solver_report.items() if not k.endswith("_history")}
    sidecar = {
        "residual_norm": gs.residual_norm,
        "mass": gs.mass,
        "solver_report": report,
        "certificate": gs.certificate(),
        "function": "Q.json",
    }
    write_json(d / "ground_state.json", sidecar)
    return sidecar


def load_ground_state(directory) -> GroundState:
    d = Path(directory)
    side = read_json(d / "ground_state.json")
    Q = load_gridfunction(d / side.get("function", "Q.json"))
    return GroundState(
        Q=Q,
        residual_norm=float(side["residual_norm"]),
        mass=float(side["mass"]),
        lambda_Q=scaling_generator(Q),
        solver_report=side.get("solver_report", {}),
    )


def save_coefficients(c: ProfileCoefficientSet, directory) -> dict:
    d = Path(directory)
    files = {}
    for name, f in c.functions().items():
        save_gridfunction(f, d / f"{name}.json")
        files[name] = f"{name}.json"
    diagnostics = {k: v for k, v in c.diagnostics.items()}
    manifest = {
        "format": "profile-coefficients",
        "e1": c.e1,
        "k_second_deriv_at_0": c.k_second_deriv_at_0,
        "solvability_residuals": c.solvability_residuals,
        "diagnostics": diagnostics,
        "provenance": c.provenance,
        "files": files,
    }
    write_json(d / "manifest.json", manifest)
    return manifest


def load_coefficients(directory) -> ProfileCoefficientSet:
    d = Path(directory)
    man = read_json(d / "manifest.json")
    if man.get("format") != "profile-coefficients":
        raise FormatError("not a coefficient bundle")
    fns = {name: load_gridfunction(d / fname) for name, fname in man["files"].items()}
    return ProfileCoefficientSet(
        **fns,
        e1=float(man["e1"]),
        k_second_deriv_at_0=float(man["k_second_deriv_at_0"]),
        solvability_residuals=man["solvability_residuals"],
        diagnostics=man.get("diagnostics", {}),
        provenance=man.get("provenance", {}),
    )


def save_snapshots(snapshots: list[tuple[float, GridFunction]], directory, extra: dict | None = None) -> dict:
    """Snapshot directory: ``snap_XXXXX.json`` files plus ``manifest.json`` listing ``t``."""
    d = Path(directory)
    entries = []
    for i, (t, u) in enumerate(snapshots):
        name = f"snap_{i:05d}.json"
        save_gridfunction(u, d / name)
        entries.append({"t": float(t), "file": name})
    manifest = {"format": "snapshots", "snapshots": entries, **(extra or {})}
    write_json(d / "manifest.json", manifest)
    return manifest


def load_snapshots(directory) -> tuple[list[tuple[float, GridFunction]], dict]:
    d = Path(directory)
    man = read_json(d / "manifest.json")
    if man.get("format") != "snapshots":
        raise FormatError("not a snapshot directory")
    return [(float(e["t"]), load_gridfunction(d / e["file"])) for e in man["snapshots"]], man

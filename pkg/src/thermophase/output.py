"""Legacy-VTK snapshots, diagnostics CSV and the run manifest."""
from __future__ import annotations

import csv
import hashlib
import json
import platform
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import DiagnosticsRecord


def _num(x) -> str:
    """17 significant digits; negative zero is written as 0."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % (float(x) + 0.0)


def write_vtk(state, path) -> Path:
    """ASCII unstructured grid with P1 scalars and vertex-sampled velocity."""
    path = Path(path)
    mesh = state.c.space.mesh
    lines = [
        "# vtk DataFile Version 3.0",
        f"thermophase step {state.step} t={_num(state.time)}",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    lines += [f"{_num(x)} {_num(y)} 0" for x, y in mesh.vertices]
    nt = mesh.n_triangles
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles.tolist()]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    lines.append(f"POINT_DATA {mesh.n_vertices}")
    for name, fld in (("c", state.c), ("mu", state.mu), ("theta", state.theta), ("p", state.p)):
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines += [_num(v) for v in fld.vertex_values()]
    lines.append("VECTORS u double")
    lines += [f"{_num(ux)} {_num(uy)} 0" for ux, uy in state.u.vertex_values()]
    path.write_text("\n".join(lines) + "\n", encoding="ascii", newline="\n")
    return path


def write_diagnostics_csv(records, path) -> Path:
    if not records:
        raise ValueError("no diagnostics records to write")
    path = Path(path)
    cols = DiagnosticsRecord.columns()
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(cols)
        for rec in records:
            d = rec.as_dict()
            writer.writerow([_num(d[c]) for c in cols])
    return path


def read_diagnostics_csv(path) -> dict[str, np.ndarray]:
    with open(path, newline="", encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {name: np.array([float(r[i]) for r in body]) for i, name in enumerate(header)}


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_run_manifest(result, out_dir, seed=None, failure=None) -> Path:
    from .config import config_to_document, emit_config

    out = Path(out_dir)
    cfg = result.config
    if seed is not None:
        cfg = cfg.with_updates(init=type(cfg.init)(**{**cfg.init.__dict__, "seed": int(seed)}))
    (out / "config.yaml").write_text(emit_config(cfg), encoding="utf-8")
    files = list(result.files) + ["config.yaml", "manifest.json"]
    manifest = {
        "software": {"package": "thermophase", "version": __version__,
                     "python": platform.python_version(), "numpy": np.__version__},
        "config": config_to_document(cfg),
        "provenance": dict(cfg.notes),
        "seed": cfg.init.seed,
        "finished_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "wall_time_s": round(result.wall_time, 3),
        "files": files,
        "checksums": {"diagnostics.csv": sha256(out / "diagnostics.csv")}
        if (out / "diagnostics.csv").exists() else {},
        "summary": result.summary,
        "status": "ok" if failure is None else f"failed: {failure}",
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, default=_json_default) + "\n", encoding="utf-8")
    return path


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)

"""File layouts for trajectories, convergence reports and thickness reports.

Every writer is atomic (temporary file plus rename) and byte-deterministic for
identical inputs.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .meshio import atomic_write_bytes, atomic_write_text, format_off
from .solver import ConvergenceReport, Trajectory
from .thickness import ThicknessReport

_EPOCH = (1980, 1, 1, 0, 0, 0)


def _fmt(x: float) -> str:
    return f"{x:.17g}"


def save_trajectory(traj: Trajectory, path, meta: dict | None = None) -> None:
    """``.npz`` archive with fixed zip timestamps so identical runs give identical bytes."""
    arrays = {"states": traj.states, "controls": traj.controls, "faces": traj.faces}
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            b = io.BytesIO()
            np.save(b, np.ascontiguousarray(arr), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=_EPOCH), b.getvalue())
        if meta is not None:
            zf.writestr(zipfile.ZipInfo("meta.json", date_time=_EPOCH),
                        json.dumps(meta, sort_keys=True, indent=2))
    atomic_write_bytes(path, buf.getvalue())


def load_trajectory(path) -> tuple[Trajectory, dict]:
    with np.load(path, allow_pickle=False) as z:
        traj = Trajectory(z["states"], z["controls"], z["faces"])
    meta = {}
    with zipfile.ZipFile(path) as zf:
        if "meta.json" in zf.namelist():
            meta = json.loads(zf.read("meta.json"))
    return traj, meta


def write_sheets(traj: Trajectory, directory) -> list[Path]:
    """One OFF mesh per time step: the surfaces ``t = const`` of the coordinate map."""
    directory = Path(directory)
    width = max(3, len(str(traj.T)))
    paths = []
    for t in range(traj.T + 1):
        p = directory / f"sheet_{t:0{width}d}.off"
        atomic_write_text(p, format_off(traj.sheet(t)))
        paths.append(p)
    return paths


def write_columns(traj: Trajectory, path) -> None:
    """Tab-separated: vertex index followed by ``x y z`` for each of the T+1 sheets."""
    cols = traj.columns()
    head = ["vertex"] + [f"{c}{t}" for t in range(traj.T + 1) for c in "xyz"]
    lines = ["\t".join(head)]
    for i, pts in enumerate(cols.reshape(cols.shape[0], -1).tolist()):
        lines.append("\t".join([str(i)] + [_fmt(v) for v in pts]))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_columns(path) -> np.ndarray:
    data = np.loadtxt(path, delimiter="\t", skiprows=1, ndmin=2)
    return data[:, 1:].reshape(data.shape[0], -1, 3)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_convergence(report: ConvergenceReport, path) -> None:
    """JSON lines: one record per outer iteration, then a status record."""
    lines = [json.dumps(_jsonable(r), sort_keys=True) for r in report.records]
    lines.append(json.dumps({"status": report.status, "outer_iterations": report.outer_iterations}, sort_keys=True))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_convergence(path) -> ConvergenceReport:
    rows = [json.loads(s) for s in Path(path).read_text().splitlines() if s.strip()]
    return ConvergenceReport(rows[-1]["status"], rows[:-1])


def write_report(rep: ThicknessReport, directory, prefix: str = "thickness") -> dict[str, Path]:
    directory = Path(directory)
    n = len(rep.values)
    col = rep.column_length if rep.column_length is not None else rep.values
    cor = rep.corrected_length if rep.corrected_length is not None else np.full(n, np.nan)
    base = rep.baseline if rep.baseline is not None else np.full(n, np.nan)
    fb = rep.fallback if rep.fallback is not None else np.zeros(n, dtype=bool)
    lines = ["vertex\tcolumn_length\tcorrected_length\tbaseline\tboundary_excluded\tcorrection_fallback"]
    for i in range(n):
        lines.append(f"{i}\t{_fmt(col[i])}\t{_fmt(cor[i])}\t{_fmt(base[i])}\t{int(not rep.mask[i])}\t{int(fb[i])}")
    paths = {
        "table": directory / f"{prefix}.tsv",
        "summary": directory / f"{prefix}_summary.json",
        "histogram": directory / f"{prefix}_histogram.tsv",
    }
    atomic_write_text(paths["table"], "\n".join(lines) + "\n")
    summary = {"label": rep.label, "summary": rep.summary, **rep.extra}
    atomic_write_text(paths["summary"], json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    write_histogram(rep.hist_edges, rep.hist_counts, paths["histogram"])
    return paths


def write_histogram(edges: np.ndarray, counts: np.ndarray, path) -> None:
    lines = ["left_edge\tright_edge\tcount"]
    for lo, hi, c in zip(edges[:-1], edges[1:], counts):
        lines.append(f"{_fmt(lo)}\t{_fmt(hi)}\t{int(c)}")
    atomic_write_text(path, "\n".join(lines) + "\n")

"""OFF and ASCII PLY readers/writers (positions and triangular faces only)."""

from __future__ import annotations

import json
import os
from pathlib import Path

import numpy as np

from .mesh import TriMesh, validate_mesh


class MeshParseError(ValueError):
    pass


def _format_of(path: Path, fmt: str | None) -> str:
    if fmt is None:
        fmt = path.suffix.lstrip(".")
    fmt = fmt.lower()
    if fmt not in ("off", "ply"):
        raise MeshParseError(f"unsupported mesh format {fmt!r} (expected OFF or PLY)")
    return fmt


def _data_lines(text: str):
    for line in text.splitlines():
        s = line.split("#", 1)[0].strip()
        if s:
            yield s


def parse_off(text: str) -> tuple[np.ndarray, np.ndarray]:
    lines = list(_data_lines(text))
    if not lines or not lines[0].upper().startswith("OFF"):
        raise MeshParseError("missing OFF header")
    head = lines[0][3:].split()
    body = lines[1:]
    if not head:
        if not body:
            raise MeshParseError("missing OFF counts line")
        head, body = body[0].split(), body[1:]
    try:
        nv, nf = int(head[0]), int(head[1])
    except (IndexError, ValueError):
        raise MeshParseError("malformed OFF counts line") from None
    if len(body) < nv + nf:
        raise MeshParseError(f"OFF header declares {nv} vertices and {nf} faces but body is shorter")
    if len(body) > nv + nf:
        raise MeshParseError("OFF body has more records than the header declares")
    verts = np.empty((nv, 3))
    for i in range(nv):
        tok = body[i].split()
        if len(tok) < 3:
            raise MeshParseError(f"vertex record {i} has fewer than 3 coordinates")
        try:
            verts[i] = [float(t) for t in tok[:3]]
        except ValueError:
            raise MeshParseError(f"vertex record {i} is not numeric") from None
    faces = np.empty((nf, 3), dtype=np.int64)
    for i in range(nf):
        tok = body[nv + i].split()
        try:
            k = int(tok[0])
            idx = [int(t) for t in tok[1 : 1 + k]]
        except (IndexError, ValueError):
            raise MeshParseError(f"face record {i} is malformed") from None
        if k != 3 or len(idx) != 3:
            raise MeshParseError(f"face record {i} is not a triangle")
        faces[i] = idx
    return verts, faces


_PLY_SCALARS = {
    "char", "uchar", "short", "ushort", "int", "uint", "float", "double",
    "int8", "uint8", "int16", "uint16", "int32", "uint32", "float32", "float64",
}


def parse_ply(text: str) -> tuple[np.ndarray, np.ndarray]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise MeshParseError("missing PLY magic")
    elements: list[tuple[str, int, list]] = []
    i = 1
    fmt_seen = False
    while True:
        if i >= len(lines):
            raise MeshParseError("PLY header is not terminated by end_header")
        tok = lines[i].split()
        i += 1
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if tok[1:2] != ["ascii"]:
                raise MeshParseError("only ascii PLY is supported")
            fmt_seen = True
        elif tok[0] == "element":
            try:
                elements.append((tok[1], int(tok[2]), []))
            except (IndexError, ValueError):
                raise MeshParseError("malformed PLY element line") from None
        elif tok[0] == "property":
            if not elements:
                raise MeshParseError("PLY property before any element")
            if tok[1] == "list":
                elements[-1][2].append(("list", tok[-1]))
            elif tok[1] in _PLY_SCALARS:
                elements[-1][2].append(("scalar", tok[-1]))
            else:
                raise MeshParseError(f"unknown PLY property type {tok[1]!r}")
        elif tok[0] == "end_header":
            break
        else:
            raise MeshParseError(f"unexpected PLY header line {lines[i - 1]!r}")
    if not fmt_seen:
        raise MeshParseError("PLY header has no format line")

    records = [s.split() for s in lines[i:] if s.strip()]
    pos = 0
    verts = faces = None
    for name, count, props in elements:
        if pos + count > len(records):
            raise MeshParseError(f"PLY header declares {count} {name} records but body is shorter")
        block = records[pos : pos + count]
        pos += count
        if name == "vertex":
            names = [p[1] for p in props]
            try:
                cols = [names.index(c) for c in ("x", "y", "z")]
            except ValueError:
                raise MeshParseError("PLY vertex element lacks x/y/z") from None
            if any(p[0] == "list" for p in props):
                raise MeshParseError("list properties on vertices are not supported")
            verts = np.empty((count, 3))
            for r, rec in enumerate(block):
                if len(rec) != len(props):
                    raise MeshParseError(f"vertex record {r} has {len(rec)} values, expected {len(props)}")
                verts[r] = [float(rec[c]) for c in cols]
        elif name == "face":
            faces = np.empty((count, 3), dtype=np.int64)
            for r, rec in enumerate(block):
                j = 0
                for kind, pname in props:
                    if kind == "list":
                        try:
                            k = int(rec[j])
                            vals = [int(t) for t in rec[j + 1 : j + 1 + k]]
                        except (IndexError, ValueError):
                            raise MeshParseError(f"face record {r} is malformed") from None
                        if len(vals) != k:
                            raise MeshParseError(f"face record {r} is truncated")
                        if pname in ("vertex_indices", "vertex_index"):
                            if k != 3:
                                raise MeshParseError(f"face record {r} is not a triangle")
                            faces[r] = vals
                        j += 1 + k
                    else:
                        j += 1
                if j != len(rec):
                    raise MeshParseError(f"face record {r} has trailing values")
    if pos != len(records):
        raise MeshParseError("PLY body has more records than the header declares")
    if verts is None:
        raise MeshParseError("PLY file has no vertex element")
    if faces is None:
        faces = np.empty((0, 3), dtype=np.int64)
    return verts, faces


def load_mesh(path, fmt: str | None = None, validate: bool = True) -> TriMesh:
    path = Path(path)
    fmt = _format_of(path, fmt)
    text = path.read_text()
    verts, faces = parse_off(text) if fmt == "off" else parse_ply(text)
    m = TriMesh(verts, faces)
    if validate:
        validate_mesh(m)
    return m


def format_off(m: TriMesh) -> str:
    out = [f"OFF\n{m.n_vertices} {m.n_faces} 0\n"]
    out += [f"{x:.17g} {y:.17g} {z:.17g}\n" for x, y, z in m.vertices.tolist()]
    out += [f"3 {a} {b} {c}\n" for a, b, c in m.faces.tolist()]
    return "".join(out)


def format_ply(m: TriMesh) -> str:
    head = (
        "ply\nformat ascii 1.0\n"
        f"element vertex {m.n_vertices}\n"
        "property double x\nproperty double y\nproperty double z\n"
        f"element face {m.n_faces}\n"
        "property list uchar int vertex_indices\nend_header\n"
    )
    out = [head]
    out += [f"{x:.17g} {y:.17g} {z:.17g}\n" for x, y, z in m.vertices.tolist()]
    out += [f"3 {a} {b} {c}\n" for a, b, c in m.faces.tolist()]
    return "".join(out)


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_text(text)
    os.replace(tmp, path)


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def save_mesh(m: TriMesh, path, fmt: str | None = None) -> None:
    path = Path(path)
    fmt = _format_of(path, fmt)
    atomic_write_text(path, format_off(m) if fmt == "off" else format_ply(m))


def write_sidecar(path, data: dict) -> None:
    atomic_write_text(path, json.dumps(data, indent=2, sort_keys=True) + "\n")


def read_sidecar(path) -> dict:
    return json.loads(Path(path).read_text())

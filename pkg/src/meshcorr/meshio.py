"""Mesh file readers and writers: OBJ, OFF, ASCII/binary PLY.

Colors are carried as floats in [0, 1]; 8-bit channels are scaled by
1/255 on load and back to uchar when writing binary-friendly PLY.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, TopologyError
from .mesh import TriMesh


def load_mesh(path) -> TriMesh:
    path = Path(path)
    if not path.exists():
        raise FormatError(f"mesh file not found: {path}")
    suffix = path.suffix.lower()
    if suffix == ".obj":
        return _load_obj(path)
    if suffix == ".off":
        return _load_off(path)
    if suffix == ".ply":
        return _load_ply(path)
    raise FormatError(f"unsupported mesh format '{suffix}' for {path}")


def save_mesh(path, mesh: TriMesh, binary: bool = False):
    path = Path(path)
    if path.suffix.lower() != ".ply":
        raise FormatError(f"only PLY output is supported, got {path.suffix}")
    _save_ply(path, mesh, binary=binary)


# ---------------------------------------------------------------- OBJ

def _load_obj(path: Path) -> TriMesh:
    verts, colors, faces = [], [], []
    with open(path, "r", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                try:
                    vals = [float(x) for x in parts[1:]]
                except ValueError:
                    raise FormatError(f"{path}:{lineno}: bad vertex line")
                if len(vals) not in (3, 6):
                    raise FormatError(
                        f"{path}:{lineno}: vertex needs 3 or 6 values")
                verts.append(vals[:3])
                colors.append(vals[3:6] if len(vals) == 6 else None)
            elif tag == "f":
                idx = parts[1:]
                if len(idx) != 3:
                    raise TopologyError(
                        f"{path}:{lineno}: only triangle faces are "
                        f"supported, got {len(idx)} vertices")
                try:
                    # "f v", "f v/vt", "f v/vt/vn", "f v//vn"
                    face = [int(tok.split("/")[0]) for tok in idx]
                except ValueError:
                    raise FormatError(f"{path}:{lineno}: bad face index")
                faces.append([i - 1 if i > 0 else len(verts) + i
                              for i in face])
    if not verts:
        raise FormatError(f"{path}: no vertices found")
    has_color = all(c is not None for c in colors)
    return TriMesh(np.array(verts, dtype=float),
                   np.array(faces, dtype=np.int64).reshape(-1, 3),
                   np.array(colors, dtype=float) if has_color else None)


# ---------------------------------------------------------------- OFF

def _load_off(path: Path) -> TriMesh:
    with open(path, "r", errors="replace") as fh:
        tokens = []
        lines = []
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if body:
                for tok in body.split():
                    tokens.append(tok)
                    lines.append(lineno)
    if not tokens:
        raise FormatError(f"{path}: empty OFF file")
    pos = 0
    if tokens[0].upper().endswith("OFF"):
        pos = 1
    try:
        nv, nf = int(tokens[pos]), int(tokens[pos + 1])
        pos += 3  # skip edge count
    except (ValueError, IndexError):
        raise FormatError(f"{path}:{lines[min(pos, len(lines) - 1)]}: "
                          "bad OFF header counts")
    need = nv * 3
    try:
        verts = np.array(tokens[pos:pos + need], dtype=float).reshape(nv, 3)
    except ValueError:
        raise FormatError(f"{path}: bad vertex data (expected {nv} vertices)")
    pos += need
    faces = []
    for _ in range(nf):
        if pos >= len(tokens):
            raise FormatError(f"{path}: truncated face list")
        cnt = int(tokens[pos])
        if cnt != 3:
            raise TopologyError(
                f"{path}:{lines[pos]}: only triangle faces are supported, "
                f"got {cnt}-gon")
        faces.append([int(t) for t in tokens[pos + 1:pos + 4]])
        pos += 4
    return TriMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3))


# ---------------------------------------------------------------- PLY

_PLY_TYPES = {
    "char": "b", "int8": "b", "uchar": "B", "uint8": "B",
    "short": "h", "int16": "h", "ushort": "H", "uint16": "H",
    "int": "i", "int32": "i", "uint": "I", "uint32": "I",
    "float": "f", "float32": "f", "double": "d", "float64": "d",
}


def _load_ply(path: Path) -> TriMesh:
    with open(path, "rb") as fh:
        magic = fh.readline().strip()
        if magic != b"ply":
            raise FormatError(f"{path}:1: not a PLY file")
        fmt = None
        elements = []  # (name, count, [(prop_name, type, list_len_type)])
        lineno = 1
        while True:
            line = fh.readline()
            lineno += 1
            if not line:
                raise FormatError(f"{path}:{lineno}: unexpected EOF in header")
            parts = line.decode("ascii", errors="replace").split()
            if not parts or parts[0] == "comment":
                continue
            if parts[0] == "format":
                fmt = parts[1]
                if fmt not in ("ascii", "binary_little_endian"):
                    raise FormatError(
                        f"{path}:{lineno}: unsupported PLY format '{fmt}'")
            elif parts[0] == "element":
                elements.append((parts[1], int(parts[2]), []))
            elif parts[0] == "property":
                if not elements:
                    raise FormatError(
                        f"{path}:{lineno}: property before element")
                if parts[1] == "list":
                    elements[-1][2].append((parts[4], parts[3], parts[2]))
                else:
                    elements[-1][2].append((parts[2], parts[1], None))
            elif parts[0] == "end_header":
                break
        if fmt is None:
            raise FormatError(f"{path}: PLY header missing format line")

        data = {}
        if fmt == "ascii":
            body = fh.read().decode("ascii", errors="replace").split("\n")
            row = 0
            body = [ln for ln in body if ln.strip()]
            for name, count, props in elements:
                rows = []
                for _ in range(count):
                    if row >= len(body):
                        raise FormatError(f"{path}: truncated '{name}' data")
                    rows.append(body[row].split())
                    row += 1
                data[name] = _parse_ascii_element(path, name, props, rows)
        else:
            for name, count, props in elements:
                data[name] = _parse_binary_element(fh, path, name, count, props)

    prop_types = {name: {p[0]: p[1] for p in props}
                  for name, _, props in elements}
    return _assemble_ply(path, data, prop_types.get("vertex", {}))


def _parse_ascii_element(path, name, props, rows):
    out = {p[0]: [] for p in props}
    for toks in rows:
        pos = 0
        for pname, ptype, ltype in props:
            if ltype is not None:
                cnt = int(toks[pos])
                vals = [float(t) for t in toks[pos + 1:pos + 1 + cnt]]
                out[pname].append(vals)
                pos += 1 + cnt
            else:
                out[pname].append(float(toks[pos]))
                pos += 1
    return {k: (v if isinstance(v[0], list) else np.array(v))
            for k, v in out.items()} if rows else {p[0]: [] for p in props}


def _parse_binary_element(fh, path, name, count, props):
    out = {p[0]: [] for p in props}
    if all(p[2] is None for p in props):
        # fixed layout: read in one block
        fmt = "<" + "".join(_PLY_TYPES[p[1]] for p in props)
        size = struct.calcsize(fmt)
        raw = fh.read(size * count)
        if len(raw) != size * count:
            raise FormatError(f"{path}: truncated binary '{name}' data")
        arr = np.array(list(struct.iter_unpack(fmt, raw)))
        for i, (pname, _, _) in enumerate(props):
            out[pname] = arr[:, i] if count else np.empty(0)
        return out
    for _ in range(count):
        for pname, ptype, ltype in props:
            if ltype is not None:
                lfmt = "<" + _PLY_TYPES[ltype]
                raw = fh.read(struct.calcsize(lfmt))
                if len(raw) != struct.calcsize(lfmt):
                    raise FormatError(f"{path}: truncated '{name}' data")
                cnt = struct.unpack(lfmt, raw)[0]
                vfmt = "<" + _PLY_TYPES[ptype] * cnt
                raw = fh.read(struct.calcsize(vfmt))
                if len(raw) != struct.calcsize(vfmt):
                    raise FormatError(f"{path}: truncated '{name}' data")
                out[pname].append(list(struct.unpack(vfmt, raw)))
            else:
                vfmt = "<" + _PLY_TYPES[ptype]
                raw = fh.read(struct.calcsize(vfmt))
                if len(raw) != struct.calcsize(vfmt):
                    raise FormatError(f"{path}: truncated '{name}' data")
                out[pname].append(struct.unpack(vfmt, raw)[0])
    return {k: (v if (v and isinstance(v[0], list)) else np.array(v, dtype=float))
            for k, v in out.items()}


def _assemble_ply(path, data, vertex_types) -> TriMesh:
    if "vertex" not in data:
        raise FormatError(f"{path}: PLY file has no vertex element")
    vel = data["vertex"]
    try:
        verts = np.column_stack([vel["x"], vel["y"], vel["z"]])
    except KeyError:
        raise FormatError(f"{path}: vertex element missing x/y/z")
    colors = None
    if all(c in vel for c in ("red", "green", "blue")):
        colors = np.column_stack([vel["red"], vel["green"], vel["blue"]])
        if vertex_types.get("red") in ("uchar", "uint8", "ushort", "uint16"):
            scale = 255.0 if vertex_types["red"] in ("uchar", "uint8") else 65535.0
            colors = colors / scale
    faces = []
    fel = data.get("face", {})
    idx = fel.get("vertex_indices", fel.get("vertex_index", []))
    for f in idx:
        if len(f) != 3:
            raise TopologyError(
                f"{path}: only triangle faces are supported, got "
                f"{len(f)}-gon")
        faces.append([int(v) for v in f])
    return TriMesh(verts, np.array(faces, dtype=np.int64).reshape(-1, 3),
                   colors)


def _save_ply(path: Path, mesh: TriMesh, binary: bool):
    n, m = mesh.n_vertices, mesh.n_triangles
    has_color = mesh.colors is not None
    header = ["ply",
              "format binary_little_endian 1.0" if binary else "format ascii 1.0",
              f"element vertex {n}",
              "property double x", "property double y", "property double z"]
    if has_color:
        header += ["property uchar red", "property uchar green",
                   "property uchar blue"]
    header += [f"element face {m}",
               "property list uchar int vertex_indices", "end_header"]
    if has_color:
        rgb = np.clip(np.rint(mesh.colors * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(("\n".join(header) + "\n").encode("ascii"))
        if binary:
            for i in range(n):
                fh.write(struct.pack("<3d", *mesh.vertices[i]))
                if has_color:
                    fh.write(struct.pack("<3B", *rgb[i]))
            for f in mesh.triangles:
                fh.write(struct.pack("<B3i", 3, *f))
        else:
            for i in range(n):
                line = " ".join(repr(float(c)) for c in mesh.vertices[i])
                if has_color:
                    line += " " + " ".join(str(int(c)) for c in rgb[i])
                fh.write((line + "\n").encode("ascii"))
            for f in mesh.triangles:
                fh.write(f"3 {f[0]} {f[1]} {f[2]}\n".encode("ascii"))

"""Point cloud container, PLY reading/writing and voxelization."""

from __future__ import annotations

import logging
import math
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError, PlyParseError, PlySchemaError

log = logging.getLogger(__name__)

_PLY_TYPES = {
    "char": "i1", "int8": "i1", "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2", "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4", "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4", "double": "f8", "float64": "f8",
}


@dataclass(eq=False)
class PointCloud:
    """Set of integer voxel coordinates, stored sorted and de-duplicated."""

    points: np.ndarray
    bit_depth: int

    def __post_init__(self):
        pts = np.asarray(self.points)
        if pts.size == 0:
            pts = np.zeros((0, 3), dtype=np.int64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise DataError(f"points must have shape (n, 3), got {pts.shape}")
        if not np.issubdtype(pts.dtype, np.integer):
            if not np.all(np.isfinite(pts)) or np.any(pts != np.floor(pts)):
                raise DataError("voxel coordinates must be integers")
        pts = pts.astype(np.int64)
        if not 1 <= self.bit_depth <= 30:
            raise DataError(f"unsupported bit depth {self.bit_depth}")
        if len(pts) and (pts.min() < 0 or pts.max() > (1 << self.bit_depth) - 1):
            raise DataError(f"coordinates outside [0, {(1 << self.bit_depth) - 1}]")
        self.points = np.unique(pts, axis=0) if len(pts) else pts

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return self.bit_depth == other.bit_depth and np.array_equal(self.points, other.points)

    def __repr__(self):
        return f"PointCloud({len(self)} points, bit_depth={self.bit_depth})"


def voxelize(raw_points, bit_depth: int) -> PointCloud:
    """Map real coordinates onto a 2^bit_depth grid.

    All axes share one scale (the largest extent maps onto the full grid), and
    cell indices are floored.
    """
    if not 1 <= bit_depth <= 16:
        raise DataError(f"bit depth must be in [1, 16], got {bit_depth}")
    raw = np.asarray(raw_points, dtype=np.float64).reshape(-1, 3)
    if len(raw) == 0:
        raise DataError("cannot voxelize an empty point set")
    if not np.all(np.isfinite(raw)):
        raise DataError("non-finite coordinates")
    top = (1 << bit_depth) - 1
    lo = raw.min(axis=0)
    extent = float((raw.max(axis=0) - lo).max())
    scale = top / extent if extent > 0 else 0.0
    vox = np.floor((raw - lo) * scale)
    vox = np.clip(vox, 0, top).astype(np.int64)
    return PointCloud(vox, bit_depth)


def _min_depth(pts: np.ndarray) -> int:
    if len(pts) == 0:
        return 1
    return max(1, int(math.ceil(math.log2(int(pts.max()) + 1))))


# ---------------------------------------------------------------- PLY

def _parse_header(fh):
    lines = []
    first = fh.readline()
    if first.strip() != b"ply":
        raise PlyParseError("missing 'ply' magic", line=1)
    fmt = None
    elements = []  # [name, count, [(name, dtype) | (name, ("list", ctype, itype))]]
    comments = []
    lineno = 1
    while True:
        raw = fh.readline()
        lineno += 1
        if not raw:
            raise PlyParseError("unexpected end of file in header", line=lineno)
        try:
            line = raw.decode("ascii").strip()
        except UnicodeDecodeError:
            raise PlyParseError("non-ASCII header", line=lineno) from None
        lines.append(line)
        if not line:
            continue
        tok = line.split()
        kw = tok[0]
        if kw == "end_header":
            break
        if kw == "format":
            if len(tok) != 3 or tok[1] not in ("ascii", "binary_little_endian"):
                raise PlyParseError(f"unsupported format line {line!r}", line=lineno)
            fmt = tok[1]
        elif kw in ("comment", "obj_info"):
            comments.append(line[len(kw):].strip())
        elif kw == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise PlyParseError(f"malformed element line {line!r}", line=lineno)
            elements.append([tok[1], int(tok[2]), []])
        elif kw == "property":
            if not elements:
                raise PlyParseError("property before any element", line=lineno)
            if len(tok) == 5 and tok[1] == "list":
                if tok[2] not in _PLY_TYPES or tok[3] not in _PLY_TYPES:
                    raise PlyParseError(f"unknown list type in {line!r}", line=lineno)
                elements[-1][2].append((tok[4], ("list", _PLY_TYPES[tok[2]], _PLY_TYPES[tok[3]])))
            elif len(tok) == 3 and tok[1] in _PLY_TYPES:
                elements[-1][2].append((tok[2], _PLY_TYPES[tok[1]]))
            else:
                raise PlyParseError(f"malformed property line {line!r}", line=lineno)
        else:
            raise PlyParseError(f"unknown header keyword {kw!r}", line=lineno)
    if fmt is None:
        raise PlyParseError("missing format line", line=lineno)
    return fmt, elements, comments, lineno


def _read_vertices(path):
    with open(path, "rb") as fh:
        fmt, elements, comments, header_lines = _parse_header(fh)
        body_offset = fh.tell()
        data = fh.read()
    names = [e[0] for e in elements]
    if "vertex" not in names:
        raise PlySchemaError("no vertex element")
    for e in elements:
        if e[0] != "vertex":
            log.warning("skipping PLY element %r (%d items)", e[0], e[1])
    vidx = names.index("vertex")
    vprops = elements[vidx][2]
    pnames = [p[0] for p in vprops]
    missing = [c for c in "xyz" if c not in pnames]
    if missing:
        raise PlySchemaError(f"vertex element lacks properties {missing}")
    if any(isinstance(p[1], tuple) for p in vprops):
        raise PlySchemaError("list properties on vertex element are not supported")

    if fmt == "ascii":
        text = data.decode("ascii", errors="replace").splitlines()
        row = 0
        for e in elements[:vidx]:
            row += e[1]
        count = elements[vidx][1]
        if row + count > len(text):
            raise PlyParseError("file ends before all vertices were read",
                                line=header_lines + len(text) + 1)
        cols = [pnames.index(c) for c in "xyz"]
        xyz = np.empty((count, 3), dtype=np.float64)
        for i in range(count):
            tok = text[row + i].split()
            if len(tok) < len(vprops):
                raise PlyParseError("too few values in vertex row", line=header_lines + row + i + 1)
            try:
                xyz[i] = [float(tok[c]) for c in cols]
            except ValueError:
                raise PlyParseError("bad number in vertex row",
                                    line=header_lines + row + i + 1) from None
    else:
        pos = 0
        for e in elements[:vidx]:
            pos = _skip_binary(data, pos, e, body_offset)
        dtype = np.dtype([(n, "<" + t) for n, t in vprops])
        count = elements[vidx][1]
        need = dtype.itemsize * count
        if pos + need > len(data):
            raise PlyParseError("binary vertex data truncated", offset=body_offset + len(data))
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
        xyz = np.stack([arr["x"], arr["y"], arr["z"]], axis=1).astype(np.float64)
    return xyz, comments


def _skip_binary(data, pos, element, body_offset):
    name, count, props = element
    if not any(isinstance(p[1], tuple) for p in props):
        size = sum(np.dtype(p[1]).itemsize for p in props) * count
        if pos + size > len(data):
            raise PlyParseError(f"element {name!r} truncated", offset=body_offset + pos)
        return pos + size
    for _ in range(count):
        for _, t in props:
            if isinstance(t, tuple):
                ct = np.dtype("<" + t[1])
                if pos + ct.itemsize > len(data):
                    raise PlyParseError(f"element {name!r} truncated", offset=body_offset + pos)
                n = int(np.frombuffer(data, ct, 1, pos)[0])
                pos += ct.itemsize + n * np.dtype(t[2]).itemsize
            else:
                pos += np.dtype(t).itemsize
        if pos > len(data):
            raise PlyParseError(f"element {name!r} truncated", offset=body_offset + pos)
    return pos


def read_ply(path, bit_depth: int | None = None, voxelize_input: bool = False) -> PointCloud:
    """Read vertex positions from a PLY file.

    ``bit_depth`` defaults to a ``comment bit_depth <d>`` header line when present,
    else the smallest depth that holds every coordinate. Non-integer coordinates
    are rejected unless ``voxelize_input`` is set (then ``bit_depth`` is required).
    """
    xyz, comments = _read_vertices(path)
    if bit_depth is None:
        for c in comments:
            tok = c.split()
            if len(tok) == 2 and tok[0] == "bit_depth" and tok[1].isdigit():
                bit_depth = int(tok[1])
    if voxelize_input:
        if bit_depth is None:
            raise DataError("voxelization needs an explicit bit depth")
        return voxelize(xyz, bit_depth)
    if len(xyz) and (np.any(xyz != np.floor(xyz)) or not np.all(np.isfinite(xyz))):
        raise DataError(f"{os.fspath(path)}: non-integer coordinates; voxelize first")
    if len(xyz) and xyz.min() < 0:
        raise DataError(f"{os.fspath(path)}: negative coordinates")
    pts = xyz.astype(np.int64)
    if bit_depth is None:
        bit_depth = _min_depth(pts)
    return PointCloud(pts, bit_depth)


def write_ply(pc: PointCloud, path, format: str = "binary") -> None:
    if format not in ("ascii", "binary"):
        raise ValueError("format must be 'ascii' or 'binary'")
    # float32 is exact up to 2^24; deeper grids are written as int32
    ptype, dtype = ("float", "<f4") if pc.bit_depth <= 24 else ("int", "<i4")
    pts = np.asarray(pc.points).astype(dtype)
    kind = "ascii" if format == "ascii" else "binary_little_endian"
    header = (
        "ply\n"
        f"format {kind} 1.0\n"
        f"comment bit_depth {pc.bit_depth}\n"
        f"element vertex {len(pts)}\n"
        f"property {ptype} x\nproperty {ptype} y\nproperty {ptype} z\n"
        "end_header\n"
    )
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        if format == "ascii":
            body = "".join(f"{int(x)} {int(y)} {int(z)}\n" for x, y, z in pc.points)
            fh.write(body.encode("ascii"))
        else:
            fh.write(pts.tobytes())

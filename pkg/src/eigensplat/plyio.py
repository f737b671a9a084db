"""PLY vertex I/O for Gaussian sets (ascii 1.0 and binary_little_endian 1.0).

Written vertex properties, in this order: x y z, scale_0..2, rot_0..3 (w x y z),
opacity, then an optional eigenentropy channel. All are 32-bit floats. Scales
and opacity are stored activated (linear scale, opacity in [0, 1]); files from
splatting trainers that store log-scales or opacity logits need converting.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import GaussianSet

GAUSSIAN_PROPS = ("x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "opacity")
ENTROPY_PROP = "eigenentropy"

_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


class PlyError(ValueError):
    code = "ply_error"


class PlyHeaderError(PlyError):
    code = "malformed_header"


class PlyTruncatedError(PlyError):
    code = "truncated_body"


class PlyFormatError(PlyError):
    code = "unsupported_format"


@dataclass
class PlyDocument:
    gaussians: GaussianSet
    format: str = "binary_little_endian"
    eigenentropy: np.ndarray | None = None
    properties: tuple[str, ...] = field(default=())


@dataclass
class _Element:
    name: str
    count: int
    props: list = field(default_factory=list)  # (name, numpy type code)


def _parse_header(f):
    first = f.readline()
    if first.strip() != b"ply":
        raise PlyHeaderError("malformed header: missing 'ply' magic")
    fmt, units, elements = None, "", []
    while True:
        raw = f.readline()
        if not raw:
            raise PlyHeaderError("malformed header: missing end_header")
        line = raw.decode("ascii", errors="replace").strip()
        if not line:
            continue
        tok = line.split()
        if tok[0] == "end_header":
            break
        if tok[0] == "format":
            if len(tok) != 3 or tok[2] != "1.0":
                raise PlyHeaderError(f"malformed header: bad format line {line!r}")
            fmt = tok[1]
        elif tok[0] == "comment":
            if len(tok) >= 3 and tok[1] == "units":
                units = " ".join(tok[2:])
        elif tok[0] == "obj_info":
            continue
        elif tok[0] == "element":
            if len(tok) != 3 or not tok[2].isdigit():
                raise PlyHeaderError(f"malformed header: bad element line {line!r}")
            elements.append(_Element(tok[1], int(tok[2])))
        elif tok[0] == "property":
            if not elements:
                raise PlyHeaderError("malformed header: property before element")
            if tok[1] == "list":
                if len(tok) != 5 or tok[2] not in _TYPES or tok[3] not in _TYPES:
                    raise PlyHeaderError(f"malformed header: bad list property {line!r}")
                elements[-1].props.append((tok[4], ("list", _TYPES[tok[2]], _TYPES[tok[3]])))
            else:
                if len(tok) != 3 or tok[1] not in _TYPES:
                    raise PlyHeaderError(f"malformed header: bad property line {line!r}")
                elements[-1].props.append((tok[2], _TYPES[tok[1]]))
        else:
            raise PlyHeaderError(f"malformed header: unknown keyword {tok[0]!r}")
    if fmt is None:
        raise PlyHeaderError("malformed header: no format line")
    if fmt == "binary_big_endian":
        raise PlyFormatError("unsupported format: binary_big_endian")
    if fmt not in ("ascii", "binary_little_endian"):
        raise PlyHeaderError(f"malformed header: unknown format {fmt!r}")
    return fmt, units, elements


def _skip_binary_element(f, el: _Element):
    # only fixed-size elements can be skipped without a full parse
    if any(isinstance(t, tuple) for _, t in el.props):
        raise PlyFormatError(f"unsupported format: list properties in element {el.name!r} before vertex")
    size = np.dtype([(n, "<" + t) for n, t in el.props]).itemsize * el.count
    if len(f.read(size)) != size:
        raise PlyTruncatedError(f"unexpected end of {el.name} data")


def read_ply(path) -> PlyDocument:
    """Read the vertex element of a PLY file.

    Missing Gaussian properties default to scale (1, 1, 1), identity rotation
    and opacity 1, so bare x/y/z clouds load too. Unknown properties are ignored.
    """
    with open(path, "rb") as f:
        fmt, units, elements = _parse_header(f)
        vertex = next((e for e in elements if e.name == "vertex"), None)
        if vertex is None:
            raise PlyHeaderError("malformed header: no vertex element")
        names = [n for n, _ in vertex.props]
        if not {"x", "y", "z"} <= set(names):
            raise PlyHeaderError("malformed header: vertex element lacks x, y, z")
        if any(isinstance(t, tuple) for _, t in vertex.props):
            raise PlyFormatError("unsupported format: list property in vertex element")
        before = elements[: elements.index(vertex)]
        dtype = np.dtype([(n, ("<" if fmt != "ascii" else "") + t) for n, t in vertex.props])
        if fmt == "binary_little_endian":
            for el in before:
                _skip_binary_element(f, el)
            need = dtype.itemsize * vertex.count
            buf = f.read(need)
            if len(buf) != need:
                raise PlyTruncatedError("unexpected end of vertex data")
            data = np.frombuffer(buf, dtype=dtype, count=vertex.count)
        else:
            data = _read_ascii(f, vertex, before, dtype)

    n = vertex.count

    def col(name, default):
        return data[name].astype(np.float64) if name in names else np.full(n, default, dtype=np.float64)

    centers = np.stack([col("x", 0), col("y", 0), col("z", 0)], axis=1)
    scales = np.stack([col(f"scale_{i}", 1.0) for i in range(3)], axis=1)
    rots = np.stack([col("rot_0", 1.0), col("rot_1", 0.0), col("rot_2", 0.0), col("rot_3", 0.0)], axis=1)
    gs = GaussianSet(centers, scales, rots, col("opacity", 1.0), units=units)
    entropy = data[ENTROPY_PROP].astype(np.float64) if ENTROPY_PROP in names else None
    return PlyDocument(gs, fmt, entropy, tuple(names))


def _read_ascii(f, vertex: _Element, before, dtype) -> np.ndarray:
    lines = f.read().decode("ascii", errors="replace").splitlines()
    lines = [ln for ln in lines if ln.strip()]
    skip = sum(e.count for e in before)
    rows = lines[skip : skip + vertex.count]
    if len(rows) < vertex.count:
        raise PlyTruncatedError("unexpected end of vertex data")
    width = len(vertex.props)
    out = np.empty(vertex.count, dtype=dtype)
    try:
        vals = np.array([ln.split()[:width] for ln in rows], dtype=np.float64)
    except ValueError as exc:
        raise PlyTruncatedError("unexpected end of vertex data") from exc
    if vals.shape != (vertex.count, width):
        raise PlyTruncatedError("unexpected end of vertex data")
    for j, (name, _) in enumerate(vertex.props):
        out[name] = vals[:, j]
    return out


def load_gaussians(path) -> GaussianSet:
    return read_ply(path).gaussians


def write_ply(gs: GaussianSet, path, format: str = "binary_little_endian", eigenentropy=None) -> None:
    """Write ``gs`` as a PLY vertex element. Output bytes depend only on the inputs."""
    if format not in ("ascii", "binary_little_endian"):
        raise ValueError(f"unsupported PLY format {format!r}")
    n = len(gs)
    props = list(GAUSSIAN_PROPS)
    cols = [gs.centers[:, 0], gs.centers[:, 1], gs.centers[:, 2],
            gs.scales[:, 0], gs.scales[:, 1], gs.scales[:, 2],
            gs.rotations[:, 0], gs.rotations[:, 1], gs.rotations[:, 2], gs.rotations[:, 3],
            gs.opacities]
    if eigenentropy is not None:
        eigenentropy = np.asarray(eigenentropy, dtype=np.float64).reshape(-1)
        if len(eigenentropy) != n:
            raise ValueError("eigenentropy channel length does not match the set")
        props.append(ENTROPY_PROP)
        cols.append(eigenentropy)
    header = ["ply", f"format {format} 1.0"]
    if gs.units:
        header.append(f"comment units {gs.units}")
    header.append(f"element vertex {n}")
    header += [f"property float {p}" for p in props]
    header.append("end_header")
    table = np.empty(n, dtype=[(p, "<f4") for p in props])
    for p, c in zip(props, cols):
        table[p] = c
    with open(path, "wb") as f:
        f.write(("\n".join(header) + "\n").encode("ascii"))
        if format == "binary_little_endian":
            f.write(table.tobytes())
        else:
            for row in table:
                f.write((" ".join(repr(float(v)) for v in row) + "\n").encode("ascii"))


def write_points(points, path, format: str = "binary_little_endian", units: str = "") -> None:
    write_ply(GaussianSet.from_points(points, units=units), path, format)

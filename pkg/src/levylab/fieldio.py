"""Binary field formats, canonical JSON and CSV emission.

All binary payloads are little-endian float64 row-major arrays behind a small
self-describing header; JSON reports are canonicalized (sorted keys, fixed
layout) so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .drifts import VelocityField
from .grid import Grid, SampledField

FIELD_MAGIC = b"LVLB"
SYMBOL_MAGIC = b"LVSY"
VELOCITY_MAGIC = b"LVVF"
FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


def _write_header(fh, magic: bytes, ints, floats):
    fh.write(magic)
    fh.write(struct.pack("<I", FORMAT_VERSION))
    for v in ints:
        fh.write(struct.pack("<I", int(v)))
    for v in floats:
        fh.write(struct.pack("<d", float(v)))


def _expect(fh, magic: bytes):
    got = fh.read(4)
    if got != magic:
        raise FormatError(f"bad magic {got!r}, expected {magic!r}")
    (version,) = struct.unpack("<I", fh.read(4))
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {version}")


def write_fields(path, fields: list, grid: Grid):
    """Field container: magic, version, n, dims, L, count, payload."""
    path = Path(path)
    with open(path, "wb") as fh:
        _write_header(fh, FIELD_MAGIC, [grid.n], [])
        for d in grid.shape:
            fh.write(struct.pack("<I", d))
        fh.write(struct.pack("<d", grid.side_length))
        fh.write(struct.pack("<I", len(fields)))
        for f in fields:
            vals = f.values if isinstance(f, SampledField) else np.asarray(f)
            fh.write(np.ascontiguousarray(vals, dtype="<f8").tobytes())


def read_fields(path):
    path = Path(path)
    with open(path, "rb") as fh:
        _expect(fh, FIELD_MAGIC)
        (n,) = struct.unpack("<I", fh.read(4))
        dims = [struct.unpack("<I", fh.read(4))[0] for _ in range(n)]
        (L,) = struct.unpack("<d", fh.read(8))
        (count,) = struct.unpack("<I", fh.read(4))
        grid = Grid(n=n, points_per_dim=dims[0], side_length=L)
        if tuple(dims) != grid.shape:
            raise FormatError("anisotropic grids are not supported")
        out = []
        sz = int(np.prod(dims))
        for _ in range(count):
            arr = np.frombuffer(fh.read(8 * sz), dtype="<f8").reshape(dims).copy()
            out.append(SampledField(grid, arr))
    return grid, out


def write_field(path, fld: SampledField):
    write_fields(path, [fld], fld.grid)


def read_field(path) -> SampledField:
    _, fields = read_fields(path)
    if len(fields) != 1:
        raise FormatError(f"expected a single field, found {len(fields)}")
    return fields[0]


def write_symbol_table(path, symbol, kernel):
    """Symbol file: header (n, points_per_dim, L, alpha, delta) + array."""
    grid = symbol.grid
    with open(path, "wb") as fh:
        _write_header(fh, SYMBOL_MAGIC, [grid.n, grid.points_per_dim],
                      [grid.side_length, kernel.alpha, kernel.delta])
        fh.write(np.ascontiguousarray(symbol.values, dtype="<f8").tobytes())


def read_symbol_table(path):
    with open(path, "rb") as fh:
        _expect(fh, SYMBOL_MAGIC)
        n, ppd = struct.unpack("<II", fh.read(8))
        L, alpha, delta = struct.unpack("<ddd", fh.read(24))
        grid = Grid(n=n, points_per_dim=ppd, side_length=L)
        vals = np.frombuffer(fh.read(8 * ppd**n), dtype="<f8").reshape(grid.shape).copy()
    return {"grid": grid, "values": vals, "alpha": alpha, "delta": delta}


def write_velocity(path, v: VelocityField):
    """Velocity container: the field header plus time-node/component extension."""
    grid = v.grid
    nt, nc = v.components.shape[0], v.components.shape[1]
    with open(path, "wb") as fh:
        _write_header(fh, VELOCITY_MAGIC, [grid.n], [])
        for d in grid.shape:
            fh.write(struct.pack("<I", d))
        fh.write(struct.pack("<d", grid.side_length))
        fh.write(struct.pack("<II", nt, nc))
        fh.write(np.ascontiguousarray(v.time_nodes, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(v.components, dtype="<f8").tobytes())


def read_velocity(path) -> VelocityField:
    with open(path, "rb") as fh:
        _expect(fh, VELOCITY_MAGIC)
        (n,) = struct.unpack("<I", fh.read(4))
        dims = [struct.unpack("<I", fh.read(4))[0] for _ in range(n)]
        (L,) = struct.unpack("<d", fh.read(8))
        nt, nc = struct.unpack("<II", fh.read(8))
        grid = Grid(n=n, points_per_dim=dims[0], side_length=L)
        times = np.frombuffer(fh.read(8 * nt), dtype="<f8").copy()
        sz = nt * nc * int(np.prod(dims))
        comps = np.frombuffer(fh.read(8 * sz), dtype="<f8").reshape(
            (nt, nc) + tuple(dims)
        ).copy()
    return VelocityField(grid, times, comps)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------


def _jsonify(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if v != v:  # NaN survives canonically as a string
            return "nan"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_jsonify(obj), sort_keys=True, indent=2) + "\n"


def write_json(path, obj):
    Path(path).write_text(canonical_json(obj))


def write_csv(path, header: list, rows: list, manifest: dict | None = None):
    """Delimited table plus a sidecar column manifest."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([row[h] if isinstance(row, dict) else row[i] for i, h in enumerate(header)])
    side = {"columns": header}
    if manifest:
        side.update(manifest)
    write_json(path.with_suffix(path.suffix + ".manifest.json"), side)

"""Binary persistence and CSV emission.

Artifact and trajectory files are little-endian throughout: a four-byte
magic, a u32 format version, then a fixed sequence of blocks, each framed as
u32 payload length, payload, u32 CRC-32 of the payload.  Loads verify every
checksum and fail naming the offending section; writes go through a
temporary file and an atomic rename."""

from __future__ import annotations

import os
import struct
import zlib

import numpy as np

from nirb.config import StudyConfig
from nirb.integrators import FieldTrajectory, TimeGrid
from nirb.mesh import TriMesh
from nirb.rectification import RectificationTensor
from nirb.reduced_basis import ReducedBasis

MAGIC = b"NIRB"
TRAJ_MAGIC = b"NTRJ"
VERSION = 1

ARTIFACT_BLOCKS = ("fine mesh", "coarse mesh", "fine grid", "coarse grid",
                   "basis", "rectification", "config")
TRAJ_BLOCKS = ("mesh", "grid", "values")


class ArtifactError(ValueError):
    """Load/save failure with a stable machine-readable slug."""

    def __init__(self, slug, message):
        super().__init__(message)
        self.slug = slug


class _Reader:
    """Sequential decoder for one block, erroring with the section name."""

    def __init__(self, buf, section):
        self.buf = buf
        self.off = 0
        self.section = section

    def take(self, n):
        if self.off + n > len(self.buf):
            raise ArtifactError(
                "corrupt-artifacts", f"the {self.section} block is too short")
        out = self.buf[self.off:self.off + n]
        self.off += n
        return out

    def u32(self, count=1):
        vals = struct.unpack("<%dI" % count, self.take(4 * count))
        return vals[0] if count == 1 else vals

    def u8(self):
        return self.take(1)[0]

    def f64(self, count=1):
        vals = struct.unpack("<%dd" % count, self.take(8 * count))
        return vals[0] if count == 1 else vals

    def array(self, dtype, count):
        item = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(item * count), dtype=dtype).copy()

    def done(self):
        if self.off != len(self.buf):
            raise ArtifactError(
                "corrupt-artifacts",
                f"trailing bytes in the {self.section} block")


def _write_file(path, magic, blocks):
    parts = [magic, struct.pack("<I", VERSION)]
    for payload in blocks:
        parts.append(struct.pack("<I", len(payload)))
        parts.append(payload)
        parts.append(struct.pack("<I", zlib.crc32(payload) & 0xFFFFFFFF))
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(b"".join(parts))
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _read_file(path, magic, names, kind):
    if not os.path.exists(path):
        raise ArtifactError("missing-artifacts",
                            f"no {kind} file at {path}; run the offline stage first")
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 8 or data[:4] != magic:
        raise ArtifactError("corrupt-artifacts", f"{path} is not a {kind} file")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise ArtifactError(
            "version-mismatch",
            f"{kind} format version {version} is unsupported (expected {VERSION})")
    off = 8
    out = []
    for name in names:
        if off + 4 > len(data):
            raise ArtifactError("corrupt-artifacts",
                                f"file truncated in the {name} block")
        (length,) = struct.unpack_from("<I", data, off)
        off += 4
        if off + length + 4 > len(data):
            raise ArtifactError("corrupt-artifacts",
                                f"file truncated in the {name} block")
        payload = data[off:off + length]
        off += length
        (crc,) = struct.unpack_from("<I", data, off)
        off += 4
        if zlib.crc32(payload) & 0xFFFFFFFF != crc:
            raise ArtifactError("corrupt-artifacts",
                                f"checksum mismatch in the {name} block")
        out.append(payload)
    if off != len(data):
        raise ArtifactError("corrupt-artifacts",
                            "trailing bytes after the last block")
    return out


def encode_mesh(mesh):
    return b"".join([
        struct.pack("<II", mesh.nx, mesh.ny),
        struct.pack("<4d", *mesh.domain),
        struct.pack("<d", mesh.h),
        struct.pack("<II", mesh.n_nodes, mesh.n_triangles),
        np.ascontiguousarray(mesh.nodes, "<f8").tobytes(),
        np.ascontiguousarray(mesh.triangles, "<u4").tobytes(),
        np.ascontiguousarray(mesh.boundary_mask, "u1").tobytes(),
    ])


def decode_mesh(buf, section):
    r = _Reader(buf, section)
    nx, ny = r.u32(2)
    domain = r.f64(4)
    h = r.f64()
    n_nodes, n_tris = r.u32(2)
    nodes = r.array("<f8", 2 * n_nodes).reshape(n_nodes, 2)
    triangles = r.array("<u4", 3 * n_tris).reshape(n_tris, 3).astype(np.int64)
    mask = r.array("u1", n_nodes).astype(bool)
    r.done()
    return TriMesh(nodes=nodes, triangles=triangles, boundary_mask=mask,
                   h=h, domain=domain, nx=nx, ny=ny)


def encode_grid(grid):
    return struct.pack("<ddI", grid.t0, grid.T, grid.steps)


def decode_grid(buf, section):
    r = _Reader(buf, section)
    t0, T = r.f64(2)
    steps = r.u32()
    r.done()
    return TimeGrid(t0=t0, T=T, steps=steps)


def encode_basis(basis):
    modes = np.ascontiguousarray(basis.modes, "<f8")
    has_eig = basis.eigenvalues is not None
    parts = [struct.pack("<IIIB", basis.N, modes.shape[1], basis.n_fields,
                         int(has_eig)),
             modes.tobytes()]
    if has_eig:
        parts.append(np.ascontiguousarray(basis.eigenvalues, "<f8").tobytes())
    return b"".join(parts)


def decode_basis(buf, mesh, section="basis"):
    r = _Reader(buf, section)
    N, width, n_fields, has_eig = *r.u32(3), r.u8()
    modes = r.array("<f8", N * width).reshape(N, width)
    eig = r.f64(N) if has_eig else None
    r.done()
    eig = np.atleast_1d(np.asarray(eig)) if eig is not None else None
    return ReducedBasis(mesh=mesh, modes=modes, eigenvalues=eig,
                        provenance={"algorithm": "loaded"}, n_fields=n_fields)


def _param_width(params):
    if not params:
        return 1
    return len(params[0]) if isinstance(params[0], tuple) else 1


def encode_tensor(tensor):
    width = _param_width(tensor.params)
    flat = np.asarray([list(p) if isinstance(p, tuple) else [p]
                       for p in tensor.params], dtype=float)
    mode_code = 0 if tensor.delta_mode == "relative" else 1
    return b"".join([
        struct.pack("<IIBd", tensor.n_times, tensor.N, mode_code,
                    tensor.delta_value),
        np.ascontiguousarray(tensor.deltas, "<f8").tobytes(),
        struct.pack("<II", len(tensor.params), width),
        np.ascontiguousarray(flat, "<f8").tobytes(),
        np.ascontiguousarray(tensor.matrices, "<f8").tobytes(),
    ])


def decode_tensor(buf, section="rectification"):
    r = _Reader(buf, section)
    n_times, N = r.u32(2)
    mode_code = r.u8()
    delta_value = r.f64()
    deltas = r.array("<f8", n_times)
    n_params, width = r.u32(2)
    flat = r.array("<f8", n_params * width).reshape(n_params, width)
    matrices = r.array("<f8", n_times * N * N).reshape(n_times, N, N)
    r.done()
    params = ([float(v) for v in flat[:, 0]] if width == 1
              else [tuple(float(v) for v in row) for row in flat])
    return RectificationTensor(matrices=matrices, deltas=deltas,
                               delta_mode="relative" if mode_code == 0 else "absolute",
                               delta_value=delta_value, params=params)


def encode_config(config):
    return config.to_text().encode("utf-8")


def decode_config(buf):
    try:
        return StudyConfig.from_text(buf.decode("utf-8"))
    except ValueError as exc:
        raise ArtifactError("corrupt-artifacts",
                            f"config block does not parse: {exc}") from exc


def save_artifacts(path, artifacts):
    _write_file(path, MAGIC, [
        encode_mesh(artifacts.fine_mesh),
        encode_mesh(artifacts.coarse_mesh),
        encode_grid(artifacts.fine_grid),
        encode_grid(artifacts.coarse_grid),
        encode_basis(artifacts.basis),
        encode_tensor(artifacts.tensor),
        encode_config(artifacts.config),
    ])


def load_artifacts(path):
    from nirb.pipeline import OfflineArtifacts

    blocks = _read_file(path, MAGIC, ARTIFACT_BLOCKS, "artifact")
    fine_mesh = decode_mesh(blocks[0], "fine mesh")
    coarse_mesh = decode_mesh(blocks[1], "coarse mesh")
    fine_grid = decode_grid(blocks[2], "fine grid")
    coarse_grid = decode_grid(blocks[3], "coarse grid")
    basis = decode_basis(blocks[4], fine_mesh)
    tensor = decode_tensor(blocks[5])
    config = decode_config(blocks[6])
    try:
        return OfflineArtifacts(config=config, fine_mesh=fine_mesh,
                                coarse_mesh=coarse_mesh, fine_grid=fine_grid,
                                coarse_grid=coarse_grid, basis=basis,
                                tensor=tensor).validate()
    except ValueError as exc:
        raise ArtifactError("corrupt-artifacts",
                            f"inconsistent artifact contents: {exc}") from exc


def save_trajectory(path, traj):
    rows, cols = traj.values.shape
    if traj.parameter is None:
        flat = []
    elif isinstance(traj.parameter, tuple):
        flat = [float(v) for v in traj.parameter]
    else:
        flat = [float(traj.parameter)]
    values_block = b"".join([
        struct.pack("<IIII", rows, cols, traj.n_fields, len(flat)),
        struct.pack("<%dd" % len(flat), *flat),
        np.ascontiguousarray(traj.values, "<f8").tobytes(),
    ])
    _write_file(path, TRAJ_MAGIC, [
        encode_mesh(traj.mesh), encode_grid(traj.grid), values_block])


def load_trajectory(path):
    blocks = _read_file(path, TRAJ_MAGIC, TRAJ_BLOCKS, "trajectory")
    mesh = decode_mesh(blocks[0], "mesh")
    grid = decode_grid(blocks[1], "grid")
    r = _Reader(blocks[2], "values")
    rows, cols, n_fields, width = r.u32(4)
    flat = list(r.f64(width)) if width > 1 else ([r.f64()] if width == 1 else [])
    values = r.array("<f8", rows * cols).reshape(rows, cols)
    r.done()
    if width == 0:
        param = None
    elif width == 1:
        param = flat[0]
    else:
        param = tuple(flat)
    return FieldTrajectory(mesh=mesh, grid=grid, values=values,
                           parameter=param, n_fields=n_fields)


def format_cell(value):
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def write_csv(path, rows):
    text = "\n".join(",".join(format_cell(c) for c in row) for row in rows)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text + "\n")
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)

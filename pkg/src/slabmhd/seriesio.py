"""Time-series CSV emission and binary checkpoint/restore.

The CSV column set is fixed; every file starts with a comment line carrying
the format version, the configuration hash and the filter state, so any
output can be traced back to its scenario.  Checkpoints are a versioned
binary container (magic, version, JSON header, raw little-endian arrays)
whose restore is bit-exact; the full scenario text rides along so a
checkpoint is self-contained.
"""

import json
import struct

import numpy as np

from . import evolution, fields, surface as surf
from .errors import IoError, VersionMismatch

COLUMNS = (
    "t",
    "E_total", "E_kinetic", "E_magnetic_plus", "E_magnetic_vacuum",
    "E_surface", "input_power", "budget_residual",
    "rt_min", "upsilon", "wall_gap", "chart_margin",
    "max_div_v", "max_div_h",
    "E_l0", "E_l1", "E_alpha_bar", "calE0", "calE1", "calE2", "calE3",
    "res_simons", "res_lap_n", "res_ds_transport",
    "res_kappa1", "res_kappa2",
)

_MAGIC = b"SLABMHDCKPT"
_VERSION = 1


def format_value(x):
    if x is None:
        return "nan"
    return format(float(x), ".17g")


def write_series(rows, path, config_hash="", filter_state=False):
    """UTF-8 CSV with '.' decimal separator and 17 significant digits."""
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"# slabmhd-series v1 config={config_hash} "
                     f"filter={'on' if filter_state else 'off'}\n")
            fh.write(",".join(COLUMNS) + "\n")
            for row in rows:
                fh.write(",".join(format_value(row.get(c)) for c in COLUMNS)
                         + "\n")
    except OSError as exc:
        raise IoError(f"cannot write series to {path}: {exc}") from exc


def read_series(path):
    """Parse a series file back into (meta, list of dict rows)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            meta_line = fh.readline().strip()
            header = fh.readline().strip().split(",")
            rows = []
            for line in fh:
                vals = line.strip().split(",")
                rows.append({k: float(v) for k, v in zip(header, vals)})
    except OSError as exc:
        raise IoError(f"cannot read series from {path}: {exc}") from exc
    return meta_line, rows


def _pack_array(fh, arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    fh.write(struct.pack("<I", arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<Q", d))
    fh.write(arr.tobytes())


def _unpack_array(buf, pos):
    (ndim,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    shape = []
    for _ in range(ndim):
        (d,) = struct.unpack_from("<Q", buf, pos)
        pos += 8
        shape.append(int(d))
    count = int(np.prod(shape)) if shape else 1
    arr = np.frombuffer(buf, dtype="<f8", count=count, offset=pos).reshape(shape)
    pos += count * 8
    return arr.copy(), pos


def checkpoint(state, path, config_text="", config_hash="", filter_state=False):
    """Write a bit-exact binary snapshot of the full dynamic state."""
    header = {
        "version": _VERSION,
        "config": config_hash,
        "filter": bool(filter_state),
        "t": float(state.t),
        "has_transport": state.transport is not None,
        "config_text": config_text,
    }
    hb = json.dumps(header, sort_keys=True).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(_MAGIC)
            fh.write(struct.pack("<I", _VERSION))
            fh.write(struct.pack("<Q", len(hb)))
            fh.write(hb)
            _pack_array(fh, state.gamma.values)
            _pack_array(fh, state.v)
            _pack_array(fh, state.h)
            _pack_array(fh, state.fluxes.v_flux)
            _pack_array(fh, state.fluxes.h_flux)
            if state.transport is not None:
                _pack_array(fh, state.transport.xi)
                _pack_array(fh, state.transport.eta)
    except OSError as exc:
        raise IoError(f"cannot write checkpoint to {path}: {exc}") from exc


def restore(path):
    """Read a checkpoint; returns (SimState, header dict)."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint from {path}: {exc}") from exc
    if buf[: len(_MAGIC)] != _MAGIC:
        raise VersionMismatch("not a slabmhd checkpoint")
    pos = len(_MAGIC)
    (version,) = struct.unpack_from("<I", buf, pos)
    pos += 4
    if version != _VERSION:
        raise VersionMismatch(f"checkpoint version {version} != {_VERSION}")
    (hlen,) = struct.unpack_from("<Q", buf, pos)
    pos += 8
    header = json.loads(buf[pos:pos + hlen].decode("utf-8"))
    pos += hlen
    gamma, pos = _unpack_array(buf, pos)
    v, pos = _unpack_array(buf, pos)
    h, pos = _unpack_array(buf, pos)
    vf, pos = _unpack_array(buf, pos)
    hf, pos = _unpack_array(buf, pos)
    transport = None
    if header.get("has_transport"):
        xi, pos = _unpack_array(buf, pos)
        eta, pos = _unpack_array(buf, pos)
        transport = evolution.TransportPair(xi, eta)
    state = evolution.SimState(
        t=header["t"], gamma=surf.HeightField(gamma), v=v, h=h,
        fluxes=fields.Fluxes(vf, hf), transport=transport)
    return state, header

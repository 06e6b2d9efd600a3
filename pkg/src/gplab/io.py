"""Flat binary bundle files, JSON sidecars and CSV exports.

Layout of a ``.gpb`` file (all little-endian)::

    magic    8 bytes  b"GPLAB\\x00B1"
    d        uint32
    has_f    uint8    1 if the untruncated field is stored
    pad      3 bytes
    lo       int64[d]
    shape    int64[d]
    h, eps, N, delta        float64 (N is NaN for an untruncated bundle)
    seed, replica           uint64
    f        float64[prod(shape)]   (only if has_f)
    f_N      float64[prod(shape)]
    t_delta  int8[prod(eps shape)]

Arrays are stored in C order. The sidecar ``<path>.json`` holds the kernel
spec and free-form metadata.
"""
import csv
import json
import math
import struct

import numpy as np

from .field import FieldBundle, Lattice, lattice_ratio
from .kernel import parse_kernel

MAGIC = b"GPLAB\x00B1"
_HEAD = struct.Struct("<8sIB3x")
_SCALARS = struct.Struct("<4d2Q")


def save_bundle(path, bundle, meta=None):
    """Write ``bundle`` to ``path`` and its metadata to ``path + ".json"``."""
    lat = bundle.lattice
    d = lat.d
    N = math.nan if bundle.N is None else float(bundle.N)
    with open(path, "wb") as fh:
        fh.write(_HEAD.pack(MAGIC, d, bundle.f is not None))
        fh.write(np.asarray(lat.lo, dtype="<i8").tobytes())
        fh.write(np.asarray(lat.shape, dtype="<i8").tobytes())
        fh.write(_SCALARS.pack(lat.spacing, bundle.eps, N, bundle.delta, bundle.seed, bundle.replica))
        if bundle.f is not None:
            fh.write(np.ascontiguousarray(bundle.f, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(bundle.f_N, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(bundle.t_delta, dtype="i1").tobytes())
    side = {"format": "gplab-bundle-1", "kernel": bundle.kernel.to_config() if bundle.kernel else None,
            "lattice": lat.to_dict(), "eps_lattice": bundle.eps_lattice.to_dict(), "N": bundle.N,
            "eps": bundle.eps, "delta": bundle.delta, "seed": bundle.seed, "replica": bundle.replica,
            "has_f": bundle.f is not None, "meta": {**bundle.meta, **(meta or {})}}
    with open(str(path) + ".json", "w") as fh:
        json.dump(side, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_bundle(path):
    """Read a bundle written by :func:`save_bundle` (the sidecar is optional)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, d, has_f = _HEAD.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a bundle file")
    pos = _HEAD.size
    lo = np.frombuffer(raw, "<i8", d, pos).tolist()
    pos += 8 * d
    shape = np.frombuffer(raw, "<i8", d, pos).tolist()
    pos += 8 * d
    h, eps, N, delta, seed, replica = _SCALARS.unpack_from(raw, pos)
    pos += _SCALARS.size
    size = int(np.prod(shape))
    f = None
    if has_f:
        f = np.frombuffer(raw, "<f8", size, pos).reshape(shape).astype(float)
        pos += 8 * size
    f_N = np.frombuffer(raw, "<f8", size, pos).reshape(shape).astype(float)
    pos += 8 * size
    lattice = Lattice(h, lo, shape)
    eps_lattice = lattice.coarsen(lattice_ratio(eps, h))
    t = np.frombuffer(raw, "i1", eps_lattice.size, pos).reshape(eps_lattice.shape).copy()
    if pos + t.size != len(raw):
        raise ValueError(f"{path}: trailing or missing payload bytes")
    kernel, meta = None, {}
    try:
        with open(str(path) + ".json") as fh:
            side = json.load(fh)
        kernel = parse_kernel(side["kernel"]) if side.get("kernel") else None
        meta = side.get("meta", {})
    except FileNotFoundError:
        pass
    return FieldBundle(lattice, eps_lattice, f, f_N, t, None if math.isnan(N) else N, eps, delta,
                       int(seed), int(replica), kernel, meta)


def export_csv(path, bundle):
    """One row per ``eps`` point: coordinates, ``f`` (if present), ``f_N`` and ``T``."""
    el = bundle.eps_lattice
    f_eps = bundle.f_eps if bundle.f is not None else None
    f_N = bundle.f_N_eps
    coords = [f"x{k}" for k in range(el.d)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(coords + (["f"] if f_eps is not None else []) + ["f_N_eps", "t_delta"])
        axes = el.axes()
        for idx in np.ndindex(*el.shape):
            row = [repr(float(axes[k][i])) for k, i in enumerate(idx)]
            if f_eps is not None:
                row.append(repr(float(f_eps[idx])))
            row += [repr(float(f_N[idx])), int(bundle.t_delta[idx])]
            w.writerow(row)

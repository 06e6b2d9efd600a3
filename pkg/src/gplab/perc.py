"""Thresholding, cluster labeling and connection events on ``eps``-lattice occupancy grids."""
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy import ndimage

from .errors import WindowTooSmall
from .field import CLOSED, NEUTRAL, OPEN, Lattice

CONTINUUM = "continuum-approx"
TRUNCATED = "truncated"
INTERPOLATION = "interpolation"

_SNAP = 1e-9


@dataclass(frozen=True)
class OccupancyGrid:
    lattice: Lattice
    open: np.ndarray
    level: float = math.nan
    tag: str = TRUNCATED
    meta: dict = dc_field(default_factory=dict)

    @property
    def d(self):
        return self.lattice.d

    @property
    def eps(self):
        return self.lattice.spacing

    def with_open(self, open_):
        return OccupancyGrid(self.lattice, open_, self.level, self.tag, self.meta)


def _fmt(x):
    """Shortest exact decimal for event descriptions (round-trips through ``parse_event``)."""
    t = repr(float(x))
    return t[:-2] if t.endswith(".0") else t


def open_set(values, t_delta, level):
    """Cells with ``value + T >= -level``; forced cells ignore ``level``."""
    out = values >= -level
    if t_delta is not None:
        out = np.where(t_delta == NEUTRAL, out, t_delta == OPEN)
    return out


def threshold(bundle, level, tag=TRUNCATED):
    """Excursion set of a bundle on its ``eps`` lattice.

    ``tag=CONTINUUM`` thresholds the untruncated field (no ternary noise);
    ``tag=TRUNCATED`` thresholds ``f_N^eps + T_delta``.
    """
    if not math.isfinite(level):
        raise ValueError("level must be finite")
    if tag == CONTINUUM:
        grid = open_set(bundle.f_eps, None, level)
    elif tag == TRUNCATED:
        grid = open_set(bundle.f_N_eps, bundle.t_delta, level)
    else:
        raise ValueError(f"unknown model tag {tag!r}")
    return OccupancyGrid(bundle.eps_lattice, grid, float(level), tag)


@dataclass(frozen=True)
class ClusterLabeling:
    labels: np.ndarray
    sizes: np.ndarray
    touches_boundary: np.ndarray

    @property
    def count(self):
        return int(self.sizes.size)


def _structure(d):
    return ndimage.generate_binary_structure(d, 1)


def label(grid):
    """Nearest-neighbour components. Ids run from 1; closed cells carry 0.

    ``sizes[i]`` and ``touches_boundary[i]`` describe component ``i + 1``.
    """
    open_ = grid.open if isinstance(grid, OccupancyGrid) else np.asarray(grid, dtype=bool)
    labels, n = ndimage.label(open_, structure=_structure(open_.ndim))
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    touches = np.zeros(n + 1, dtype=bool)
    for k in range(open_.ndim):
        for edge in (0, -1):
            touches[np.unique(np.take(labels, edge, axis=k))] = True
    return ClusterLabeling(labels, sizes, touches[1:])


@dataclass(frozen=True)
class AdmissibleEvent:
    """``S_1 <-> S_2^c`` inside ``D``: full space when ``M is None``, a slab otherwise."""

    r: float
    R: float
    M: Optional[float] = None

    def __post_init__(self):
        if not 0 <= self.r <= self.R:
            raise ValueError(f"need 0 <= r <= R, got r={self.r}, R={self.R}")
        if self.M is not None and self.M < 0:
            raise ValueError("slab thickness M must be non-negative")

    @property
    def shape(self):
        return "full" if self.M is None else "slab"

    def describe(self):
        if self.M is None:
            return f"full:{_fmt(self.r)},{_fmt(self.R)}"
        return f"slab:{_fmt(self.r)},{_fmt(self.R)},{_fmt(self.M)}"

    def extent(self):
        """Half-width of the region the event looks at."""
        return self.R if self.M is None else max(self.R, self.M)

    def masks(self, lattice):
        d = lattice.d
        eps = lattice.spacing
        axes = lattice.axes()
        plane = d if self.M is None else min(2, d)
        for k in range(plane):
            if axes[k][0] >= -self.R - _SNAP or axes[k][-1] <= self.R + _SNAP:
                raise WindowTooSmall(f"window must reach beyond S_2 (|x| > {self.R}) on axis {k}")
        for k in range(plane, d):
            if axes[k][0] > -self.M + _SNAP or axes[k][-1] < self.M - _SNAP:
                raise WindowTooSmall(f"window must cover the slab thickness [-{self.M}, {self.M}] on axis {k}")
        grids = np.meshgrid(*[np.abs(a) for a in axes], indexing="ij", sparse=True)
        planar = np.zeros(lattice.shape)
        for k in range(plane):
            planar = np.maximum(planar, grids[k])
        domain = np.ones(lattice.shape, dtype=bool)
        for k in range(plane, d):
            domain &= grids[k] <= self.M + _SNAP
        source = domain & (planar <= self.r + eps / 2 + _SNAP)
        target = domain & (planar > self.R + _SNAP)
        return domain, source, target


@dataclass(frozen=True)
class CrossingEvent:
    """Open crossing of the centred box with side ``sides[k]`` along ``axis`` (planar duality checks)."""

    sides: tuple
    axis: int = 0

    def __post_init__(self):
        object.__setattr__(self, "sides", tuple(float(s) for s in self.sides))
        if any(s <= 0 for s in self.sides):
            raise ValueError("box sides must be positive")

    @classmethod
    def square(cls, side, d=2):
        return cls((side,) * d)

    def describe(self):
        return "cross:" + ",".join(_fmt(s) for s in self.sides)

    def extent(self):
        return max(self.sides) / 2

    def masks(self, lattice):
        if lattice.d != len(self.sides):
            raise ValueError("crossing box dimension does not match the lattice")
        idx = []
        for k, side in enumerate(self.sides):
            ax = lattice.axis(k)
            inside = np.nonzero(np.abs(ax) <= side / 2 + _SNAP)[0]
            if ax[0] > -side / 2 + lattice.spacing - _SNAP or ax[-1] < side / 2 - lattice.spacing + _SNAP:
                raise WindowTooSmall(f"window does not cover the crossing box on axis {k}")
            idx.append(inside)
        domain = np.zeros(lattice.shape, dtype=bool)
        domain[np.ix_(*idx)] = True
        source = np.zeros_like(domain)
        target = np.zeros_like(domain)
        lo, hi = idx[self.axis][0], idx[self.axis][-1]
        sl = [np.asarray(i) for i in idx]
        sl[self.axis] = np.array([lo])
        source[np.ix_(*sl)] = True
        sl[self.axis] = np.array([hi])
        target[np.ix_(*sl)] = True
        return domain, source, target


def parse_event(text):
    """``"full:r,R"``, ``"slab:r,R,M"`` or ``"cross:L[,W,...]"``."""
    if not isinstance(text, str):
        return text
    kind, _, rest = text.partition(":")
    try:
        nums = [float(v) for v in rest.split(",") if v.strip()]
    except ValueError:
        raise ValueError(f"event parameters must be numbers: {text!r}")
    kind = kind.strip().lower()
    if kind == "full" and len(nums) == 2:
        return AdmissibleEvent(nums[0], nums[1])
    if kind == "slab" and len(nums) == 3:
        return AdmissibleEvent(nums[0], nums[1], nums[2])
    if kind == "cross" and len(nums) >= 1:
        if len(nums) == 1:
            nums = nums * 2
        return CrossingEvent(tuple(nums))
    raise ValueError(f"cannot parse event {text!r}; expected full:r,R | slab:r,R,M | cross:L[,W]")


def _joined(open_, domain, source, target):
    labels, n = ndimage.label(open_ & domain, structure=_structure(open_.ndim))
    if n == 0:
        return False
    hit = np.zeros(n + 1, dtype=bool)
    hit[labels[source]] = True
    hit[0] = False
    return bool(np.any(hit[labels[target]]))


def occurs(grid, labeling=None, event=None):
    """Whether an open path inside ``D`` joins a cell meeting ``S_1`` to a cell outside ``S_2``.

    ``labeling`` is reused when the event domain is the whole window.
    """
    if event is None:
        raise ValueError("an event is required")
    domain, source, target = event.masks(grid.lattice)
    if labeling is not None and domain.all():
        ids = np.unique(labeling.labels[source & grid.open])
        ids = ids[ids > 0]
        return bool(np.isin(labeling.labels[target], ids).any()) if ids.size else False
    return _joined(grid.open, domain, source, target)


def box_mask(lattice, center, L):
    """Cells whose centre lies in ``center + [-L, L]^d``."""
    grids = np.meshgrid(*[np.abs(a - c) for a, c in zip(lattice.axes(), center)], indexing="ij", sparse=True)
    mask = np.ones(lattice.shape, dtype=bool)
    for g in grids:
        mask = mask & (g <= L + _SNAP)
    return mask


def coarse_pivotal(grid, event, y, L):
    """``{I u B_L(y) in A} and {I minus B_L(y) not in A}``."""
    ball = box_mask(grid.lattice, y, L)
    domain, source, target = event.masks(grid.lattice)
    if not _joined(grid.open | ball, domain, source, target):
        return False
    return not _joined(grid.open & ~ball, domain, source, target)


def closed_pivotal(grid, event, y, L):
    """``{I u B_L(y) in A} and {I not in A}``."""
    ball = box_mask(grid.lattice, y, L)
    domain, source, target = event.masks(grid.lattice)
    if not _joined(grid.open | ball, domain, source, target):
        return False
    return not _joined(grid.open, domain, source, target)


def arm_radius(grid, r=1.0):
    """Largest ``|x|_inf`` reached by the open clusters meeting ``[-r, r]^d``.

    ``-inf`` when no open cell meets the source box; coupled one-arm events
    for every ``R`` follow as ``arm_radius > R``.
    """
    lab = ndimage.label(grid.open, structure=_structure(grid.d))[0]
    axes = grid.lattice.axes()
    grids = np.meshgrid(*[np.abs(a) for a in axes], indexing="ij", sparse=True)
    sup = np.zeros(grid.lattice.shape)
    for g in grids:
        sup = np.maximum(sup, g)
    source = sup <= r + grid.eps / 2 + _SNAP
    ids = np.unique(lab[source])
    ids = ids[ids > 0]
    if ids.size == 0:
        return -math.inf
    return float(sup[np.isin(lab, ids)].max())


def event_threshold(values, t_delta, lattice, event):
    """Smallest level ``l`` with ``{values + T >= -l}`` in the event.

    Exact: found by bisection over the sorted candidate levels ``-values``
    inside the event domain. ``-inf`` if forced-open cells alone realise the
    event, ``+inf`` if it fails even with every neutral cell open.
    """
    domain, source, target = event.masks(lattice)
    forced_open = np.zeros(lattice.shape, dtype=bool) if t_delta is None else (t_delta == OPEN)
    neutral = np.ones(lattice.shape, dtype=bool) if t_delta is None else (t_delta == NEUTRAL)
    if _joined(forced_open, domain, source, target):
        return -math.inf
    if not _joined(forced_open | neutral, domain, source, target):
        return math.inf
    cand = np.unique(-values[domain & neutral])
    lo, hi = 0, cand.size - 1  # invariant: occurs at cand[hi], fails below cand[lo]
    while lo < hi:
        mid = (lo + hi) // 2
        if _joined(forced_open | (neutral & (values >= -cand[mid])), domain, source, target):
            hi = mid
        else:
            lo = mid + 1
    return float(cand[lo])


def write_pbm(path, grid):
    """Plain PBM (P1), open = 1. Grids with ``d > 2`` are flattened to rows of the last axis."""
    arr = np.asarray(grid.open, dtype=np.uint8)
    arr = arr.reshape(1, -1) if arr.ndim == 1 else arr.reshape(-1, arr.shape[-1])
    lines = ["P1", f"{arr.shape[1]} {arr.shape[0]}"]
    lines += [" ".join(str(int(v)) for v in row) for row in arr]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_pbm(path, shape=None):
    with open(path) as fh:
        tokens = [t for line in fh for t in line.split("#")[0].split()]
    if tokens[0] != "P1":
        raise ValueError("only plain PBM (P1) is supported")
    w, h = int(tokens[1]), int(tokens[2])
    bits = "".join(tokens[3:])
    arr = np.array([c == "1" for c in bits], dtype=bool)
    if arr.size != w * h:
        raise ValueError("PBM payload size does not match its header")
    arr = arr.reshape(h, w)
    return arr.reshape(shape) if shape is not None else arr


def grid_metadata(grid):
    return {"level": grid.level, "eps": grid.eps, "tag": grid.tag, "lattice": grid.lattice.to_dict(),
            **grid.meta}


def grid_from_metadata(open_, meta):
    lat = meta["lattice"]
    lattice = Lattice(lat["spacing"], lat["lo"], lat["shape"])
    extra = {k: v for k, v in meta.items() if k not in ("level", "eps", "tag", "lattice")}
    return OccupancyGrid(lattice, np.asarray(open_, dtype=bool).reshape(lattice.shape),
                         meta.get("level", math.nan), meta.get("tag", TRUNCATED), extra)

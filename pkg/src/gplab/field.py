"""White-noise sampling and the coupled field bundle ``(f, f_N, f_N^eps, T_delta)``.

Continuum white noise is replaced by i.i.d. standard normals on ``hZ^d``
weighted by ``h^(d/2)``, so that ``f(x) = h^(d/2) sum_y q(x - y) xi_y``. The
noise is sampled on the evaluation window padded by the kernel radius, which
makes the law on the window exact for the discretized model (no wrap-around).
"""
import math
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy import signal

from . import rng
from .errors import InsufficientPadding, WindowTooLarge, WindowTooSmall
from .kernel import CutoffSpec, numeric_radius, truncated_radial

MAX_CELLS = 2 ** 26

CLOSED = -1
NEUTRAL = 0
OPEN = 1

_SNAP = 1e-9


@dataclass(frozen=True)
class Lattice:
    """Finite box of ``spacing * Z^d``: point ``i`` sits at ``spacing * (lo + i)``."""

    spacing: float
    lo: tuple
    shape: tuple

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(int(v) for v in self.lo))
        object.__setattr__(self, "shape", tuple(int(v) for v in self.shape))
        if len(self.lo) != len(self.shape):
            raise ValueError("lo and shape must have the same length")

    @property
    def d(self):
        return len(self.shape)

    @property
    def size(self):
        return int(np.prod(self.shape))

    @classmethod
    def covering(cls, spacing, lower, upper):
        """All lattice points inside the closed box ``[lower, upper]``."""
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        lo = np.ceil(lower / spacing - _SNAP).astype(int)
        hi = np.floor(upper / spacing + _SNAP).astype(int)
        if np.any(hi < lo):
            raise ValueError("empty window")
        return cls(spacing, tuple(lo), tuple(hi - lo + 1))

    @classmethod
    def centered(cls, spacing, half_width, d):
        return cls.covering(spacing, [-half_width] * d, [half_width] * d)

    def axis(self, k):
        return self.spacing * (self.lo[k] + np.arange(self.shape[k]))

    def axes(self):
        return [self.axis(k) for k in range(self.d)]

    def points(self):
        """Coordinates, shape ``shape + (d,)``."""
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def padded(self, m):
        return Lattice(self.spacing, tuple(v - m for v in self.lo), tuple(v + 2 * m for v in self.shape))

    def coarsen(self, ratio):
        """Sub-lattice of points whose index is a multiple of ``ratio``."""
        lo = [-((-v) // ratio) for v in self.lo]
        hi = [(v + n - 1) // ratio for v, n in zip(self.lo, self.shape)]
        if any(h < l for l, h in zip(lo, hi)):
            raise WindowTooSmall("window holds no coarse lattice point")
        return Lattice(self.spacing * ratio, lo, [h - l + 1 for l, h in zip(lo, hi)])

    def index_of(self, absolute):
        """Array indices (into this lattice) of absolute lattice indices."""
        return tuple(np.asarray(a) - l for a, l in zip(absolute, self.lo))

    def to_dict(self):
        return {"spacing": self.spacing, "lo": list(self.lo), "shape": list(self.shape)}


def lattice_ratio(coarse, fine):
    """Integer ``coarse / fine`` or ``ValueError`` if the spacings are not commensurate."""
    ratio = coarse / fine
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, ratio):
        raise ValueError(f"spacing {coarse} is not an integer multiple of {fine}")
    return k


def default_spacing(eps, h_max=0.25):
    """Largest ``h <= h_max`` dividing ``eps``."""
    return eps / math.ceil(eps / h_max - _SNAP)


@dataclass(frozen=True)
class WhiteNoiseGrid:
    lattice: Lattice
    values: np.ndarray
    seed: int
    replica: int

    @property
    def h(self):
        return self.lattice.spacing


def sample_noise(lattice, seed, replica, max_cells=None):
    """I.i.d. N(0,1) per cell of ``lattice``, reproducible from ``(seed, replica)``."""
    max_cells = MAX_CELLS if max_cells is None else max_cells
    if lattice.size == 0:
        raise ValueError("empty window")
    if lattice.size > max_cells:
        raise WindowTooLarge(f"{lattice.size} noise cells exceed the budget of {max_cells}")
    values = rng.stream(seed, replica, rng.NOISE).standard_normal(lattice.shape)
    return WhiteNoiseGrid(lattice, values, int(seed), int(replica))


def stencil(radial, h, d, m):
    """Kernel samples ``radial(h |k|)`` for ``k`` in ``[-m, m]^d``."""
    k = h * np.arange(-m, m + 1)
    grids = np.meshgrid(*([k] * d), indexing="ij")
    r = np.sqrt(sum(g * g for g in grids))
    return radial(r)


def convolve(noise_values, kernel, h, method="fft"):
    """``h^(d/2) sum_y kernel(x - y) xi_y`` on the points whose stencil fits inside the noise.

    The kernel is symmetric, so convolution and correlation coincide. The
    output loses ``m`` cells on each side, where ``kernel`` has shape
    ``(2m+1,)^d``.
    """
    noise_values = np.asarray(noise_values, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    d = noise_values.ndim
    if kernel.ndim != d or any(s % 2 == 0 for s in kernel.shape):
        raise ValueError("kernel must be a centred stencil of odd extent in every axis")
    if any(k > n for k, n in zip(kernel.shape, noise_values.shape)):
        raise InsufficientPadding("kernel support exceeds the padded noise window")
    scale = h ** (d / 2)
    if method == "fft":
        return scale * signal.fftconvolve(noise_values, kernel, mode="valid")
    if method != "direct":
        raise ValueError(f"unknown method {method!r}")
    out_shape = tuple(n - k + 1 for n, k in zip(noise_values.shape, kernel.shape))
    out = np.zeros(out_shape)
    flipped = kernel[(slice(None, None, -1),) * d]
    for offset in np.ndindex(*kernel.shape):
        w = flipped[offset]
        if w == 0.0:
            continue
        out += w * noise_values[tuple(slice(o, o + s) for o, s in zip(offset, out_shape))]
    return scale * out


@dataclass(frozen=True)
class FieldBundle:
    """One noise realization and the fields derived from it on a common window.

    ``f`` and ``f_N`` live on the ``h`` lattice; ``f_N_eps`` and ``t_delta``
    live on the ``eps`` sub-lattice. ``t_delta`` holds ``CLOSED``, ``NEUTRAL``
    or ``OPEN`` and is never turned into a float infinity. ``f`` is ``None``
    when the bundle was built without the untruncated field.
    """

    lattice: Lattice
    eps_lattice: Lattice
    f: Optional[np.ndarray]
    f_N: np.ndarray
    t_delta: np.ndarray
    N: Optional[float]
    eps: float
    delta: float
    seed: int
    replica: int
    kernel: object = None
    meta: dict = dc_field(default_factory=dict)

    @property
    def h(self):
        return self.lattice.spacing

    @property
    def d(self):
        return self.lattice.d

    @property
    def ratio(self):
        return lattice_ratio(self.eps, self.h)

    def on_eps(self, values):
        """Restrict an ``h``-lattice array to the ``eps`` sub-lattice."""
        r = self.ratio
        start = [r * l - lo for l, lo in zip(self.eps_lattice.lo, self.lattice.lo)]
        return values[tuple(slice(s, s + r * (n - 1) + 1, r) for s, n in zip(start, self.eps_lattice.shape))]

    @property
    def f_N_eps(self):
        return self.on_eps(self.f_N)

    @property
    def f_eps(self):
        if self.f is None:
            raise ValueError("bundle was built without the untruncated field")
        return self.on_eps(self.f)

    def piecewise_constant(self, values_eps, lattice=None):
        """Extend ``eps``-lattice values to every point of ``lattice`` (default: the ``h`` lattice).

        A point ``y`` takes the value at ``x`` with ``y`` in ``x + [-eps/2, eps/2)^d``.
        """
        lattice = self.lattice if lattice is None else lattice
        idx = []
        for k in range(lattice.d):
            y = lattice.axis(k)
            j = np.floor(y / self.eps + 0.5 + _SNAP).astype(int) - self.eps_lattice.lo[k]
            if j.min() < 0 or j.max() >= self.eps_lattice.shape[k]:
                raise WindowTooSmall("representative eps-point falls outside the window")
            idx.append(j)
        return values_eps[np.ix_(*idx)]


def _t_tag(N):
    return 0 if N is None else int(round(N * 1024))


def sample_t_delta(shape, delta, seed, replica, N=None):
    """Ternary noise: ``OPEN``/``CLOSED`` with probability ``delta/2`` each, else ``NEUTRAL``."""
    if not 0 <= delta <= 1:
        raise ValueError("delta must lie in [0, 1]")
    u = rng.stream(seed, replica, rng.TDELTA, _t_tag(N)).random(shape)
    t = np.zeros(shape, dtype=np.int8)
    t[u < delta / 2] = CLOSED
    t[u >= 1 - delta / 2] = OPEN
    return t


def padding_cells(spec, N, h, with_f=True, f_radius=None):
    radius = N / 2 if N is not None else 0.0
    if with_f or N is None:
        radius = max(radius, numeric_radius(spec) if f_radius is None else f_radius)
    return int(math.ceil(radius / h - _SNAP))


def bundle_from_noise(noise, spec, lattice, N, eps, delta, cut=None, with_f=True, f_radius=None,
                      method="fft"):
    """Derive a bundle on ``lattice`` from an existing noise grid (shared-noise couplings)."""
    h = lattice.spacing
    if abs(noise.h - h) > _SNAP * h:
        raise ValueError("noise and evaluation lattices must share the spacing")
    ratio = lattice_ratio(eps, h)
    if cut is None and N is not None:
        cut = CutoffSpec(N)
    d = lattice.d
    off = [l - nl for l, nl in zip(lattice.lo, noise.lattice.lo)]

    def field_with(radial, m):
        lo = [o - m for o in off]
        hi = [o + n + m for o, n in zip(off, lattice.shape)]
        if min(lo) < 0 or any(b > s for b, s in zip(hi, noise.lattice.shape)):
            raise InsufficientPadding(f"noise window lacks the {m}-cell padding this kernel needs")
        sub = noise.values[tuple(slice(a, b) for a, b in zip(lo, hi))]
        return convolve(sub, stencil(radial, h, d, m), h, method=method)

    f = None
    r_f = numeric_radius(spec) if f_radius is None else f_radius
    if with_f:
        f = field_with(spec.radial, int(math.ceil(r_f / h - _SNAP)))
    if N is None:
        f_N = f if f is not None else field_with(spec.radial, int(math.ceil(r_f / h - _SNAP)))
    else:
        f_N = field_with(truncated_radial(spec, cut), int(math.ceil(N / 2 / h - _SNAP)))
    eps_lattice = lattice.coarsen(ratio)
    t = sample_t_delta(eps_lattice.shape, delta, noise.seed, noise.replica, N)
    return FieldBundle(lattice, eps_lattice, f, f_N, t, N, float(eps), float(delta),
                       noise.seed, noise.replica, spec)


def make_bundle(spec, cut, N, eps, delta, window, h=None, seed=0, replica=0, with_f=True,
                f_radius=None, max_cells=None, method="fft"):
    """Sample noise and build the coupled bundle on ``window``.

    ``window`` is a :class:`Lattice` (its spacing is used as ``h``) or a pair
    ``(lower, upper)`` of box corners. ``N=None`` skips truncation.
    """
    if isinstance(window, Lattice):
        lattice = window
        h = lattice.spacing
    else:
        h = default_spacing(eps) if h is None else h
        lower, upper = window
        lattice = Lattice.covering(h, lower, upper)
    lattice_ratio(eps, h)
    if N is not None and cut is None:
        cut = CutoffSpec(N)
    m = padding_cells(spec, N, h, with_f, f_radius)
    noise = sample_noise(lattice.padded(m), seed, replica, max_cells)
    return bundle_from_noise(noise, spec, lattice, N, eps, delta, cut, with_f, f_radius, method)


def local_gap(bundle, radius=1.0):
    """``(sup |f - f_N|, sup |f_N - f_N^eps|)`` over the grid points of ``B_radius``."""
    lat = bundle.lattice
    sel = []
    for k in range(lat.d):
        ax = lat.axis(k)
        inside = np.nonzero(np.abs(ax) <= radius + _SNAP)[0]
        if inside.size == 0 or ax[0] > -radius + _SNAP or ax[-1] < radius - _SNAP:
            raise WindowTooSmall("evaluation window does not cover B_1")
        sel.append(inside)
    region = np.ix_(*sel)
    gap1 = 0.0
    if bundle.f is not None:
        gap1 = float(np.max(np.abs(bundle.f[region] - bundle.f_N[region])))
    ball = Lattice(lat.spacing, [l + s[0] for l, s in zip(lat.lo, sel)], [s.size for s in sel])
    coarse = bundle.piecewise_constant(bundle.f_N_eps, ball)
    gap2 = float(np.max(np.abs(bundle.f_N[region] - coarse)))
    return gap1, gap2

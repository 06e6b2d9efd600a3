"""Interpolation between the models at truncation ranges 2N and N.

Space is paved by the boxes ``B'_N(x) = x + [-N, N)^d`` centred on ``2N Z^d``.
Centres are enumerated by increasing ``|x|_inf`` and lexicographically within a
shell. At half-step ``n + 1/2`` the model on box ``n`` is switched and the level
there is raised by ``s/2``; at step ``n + 1`` every box is raised by
``s * tau((x_m - x_n) / 2N)``. The sprinkling field is constant on each box,
so it is stored per box.
"""
import math
from dataclasses import dataclass, field as dc_field, replace
from typing import Optional

import numpy as np
from scipy import integrate

from . import rng
from .errors import InvalidSchedule, WindowTooSmall
from .field import CLOSED, NEUTRAL, OPEN, Lattice, bundle_from_noise, lattice_ratio, sample_noise
from .kernel import schedule as poly_schedule
from .perc import INTERPOLATION, OccupancyGrid, _joined, box_mask, open_set

UP = "up"
DOWN = "down"
_SNAP = 1e-9


# -- the integrable sprinkle --------------------------------------------------

def _shell_count(d, k):
    k = np.asarray(k, dtype=float)
    return np.where(k == 0, 1.0, (2 * k + 1) ** d - (2 * k - 1) ** d)


def tau_normalization(d, shells=200_000):
    """Return ``(c_d, lower, upper)`` with ``c_d * sum_x (1 + |x|_inf^(d+1))^-1 = 1/2``.

    The series is summed exactly over the first ``shells`` shells; the rest is
    bracketed by integrals of the (eventually decreasing) shell term, giving
    ``lower <= sum <= upper``.
    """
    if d < 1:
        raise ValueError("d must be positive")
    k = np.arange(shells + 1, dtype=float)
    partial = float(np.sum(_shell_count(d, k) / (1.0 + k ** (d + 1))))
    term = lambda t: ((2 * t + 1) ** d - (2 * t - 1) ** d) / (1.0 + t ** (d + 1))
    K = float(shells)
    upper_tail = integrate.quad(term, K, np.inf, epsabs=1e-14, epsrel=1e-12)[0]
    lower_tail = integrate.quad(term, K + 1, np.inf, epsabs=1e-14, epsrel=1e-12)[0]
    lower, upper = partial + lower_tail, partial + upper_tail
    c_d = 1.0 / (lower + upper)
    return c_d, lower, upper


_C_CACHE = {}


def tau_constant(d):
    if d not in _C_CACHE:
        _C_CACHE[d] = tau_normalization(d)[0]
    return _C_CACHE[d]


def tau_base(d):
    """``(c_d, tau)`` where ``tau(y) = c_d / (1 + |x|_inf^(d+1))`` for ``y`` in ``x + [-1/2, 1/2)^d``."""
    if d < 2:
        raise ValueError("the sprinkling function is defined for d >= 2")
    c = tau_constant(d)

    def tau(y):
        y = np.asarray(y, dtype=float)
        x = np.floor(y + 0.5 + _SNAP)
        return c / (1.0 + np.max(np.abs(x), axis=-1) ** (d + 1))

    return c, tau


def _tau_int(c, d, offsets):
    """``tau`` at integer offsets of shape ``(..., d)``."""
    return c / (1.0 + np.max(np.abs(offsets), axis=-1).astype(float) ** (d + 1))


# -- centre enumeration -------------------------------------------------------

def shell(d, k):
    """Integer points with ``|j|_inf = k``, in lexicographic order."""
    if k == 0:
        return np.zeros((1, d), dtype=np.int64)
    pts = np.indices((2 * k + 1,) * d).reshape(d, -1).T - k
    pts = pts[np.max(np.abs(pts), axis=1) == k]
    return pts  # np.indices already yields lexicographic order


def centre_indices(d, count):
    """First ``count`` points of the enumeration of ``Z^d`` (centres are ``2N`` times these)."""
    out, total, k = [], 0, 0
    while total < count:
        s = shell(d, k)
        out.append(s)
        total += len(s)
        k += 1
    return np.concatenate(out)[:count] if out else np.zeros((0, d), dtype=np.int64)


def enumeration_index(j):
    """Position of the integer point ``j`` in the enumeration."""
    j = np.asarray(j, dtype=np.int64)
    d = j.size
    k = int(np.max(np.abs(j)))
    before = 0 if k == 0 else (2 * k - 1) ** d
    s = shell(d, k)
    pos = np.nonzero(np.all(s == j, axis=1))[0][0]
    return before + int(pos)


# -- parameters ---------------------------------------------------------------

def dyadic_floor(x):
    """Largest power of two not exceeding ``x``."""
    if not x > 0:
        raise ValueError("mesh must be positive")
    return 2.0 ** math.floor(math.log2(x) + _SNAP)


@dataclass(frozen=True)
class InterpolationSetup:
    """Everything fixed across replicas: kernel, ranges, meshes, noise levels, level, window.

    The window is the union of boxes ``B'_N(2N j)`` with ``|j|_inf <= boxes``.
    ``direction=DOWN`` interpolates from ``E_N(level - s)`` to ``E_2N(level)``.
    """

    kernel: object
    N: float
    s: float
    eps_N: float
    eps_2N: float
    delta_N: float = 0.0
    delta_2N: float = 0.0
    level: float = 0.0
    boxes: int = 1
    direction: str = UP
    h: Optional[float] = None

    def __post_init__(self):
        if self.direction not in (UP, DOWN):
            raise ValueError("direction must be 'up' or 'down'")
        if self.kernel.d < 2:
            raise ValueError("interpolation needs d >= 2")
        lattice_ratio(self.eps_N, self.eps_2N)
        lattice_ratio(self.eps_2N, self.spacing)
        if self.N / self.eps_N != round(self.N / self.eps_N):
            raise ValueError("N must be a multiple of eps_N so boxes are unions of cells")

    @property
    def spacing(self):
        return self.eps_2N if self.h is None else self.h

    @property
    def d(self):
        return self.kernel.d

    @property
    def half_width(self):
        return (2 * self.boxes + 1) * self.N

    @classmethod
    def from_schedule(cls, kernel, N, eta, beta=None, level=0.0, boxes=1, direction=UP):
        """Scheduled parameters at ``N`` and ``2N``, with meshes rounded down to powers of two.

        ``beta`` defaults to the kernel's exponent; Bargmann-Fock needs an
        explicit finite value (any ``beta > d`` is admissible for it).
        """
        beta = kernel.beta if beta is None else beta
        if math.isinf(beta):
            raise InvalidSchedule("pass a finite effective beta for super-polynomial kernels")
        a = poly_schedule(N, eta, beta, kernel.d)
        b = poly_schedule(2 * N, eta, beta, kernel.d)
        return cls(kernel, N, a.s, dyadic_floor(a.eps), dyadic_floor(b.eps), a.delta, b.delta,
                   level, boxes, direction)

    def window_centres(self):
        """Integer indices of window boxes, in enumeration order."""
        return centre_indices(self.d, (2 * self.boxes + 1) ** self.d)

    def to_dict(self):
        return {"kernel": self.kernel.to_config(), "N": self.N, "s": self.s, "eps_N": self.eps_N,
                "eps_2N": self.eps_2N, "delta_N": self.delta_N, "delta_2N": self.delta_2N,
                "level": self.level, "boxes": self.boxes, "direction": self.direction,
                "h": self.spacing}


# -- sprinkling field ---------------------------------------------------------

@dataclass(frozen=True)
class SprinklingField:
    """Per-box values of ``tau_k`` on the window; ``k`` is a multiple of 1/2."""

    d: int
    N: float
    s: float
    k: float
    centres: np.ndarray
    values: np.ndarray

    @classmethod
    def zero(cls, setup):
        c = setup.window_centres()
        return cls(setup.d, setup.N, setup.s, 0.0, c, np.zeros(len(c)))

    def box_of(self, points):
        """Integer box index ``j`` with ``point in B'_N(2N j)``."""
        return np.floor((np.asarray(points) + self.N) / (2 * self.N) + _SNAP).astype(np.int64)

    def on_lattice(self, lattice):
        """Expand per-box values to every lattice cell."""
        lookup = {tuple(j): v for j, v in zip(self.centres.tolist(), self.values)}
        axes_idx = [self.box_of(a) for a in lattice.axes()]
        k = self.centres.max() if len(self.centres) else 0
        table = np.full((2 * k + 1,) * self.d, np.nan)
        for j, v in lookup.items():
            table[tuple(np.asarray(j) + k)] = v
        idx = [np.clip(a + k, 0, 2 * k) for a in axes_idx]
        out = table[np.ix_(*idx)]
        if np.isnan(out).any():
            raise WindowTooSmall("lattice extends beyond the sprinkling window")
        return out


def tau_step(S):
    """Advance ``S`` by one half step (local ``s/2`` bump, or global sprinkle)."""
    c = tau_constant(S.d)
    n = int(math.floor(S.k))
    x_n = centre_indices(S.d, n + 1)[n]
    values = S.values.copy()
    if S.k == n:
        values[np.all(S.centres == x_n, axis=1)] += 0.5 * S.s
    else:
        values += S.s * _tau_int(c, S.d, S.centres - x_n)
    return replace(S, k=S.k + 0.5, values=values)


def tau_at(setup, k):
    """``tau_k`` computed in closed form (no recursion); ``k=inf`` gives the constant ``s``."""
    S = SprinklingField.zero(setup)
    if math.isinf(k):
        return replace(S, k=k, values=np.full(len(S.centres), setup.s))
    n_half = int(math.ceil(k))
    n_full = int(math.floor(k))
    c = tau_constant(setup.d)
    order = np.arange(len(S.centres))
    values = 0.5 * setup.s * (order < n_half)
    if n_full:
        done = centre_indices(setup.d, n_full)
        for start in range(0, n_full, 4096):
            chunk = done[start:start + 4096]
            values = values + setup.s * _tau_int(c, setup.d, S.centres[:, None, :] - chunk[None, :, :]).sum(axis=1)
    return replace(S, k=float(k), values=values)


def sweep_to_limit(S, tol=1e-3, max_shells=2000):
    """Apply full sweeps shell by shell until ``max |tau_k - s| < tol * s`` on the window.

    Returns ``(field, converged)``. Each shell is processed at once, so ``k``
    jumps to the end of a shell.
    """
    c = tau_constant(S.d)
    values = S.values.copy()
    k = S.k
    n_done = int(math.floor(k))
    count = 0
    shell_k = 0
    while True:
        s_pts = shell(S.d, shell_k)
        lo, hi = count, count + len(s_pts)
        count = hi
        if hi > n_done:
            # window centres come first in the enumeration, so position == index
            bump_lo, bump_hi = int(math.ceil(k)), min(hi, len(S.centres))
            if bump_hi > bump_lo:
                values[bump_lo:bump_hi] += 0.5 * S.s
            fresh = s_pts[max(0, n_done - lo):]
            for start in range(0, len(fresh), 4096):
                chunk = fresh[start:start + 4096]
                values += S.s * _tau_int(c, S.d, S.centres[:, None, :] - chunk[None, :, :]).sum(axis=1)
            k = float(hi)
            n_done = hi
            if np.max(np.abs(values - S.s)) < tol * S.s:
                return replace(S, k=k, values=values), True
        shell_k += 1
        if shell_k > max_shells:
            return replace(S, k=k, values=values), False


# -- coupled samples and hybrid configurations ---------------------------------

@dataclass(frozen=True)
class BundlePair:
    """Bundles at ranges ``N`` and ``2N`` built from one white-noise sample."""

    setup: InterpolationSetup
    coarse: object  # range N, mesh eps_N
    fine: object  # range 2N, mesh eps_2N
    lattice: Lattice  # the eps_2N lattice of the window

    def model(self, which):
        """``(values, T)`` of the N (``"N"``) or 2N (``"2N"``) model on the fine window lattice."""
        b = self.coarse if which == "N" else self.fine
        vals = b.piecewise_constant(b.f_N_eps, self.lattice)
        t = b.piecewise_constant(b.t_delta, self.lattice)
        return vals, t


def window_lattice(setup, centre=None, boxes=None):
    """``eps_2N`` lattice of ``[-w, w)^d`` (shifted to ``centre`` if given)."""
    w = setup.half_width if boxes is None else (2 * boxes + 1) * setup.N
    c = np.zeros(setup.d) if centre is None else np.asarray(centre, dtype=float)
    return Lattice.covering(setup.eps_2N, c - w, c + w - setup.eps_2N)


def sample_pair(setup, seed, replica, lattice=None, max_cells=None):
    lattice = window_lattice(setup) if lattice is None else lattice
    h = setup.spacing
    axes = lattice.axes()
    lower = np.array([a[0] for a in axes]) - setup.eps_N
    upper = np.array([a[-1] for a in axes]) + setup.eps_N
    ext = Lattice.covering(h, lower, upper)
    m = int(math.ceil(setup.N / h - _SNAP))
    noise = sample_noise(ext.padded(m), seed, replica, max_cells)
    coarse = bundle_from_noise(noise, setup.kernel, ext, setup.N, setup.eps_N, setup.delta_N, with_f=False)
    fine = bundle_from_noise(noise, setup.kernel, ext, 2 * setup.N, setup.eps_2N, setup.delta_2N, with_f=False)
    return BundlePair(setup, coarse, fine, lattice)


@dataclass(frozen=True)
class HybridConfig:
    k: float
    grid: OccupancyGrid
    processed: np.ndarray  # per window cell: governed by the processed-box model

    @property
    def open(self):
        return self.grid.open


def _processed_mask(setup, lattice, k):
    S = SprinklingField.zero(setup)
    n_half = math.inf if math.isinf(k) else int(math.ceil(k))
    per_box = replace(S, values=(np.arange(len(S.centres)) < n_half).astype(float))
    return per_box.on_lattice(lattice) > 0.5


def hybrid(pair, k, S=None):
    """``I_k``: processed boxes use one model, the others the second, at level ``level +/- tau_k``.

    Direction ``UP``: processed boxes follow the N model, others the 2N model,
    both at ``level + tau_k``. Direction ``DOWN``: processed boxes follow the 2N
    model, others the N model, at ``level - s + tau_k``.
    """
    setup = pair.setup
    S = tau_at(setup, k) if S is None else S
    if S.k != k and not (math.isinf(k) and math.isinf(S.k)):
        raise ValueError("sprinkling field is at a different step")
    lat = pair.lattice
    tau = S.on_lattice(lat)
    processed = _processed_mask(setup, lat, k)
    first, second = ("N", "2N") if setup.direction == UP else ("2N", "N")
    base = setup.level if setup.direction == UP else setup.level - setup.s
    level = base + tau
    v1, t1 = pair.model(first)
    v2, t2 = pair.model(second)
    open_ = np.where(processed, open_set(v1, t1, level), open_set(v2, t2, level))
    grid = OccupancyGrid(lat, open_, float(setup.level), INTERPOLATION, {"k": k})
    return HybridConfig(k, grid, processed)


# -- statistics ----------------------------------------------------------------

def _check_event_window(setup, event):
    if event.extent() + 2 * setup.N > setup.half_width - setup.eps_2N + _SNAP:
        raise WindowTooSmall("window must extend 2N beyond S_2")


def inclusion_flags(pair, n):
    """``(I_n subset I_{n+1/2}, sufficient event)`` for one coupled sample.

    The sufficient event is ``sup |f_N^eps_N - f_2N^eps_2N| <= s/2`` and both
    ternary noises neutral, on box ``n``.
    """
    setup = pair.setup
    lat = pair.lattice
    j = centre_indices(setup.d, n + 1)[n]
    box = box_mask(lat, 2 * setup.N * j, setup.N) & _half_open(lat, 2 * setup.N * j, setup.N)
    if not box.any():
        raise WindowTooSmall("box n does not meet the window")
    S = tau_at(setup, n)
    tau_n = float(_box_value(setup, S, j))
    first, second = ("N", "2N") if setup.direction == UP else ("2N", "N")
    base = setup.level if setup.direction == UP else setup.level - setup.s
    v_new, t_new = pair.model(first)
    v_old, t_old = pair.model(second)
    before = open_set(v_old[box], t_old[box], base + tau_n)
    after = open_set(v_new[box], t_new[box], base + tau_n + setup.s / 2)
    included = bool(np.all(after[before]))
    gap = np.max(np.abs(v_new[box] - v_old[box]))
    sufficient = bool(gap <= setup.s / 2 and np.all(t_new[box] == NEUTRAL) and np.all(t_old[box] == NEUTRAL))
    return included, sufficient


def _half_open(lattice, centre, N):
    grids = np.meshgrid(*[a - c for a, c in zip(lattice.axes(), centre)], indexing="ij", sparse=True)
    mask = np.ones(lattice.shape, dtype=bool)
    for g in grids:
        mask = mask & (g >= -N - _SNAP) & (g < N - _SNAP)
    return mask


def _box_value(setup, S, j):
    """``tau`` on box ``j`` even when ``j`` lies outside the stored window."""
    hit = np.all(S.centres == j, axis=1)
    if hit.any():
        return S.values[hit][0]
    n = int(math.floor(S.k))
    c = tau_constant(setup.d)
    e = enumeration_index(j)
    val = 0.5 * setup.s * (e < math.ceil(S.k))
    if n:
        val += setup.s * _tau_int(c, setup.d, np.asarray(j)[None, :] - centre_indices(setup.d, n)).sum()
    return val


def inclusion_rate(n, replicas, setup, seed=0):
    """Estimate ``P[I_n subset I_{n+1/2}]`` and the probability of the sufficient event.

    Only box ``n`` matters, so each replica samples just that box. Returns a
    pair of :class:`gplab.stats.EstimateReport`.
    """
    from .stats import EstimateReport

    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    j = centre_indices(setup.d, n + 1)[n]
    lat = window_lattice(setup, 2 * setup.N * j, boxes=0)
    inc = suf = 0
    for r in range(replicas):
        pair = sample_pair(setup, seed, r, lattice=lat)
        a, b = inclusion_flags(pair, n)
        inc += a
        suf += b
    params = {"setup": setup.to_dict(), "n": n}
    return (EstimateReport.from_counts(inc, replicas, seed, {**params, "quantity": "inclusion"}),
            EstimateReport.from_counts(suf, replicas, seed, {**params, "quantity": "sufficient"}))


@dataclass
class PivotalityProfile:
    n: int
    replicas: int
    L: float
    counts: dict
    centre_counts: np.ndarray
    centres: np.ndarray
    seed: int
    params: dict = dc_field(default_factory=dict)

    def _p(self, key):
        return self.counts[key] / self.replicas

    @property
    def p_n(self):
        """``P[I_n in A] - P[I_{n+1/2} in A]``."""
        return self._p("A_n") - self._p("A_half")

    @property
    def q_n(self):
        """``P[I_{n+1} in A] - P[I_{n+1/2} in A]`` as a difference of frequencies."""
        return self._p("A_next") - self._p("A_half")

    @property
    def q_n_coupled(self):
        """Frequency of ``{I_{n+1} in A, I_{n+1/2} not in A}``."""
        return self._p("sprinkle_pivotal")

    @property
    def p_n_x(self):
        """``P[Piv^n_{x_j}(L)]`` per window centre."""
        return self.centre_counts / self.replicas

    def report(self):
        from .stats import EstimateReport
        out = {}
        for key in self.counts:
            out[key] = EstimateReport.from_counts(self.counts[key], self.replicas, self.seed,
                                                  {**self.params, "quantity": key})
        return out

    def to_dict(self):
        return {"n": self.n, "replicas": self.replicas, "L": self.L, "counts": dict(self.counts),
                "p_n": self.p_n, "q_n": self.q_n, "q_n_coupled": self.q_n_coupled,
                "centres": self.centres.tolist(), "p_n_x": self.p_n_x.tolist(), "seed": self.seed,
                "params": self.params}


def pivotality_profile(n, event, replicas, setup, seed=0, L=None):
    """Coupled estimates of ``p_n``, ``q_n`` and ``P[Piv^n_{x_j}(L)]`` (default ``L = 4N``)."""
    _check_event_window(setup, event)
    L = 4 * setup.N if L is None else L
    lat = window_lattice(setup)
    domain, source, target = event.masks(lat)
    S_n, S_half, S_next = tau_at(setup, n), tau_at(setup, n + 0.5), tau_at(setup, n + 1)
    centres = setup.window_centres()
    balls = [box_mask(lat, 2 * setup.N * j, L) for j in centres]
    j_n = centre_indices(setup.d, n + 1)[n]
    keys = ("A_n", "A_half", "A_next", "not_included", "loss", "sprinkle_pivotal", "loss_and_piv_n")
    counts = dict.fromkeys(keys, 0)
    centre_counts = np.zeros(len(centres), dtype=np.int64)
    own = next((i for i, j in enumerate(centres) if np.array_equal(j, j_n)), None)
    for r in range(replicas):
        pair = sample_pair(setup, seed, r, lattice=lat)
        I_n = hybrid(pair, n, S_n).open
        I_half = hybrid(pair, n + 0.5, S_half).open
        I_next = hybrid(pair, n + 1, S_next).open
        a_n = _joined(I_n, domain, source, target)
        a_half = _joined(I_half, domain, source, target)
        a_next = _joined(I_next, domain, source, target)
        counts["A_n"] += a_n
        counts["A_half"] += a_half
        counts["A_next"] += a_next
        counts["not_included"] += bool(np.any(I_n & ~I_half))
        counts["loss"] += a_n and not a_half
        counts["sprinkle_pivotal"] += a_next and not a_half
        piv = np.array([_joined(I_half | b, domain, source, target) and not _joined(I_half & ~b, domain, source, target)
                        for b in balls], dtype=bool)
        centre_counts += piv
        if own is not None:
            counts["loss_and_piv_n"] += (a_n and not a_half) and bool(piv[own])
    params = {"setup": setup.to_dict(), "n": n, "event": event.describe(), "L": L}
    return PivotalityProfile(n, replicas, L, counts, centre_counts, centres, seed, params)


def trace(pair, event, steps, stride=None, snapshot=None):
    """Per-step records ``{k, event, included}`` for one coupled sample.

    ``included`` states ``I_{k - 1/2} subset I_k``. With ``stride``, ``snapshot``
    is called as ``snapshot(k, grid)`` every ``stride`` half-steps.
    """
    setup = pair.setup
    domain, source, target = event.masks(pair.lattice)
    S = SprinklingField.zero(setup)
    prev = None
    rows = []
    for i in range(2 * steps + 1):
        k = i / 2
        I = hybrid(pair, k, S)
        rows.append({"k": k, "event": _joined(I.open, domain, source, target),
                     "included": None if prev is None else bool(not np.any(prev & ~I.open))})
        if stride and snapshot is not None and i % stride == 0:
            snapshot(k, I.grid)
        prev = I.open
        S = tau_step(S)
    return rows

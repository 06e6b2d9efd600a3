"""Covariance square-root kernels, smooth cutoffs and the parameter schedule.

A field is ``f = q * W`` with ``q`` radial, non-negative and ``kappa = q * q``.
Three families are supported: the Bargmann-Fock kernel
``q(x) = (2/pi)^(d/4) exp(-|x|^2)``, the rational quadratic kernel
``q(x) = (1 + |x|^2)^(-beta/2)`` and a tabulated radial profile.
"""
import csv
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate, interpolate, optimize

from .errors import InvalidSchedule, QuadratureNonConvergent

BARGMANN_FOCK = "bargmann_fock"
RATIONAL_QUADRATIC = "rational_quadratic"
TABULATED = "tabulated"
FAMILIES = (BARGMANN_FOCK, RATIONAL_QUADRATIC, TABULATED)

_ALIASES = {
    "bf": BARGMANN_FOCK,
    "bargmannfock": BARGMANN_FOCK,
    "bargmann-fock": BARGMANN_FOCK,
    "rq": RATIONAL_QUADRATIC,
    "rationalquadratic": RATIONAL_QUADRATIC,
    "rational-quadratic": RATIONAL_QUADRATIC,
    "tabulatedradial": TABULATED,
    "tabulated_radial": TABULATED,
}


@dataclass(frozen=True)
class KernelSpec:
    """Radial convolution square root ``q`` on R^d.

    ``beta`` is the decay exponent; ``math.inf`` marks super-polynomial decay
    (always the case for Bargmann-Fock). ``radii``/``values`` are only used by
    the tabulated family.
    """

    family: str
    d: int = 2
    beta: float = math.inf
    radii: Optional[tuple] = None
    values: Optional[tuple] = None
    _interp: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        family = _ALIASES.get(self.family.lower(), self.family.lower())
        object.__setattr__(self, "family", family)
        if family not in FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        if int(self.d) != self.d or self.d < 1:
            raise ValueError("dimension must be a positive integer")
        object.__setattr__(self, "d", int(self.d))
        if family == BARGMANN_FOCK:
            object.__setattr__(self, "beta", math.inf)
        if not self.beta > self.d / 2:
            raise ValueError(f"decay exponent must exceed d/2, got {self.beta}")
        if family == RATIONAL_QUADRATIC and math.isinf(self.beta):
            raise ValueError("rational quadratic kernel needs a finite beta")
        if family == TABULATED:
            if self.radii is None or self.values is None:
                raise ValueError("tabulated kernel needs radii and values")
            r = np.asarray(self.radii, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if r.ndim != 1 or r.shape != v.shape or r.size < 2:
                raise ValueError("radii and values must be 1-d of equal length >= 2")
            if np.any(np.diff(r) <= 0) or r[0] < 0:
                raise ValueError("radii must be non-negative and strictly increasing")
            if np.any(v < 0):
                raise ValueError("tabulated profile must be non-negative")
            object.__setattr__(self, "radii", tuple(r))
            object.__setattr__(self, "values", tuple(v))
            # PCHIP keeps the interpolant non-negative between non-negative samples
            object.__setattr__(self, "_interp", interpolate.PchipInterpolator(r, v, extrapolate=False))

    @classmethod
    def bargmann_fock(cls, d=2):
        return cls(BARGMANN_FOCK, d)

    @classmethod
    def rational_quadratic(cls, beta, d=2):
        return cls(RATIONAL_QUADRATIC, d, beta)

    @classmethod
    def tabulated(cls, radii, values, d=2, beta=math.inf):
        return cls(TABULATED, d, beta, tuple(radii), tuple(values))

    def radial(self, r):
        """Evaluate the profile ``q`` at radii ``r`` (array-like)."""
        r = np.asarray(r, dtype=float)
        if self.family == BARGMANN_FOCK:
            return (2.0 / math.pi) ** (self.d / 4) * np.exp(-r * r)
        if self.family == RATIONAL_QUADRATIC:
            return (1.0 + r * r) ** (-self.beta / 2)
        out = self._interp(r)
        out = np.where(r < self.radii[0], self.values[0], out)
        return np.nan_to_num(out, nan=0.0)

    def to_config(self):
        cfg = {"family": self.family, "d": self.d}
        if not math.isinf(self.beta):
            cfg["beta"] = self.beta
        if self.family == TABULATED:
            cfg["radii"] = list(self.radii)
            cfg["values"] = list(self.values)
        return cfg


def eval_q(spec, x):
    """``q(x)`` for points ``x`` of shape ``(..., d)``; returns shape ``(...)``."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.d:
        raise ValueError(f"points must have trailing dimension {spec.d}")
    return spec.radial(np.linalg.norm(x, axis=-1))


def numeric_radius(spec, tol=1e-9):
    """Smallest radius beyond which ``q < tol``."""
    if spec.family == BARGMANN_FOCK:
        amp = (2.0 / math.pi) ** (spec.d / 4)
        return math.sqrt(max(math.log(amp / tol), 0.0))
    if spec.family == RATIONAL_QUADRATIC:
        return math.sqrt(max(tol ** (-2.0 / spec.beta) - 1.0, 0.0))
    r = np.asarray(spec.radii)
    above = np.nonzero(np.asarray(spec.values) >= tol)[0]
    if above.size == 0:
        return 0.0
    i = above[-1]
    return float(r[min(i + 1, r.size - 1)])


def _sphere_area(k):
    """Surface area of the unit sphere in R^k (k >= 1)."""
    return 2.0 * math.pi ** (k / 2) / math.gamma(k / 2)


def eval_kappa(spec, x, tol=1e-6, method="auto"):
    """Covariance ``kappa(x) = (q * q)(x)``.

    Bargmann-Fock uses the closed form ``exp(-|x|^2 / 2)`` unless
    ``method="quadrature"``. Otherwise the convolution is reduced by radial
    symmetry to a two-dimensional integral in (axial, transverse) coordinates
    and integrated adaptively over the whole space.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.d:
        raise ValueError(f"points must have trailing dimension {spec.d}")
    a = np.linalg.norm(x, axis=-1)
    if spec.family == BARGMANN_FOCK and method == "auto":
        return np.exp(-0.5 * a * a)
    flat = np.array([_kappa_radial(spec, float(ai), tol) for ai in np.ravel(a)])
    return flat.reshape(a.shape) if a.shape else float(flat[0])


def _kappa_radial(spec, a, tol):
    q = spec.radial
    d = spec.d
    opts = {"epsabs": tol / 20, "epsrel": 1e-10, "limit": 200}
    if a == 0.0:
        val, err = integrate.quad(lambda r: _sphere_area(d) * r ** (d - 1) * q(r) ** 2,
                                  0, np.inf, **opts)
    elif d == 1:
        val, err = integrate.quad(lambda t: q(abs(t)) * q(abs(t - a)), -np.inf, np.inf,
                                  points=None, **opts)
    else:
        s = _sphere_area(d - 1)

        def inner(t):
            f = lambda rho: s * rho ** (d - 2) * q(math.hypot(t, rho)) * q(math.hypot(t - a, rho))
            v, e = integrate.quad(f, 0, np.inf, **opts)
            inner.err = max(inner.err, e)
            return v

        inner.err = 0.0
        val = 0.0
        err = 0.0
        for lo, hi in ((-np.inf, 0.0), (0.0, a), (a, np.inf)):
            v, e = integrate.quad(inner, lo, hi, **opts)
            val += v
            err += e
        err += inner.err * 3
    if not np.isfinite(val) or err > tol:
        raise QuadratureNonConvergent(f"kappa at |x|={a}: error estimate {err:.2e} > {tol:.1e}")
    return val


@dataclass(frozen=True)
class CutoffSpec:
    """Smooth radial cutoff ``chi_N(x) = chi(|x| / N)``, 1 on ``|x| <= N/4``, 0 on ``|x| >= N/2``."""

    N: float

    def __post_init__(self):
        if not self.N > 0:
            raise ValueError("truncation range N must be positive")

    def profile(self, r):
        return cutoff_profile(np.asarray(r, dtype=float) / self.N)


def _phi(t):
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos])
    return out


def cutoff_profile(u):
    """The C-infinity ramp ``chi`` as a function of ``u = |x| / N``."""
    u = np.asarray(u, dtype=float)
    a = _phi(2.0 - 4.0 * u)
    b = _phi(4.0 * u - 1.0)
    return a / (a + b)


def eval_cutoff(cut, x):
    """``chi_N(x)`` for points of shape ``(..., d)``."""
    x = np.asarray(x, dtype=float)
    return cut.profile(np.linalg.norm(x, axis=-1))


def truncated_radial(spec, cut):
    """Radial profile of ``q * chi_N``; ``cut=None`` gives ``q`` itself."""
    if cut is None:
        return spec.radial
    return lambda r: spec.radial(r) * cut.profile(r)


@dataclass(frozen=True)
class Schedule:
    """Sprinkle ``s``, mesh ``eps`` and noise ``delta`` attached to a truncation range ``N``.

    ``log_delta`` is kept separately since ``delta`` underflows for moderate N.
    """

    N: float
    s: float
    eps: float
    delta: float
    log_delta: float
    gamma: float
    eta: Optional[float] = None
    kind: str = "polynomial"

    def to_dict(self):
        return {k: getattr(self, k) for k in ("kind", "N", "eta", "gamma", "s", "eps", "delta", "log_delta")}


def schedule(N, eta, beta, d):
    """``s = N^-eta``, ``eps = N^-(beta - d/2)``, ``delta = exp(-N^gamma)`` with ``gamma = 2 beta - d - 2 eta``."""
    if not N >= 1:
        raise InvalidSchedule(f"N must be >= 1, got {N}")
    if math.isinf(beta):
        raise InvalidSchedule("polynomial schedule needs a finite beta; use bf_schedule or an effective beta")
    if not 0 < eta < beta - d:
        raise InvalidSchedule(f"eta must lie in (0, beta - d) = (0, {beta - d}), got {eta}")
    gamma = 2 * beta - d - 2 * eta
    log_delta = -(N ** gamma)
    return Schedule(N=N, s=N ** (-eta), eps=N ** (-beta + d / 2), delta=math.exp(log_delta),
                    log_delta=log_delta, gamma=gamma, eta=eta)


def default_eta(beta, d):
    return (beta - d) / 2


def bf_schedule(N, gamma, c, d=2):
    """Bargmann-Fock schedule: ``s = N^(gamma/2) e^(-c N^2 / 2)``, ``eps = e^(-c N^2 / 2)``, ``delta = e^(-N^gamma)``."""
    if not N >= 1:
        raise InvalidSchedule(f"N must be >= 1, got {N}")
    if not gamma > d:
        raise InvalidSchedule(f"gamma must exceed d = {d}, got {gamma}")
    if not c > 0:
        raise InvalidSchedule("c must be positive")
    eps = math.exp(-0.5 * c * N * N)
    log_delta = -(N ** gamma)
    return Schedule(N=N, s=N ** (gamma / 2) * eps, eps=eps, delta=math.exp(log_delta),
                    log_delta=log_delta, gamma=gamma, kind="bargmann_fock")


def bf_range_for_sprinkle(s, gamma, c, d=2):
    """Invert the Bargmann-Fock schedule: the ``N`` whose sprinkle equals ``s``.

    Only the decreasing branch ``N >= sqrt(gamma / (2c))`` is searched; for
    small ``s`` the answer behaves like ``sqrt(2 log(1/s) / c)``.
    """
    if not 0 < s:
        raise InvalidSchedule("sprinkle must be positive")
    lo = max(1.0, math.sqrt(gamma / (2 * c)))
    g = lambda n: math.log(bf_schedule(n, gamma, c, d).s) - math.log(s)
    if g(lo) < 0:
        raise InvalidSchedule(f"sprinkle {s} exceeds the schedule maximum {bf_schedule(lo, gamma, c, d).s}")
    hi = lo + 1.0
    while g(hi) > 0:
        hi *= 2
    return optimize.brentq(g, lo, hi, xtol=1e-12)


def load_profile_csv(path):
    """Read a two-column (radius, value) CSV; a non-numeric first row is taken as a header."""
    radii, values = [], []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row or row[0].strip().startswith("#"):
                continue
            try:
                r, v = float(row[0]), float(row[1])
            except ValueError:
                if i == 0:
                    continue
                raise ValueError(f"{path}:{i + 1}: expected two numbers, got {row!r}")
            radii.append(r)
            values.append(v)
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError(f"{path}: radii must be strictly increasing")
    return radii, values


def parse_kernel(cfg):
    """Build a :class:`KernelSpec` from a mapping or from text like ``"rq beta=3 d=2"``.

    Mapping keys: ``family``, ``d``, ``beta``, and for tabulated kernels either
    ``profile`` (CSV path) or ``radii``/``values``.
    """
    if isinstance(cfg, KernelSpec):
        return cfg
    if isinstance(cfg, str):
        parts = cfg.replace(",", " ").split()
        if not parts:
            raise ValueError("empty kernel description")
        mapping = {"family": parts[0]}
        for p in parts[1:]:
            key, _, val = p.partition("=")
            mapping[key.strip()] = val.strip()
        cfg = mapping
    cfg = dict(cfg)
    family = str(cfg.get("family", BARGMANN_FOCK))
    d = int(cfg.get("d", 2))
    beta = float(cfg["beta"]) if cfg.get("beta") is not None else math.inf
    fam = _ALIASES.get(family.lower(), family.lower())
    if fam == TABULATED:
        if "profile" in cfg:
            radii, values = load_profile_csv(cfg["profile"])
        else:
            radii, values = cfg["radii"], cfg["values"]
        return KernelSpec.tabulated(radii, values, d=d, beta=beta)
    return KernelSpec(fam, d, beta)

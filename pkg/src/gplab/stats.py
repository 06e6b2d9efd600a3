"""Monte Carlo estimators: event probabilities, finite-size critical levels,
decay fits, comparison checks and the finite-dimensional Cameron-Martin check.
"""
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy import stats as sps

from . import rng
from .errors import BisectionNonBracketed, InsufficientHits, NotPSD
from .field import Lattice, default_spacing, make_bundle
from .kernel import KernelSpec
from .perc import (CONTINUUM, TRUNCATED, AdmissibleEvent, CrossingEvent, OccupancyGrid, arm_radius,
                   event_threshold, occurs, threshold)

MIN_REPLICAS = 100
MIN_HITS = 10
MIN_R2 = 0.95
Z95 = 1.959963984540054
Z95_ONE_SIDED = 1.6448536269514722
SET_STRIDE = 1 << 32


def wilson_interval(hits, n, confidence=0.95):
    if n == 0:
        return 0.0, 1.0
    ci = sps.binomtest(int(hits), int(n)).proportion_ci(confidence, method="wilson")
    return float(ci.low), float(ci.high)


def to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if hasattr(obj, "describe"):
        return obj.describe()
    return obj


def dumps(obj):
    """Canonical JSON: sorted keys, no whitespace variance."""
    return json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"))


@dataclass
class EstimateReport:
    estimate: float
    ci_lo: float
    ci_hi: float
    n: int
    hits: int
    seed: int
    params: dict = dc_field(default_factory=dict)

    @classmethod
    def from_counts(cls, hits, n, seed, params=None):
        lo, hi = wilson_interval(hits, n)
        est = hits / n if n else math.nan
        return cls(est, lo, hi, int(n), int(hits), int(seed), dict(params or {}))

    @property
    def sigma(self):
        p = self.estimate
        return math.sqrt(max(p * (1 - p), 0.0) / self.n) if self.n else math.inf

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return dumps(self.to_dict())

    def csv_row(self):
        return {"params": dumps(self.params), "estimate": self.estimate, "ci_lo": self.ci_lo,
                "ci_hi": self.ci_hi, "n": self.n}


# -- models and sampling -------------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    """One percolation model: ``tag=CONTINUUM`` thresholds ``f`` on the ``eps`` grid,
    ``tag=TRUNCATED`` thresholds ``f_N^eps + T_delta``."""

    kernel: KernelSpec
    eps: float = 0.25
    N: Optional[float] = None
    delta: float = 0.0
    h: Optional[float] = None
    tag: str = TRUNCATED
    f_radius: Optional[float] = None

    def __post_init__(self):
        if self.tag == TRUNCATED and self.N is None:
            raise ValueError("a truncated model needs N")
        if self.tag not in (CONTINUUM, TRUNCATED):
            raise ValueError(f"unknown model tag {self.tag!r}")

    @classmethod
    def continuum(cls, kernel, eps=0.25, h=None, f_radius=None):
        return cls(kernel, eps, None, 0.0, h, CONTINUUM, f_radius)

    @property
    def spacing(self):
        return default_spacing(self.eps) if self.h is None else self.h

    def to_dict(self):
        return {"kernel": self.kernel.to_config(), "eps": self.eps, "N": self.N, "delta": self.delta,
                "h": self.spacing, "tag": self.tag, "f_radius": self.f_radius}


def event_window(model, extent):
    """``eps``-aligned lattice reaching two cells beyond ``extent``."""
    half = (math.floor(extent / model.eps + 1e-9) + 2) * model.eps
    return Lattice.centered(model.spacing, half, model.kernel.d)


def sample_grid_values(model, extent, seed, replica):
    """``(values, T, eps_lattice)`` of one replica on the window around ``extent``."""
    window = event_window(model, extent)
    if model.tag == CONTINUUM:
        b = make_bundle(model.kernel, None, None, model.eps, 0.0, window, seed=seed, replica=replica,
                        f_radius=model.f_radius)
        return b.f_eps, None, b.eps_lattice
    b = make_bundle(model.kernel, None, model.N, model.eps, model.delta, window, seed=seed,
                    replica=replica, with_f=False)
    return b.f_N_eps, b.t_delta, b.eps_lattice


def _grid(values, t, lattice, level, tag):
    from .perc import open_set
    return OccupancyGrid(lattice, open_set(values, t, level), level, tag)


def _map(fn, tasks, workers):
    if workers and workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, tasks))
    return [fn(t) for t in tasks]


def _chunks(replicas, workers):
    size = max(1, math.ceil(replicas / max(1, 4 * (workers or 1))))
    return [(a, min(a + size, replicas)) for a in range(0, replicas, size)]


def _indicator_task(args):
    model, events, levels, seed, offset, lo, hi = args
    extent = max(e.extent() for e in events)
    out = np.zeros((hi - lo, len(events), len(levels)), dtype=bool)
    for i, r in enumerate(range(lo, hi)):
        values, t, lat = sample_grid_values(model, extent, seed, offset + r)
        for a, level in enumerate(levels):
            g = _grid(values, t, lat, level, model.tag)
            for e, ev in enumerate(events):
                out[i, e, a] = occurs(g, event=ev)
    return out


def indicators(model, events, levels, replicas, seed, replica_set=0, workers=1):
    """Boolean array ``(replicas, events, levels)``; levels and events are coupled on each replica."""
    offset = replica_set * SET_STRIDE
    tasks = [(model, list(events), list(levels), seed, offset, a, b) for a, b in _chunks(replicas, workers)]
    return np.concatenate(_map(_indicator_task, tasks, workers))


def estimate(event, model, level, replicas, seed, workers=1, replica_set=0):
    """Frequency estimate of ``P[model at level in event]`` with a Wilson interval."""
    if replicas < MIN_REPLICAS:
        raise ValueError(f"at least {MIN_REPLICAS} replicas are required, got {replicas}")
    hits = int(indicators(model, [event], [level], replicas, seed, replica_set, workers).sum())
    params = {"model": model.to_dict(), "level": level, "event": event.describe(), "replica_set": replica_set}
    return EstimateReport.from_counts(hits, replicas, seed, params)


# -- finite-size critical level ------------------------------------------------

def _threshold_task(args):
    model, event, seed, offset, lo, hi = args
    out = np.empty(hi - lo)
    for i, r in enumerate(range(lo, hi)):
        values, t, lat = sample_grid_values(model, event.extent(), seed, offset + r)
        out[i] = event_threshold(values, t, lat, event)
    return out


def event_thresholds(model, event, replicas, seed, replica_set=0, workers=1):
    """Per-replica smallest level at which the event occurs (exact on each sample)."""
    offset = replica_set * SET_STRIDE
    tasks = [(model, event, seed, offset, a, b) for a, b in _chunks(replicas, workers)]
    return np.concatenate(_map(_threshold_task, tasks, workers))


@dataclass
class ScaleLevel:
    R: float
    level: float
    ci_lo: float
    ci_hi: float
    n: int
    p_lo: float
    p_hi: float
    iterations: int


@dataclass
class CriticalLevelReport:
    scales: list
    p_star: float
    exponent: float
    extrapolated: float
    seed: int
    params: dict = dc_field(default_factory=dict)

    @property
    def levels(self):
        return np.array([s.level for s in self.scales])

    def to_dict(self):
        return {"scales": [asdict(s) for s in self.scales], "p_star": self.p_star,
                "exponent": self.exponent, "extrapolated": self.extrapolated, "seed": self.seed,
                "params": self.params}


def bisect_sorted(thresholds, p_star, bracket, tol=1e-4, max_iter=200):
    """Bisection on the coupled empirical curve ``p(l) = mean(threshold <= l)``.

    Stops once the bracket is narrower than ``max(tol, 0.05 * w)`` where ``w`` is
    the width of the level interval compatible with ``p_star`` (see
    ``level_interval``): resolving the level further than its Monte Carlo
    uncertainty buys nothing. Returns ``(level, p_lo, p_hi, iterations)``.
    """
    thr = np.sort(np.asarray(thresholds, dtype=float))
    n = thr.size
    p = lambda l: np.searchsorted(thr, l, side="right") / n
    lo, hi = bracket
    if p(lo) > p_star or p(hi) < p_star:
        raise BisectionNonBracketed(
            f"p({lo:g}) = {p(lo):.4f}, p({hi:g}) = {p(hi):.4f} do not bracket {p_star}")
    a, b = level_interval(thr, p_star)
    stop = max(tol, 0.05 * (b - a)) if np.isfinite(b - a) else tol
    it = 0
    while hi - lo > stop and it < max_iter:
        mid = 0.5 * (lo + hi)
        if p(mid) < p_star:
            lo = mid
        else:
            hi = mid
        it += 1
    return 0.5 * (lo + hi), float(p(lo)), float(p(hi)), it


def level_interval(thresholds, p_star):
    """Levels whose Wilson interval for ``p(l)`` contains ``p_star``."""
    thr = np.sort(np.asarray(thresholds, dtype=float))
    finite = thr[np.isfinite(thr)]
    n = thr.size
    ok = []
    for l in finite:
        k = np.searchsorted(thr, l, side="right")
        a, b = wilson_interval(k, n)
        if a <= p_star <= b:
            ok.append(l)
    if not ok:
        return math.nan, math.nan
    return float(min(ok)), float(max(ok))


def bisect_lc(model, scales, p_star=0.5, replicas=1000, seed=0, aspect=1.0, bracket=(-1.0, 1.0),
              tol=1e-4, exponent=0.75, event_family=None, workers=1):
    """Finite-size critical levels ``l_c(R)`` from box-crossing probabilities.

    ``event_family(R)`` defaults to the left-right crossing of an
    ``aspect*R x R`` rectangle. The extrapolation fits ``l(R) = l_inf + a R^-exponent``.
    """
    if event_family is None:
        d = model.kernel.d
        event_family = lambda R: CrossingEvent((aspect * R,) + (R,) * (d - 1))
    rows = []
    for i, R in enumerate(scales):
        thr = event_thresholds(model, event_family(R), replicas, seed, replica_set=i, workers=workers)
        level, p_lo, p_hi, it = bisect_sorted(thr, p_star, bracket, tol)
        lo, hi = level_interval(thr, p_star)
        rows.append(ScaleLevel(float(R), float(level), lo, hi, int(replicas), p_lo, p_hi, it))
    extrapolated = math.nan
    if len(rows) >= 2:
        x = np.array([r.R for r in rows]) ** (-exponent)
        y = np.array([r.level for r in rows])
        extrapolated = float(np.polyfit(x, y, 1)[1])
    params = {"model": model.to_dict(), "aspect": aspect, "bracket": list(bracket), "tol": tol,
              "event": event_family(scales[0]).describe() if scales else None}
    return CriticalLevelReport(rows, p_star, exponent, extrapolated, seed, params)


# -- decay fits ----------------------------------------------------------------

@dataclass
class DecayFit:
    radii: np.ndarray
    neg_log_p: np.ndarray
    hits: np.ndarray
    n: int
    slope: float
    intercept: float
    r2: float
    slope_stderr: float
    power: float = 1.0
    params: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if r.size < 4:
            raise ValueError("a decay fit needs at least 4 radii")
        if np.any(np.diff(r) <= 0):
            raise ValueError("radii must be strictly increasing")

    @property
    def accepted(self):
        """Exponential decay is supported: slope significantly positive and a good linear fit."""
        return bool(self.slope > 3 * self.slope_stderr and self.r2 >= MIN_R2)

    def table(self):
        return [{"R": float(R), "neg_log_p": float(v), "hits": int(h), "n": int(self.n)}
                for R, v, h in zip(self.radii, self.neg_log_p, self.hits)]

    def to_dict(self):
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "slope_stderr": self.slope_stderr, "power": self.power, "accepted": self.accepted,
                "points": self.table(), "params": self.params}


def fit_probabilities(radii, probs, hits=None, n=0, power=1.0, params=None):
    """Least squares of ``-log p`` against ``R**power``."""
    radii = np.asarray(radii, dtype=float)
    probs = np.asarray(probs, dtype=float)
    if np.any(probs <= 0):
        raise InsufficientHits("zero probability estimate")
    y = -np.log(probs)
    res = sps.linregress(radii ** power, y)
    hits = np.zeros(radii.size, dtype=int) if hits is None else np.asarray(hits)
    return DecayFit(radii, y, hits, int(n), float(res.slope), float(res.intercept), float(res.rvalue ** 2),
                    float(res.stderr), power, dict(params or {}))


def _arm_task(args):
    model, r, R_max, level, seed, offset, lo, hi = args
    out = np.empty(hi - lo)
    for i, rep in enumerate(range(lo, hi)):
        values, t, lat = sample_grid_values(model, R_max, seed, offset + rep)
        out[i] = arm_radius(_grid(values, t, lat, level, model.tag), r)
    return out


def arm_radii(model, level, R_max, replicas, seed, r=1.0, replica_set=0, workers=1):
    offset = replica_set * SET_STRIDE
    tasks = [(model, r, R_max, level, seed, offset, a, b) for a, b in _chunks(replicas, workers)]
    return np.concatenate(_map(_arm_task, tasks, workers))


def fit_decay(model, radii, level, replicas, seed=0, r=1.0, kind="arm", workers=1):
    """Fit ``-log P`` of one-arm (``kind="arm"``, against ``R``) or disconnection
    (``kind="disconnection"``: ``B_R`` not joined to ``B_2R^c``, against ``R^(d-1)``) events.

    The one-arm events at all radii are coupled: one sample per replica on the
    largest window gives every ``{B_r <-> B_R^c}`` through the arm radius.
    """
    radii = np.asarray(radii, dtype=float)
    d = model.kernel.d
    if kind == "arm":
        arms = arm_radii(model, level, radii.max(), replicas, seed, r, workers=workers)
        hits = np.array([(arms > R + 1e-9).sum() for R in radii])
        power = 1.0
    elif kind == "disconnection":
        events = [AdmissibleEvent(R, 2 * R) for R in radii]
        ind = indicators(model, events, [level], replicas, seed, workers=workers)[:, :, 0]
        hits = (~ind).sum(axis=0)
        power = d - 1.0
    else:
        raise ValueError(f"unknown decay kind {kind!r}")
    low = [float(R) for R, h in zip(radii, hits) if h < MIN_HITS]
    if low:
        raise InsufficientHits(f"fewer than {MIN_HITS} hits at R = {low}")
    params = {"model": model.to_dict(), "level": level, "kind": kind, "r": r, "seed": seed}
    return fit_probabilities(radii, hits / replicas, hits, replicas, power, params)


# -- global comparison ---------------------------------------------------------

@dataclass
class CompareRow:
    event: str
    lower: EstimateReport
    middle: EstimateReport
    upper: EstimateReport
    variant: str = "continuum"

    @property
    def margins(self):
        """One-sided slack of both inequalities in units of combined sigma (positive = holds)."""
        s1 = math.hypot(self.lower.sigma, self.middle.sigma)
        s2 = math.hypot(self.middle.sigma, self.upper.sigma)
        m1 = (self.middle.estimate - self.lower.estimate) / s1 if s1 else (math.inf if self.middle.estimate >= self.lower.estimate else -math.inf)
        m2 = (self.upper.estimate - self.middle.estimate) / s2 if s2 else (math.inf if self.upper.estimate >= self.middle.estimate else -math.inf)
        return m1, m2

    @property
    def verdict(self):
        m1, m2 = self.margins
        return bool(m1 >= -Z95_ONE_SIDED and m2 >= -Z95_ONE_SIDED)

    def to_dict(self):
        m1, m2 = self.margins
        return {"event": self.event, "variant": self.variant, "lower": self.lower.estimate,
                "middle": self.middle.estimate, "upper": self.upper.estimate,
                "lower_ci": [self.lower.ci_lo, self.lower.ci_hi],
                "middle_ci": [self.middle.ci_lo, self.middle.ci_hi],
                "upper_ci": [self.upper.ci_lo, self.upper.ci_hi], "n": self.middle.n,
                "margin_lower": m1, "margin_upper": m2, "verdict": self.verdict}


def _three_way(events, lower_model, lower_level, mid_model, mid_level, upper_model, upper_level,
               replicas, seed, variant, workers):
    # identical (model, level) arms share one replica set, so a degenerate
    # comparison (s = 0, same model) collapses to exact equalities
    ind, sets, seen = [], [], {}
    for i, (m, lvl) in enumerate(((lower_model, lower_level), (mid_model, mid_level), (upper_model, upper_level))):
        key = (m, float(lvl))
        if key not in seen:
            seen[key] = (i, indicators(m, events, [lvl], replicas, seed, replica_set=i, workers=workers)[:, :, 0])
        sets.append(seen[key][0])
        ind.append(seen[key][1])
    rows = []
    for e, ev in enumerate(events):
        reps = [EstimateReport.from_counts(int(x[:, e].sum()), replicas, seed,
                                           {"model": m.to_dict(), "level": lvl, "event": ev.describe(),
                                            "replica_set": i, "variant": variant})
                for i, x, m, lvl in zip(sets, ind, (lower_model, mid_model, upper_model),
                                        (lower_level, mid_level, upper_level))]
        rows.append(CompareRow(ev.describe(), *reps, variant=variant))
    return rows


def compare(level, s, model, events, replicas, seed=0, continuum_eps=None, workers=1):
    """``P[E_N(l - s) in A] <= P[E(l) in A] <= P[E_N(l + s) in A]`` on independent replica sets."""
    mid = ModelSpec.continuum(model.kernel, continuum_eps or model.eps, h=model.h, f_radius=model.f_radius)
    return _three_way(events, model, level - s, mid, level, model, level + s, replicas, seed,
                      "continuum", workers)


def compare_scales(level, model_N, model_2N, s_N, events, replicas, seed=0, workers=1):
    """``P[E_N(l - s_N) in A] <= P[E_2N(l) in A] <= P[E_N(l + s_N) in A]``."""
    return _three_way(events, model_N, level - s_N, model_2N, level, model_N, level + s_N, replicas,
                      seed + 1, "N-vs-2N", workers)


# -- local comparison tails ----------------------------------------------------

def local_gap_tail(kernel, N, threshold_s, replicas, seed=0, eps=0.25, h=None, which=0):
    """Estimate ``P[sup_{B_1} gap >= threshold_s]``; ``which=0`` for ``|f - f_N|``, 1 for ``|f_N - f_N^eps|``."""
    from .field import local_gap
    h = default_spacing(eps) if h is None else h
    half = (math.floor(1.0 / eps + 1e-9) + 1) * eps
    window = Lattice.centered(h, half, kernel.d)
    hits = 0
    for r in range(replicas):
        b = make_bundle(kernel, None, N, eps, 0.0, window, seed=seed, replica=r, with_f=(which == 0))
        hits += local_gap(b)[which] >= threshold_s
    params = {"kernel": kernel.to_config(), "N": N, "s": threshold_s, "eps": eps, "h": h,
              "gap": "f-f_N" if which == 0 else "f_N-f_N^eps"}
    return EstimateReport.from_counts(hits, replicas, seed, params)


# -- Cameron-Martin ------------------------------------------------------------

@dataclass
class CameronMartinResult:
    direct: EstimateReport
    reweighted: float
    reweighted_se: float
    weight_mean: float
    weight_se: float
    samples: int
    seed: int

    @property
    def reweighted_ci(self):
        return self.reweighted - Z95 * self.reweighted_se, self.reweighted + Z95 * self.reweighted_se

    @property
    def discrepancy_sigma(self):
        """``|direct - reweighted|`` in units of their combined standard error."""
        se = math.hypot(self.direct.sigma, self.reweighted_se)
        return abs(self.direct.estimate - self.reweighted) / se if se else 0.0

    def to_dict(self):
        return {"direct": self.direct.to_dict(), "reweighted": self.reweighted,
                "reweighted_se": self.reweighted_se, "weight_mean": self.weight_mean,
                "weight_se": self.weight_se, "samples": self.samples, "seed": self.seed}


def gaussian_factor(K, tol=1e-10):
    """``L`` with ``L L^T = K`` for symmetric positive semidefinite ``K``."""
    K = np.atleast_2d(np.asarray(K, dtype=float))
    if K.shape[0] != K.shape[1] or not np.allclose(K, K.T, atol=1e-12):
        raise NotPSD("covariance must be a symmetric square matrix")
    w, V = np.linalg.eigh(K)
    if w.min() < -tol * max(1.0, abs(w.max())):
        raise NotPSD(f"covariance has a negative eigenvalue {w.min():.3e}")
    return V * np.sqrt(np.clip(w, 0.0, None))


def cameron_martin_check(K, w, event, samples, seed=0):
    """Compare ``P[g + h in E]`` with ``E[exp(<w, g> - w^T K w / 2) 1{g in E}]`` for ``h = K w``.

    ``event`` maps an array of shape ``(samples, m)`` to booleans. The two
    estimates use independent streams.
    """
    K = np.atleast_2d(np.asarray(K, dtype=float))
    w = np.atleast_1d(np.asarray(w, dtype=float))
    m = K.shape[0]
    if m > 64:
        raise ValueError("at most 64 points are supported")
    if w.shape != (m,):
        raise ValueError("shift coefficients must match the covariance size")
    L = gaussian_factor(K)
    h = K @ w
    g1 = rng.stream(seed, 0, rng.AUX, 1).standard_normal((samples, m)) @ L.T
    g2 = rng.stream(seed, 0, rng.AUX, 2).standard_normal((samples, m)) @ L.T
    direct = np.asarray(event(g1 + h), dtype=bool)
    norm = float(w @ K @ w)
    weights = np.exp(g2 @ w - 0.5 * norm)
    vals = weights * np.asarray(event(g2), dtype=bool)
    params = {"K": K.tolist(), "w": w.tolist(), "quantity": "direct"}
    return CameronMartinResult(
        EstimateReport.from_counts(int(direct.sum()), samples, seed, params),
        float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples)),
        float(weights.mean()), float(weights.std(ddof=1) / math.sqrt(samples)), int(samples), int(seed))

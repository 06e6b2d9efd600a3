"""Independent reference implementations used only by the tests.

Each one is written the slow, obvious way and shares no code with the package.
"""
import math
from collections import deque
from itertools import product

import numpy as np


def neighbours(idx, shape):
    for k in range(len(shape)):
        for step in (-1, 1):
            j = list(idx)
            j[k] += step
            if 0 <= j[k] < shape[k]:
                yield tuple(j)


def bfs_components(open_):
    """Component id per cell (0 for closed), ids assigned in scan order."""
    open_ = np.asarray(open_, dtype=bool)
    lab = np.zeros(open_.shape, dtype=int)
    nxt = 0
    for idx in np.ndindex(*open_.shape):
        if not open_[idx] or lab[idx]:
            continue
        nxt += 1
        lab[idx] = nxt
        queue = deque([idx])
        while queue:
            cur = queue.popleft()
            for nb in neighbours(cur, open_.shape):
                if open_[nb] and not lab[nb]:
                    lab[nb] = nxt
                    queue.append(nb)
    return lab, nxt


def canonical(labels):
    """Relabel components in order of first appearance so partitions compare equal."""
    out = np.zeros_like(labels)
    mapping = {}
    for idx in np.ndindex(*labels.shape):
        v = labels[idx]
        if v > 0:
            if v not in mapping:
                mapping[v] = len(mapping) + 1
            out[idx] = mapping[v]
    return out


def path_exists(open_, domain, source, target):
    """Depth-first search over open domain cells from every source cell."""
    ok = np.asarray(open_, bool) & np.asarray(domain, bool)
    seen = np.zeros(ok.shape, dtype=bool)
    stack = [idx for idx in np.ndindex(*ok.shape) if source[idx] and ok[idx]]
    for idx in stack:
        seen[idx] = True
    while stack:
        cur = stack.pop()
        if target[cur]:
            return True
        for nb in neighbours(cur, ok.shape):
            if ok[nb] and not seen[nb]:
                seen[nb] = True
                stack.append(nb)
    return False


def full_space_masks(shape, eps, lo, r, R):
    """Masks of ``{[-r, r]^d <-> ([-R, R]^d)^c}`` written from the definition, cell by cell."""
    source = np.zeros(shape, dtype=bool)
    target = np.zeros(shape, dtype=bool)
    for idx in np.ndindex(*shape):
        x = [eps * (l + i) for l, i in zip(lo, idx)]
        # the cell x + [-eps/2, eps/2]^d meets [-r, r]^d
        if all(abs(c) - eps / 2 <= r + 1e-12 for c in x):
            source[idx] = True
        if max(abs(c) for c in x) > R + 1e-12:
            target[idx] = True
    return np.ones(shape, dtype=bool), source, target


def direct_convolution(noise, kernel, h):
    """``h^(d/2) * sum_y q(x - y) xi_y`` evaluated point by point ('valid' region)."""
    noise = np.asarray(noise, dtype=float)
    kernel = np.asarray(kernel, dtype=float)
    d = noise.ndim
    m = [(s - 1) // 2 for s in kernel.shape]
    out_shape = [n - 2 * mm for n, mm in zip(noise.shape, m)]
    out = np.zeros(out_shape)
    for x in np.ndindex(*out_shape):
        acc = 0.0
        for off in np.ndindex(*kernel.shape):
            # y = x + m + (m - off), kernel index off corresponds to displacement off - m
            y = tuple(xi + mi + (mi - oi) for xi, mi, oi in zip(x, m, off))
            acc += kernel[off] * noise[y]
        out[x] = acc
    return h ** (d / 2) * out


def tau_series_bracket(d, shells=20000):
    """``(lo, hi)`` enclosing ``sum_{x in Z^d} (1 + |x|_inf^(d+1))^-1``.

    Shell ``k`` holds ``(2k+1)^d - (2k-1)^d`` points. The summand ``g(k)`` is
    decreasing for ``k >= 1`` (d = 2, 3), so the tail beyond ``K`` lies between
    the integrals of ``g`` over ``[K+1, inf)`` and ``[K, inf)``.
    """
    from scipy import integrate

    g = lambda k: ((2 * k + 1) ** d - (2 * k - 1) ** d) / (1 + k ** (d + 1))
    k = np.arange(1, shells + 1, dtype=float)
    partial = 1.0 + float(np.sum(g(k)[::-1]))
    lo = integrate.quad(g, shells + 1, np.inf, epsabs=1e-14, epsrel=1e-12)[0]
    hi = integrate.quad(g, shells, np.inf, epsabs=1e-14, epsrel=1e-12)[0]
    return partial + lo, partial + hi


def brute_tau_sum(d, K):
    """Point-by-point partial sum over the box ``|x|_inf <= K``."""
    return sum(1.0 / (1 + max(abs(v) for v in x) ** (d + 1)) for x in product(range(-K, K + 1), repeat=d))


def normal_cdf(x):
    return 0.5 * (1 + math.erf(x / math.sqrt(2)))

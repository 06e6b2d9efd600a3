"""
Sampling a smooth Gaussian field and its excursion sets
=======================================================

A tour of the sampler: draw a Bargmann-Fock field from white noise, look at
its truncated and discretized versions, then threshold it and count clusters.
Run with ``python3 demos/field_and_excursions.py``.
"""
import numpy as np

from gplab.field import Lattice, local_gap, make_bundle
from gplab.kernel import KernelSpec, eval_kappa
from gplab.perc import AdmissibleEvent, CrossingEvent, label, occurs, threshold

# The kernel q has q * q = kappa, so kappa(0) = 1 is the site variance.
bf = KernelSpec.bargmann_fock(2)
print("kappa(0) =", eval_kappa(bf, [0.0, 0.0]), " kappa(1, 0) =", eval_kappa(bf, [1.0, 0.0]))

# One sample on [-8, 8]^2 with noise spacing h = 0.25. The bundle carries the
# untruncated field f, the range-N field f_N, its eps-grid restriction and the
# ternary noise T_delta, all from the same white noise.
window = Lattice.centered(0.25, 8.0, 2)
b = make_bundle(bf, None, 4.0, 0.5, 0.01, window, seed=2024)
print("grid", b.lattice.shape, "eps grid", b.eps_lattice.shape)
print("sample variance of f   %.3f" % b.f.var())
print("sup |f - f_N| on B_1   %.2e" % local_gap(b)[0])
print("forced open/closed     %d / %d" % ((b.t_delta == 1).sum(), (b.t_delta == -1).sum()))

# Excursion sets {f_N^eps + T >= -level} grow with the level.
for level in (-0.5, 0.0, 0.5):
    grid = threshold(b, level)
    lab = label(grid)
    big = lab.sizes.max() if lab.count else 0
    print("level %+.1f: open %.2f, %3d clusters, largest %4d cells" % (level, grid.open.mean(), lab.count, big))

# Events are monotone: a crossing at one level persists above it.
square = CrossingEvent.square(8)
annulus = AdmissibleEvent(1, 4)
for level in np.linspace(-0.6, 0.6, 7):
    grid = threshold(b, level)
    print("level %+.2f  crossing %-5s  B_1 <-> B_4^c %s" % (level, occurs(grid, event=square),
                                                          occurs(grid, event=annulus)))

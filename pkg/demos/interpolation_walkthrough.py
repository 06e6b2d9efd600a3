"""
Interpolating between ranges N and 2N
=====================================

The comparison between the range-N and range-2N models swaps one box at a
time and pays for each swap with a small, summable increase of the level.
This script follows one coupled sample through the first few steps.
Run with ``python3 demos/interpolation_walkthrough.py``.
"""
import numpy as np

from gplab.interp import (InterpolationSetup, hybrid, inclusion_rate, sample_pair, sweep_to_limit, tau_at,
                          tau_normalization, trace)
from gplab.kernel import KernelSpec
from gplab.perc import AdmissibleEvent

# The sprinkling profile tau(y) = c_d / (1 + |x|_inf^(d+1)) sums to 1/2 over Z^d.
c, lo, hi = tau_normalization(2)
print("c_2 = %.10f  (series bracketed in [%.10f, %.10f])" % (c, lo, hi))

setup = InterpolationSetup(KernelSpec.bargmann_fock(2), N=4.0, s=0.5, eps_N=0.25, eps_2N=0.25, boxes=1)

# tau_k rises from 0 towards s on every box as boxes are processed.
for k in (0.5, 1, 4.5, 9):
    print("k=%4.1f  tau on the 9 window boxes:" % k, np.round(tau_at(setup, k).values, 3))
S, ok = sweep_to_limit(tau_at(setup, 9), tol=1e-2)
print("after %d boxes: max |tau - s| = %.4f (converged=%s)" % (S.k, np.max(np.abs(S.values - setup.s)), ok))

# One coupled sample: which cells change as boxes switch from the 2N to the N model.
pair = sample_pair(setup, seed=7, replica=0)
prev = hybrid(pair, 0).open
for k in (0.5, 1.0, 1.5, 2.0):
    cur = hybrid(pair, k).open
    print("k=%.1f  open %.3f  newly open %4d  newly closed %4d" % (k, cur.mean(), (cur & ~prev).sum(),
                                                                   (prev & ~cur).sum()))
    prev = cur

# Each full step only adds open cells; half steps may not, which is what the
# inclusion rate measures.
for row in trace(pair, AdmissibleEvent(0.5, 2.0), steps=4):
    print(row)
inc, suf = inclusion_rate(0, 200, setup, seed=1)
print("P[I_0 in I_1/2] ~ %.3f, sufficient event ~ %.3f" % (inc.estimate, suf.estimate))

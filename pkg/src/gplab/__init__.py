"""Percolation of Gaussian excursion sets through truncated, discretized white-noise fields."""
from . import field, interp, io, kernel, perc, rng, stats
from .errors import (BisectionNonBracketed, ConfigInvalid, GplabError, InsufficientHits, InsufficientPadding,
                     InvalidSchedule, NotPSD, QuadratureNonConvergent, WindowTooLarge, WindowTooSmall)
from .field import FieldBundle, Lattice, make_bundle
from .kernel import CutoffSpec, KernelSpec, bf_schedule, eval_kappa, eval_q, schedule
from .perc import AdmissibleEvent, CrossingEvent, OccupancyGrid, label, occurs, threshold
from .stats import EstimateReport, ModelSpec, bisect_lc, compare, estimate, fit_decay

__version__ = "0.1.0"

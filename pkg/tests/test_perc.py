import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gplab.errors import WindowTooSmall
from gplab.field import CLOSED, OPEN, Lattice, make_bundle
from gplab.kernel import KernelSpec
from gplab.perc import (CONTINUUM, AdmissibleEvent, CrossingEvent, OccupancyGrid, arm_radius, box_mask,
                        closed_pivotal, coarse_pivotal, event_threshold, grid_from_metadata, grid_metadata,
                        label, occurs, open_set, parse_event, read_pbm, threshold, write_pbm)

from oracles import bfs_components, canonical, full_space_masks, path_exists

BF2 = KernelSpec.bargmann_fock(2)


def grid_of(open_, eps=1.0):
    open_ = np.asarray(open_, dtype=bool)
    lo = tuple(-(n // 2) for n in open_.shape)
    return OccupancyGrid(Lattice(eps, lo, open_.shape), open_)


def random_grids(n, shape, seed, p=0.55):
    rng = np.random.default_rng(seed)
    return [rng.random(shape) < p for _ in range(n)]


# -- threshold -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def bundle():
    return make_bundle(BF2, None, 4.0, 0.25, 0.2, Lattice.centered(0.25, 3.0, 2), seed=5)


def test_huge_level_opens_every_neutral_cell():
    b = make_bundle(BF2, None, 4.0, 0.25, 0.0, Lattice.centered(0.25, 3.0, 2), seed=5)
    assert threshold(b, 1e9).open.all()


def test_forced_closed_stays_closed(bundle):
    g = threshold(bundle, 1e9)
    assert np.any(bundle.t_delta == CLOSED)
    assert not g.open[bundle.t_delta == CLOSED].any()
    assert g.open[bundle.t_delta == OPEN].all()
    assert not threshold(bundle, -1e9).open[bundle.t_delta != OPEN].any()


def test_threshold_nesting(bundle):
    levels = np.linspace(-2, 2, 21)
    grids = [threshold(bundle, l).open for l in levels]
    for a, b in zip(grids, grids[1:]):
        assert not np.any(a & ~b)


def test_threshold_rule_is_weak_inequality():
    v = np.array([[-0.5, 0.0, 0.5]])
    assert open_set(v, None, 0.0).tolist() == [[False, True, True]]


def test_continuum_tag_uses_untruncated_field(bundle):
    g = threshold(bundle, 0.1, CONTINUUM)
    assert np.array_equal(g.open, bundle.f_eps >= -0.1)
    assert g.tag == CONTINUUM


def test_threshold_rejects_infinite_level(bundle):
    with pytest.raises(ValueError):
        threshold(bundle, math.inf)


# -- labeling -------------------------------------------------------------------------

def test_all_closed_has_no_components():
    assert label(grid_of(np.zeros((8, 8)))).count == 0


def test_straight_line_is_one_component():
    g = np.zeros((9, 9), dtype=bool)
    g[4, 1:8] = True
    lab = label(grid_of(g))
    assert lab.count == 1 and lab.sizes.tolist() == [7]
    assert not lab.touches_boundary[0]


def test_diagonal_neighbours_are_not_adjacent():
    g = np.eye(5, dtype=bool)
    assert label(grid_of(g)).count == 5


def test_labels_match_bfs_on_random_grids():
    for g in random_grids(200, (16, 16), 1):
        lab = label(grid_of(g))
        ref, n = bfs_components(g)
        assert lab.count == n
        assert np.array_equal(canonical(lab.labels), canonical(ref))
        assert sorted(lab.sizes.tolist()) == sorted(np.bincount(ref.ravel())[1:].tolist())


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 9), st.integers(1, 9), st.integers(0, 2 ** 32 - 1), st.floats(0.2, 0.8))
def test_labels_match_bfs_property(h, w, seed, p):
    g = np.random.default_rng(seed).random((h, w)) < p
    lab = label(grid_of(g))
    ref, _ = bfs_components(g)
    assert np.array_equal(canonical(lab.labels), canonical(ref))


def test_label_permutation_invariance_and_idempotence():
    for g in random_grids(20, (12, 12), 2):
        lab = label(grid_of(g)).labels
        again = label(grid_of(lab > 0)).labels
        assert np.array_equal(canonical(lab), canonical(again))
        flipped = label(grid_of(g[::-1, ::-1])).labels[::-1, ::-1]
        assert np.array_equal(canonical(flipped), canonical(lab))


def test_label_3d_matches_bfs():
    for g in random_grids(20, (6, 6, 6), 3, p=0.35):
        ref, n = bfs_components(g)
        lab = label(grid_of(g))
        assert lab.count == n
        assert np.array_equal(canonical(lab.labels), canonical(ref))


def test_boundary_flags():
    g = np.zeros((6, 6), dtype=bool)
    g[0, 2] = True  # touches top edge
    g[3, 3] = True  # interior
    lab = label(grid_of(g))
    flags = {tuple(np.argwhere(lab.labels == i + 1)[0]): lab.touches_boundary[i] for i in range(lab.count)}
    assert flags == {(0, 2): True, (3, 3): False}


# -- events ----------------------------------------------------------------------------

def test_radial_path_to_edge_occurs():
    g = np.zeros((13, 13), dtype=bool)
    g[6, 6:] = True  # from the centre to the right edge
    assert occurs(grid_of(g), event=AdmissibleEvent(0, 4))


def test_all_closed_does_not_occur():
    assert not occurs(grid_of(np.zeros((13, 13))), event=AdmissibleEvent(1, 4))


def test_occurs_matches_path_search_oracle():
    ev = AdmissibleEvent(1, 4)
    mismatches = 0
    for g in random_grids(100, (12, 12), 4, p=0.6):
        grid = grid_of(g)
        masks = full_space_masks(g.shape, 1.0, grid.lattice.lo, 1, 4)
        mismatches += occurs(grid, event=ev) != path_exists(g, *masks)
    assert mismatches == 0


def test_event_masks_match_definition():
    lat = Lattice(0.5, (-7, -7), (15, 15))
    ours = AdmissibleEvent(1.0, 3.0).masks(lat)
    ref = full_space_masks(lat.shape, 0.5, lat.lo, 1.0, 3.0)
    for a, b in zip(ours, ref):
        assert np.array_equal(a, b)


def test_occurs_reuses_labeling():
    for g in random_grids(30, (12, 12), 5, p=0.6):
        grid = grid_of(g)
        ev = AdmissibleEvent(1, 4)
        assert occurs(grid, label(grid), ev) == occurs(grid, event=ev)


def test_occurs_requires_margin():
    with pytest.raises(WindowTooSmall):
        occurs(grid_of(np.ones((9, 9))), event=AdmissibleEvent(1, 4))


def test_occurs_monotone_under_promotions():
    rng = np.random.default_rng(6)
    ev = AdmissibleEvent(1, 4)
    for g in random_grids(40, (12, 12), 7, p=0.5):
        before = occurs(grid_of(g), event=ev)
        for _ in range(10):
            i, j = rng.integers(0, 12, 2)
            h = g.copy()
            h[i, j] = True
            if before:
                assert occurs(grid_of(h), event=ev)


def test_slab_event_restricts_domain():
    g = np.zeros((11, 11, 11), dtype=bool)
    # a path leaving the slab |x_3| <= 1 to go around
    g[5, 5, 5:10] = True
    g[5, 5:11, 9] = True
    grid = grid_of(g)
    assert occurs(grid, event=AdmissibleEvent(0, 4))
    assert not occurs(grid, event=AdmissibleEvent(0, 4, 1))
    g[5, 5:11, 5] = True
    assert occurs(grid_of(g), event=AdmissibleEvent(0, 4, 1))


def test_crossing_event():
    g = np.zeros((9, 9), dtype=bool)
    g[:, 4] = True  # spans axis 0
    grid = grid_of(g)
    assert occurs(grid, event=CrossingEvent.square(8))
    assert not occurs(grid, event=CrossingEvent((8, 8), axis=1))


def test_parse_event_round_trip():
    for text in ("full:1,4", "slab:0.5,3,1.25", "cross:32,16", "full:0.1,0.30000000000000004"):
        assert parse_event(parse_event(text).describe()).describe() == parse_event(text).describe()
    with pytest.raises(ValueError):
        parse_event("full:4,1")
    with pytest.raises(ValueError):
        parse_event("ring:1,2")


# -- pivotality -----------------------------------------------------------------------

def test_coarse_pivotal_false_when_event_survives_removal():
    g = np.zeros((13, 13), dtype=bool)
    g[6, 6:] = True
    assert not coarse_pivotal(grid_of(g), AdmissibleEvent(0, 4), (-4, -4), 1)


def test_box_alone_bridging_is_pivotal():
    g = np.zeros((13, 13), dtype=bool)
    ev = AdmissibleEvent(0, 2)
    assert coarse_pivotal(grid_of(g), ev, (0, 0), 3)
    assert closed_pivotal(grid_of(g), ev, (0, 0), 3)


def test_closed_pivotal_false_when_grid_in_event():
    g = np.zeros((13, 13), dtype=bool)
    g[6, 6:] = True
    assert not closed_pivotal(grid_of(g), AdmissibleEvent(0, 4), (0, 0), 1)


def test_pivotality_matches_definition_on_random_grids():
    ev = AdmissibleEvent(1, 4)
    rng = np.random.default_rng(8)
    for g in random_grids(60, (12, 12), 9, p=0.55):
        grid = grid_of(g)
        y = tuple(rng.integers(-4, 5, 2))
        L = int(rng.integers(0, 3))
        ball = box_mask(grid.lattice, y, L)
        masks = full_space_masks(g.shape, 1.0, grid.lattice.lo, 1, 4)
        union = path_exists(g | ball, *masks)
        assert coarse_pivotal(grid, ev, y, L) == (union and not path_exists(g & ~ball, *masks))
        assert closed_pivotal(grid, ev, y, L) == (union and not path_exists(g, *masks))


def test_union_conjunct_grows_with_box():
    ev = AdmissibleEvent(1, 4)
    for g in random_grids(40, (12, 12), 10, p=0.45):
        grid = grid_of(g)
        for L, L2 in ((0, 1), (1, 2), (1, 3)):
            small = box_mask(grid.lattice, (2, 1), L)
            big = box_mask(grid.lattice, (2, 1), L2)
            if occurs(grid.with_open(g | small), event=ev):
                assert occurs(grid.with_open(g | big), event=ev)


# -- thresholds and arms ------------------------------------------------------------

def test_event_threshold_is_exact_boundary(bundle):
    ev = AdmissibleEvent(0.5, 2.0)
    vals, t = bundle.f_N_eps, bundle.t_delta
    lt = event_threshold(vals, t, bundle.eps_lattice, ev)
    grid = lambda l: OccupancyGrid(bundle.eps_lattice, open_set(vals, t, l))
    if math.isfinite(lt):
        assert occurs(grid(lt), event=ev)
        assert not occurs(grid(np.nextafter(lt, -np.inf)), event=ev)
    # brute force scan over all candidate levels
    cands = np.unique(-vals)
    first = next((c for c in cands if occurs(grid(c), event=ev)), math.inf)
    if occurs(grid(cands[0] - 1), event=ev):
        first = -math.inf
    assert lt == first


def test_event_threshold_forced_outcomes():
    lat = Lattice(1.0, (-5, -5), (11, 11))
    vals = np.zeros(lat.shape)
    t = np.zeros(lat.shape, dtype=np.int8)
    t[5, 5:] = OPEN
    assert event_threshold(vals, t, lat, AdmissibleEvent(0, 3)) == -math.inf
    t[:] = 0
    t[:, 8] = CLOSED
    t[8, :] = CLOSED
    t[:, 2] = CLOSED
    t[2, :] = CLOSED
    assert event_threshold(vals, t, lat, AdmissibleEvent(0, 3)) == math.inf


def test_arm_radius_agrees_with_occurs():
    for g in random_grids(40, (21, 21), 11, p=0.6):
        grid = grid_of(g)
        arm = arm_radius(grid, 1.0)
        for R in (2, 4, 6, 8):
            assert (arm > R) == occurs(grid, event=AdmissibleEvent(1, R))


# -- I/O ---------------------------------------------------------------------------------

def test_pbm_round_trip(tmp_path):
    g = grid_of(np.random.default_rng(12).random((7, 11)) < 0.5)
    path = tmp_path / "g.pbm"
    write_pbm(path, g)
    assert path.read_text().startswith("P1\n11 7\n")
    back = grid_from_metadata(read_pbm(path), grid_metadata(g))
    assert np.array_equal(back.open, g.open)
    assert back.lattice == g.lattice

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import Motion, rect_corners, sampled_collision, sat_overlap
from rampmerge.collision import (MergeSequence, Segment2D, VehicleFootprint, classify_merge_gap,
                                 footprints_collide, quick_reject, segments_intersect,
                                 trajectories_collide)
from rampmerge.trajectory import Trajectory

coords = st.floats(-20.0, 20.0)
headings = st.floats(-math.pi, math.pi)
dims = st.floats(0.5, 8.0)


def test_crossing_segments():
    assert segments_intersect(Segment2D((0, 0), (2, 2)), Segment2D((0, 2), (2, 0)))


def test_parallel_disjoint_segments():
    assert not segments_intersect(Segment2D((0, 0), (2, 0)), Segment2D((0, 1), (2, 1)))


def test_collinear_disjoint_rejected_by_bounding_box():
    a, b = Segment2D((0, 0), (1, 0)), Segment2D((2, 0), (3, 0))
    assert not quick_reject(a, b)
    assert not segments_intersect(a, b)


def test_collinear_overlap_and_touching_count():
    assert segments_intersect(Segment2D((0, 0), (2, 0)), Segment2D((1, 0), (3, 0)))
    assert segments_intersect(Segment2D((0, 0), (1, 1)), Segment2D((1, 1), (2, 0)))


def test_contained_footprint_collides():
    big = VehicleFootprint((0.0, 0.0), 0.0, 10.0, 10.0)
    small = VehicleFootprint((1.0, 1.0), 0.3, 1.0, 1.0)
    assert footprints_collide(big, small) and footprints_collide(small, big)


def test_same_lane_bumpers():
    a = VehicleFootprint((0.0, 0.0), 0.0, 5.0, 2.0)
    assert footprints_collide(a, VehicleFootprint((4.9, 0.0), 0.0, 5.0, 2.0))
    assert not footprints_collide(a, VehicleFootprint((5.1, 0.0), 0.0, 5.0, 2.0))
    assert not footprints_collide(a, VehicleFootprint((0.0, 3.75), 0.0, 5.0, 2.0))


@given(coords, coords, headings, dims, dims, coords, coords, headings, dims, dims)
def test_footprints_match_separating_axis(x1, y1, h1, l1, w1, x2, y2, h2, l2, w2):
    f1 = VehicleFootprint((x1, y1), h1, l1, w1)
    f2 = VehicleFootprint((x2, y2), h2, l2, w2)
    expect = sat_overlap(rect_corners(x1, y1, h1, l1, w1), rect_corners(x2, y2, h2, l2, w2))
    assert footprints_collide(f1, f2) == expect


@given(coords, coords, headings, dims, dims, coords, coords, headings, dims, dims)
def test_footprint_collision_symmetric(x1, y1, h1, l1, w1, x2, y2, h2, l2, w2):
    f1 = VehicleFootprint((x1, y1), h1, l1, w1)
    f2 = VehicleFootprint((x2, y2), h2, l2, w2)
    assert footprints_collide(f1, f2) == footprints_collide(f2, f1)


def test_footprint_rejects_degenerate():
    with pytest.raises(ValueError):
        VehicleFootprint((0, 0), 0, 0.0, 2.0)


def collision_corpus(n=50, seed=11):
    """Pairs of vehicles on a two-lane road: following, lane changes into and out of
    gaps, braking leaders. Roughly half collide."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        lane_b = rng.choice([0.0, 3.75])
        a = Motion(0.0, 0.0, rng.uniform(15, 30), rng.uniform(-1, 1.5))
        lc = None
        if lane_b != 0.0:
            lc = (rng.uniform(0.0, 4.0), rng.uniform(3.0, 5.0), -3.75)
        b = Motion(rng.uniform(-30, 60), lane_b, rng.uniform(10, 30), rng.uniform(-3, 1), lc)
        out.append((a, b))
    return out


CORPUS = collision_corpus()


@pytest.mark.parametrize("k", range(len(CORPUS)))
def test_trajectories_collide_matches_fine_sampling(k):
    a, b = CORPUS[k]
    dt, tf = 0.1, 8.0
    got = trajectories_collide(a.trajectory(0.0, tf, dt), b.trajectory(0.0, tf, dt))
    assert (got is not None) == sampled_collision(a, b, 0.0, tf, dt / 100)


def test_corpus_has_both_outcomes():
    hits = [trajectories_collide(a.trajectory(0, 8, 0.1), b.trajectory(0, 8, 0.1)) is not None
            for a, b in CORPUS]
    assert 10 <= sum(hits) <= 40


def test_trajectories_collide_earliest_time():
    t = np.arange(0, 5.0001, 0.1)
    rear = Trajectory.constant_speed(0.0, 0.0, 20.0, t)
    front = Trajectory.constant_speed(20.0, 0.0, 10.0, t)
    # bumper gap 15 m closes at 10 m/s: contact at t = 1.5
    assert trajectories_collide(rear, front) == pytest.approx(1.5)


def test_trajectories_on_offset_timebase():
    t = np.arange(0, 3.0001, 0.1)
    a = Trajectory.constant_speed(0.0, 0.0, 10.0, t)
    b = Trajectory.constant_speed(100.0, 0.0, 10.0, t + 1.0)
    assert trajectories_collide(a, b) is None
    with pytest.raises(ValueError):
        trajectories_collide(a, Trajectory.constant_speed(0, 0, 1, t + 0.05))
    with pytest.raises(ValueError):
        trajectories_collide(a, Trajectory.constant_speed(0, 0, 1, np.arange(0, 3, 0.2)))


def _traj(x_end, y=0.0):
    t = np.arange(0, 2.0001, 0.1)
    return Trajectory.constant_speed(x_end - 40.0, y, 20.0, t)


def test_classify_merge_gap():
    vr = _traj(100.0)
    assert classify_merge_gap(vr, _traj(50.0), _traj(0.0)) == MergeSequence.AHEAD_OF_VMC
    assert classify_merge_gap(vr, _traj(150.0), _traj(50.0)) == MergeSequence.BETWEEN_VMC_AND_VMR
    assert classify_merge_gap(vr, None, None) == MergeSequence.AHEAD_OF_VMC
    assert classify_merge_gap(vr, _traj(102.0), _traj(98.0)) == MergeSequence.INFEASIBLE

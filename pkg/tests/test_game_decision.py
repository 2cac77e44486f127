import numpy as np
import pytest

from rampmerge.game_decision import (FV_TYPES, ActionProfile, Agent, FvAction, FvTypeDistribution,
                                     LaneChangeScene, SvAction, mixed_equilibrium, payoff_tensors,
                                     rollout_payoff, solve_stackelberg, sv_decide)


def test_type_distribution_validation():
    with pytest.raises(ValueError):
        FvTypeDistribution(0.5, 0.6, 0.2)
    assert FvTypeDistribution.point("normal").as_array().tolist() == [0.0, 1.0, 0.0]


def test_stackelberg_hand_solution():
    sv = np.zeros((2, 4, 3))
    fv = np.zeros((2, 4, 3))
    # under CHANGE_LANE the follower prefers DECELERATE (cheapest), giving SV cost 1
    fv[SvAction.CHANGE_LANE] = 5.0
    fv[SvAction.CHANGE_LANE, FvAction.DECELERATE] = 0.0
    sv[SvAction.CHANGE_LANE] = 10.0
    sv[SvAction.CHANGE_LANE, FvAction.DECELERATE] = 1.0
    # under KEEP the follower is indifferent (lowest index wins), SV cost 2
    sv[SvAction.KEEP_FOLLOWING] = 2.0
    d = solve_stackelberg(sv, fv, [0.2, 0.6, 0.2])
    assert d.sv_action == SvAction.CHANGE_LANE
    assert all(a == FvAction.DECELERATE for a in d.fv_response.values())
    assert d.expected_cost == pytest.approx((1.0, 2.0))


def test_stackelberg_type_mixture():
    sv = np.zeros((2, 4, 3))
    fv = np.ones((2, 4, 3))
    fv[SvAction.CHANGE_LANE, FvAction.ACCELERATE, 0] = 0.0  # aggressive follower closes the gap
    sv[SvAction.CHANGE_LANE, FvAction.ACCELERATE, 0] = 100.0
    sv[SvAction.KEEP_FOLLOWING] = 15.0
    # expected change cost = 0.2 * 100 = 20 > 15
    assert solve_stackelberg(sv, fv, [0.2, 0.6, 0.2]).sv_action == SvAction.KEEP_FOLLOWING
    assert solve_stackelberg(sv, fv, [0.1, 0.8, 0.1]).sv_action == SvAction.CHANGE_LANE


def test_ties_keep_following():
    sv = np.ones((2, 4, 3))
    assert solve_stackelberg(sv, sv, [0.2, 0.6, 0.2]).sv_action == SvAction.KEEP_FOLLOWING


def test_slow_leader_and_empty_target_lane_changes():
    scene = LaneChangeScene(Agent(0.0, 25.0), sv_leader=Agent(30.0, 12.0))
    assert sv_decide(scene).sv_action == SvAction.CHANGE_LANE


def test_follower_alongside_blocks_the_change():
    scene = LaneChangeScene(Agent(0.0, 25.0), fv=Agent(-3.0, 25.0), sv_leader=Agent(60.0, 20.0))
    assert sv_decide(scene).sv_action == SvAction.KEEP_FOLLOWING


def test_no_follower_tensor_is_flat_in_fv_action():
    scene = LaneChangeScene(Agent(0.0, 25.0), sv_leader=Agent(40.0, 20.0))
    sv_t, fv_t = payoff_tensors(scene)
    for f in FvAction:
        assert np.array_equal(sv_t[:, f, :], sv_t[:, FvAction.CONSTANT_SPEED, :])
    assert np.all(fv_t == 0)


def test_rollout_collision_penalty():
    scene = LaneChangeScene(Agent(0.0, 25.0), fv=Agent(-1.0, 25.0))
    crash = rollout_payoff(scene, ActionProfile(SvAction.CHANGE_LANE, FvAction.ACCELERATE), "normal")
    calm = rollout_payoff(scene, ActionProfile(SvAction.KEEP_FOLLOWING, FvAction.CONSTANT_SPEED), "normal")
    assert crash.sv > 1e3 > calm.sv


def test_rollout_deterministic():
    scene = LaneChangeScene(Agent(0.0, 25.0), Agent(-30.0, 27.0), Agent(40.0, 20.0), Agent(60.0, 28.0))
    for style in FV_TYPES:
        p = ActionProfile(SvAction.CHANGE_LANE, FvAction.DECELERATE)
        assert rollout_payoff(scene, p, style) == rollout_payoff(scene, p, style)


def test_mixed_equilibrium_matching_pennies():
    # SV cost: lose 1 on match; FV the opposite
    A = np.array([[1.0, -1.0], [-1.0, 1.0]])
    p, q = mixed_equilibrium(A, -A)
    assert p == pytest.approx([0.5, 0.5]) and q == pytest.approx([0.5, 0.5])


def test_mixed_equilibrium_dominant_strategy():
    A = np.array([[0.0, 0.0], [1.0, 1.0]])
    B = np.array([[1.0, 0.0], [1.0, 0.0]])
    p, q = mixed_equilibrium(A, B)
    assert p.tolist() == [1.0, 0.0] and q.tolist() == [0.0, 1.0]

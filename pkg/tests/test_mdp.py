import numpy as np
import pytest

from conftest import SIX, scenario_a, scenario_b, scenario_c
from mealdispatch.demand import load_profile, sample_day
from mealdispatch.mdp import (
    REJECT_REWARD, ActionKind, ActionLayout, StateEncoder, apply_action, reward, state_action_space_size,
)
from mealdispatch.region import generate_synthetic_region
from mealdispatch.simulation import EventKind, World


def _features(enc, x, cid):
    blk = x[cid * enc.block:(cid + 1) * enc.block]
    return blk[0] * enc.delta_scale, blk[1] * enc.dist_scale, blk[2:] * enc.dist_scale


def test_layout_round_trip():
    lay = ActionLayout(3, 4)
    assert lay.size == 3 + 2 + 4
    decoded = [lay.decode(i) for i in range(lay.size)]
    assert decoded[:3] == [(ActionKind.ASSIGN, c) for c in range(3)]
    assert decoded[3] == (ActionKind.REJECT, None)
    assert decoded[4] == (ActionKind.GO_DEPOT, None)
    assert decoded[5:] == [(ActionKind.GO_RESTAURANT, r) for r in range(4)]
    with pytest.raises(IndexError):
        lay.decode(lay.size)


def test_order_scenario_features_and_mask():
    w, ev = scenario_a()
    enc = StateEncoder(SIX, 2)
    x, m = enc.encode(w, ev)
    assert x.size == 2 * (2 + 2) + 2
    assert [round(_features(enc, x, c)[0], 9) for c in (0, 1)] == [10, 11]
    lay = enc.layout
    assert set(np.flatnonzero(m)) == {lay.reject, lay.assign(0), lay.assign(1)}
    assert x[-1] == 1.0


def test_idle_scenario_features_and_mask():
    w, ev = scenario_b()
    enc = StateEncoder(SIX, 2)
    x, m = enc.encode(w, ev)
    _, mu, eta = _features(enc, x, 0)
    assert round(mu, 9) == 5
    assert np.allclose(eta, [2, 4])
    lay = enc.layout
    assert set(np.flatnonzero(m)) == {lay.go_depot, lay.go_restaurant(0), lay.go_restaurant(1)}
    assert x[-1] == 0.0
    assert x[0] == 1.0 and x[enc.block] == 0.0  # deciding-courier marker


def test_third_scenario_mask():
    w, ev = scenario_c()
    enc = StateEncoder(SIX, 2)
    _, m = enc.encode(w, ev)
    lay = enc.layout
    assert set(np.flatnonzero(m)) == {lay.reject, lay.assign(0), lay.assign(1)}


def test_full_queue_masks_assign():
    w, ev = scenario_a()
    w.max_queue = 1
    _, m = StateEncoder(SIX, 2, max_queue=1).encode(w, ev)
    assert not m[0] and m[1] and m[2]


def test_reward_examples():
    assert reward(ActionKind.ASSIGN, 20) == 25
    assert reward(ActionKind.ASSIGN, 61) == -16
    assert reward(ActionKind.REJECT) == REJECT_REWARD == -15
    assert reward(ActionKind.GO_RESTAURANT, 4) == pytest.approx(-0.4)
    assert reward(ActionKind.ASSIGN, 20, rp=30) == 10


def test_apply_action_rewards_on_scenarios():
    w, ev = scenario_a()
    assert apply_action(w, ev, ActionKind.ASSIGN, 0) == 35
    w, ev = scenario_b()
    assert apply_action(w, ev, ActionKind.GO_RESTAURANT, 1) == pytest.approx(-0.4)
    w, ev = scenario_b()
    assert apply_action(w, ev, ActionKind.GO_DEPOT) == pytest.approx(-0.5)


def test_apply_action_rejects_wrong_family():
    w, ev = scenario_a()
    with pytest.raises(ValueError):
        apply_action(w, ev, ActionKind.GO_DEPOT)
    w, ev = scenario_b()
    with pytest.raises(ValueError):
        apply_action(w, ev, ActionKind.REJECT)


def test_state_action_space_counts():
    assert state_action_space_size(10, 7, 5, 2)["new_order_accept"] == 180
    assert state_action_space_size(10, 7, 5, 2)["delivered_go_restaurant"] == 630
    assert list(state_action_space_size(2, 3, 1, 1).values()) == [2, 2, 2, 6]
    with pytest.raises(ValueError):
        state_action_space_size(1, 1, 1, 1)


def test_single_courier_view_matches_one_courier_encoding():
    w, ev = scenario_a()
    enc1 = StateEncoder(SIX, 1)
    x, m = enc1.encode_courier(w, ev, 1)
    assert x.size == 2 + 2 + 2
    assert round(x[0] * enc1.delta_scale, 9) == 11
    assert m[enc1.layout.assign(0)] and m[enc1.layout.reject] and not m[enc1.layout.go_depot]


def test_encoder_courier_count_mismatch():
    w, ev = scenario_a()
    with pytest.raises(ValueError):
        StateEncoder(SIX, 3).encode(w, ev)


def test_day_long_invariants():
    reg = generate_synthetic_region(8, 8, 4, seed=2)
    w = World(reg, 3, sample_day(reg, load_profile(), 150, np.random.default_rng(0)))
    enc = StateEncoder(reg, 3)
    lay = enc.layout
    rng = np.random.default_rng(1)
    n = 0
    while (ev := w.next_event()) is not None:
        x, m = enc.encode(w, ev)
        x2, m2 = enc.encode(w, ev)
        assert np.array_equal(x, x2) and np.array_equal(m, m2)
        assert np.all(x >= 0) and np.all(x <= 1)
        order_family = m[:lay.reject + 1].any()
        idle_family = m[lay.go_depot:].any()
        assert order_family != idle_family
        assert (ev.kind is EventKind.ORDER_ARRIVAL) == order_family
        kind, arg = lay.decode(int(rng.choice(np.flatnonzero(m))))
        r = apply_action(w, ev, kind, arg)
        if kind in (ActionKind.GO_DEPOT, ActionKind.GO_RESTAURANT):
            assert -(reg.height + reg.width - 2) / 10 <= r <= 0
        n += 1
    w.finish()
    assert n > 150

import json
import math
import statistics

import numpy as np
import pytest

from conftest import SIX
from mealdispatch.agents import variant_config
from mealdispatch.baselines import P45, P60
from mealdispatch.demand import Order, load_profile
from mealdispatch.experiment import (
    TEST_PHASE, TRAIN_PHASE, ConfigError, ExperimentConfig, aggregate_metrics, day_metrics, delivery_stats,
    format_csv, load_experiment_config, load_policy, make_world, run_day, run_evaluation, run_sweep,
    run_training, hyperparameter_grid, reward_demand_grid, utilization,
)
from mealdispatch.neural import init_params, load_checkpoint
from mealdispatch.region import GridCoord, generate_synthetic_region
from mealdispatch.simulation import World

SMALL_AGENT = variant_config("DDQN_H+", hidden=(16,), batch_size=8, memory=200, target_update_steps=10)


def small_cfg(**kw):
    base = dict(region=generate_synthetic_region(6, 6, 3, seed=1), profile=load_profile(), agent=SMALL_AGENT,
                daily_orders=30, couriers=2, train_days=3, test_days=3, seed=11)
    base.update(kw)
    return ExperimentConfig(**base)


# ------------------------------------------------------------------ config
def test_config_round_trip(tmp_path):
    cfg = small_cfg(mode="multi", rp=30.0, max_queue=3)
    again = ExperimentConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert load_experiment_config(path) == cfg


def test_config_forms(tmp_path):
    cfg = ExperimentConfig.from_dict({"region": {"synthetic": {"height": 5, "width": 5, "n_restaurants": 2}},
                                      "agent": {"variant": "D3QN_S+", "gamma": 0.5}})
    assert cfg.region.height == 5 and cfg.agent.dueling and cfg.agent.update == "soft"
    assert cfg.agent.gamma == 0.5
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_dict({"orders": 3})
    with pytest.raises(ConfigError, match="mode"):
        small_cfg(mode="both")
    with pytest.raises(ConfigError, match="unknown override"):
        small_cfg().with_overrides(nonsense=1)
    assert small_cfg().with_overrides(gamma=0.1, rp=60.0).agent.gamma == 0.1


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError, match="missing.json"):
        load_experiment_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "seed": ,\n}')
    with pytest.raises(ConfigError, match=r"bad.json:2:\d+"):
        load_experiment_config(bad)


def test_training_demand_share():
    assert small_cfg(daily_orders=163, couriers=5).train_orders == 33
    assert small_cfg(daily_orders=163, couriers=5, mode="multi").train_orders == 163
    assert small_cfg(daily_orders=1, couriers=5).train_orders == 1
    assert small_cfg(daily_orders=0).train_orders == 0


# ----------------------------------------------------------------- metrics
def test_utilization_bounds():
    assert utilization(0, 960) == 0.0
    assert utilization(960, 960) == 1.0
    assert utilization(1200, 960) == 1.0
    with pytest.raises(ValueError):
        utilization(5, 0)


def test_idle_courier_has_zero_utilization():
    w = World(SIX, 2, [], day_start=480, day_end=1440)
    run_day(w, P45)
    m = day_metrics(w, 0.0)
    assert m.utilization == [0.0, 0.0] and m.n_orders == 0 and m.rejected_pct == 0.0
    assert math.isnan(m.delivery_mean)


def test_three_order_day_busy_minutes():
    # depot (5,5); r0 (3,0); r1 (1,4)
    orders = [
        Order(0, 0, GridCoord(3, 0), GridCoord(0, 0), 600, 2),   # reach 7, trip 3: busy 600..609
        Order(1, 1, GridCoord(1, 4), GridCoord(5, 4), 700, 10),  # reach 5, wait to 710, trip 4: 700..713
        Order(2, 0, GridCoord(3, 0), GridCoord(3, 3), 800, 1),   # reach 7, trip 3: 800..809
    ]
    w = World(SIX, 1, orders, day_start=480, day_end=1440)
    reward = run_day(w, P45)
    m = day_metrics(w, reward)
    assert [o.delivery_time for o in w.orders] == [10, 14, 10]
    assert m.busy_minutes == [34]
    assert m.utilization == [34 / 960]
    assert m.n_delivered == 3 and m.n_rejected == 0


def test_delivery_stats_buckets():
    s = delivery_stats([25, 26, 45, 46, 60, 61, 10, 10])
    assert s["buckets"] == {"le25": 37.5, "25_45": 25.0, "45_60": 25.0, "gt60": 12.5}
    assert s["median"] == 35.5 and s["min"] == 10 and s["max"] == 61


def test_evaluation_matches_order_log():
    cfg = small_cfg(couriers=1, daily_orders=60, test_days=4)
    ev = run_evaluation(cfg, P45, keep_orders=True)
    times = [r["delivered"] - r["placed"] for r in ev.order_log if r["status"] == "delivered"]
    s = ev.summary
    assert s.n_delivered == len(times) > 0
    assert s.delivery_mean == pytest.approx(statistics.fmean(times), abs=1e-12)
    assert s.delivery_median == statistics.median(times)
    assert s.delivery_std == pytest.approx(statistics.pstdev(times), abs=1e-12)
    assert (s.delivery_min, s.delivery_max) == (min(times), max(times))
    assert s.bucket_pct["le25"] == pytest.approx(100 * sum(t <= 25 for t in times) / len(times))
    n_rej = sum(r["status"] == "rejected" for r in ev.order_log)
    assert s.rejected_pct == pytest.approx(100 * n_rej / len(ev.order_log))
    assert s.cumulative_reward == pytest.approx(np.mean([d.cumulative_reward for d in ev.days]))


def test_conservation_each_day():
    cfg = small_cfg(couriers=1, daily_orders=80)
    for d in run_evaluation(cfg, P60).days:
        assert d.n_orders == d.n_delivered + d.n_rejected
        assert d.n_in_progress == 0


def test_aggregate_requires_days():
    with pytest.raises(ValueError):
        aggregate_metrics([], [])


def test_shared_test_streams():
    cfg = small_cfg()
    a = make_world(cfg, TEST_PHASE, 2)
    b = make_world(cfg, TEST_PHASE, 2)
    assert [(o.placed_minute, o.origin, o.destination, o.prep_time) for o in a.orders] == \
        [(o.placed_minute, o.origin, o.destination, o.prep_time) for o in b.orders]


# ---------------------------------------------------------------- training
def test_zero_days_saves_initial_parameters(tmp_path):
    cfg = small_cfg(train_days=0)
    res = run_training(cfg, tmp_path)
    params, header = load_checkpoint(res.checkpoint)
    init = init_params(res.encoder.feature_size, res.encoder.layout.size, SMALL_AGENT.hidden, seed=cfg.seed)
    assert np.array_equal(params.flat(), init.flat())
    assert header["step"] == 0
    assert (tmp_path / "training_log.csv").read_text().strip().split(",")[0] == "day"


def test_same_seed_same_log(tmp_path):
    cfg = small_cfg(train_days=4)
    a = run_training(cfg, tmp_path / "a")
    run_training(cfg, tmp_path / "b")
    assert (tmp_path / "a/training_log.csv").read_bytes() == (tmp_path / "b/training_log.csv").read_bytes()
    assert (tmp_path / "a/checkpoint.bin").read_bytes() == (tmp_path / "b/checkpoint.bin").read_bytes()
    assert a.agent.grad_steps > 0
    c = run_training(cfg.with_overrides(seed=12))
    assert format_csv(c.log) != format_csv(a.log)


def test_training_log_fields():
    res = run_training(small_cfg(train_days=3))
    assert [r["day"] for r in res.log] == [0, 1, 2]
    assert res.log[0]["epsilon"] == 1.0
    # single mode trains on one courier's share of the daily demand
    share = [len(make_world(small_cfg(), TRAIN_PHASE, d, 1, daily_orders=15).orders) for d in range(3)]
    assert [r["orders"] for r in res.log] == share
    assert sum(share) < sum(len(make_world(small_cfg(), TRAIN_PHASE, d).orders) for d in range(3))
    assert res.log[-1]["beta"] == 1.0


def test_multi_mode_checkpoint_needs_same_fleet(tmp_path):
    cfg = small_cfg(mode="multi", train_days=1)
    res = run_training(cfg, tmp_path)
    load_policy(res.checkpoint, cfg)
    with pytest.raises(ConfigError, match="2 couriers"):
        load_policy(res.checkpoint, cfg.with_overrides(couriers=3))
    single = run_training(small_cfg(train_days=1), tmp_path / "s")
    assert load_policy(single.checkpoint, small_cfg(couriers=4)).name == "shared-single-courier-q"


def test_missing_checkpoint_names_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.bin"):
        load_policy(tmp_path / "nope.bin", small_cfg())


# ------------------------------------------------------------------ sweeps
def test_grids():
    t4 = hyperparameter_grid()
    assert len(t4) == 16 and len({json.dumps(c, sort_keys=True) for c in t4}) == 16
    assert [c["gamma"] for c in t4] == [0.9] * 8 + [0.1] * 8
    t6 = reward_demand_grid()
    assert len(t6) == 9
    assert {(c["rp"], c["daily_orders"]) for c in t6} == {(r, n) for r in (30.0, 45.0, 60.0) for n in (120, 170, 220)}


def test_single_cell_and_error_cells():
    cfg = small_cfg(train_days=1, test_days=1)
    rows = run_sweep(cfg, [{"gamma": 0.5}, {"gamma": 2.0}, {"rp": 30.0}])
    assert len(rows) == 3
    assert rows[0]["error"] == "" and "reward" in rows[0]
    assert rows[1]["error"].startswith("ValueError") and "gamma" in rows[1]["error"]
    assert rows[2]["error"] == ""
    with pytest.raises(ConfigError):
        run_sweep(cfg, [])


def test_format_csv_is_exact():
    text = format_csv([{"a": 0.1, "b": 2}, {"a": float("nan"), "c": "x"}])
    assert text == "a,b,c\n0.1,2,\nnan,,x\n"

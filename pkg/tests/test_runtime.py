import numpy as np
import pytest

from r3l.config import RunConfig
from r3l.runtime import (
    ParameterSnapshot,
    SnapshotChannel,
    _build_handle,
    actor_loop,
    run_distributed,
    snapshot_digest,
)
from r3l.learner import create_learner
from r3l.synthetic import alternating_market


def runtime_cfg(**overrides) -> RunConfig:
    base = dict(
        source="alternating", window=3, alpha=0.875, n_quantiles=8, gru_layers=1,
        hidden_size=4, learning_rate=1e-3, batch_size=4, replay_capacity=128,
        replay_warmup=4, updates=6, t_target=2, t_actor=2, episode_horizon=6,
        eval_interval=0, checkpoint_interval=0, seed=11,
    )
    base.update(overrides)
    return RunConfig(**base).validate()


class ListSink:
    def __init__(self):
        self.items = []

    def put(self, item):
        self.items.append(item)


class StopAfter:
    """Stop signal that flips once the sink holds `n` transitions."""

    def __init__(self, sink, n):
        self.sink = sink
        self.n = n

    def is_set(self):
        return len(self.sink.items) >= self.n


class PresetStop:
    def is_set(self):
        return True


def _initial_snapshot(cfg, market):
    ls = create_learner(cfg, market.n_assets, np.random.default_rng(0))
    return ParameterSnapshot.build(0, ls.actor.export_arrays())


def test_preset_stop_produces_nothing():
    cfg = runtime_cfg()
    market = alternating_market(40)
    handle = _build_handle(0, cfg, market, np.random.SeedSequence(1))
    sink = ListSink()
    channel = SnapshotChannel()
    channel.publish(_initial_snapshot(cfg, market))
    produced = actor_loop(handle, channel, sink, PresetStop())
    assert produced == 0
    assert sink.items == []


def test_actor_loop_deterministic_given_seed():
    cfg = runtime_cfg()
    market = alternating_market(40)
    snapshot = _initial_snapshot(cfg, market)

    def run():
        handle = _build_handle(0, cfg, market, np.random.SeedSequence(5))
        channel = SnapshotChannel()
        channel.publish(snapshot)
        sink = ListSink()
        actor_loop(handle, channel, sink, StopAfter(sink, 10))
        return sink.items[:10]

    a, b = run(), run()
    assert len(a) == 10
    for (ka, ia, sa, va, tra), (kb, ib, sb, vb, trb) in zip(a, b):
        assert (ka, ia, sa, va) == (kb, ib, sb, vb)
        np.testing.assert_array_equal(tra.action, trb.action)
        assert tra.reward == trb.reward
        np.testing.assert_array_equal(tra.state.features, trb.state.features)


def test_snapshot_refresh_reflected_in_actions():
    # Sentinel parameters: a huge output bias on asset 0 makes post-refresh
    # actions allocate heavily there.
    cfg = runtime_cfg()
    market = alternating_market(40)
    base = _initial_snapshot(cfg, market)

    handle = _build_handle(0, cfg, market, np.random.SeedSequence(7))
    handle.schedule = None  # deterministic actions make the probe exact
    channel = SnapshotChannel()
    channel.publish(base)
    sink = ListSink()
    actor_loop(handle, channel, sink, StopAfter(sink, 4))
    assert handle.snapshot_version == 0

    sentinel = {name: arr.copy() for name, arr in base.arrays.items()}
    sentinel["actor.out.b"] = sentinel["actor.out.b"] + np.array([50.0, 0.0])
    channel.publish(ParameterSnapshot.build(3, sentinel))
    actor_loop(handle, channel, sink, StopAfter(sink, 8))
    assert handle.snapshot_version == 3
    early = sink.items[3][4]
    late = sink.items[7][4]
    assert late.action[0] > early.action[0]
    assert late.action[0] >= 1.99  # pinned against the weight ceiling


def test_snapshot_version_never_regresses():
    cfg = runtime_cfg()
    market = alternating_market(40)
    base = _initial_snapshot(cfg, market)
    handle = _build_handle(0, cfg, market, np.random.SeedSequence(9))
    channel = SnapshotChannel()
    channel.publish(ParameterSnapshot.build(5, base.arrays))
    sink = ListSink()
    actor_loop(handle, channel, sink, StopAfter(sink, 2))
    channel.publish(ParameterSnapshot.build(3, base.arrays))  # stale
    actor_loop(handle, channel, sink, StopAfter(sink, 4))
    assert handle.snapshot_version == 5


def test_torn_snapshot_detected():
    cfg = runtime_cfg()
    market = alternating_market(40)
    snap = _initial_snapshot(cfg, market)
    tampered = ParameterSnapshot(1, {k: v.copy() for k, v in snap.arrays.items()},
                                 snap.digest)
    key = next(iter(tampered.arrays))
    tampered.arrays[key][...] += 1.0
    with pytest.raises(RuntimeError, match="torn"):
        tampered.verify()
    assert snapshot_digest(snap.arrays) == snap.digest


def test_run_distributed_two_actors_no_loss():
    cfg = runtime_cfg(updates=6)
    market = alternating_market(40)
    result = run_distributed(cfg, market, actors=2)
    assert result.learner.updates == 6
    assert set(result.run_log.actor_reported) == {0, 1}
    for actor_id, reported in result.run_log.actor_reported.items():
        assert result.run_log.actor_received.get(actor_id, 0) == reported
    assert result.transitions_seen == sum(result.run_log.actor_reported.values())
    assert result.run_log.published_versions[0] == 0


def test_run_distributed_k1_falls_back_to_inline():
    cfg = runtime_cfg(updates=4, actors=1)
    market = alternating_market(40)
    from r3l.learner import TrainResult

    result = run_distributed(cfg, market)
    assert isinstance(result, TrainResult)
    assert result.learner.updates == 4

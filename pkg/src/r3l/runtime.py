"""Concurrent acting around a single learner (Ape-X style execution).

K acting workers each own an environment and a replica of the actor
network. They stream transitions through a bounded queue into the
learner's replay buffer; the learner periodically publishes immutable,
versioned parameter snapshots back. Snapshots travel as one message
with a content digest, so a reader either observes a complete
consistent snapshot or rejects it loudly; versions only move forward.

The same `actor_loop` drives both the in-process single-actor path and
the multiprocessing workers, so a K=1 run is behaviorally identical to
sequential execution.
"""

from __future__ import annotations

import hashlib
import pickle
import queue as queue_mod
import time
from dataclasses import dataclass, field

import numpy as np

from .actions import action_to_weights
from .config import RunConfig
from .data import MarketData, N_FEATURES, State
from .learner import (
    ExplorationSchedule,
    LearnerState,
    ReplayBuffer,
    TrainResult,
    actor_update,
    create_learner,
    critic_update,
    evaluate_policy,
    risk_config,
    select_action,
    sync_targets,
    train as train_inline,
    write_training_log,
    _write_checkpoint,
    _finalize,
)
from .nn import ActorNetwork
from .portfolio import PortfolioEnv


def snapshot_digest(arrays: dict[str, np.ndarray]) -> str:
    h = hashlib.blake2b(digest_size=16)
    for name in sorted(arrays):
        h.update(name.encode())
        h.update(np.ascontiguousarray(arrays[name]).tobytes())
    return h.hexdigest()


@dataclass(frozen=True)
class ParameterSnapshot:
    version: int
    arrays: dict[str, np.ndarray]
    digest: str

    @classmethod
    def build(cls, version: int, arrays: dict[str, np.ndarray]) -> "ParameterSnapshot":
        return cls(version, arrays, snapshot_digest(arrays))

    def verify(self) -> None:
        if snapshot_digest(self.arrays) != self.digest:
            raise RuntimeError(f"torn parameter snapshot at version {self.version}")


class SnapshotChannel:
    """Single-slot in-process channel: readers see the latest full snapshot."""

    def __init__(self):
        self._latest: ParameterSnapshot | None = None

    def publish(self, snapshot: ParameterSnapshot) -> None:
        self._latest = snapshot

    def poll(self) -> ParameterSnapshot | None:
        return self._latest


class QueueSnapshots:
    """Reader side of a per-actor snapshot queue (multiprocessing)."""

    def __init__(self, q):
        self._q = q
        self._latest: ParameterSnapshot | None = None

    def poll(self) -> ParameterSnapshot | None:
        while True:
            try:
                self._latest = self._q.get_nowait()
            except queue_mod.Empty:
                return self._latest


def publish_to_queue(q, snapshot: ParameterSnapshot) -> None:
    """Put the snapshot, displacing a stale undelivered one if needed."""
    while True:
        try:
            q.put_nowait(snapshot)
            return
        except queue_mod.Full:
            try:
                q.get_nowait()
            except queue_mod.Empty:
                pass


@dataclass
class ActorHandle:
    actor_id: int
    env: PortfolioEnv
    actor: ActorNetwork
    schedule: ExplorationSchedule
    delta: float
    episode_rng: np.random.Generator
    noise_rng: np.random.Generator
    snapshot_version: int = -1
    steps: int = 0
    state: State | None = field(default=None, repr=False)


def actor_loop(handle: ActorHandle, snapshots, sink, stop) -> int:
    """Act until stopped: refresh parameters, step, push the transition.

    Environment failures end the episode, not the loop. Returns the
    number of transitions produced.
    """
    while not stop.is_set():
        snap = snapshots.poll()
        if snap is not None and snap.version > handle.snapshot_version:
            snap.verify()
            handle.actor.load_arrays(snap.arrays)
            handle.snapshot_version = snap.version
        if handle.state is None:
            start = int(handle.episode_rng.integers(
                handle.env.min_start(), handle.env.max_start() + 1))
            handle.state = handle.env.reset(start)
        raw = select_action(handle.actor, handle.state, handle.schedule,
                            handle.steps, handle.noise_rng)
        weights = action_to_weights(raw, handle.delta)
        transition, done, _ = handle.env.step(weights)
        handle.state = None if done else transition.next_state
        sink.put(("tr", handle.actor_id, handle.steps, handle.snapshot_version, transition))
        handle.steps += 1
    return handle.steps


def _build_handle(actor_id: int, cfg: RunConfig, market: MarketData,
                  seed_seq: np.random.SeedSequence) -> ActorHandle:
    episode_rng, noise_rng = (np.random.default_rng(s) for s in seed_seq.spawn(2))
    env = PortfolioEnv(market, cfg.window, cfg.episode_horizon,
                       cfg.sell_cost, cfg.buy_cost, cfg.initial_money)
    actor = ActorNetwork.create(np.random.default_rng(0), market.n_assets * N_FEATURES,
                                cfg.hidden_size, cfg.gru_layers, market.n_assets)
    actor.set_requires_grad(False)
    return ActorHandle(
        actor_id=actor_id,
        env=env,
        actor=actor,
        schedule=ExplorationSchedule(cfg.sigma0, cfg.noise_decay, cfg.noise_clip),
        delta=cfg.delta,
        episode_rng=episode_rng,
        noise_rng=noise_rng,
    )


def _actor_worker(actor_id, cfg, market_blob, seed_seq, snap_q, sink_q, stop_event):
    market = pickle.loads(market_blob)
    handle = _build_handle(actor_id, cfg, market, seed_seq)
    snapshots = QueueSnapshots(snap_q)
    # Block until the initial parameter snapshot lands.
    while snapshots.poll() is None and not stop_event.is_set():
        time.sleep(0.005)
    sink = _BoundedSink(sink_q, stop_event)
    try:
        actor_loop(handle, snapshots, sink, stop_event)
        sink.flush()
    except _Stopped:
        pass
    sink_q.put(("done", actor_id, handle.steps, handle.snapshot_version))


class _Stopped(Exception):
    pass


ACTOR_FLUSH_SIZE = 32
ACTOR_FLUSH_AGE = 0.25


class _BoundedSink:
    """Queue putter that batches messages and yields on shutdown.

    Per-message pipe traffic dominates small-transition throughput, so
    transitions accumulate in a local buffer and ship as one queue item
    when it fills (or goes stale). `flush()` must run before the final
    done marker.
    """

    def __init__(self, q, stop_event):
        self._q = q
        self._stop = stop_event
        self._buffer: list = []
        self._last_flush = time.monotonic()

    def put(self, item) -> None:
        self._buffer.append(item)
        if (len(self._buffer) >= ACTOR_FLUSH_SIZE
                or time.monotonic() - self._last_flush > ACTOR_FLUSH_AGE):
            self.flush()

    def flush(self) -> None:
        if not self._buffer:
            return
        batch = ("batch", self._buffer)
        self._buffer = []
        self._last_flush = time.monotonic()
        while True:
            try:
                self._q.put(batch, timeout=0.1)
                return
            except queue_mod.Full:
                if self._stop.is_set():
                    raise _Stopped()


def _unwrap(msg):
    """Flatten batched sink messages into individual items."""
    if msg[0] == "batch":
        yield from msg[1]
    else:
        yield msg


@dataclass
class RunLog:
    actor_received: dict[int, int] = field(default_factory=dict)
    actor_reported: dict[int, int] = field(default_factory=dict)
    actor_last_version: dict[int, int] = field(default_factory=dict)
    published_versions: list[int] = field(default_factory=list)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            for actor_id in sorted(self.actor_received):
                fh.write(
                    f"actor {actor_id}: received={self.actor_received[actor_id]} "
                    f"reported={self.actor_reported.get(actor_id, -1)} "
                    f"last_snapshot={self.actor_last_version.get(actor_id, -1)}\n")
            fh.write(f"published_versions={self.published_versions}\n")


@dataclass
class DistributedResult:
    learner: LearnerState
    log_rows: list[tuple]
    run_log: RunLog
    transitions_seen: int


def run_distributed(
    cfg: RunConfig,
    train_market: MarketData,
    eval_market: MarketData | None = None,
    out_dir=None,
    actors: int | None = None,
    mp_context: str = "fork",
):
    """Train with K concurrent acting workers feeding one learner.

    K = 1 without an explicit actor count falls back to the inline
    single-process path, which is the deterministic mode.
    """
    k = cfg.actors if actors is None else actors
    if k < 1:
        raise ValueError("actor count must be >= 1")
    if actors is None and k == 1:
        return train_inline(cfg, train_market, eval_market, out_dir)

    import multiprocessing as mp

    ctx = mp.get_context(mp_context)
    ss = np.random.SeedSequence(cfg.seed)
    init_seq, replay_seq, *actor_seqs = ss.spawn(2 + k)
    init_rng = np.random.default_rng(init_seq)
    replay_rng = np.random.default_rng(replay_seq)

    ls = create_learner(cfg, train_market.n_assets, init_rng)
    rcfg = risk_config(cfg)
    replay = ReplayBuffer(cfg.replay_capacity)
    run_log = RunLog()

    sink_q = ctx.Queue(maxsize=cfg.queue_bound)
    snap_qs = [ctx.Queue(maxsize=2) for _ in range(k)]
    stop = ctx.Event()
    market_blob = pickle.dumps(train_market)

    def publish(version: int) -> None:
        snapshot = ParameterSnapshot.build(version, ls.actor.export_arrays())
        for q in snap_qs:
            publish_to_queue(q, snapshot)
        run_log.published_versions.append(version)

    workers = [
        ctx.Process(
            target=_actor_worker,
            args=(i, cfg, market_blob, actor_seqs[i], snap_qs[i], sink_q, stop),
            daemon=True,
        )
        for i in range(k)
    ]
    for w in workers:
        w.start()
    publish(0)

    done_markers: dict[int, tuple[int, int]] = {}

    def drain(block: bool, timeout: float = 0.5) -> int:
        got = 0
        while True:
            try:
                msg = sink_q.get(timeout=timeout) if block and got == 0 else sink_q.get_nowait()
            except queue_mod.Empty:
                return got
            for item in _unwrap(msg):
                if item[0] == "tr":
                    _, actor_id, _, version, transition = item
                    replay.push(transition)
                    run_log.actor_received[actor_id] = run_log.actor_received.get(actor_id, 0) + 1
                    run_log.actor_last_version[actor_id] = version
                    got += 1
                else:
                    _, actor_id, count, version = item
                    done_markers[actor_id] = (count, version)
                    run_log.actor_reported[actor_id] = count

    result_rows: list[tuple] = []
    transitions_seen = 0
    checkpoints: list[str] = []
    try:
        warmup = max(cfg.batch_size, min(cfg.replay_warmup, cfg.replay_capacity))
        deadline = time.monotonic() + 120.0
        while len(replay) < warmup:
            transitions_seen += drain(block=True)
            _check_workers(workers)
            if time.monotonic() > deadline:
                raise RuntimeError("actors produced no transitions within 120s")

        schedule = ExplorationSchedule(cfg.sigma0, cfg.noise_decay, cfg.noise_clip)
        for t in range(1, cfg.updates + 1):
            transitions_seen += drain(block=len(replay) < cfg.batch_size)
            batch = replay.sample(replay_rng, cfg.batch_size)
            closs = critic_update(ls, batch, rcfg, cfg.delta, cfg.episode_horizon)
            util = actor_update(ls, batch, rcfg, cfg.delta, cfg.episode_horizon)
            ls.updates = t
            if t % cfg.t_target == 0:
                sync_targets(ls, cfg.tau)
            if t % cfg.t_actor == 0:
                publish(t)
            eval_tr = eval_var = ""
            if eval_market is not None and cfg.eval_interval > 0 and t % cfg.eval_interval == 0:
                eval_tr, eval_var = evaluate_policy(ls.actor, eval_market, cfg)
            result_rows.append((t, closs, util, eval_tr, eval_var, schedule.sigma(t)))
            if out_dir is not None and cfg.checkpoint_interval > 0 and t % cfg.checkpoint_interval == 0:
                checkpoints.append(_write_checkpoint(out_dir, ls, t))
            _check_workers(workers)
    finally:
        stop.set()
        deadline = time.monotonic() + 30.0
        while len(done_markers) < k and time.monotonic() < deadline:
            transitions_seen += drain(block=True, timeout=0.2)
        transitions_seen += drain(block=False)
        for w in workers:
            w.join(timeout=10.0)
            if w.is_alive():
                w.terminate()

    result = TrainResult(ls, result_rows, transitions_seen, checkpoints)
    _finalize(cfg, ls, result, out_dir)
    if out_dir is not None:
        run_log.write(f"{out_dir}/run_log.txt")
    return DistributedResult(ls, result_rows, run_log, transitions_seen)


def _check_workers(workers) -> None:
    for w in workers:
        if not w.is_alive() and w.exitcode not in (0, None):
            raise RuntimeError(f"actor worker {w.name} crashed with exit code {w.exitcode}")


def measure_acting_throughput(
    cfg: RunConfig,
    market: MarketData,
    k: int,
    seconds: float = 5.0,
    mp_context: str = "fork",
) -> float:
    """Transitions per wall-clock second with K actors and an idle learner.

    Timing starts once every actor has delivered its first transition,
    so process startup is excluded from the measurement.
    """
    import multiprocessing as mp

    ctx = mp.get_context(mp_context)
    ss = np.random.SeedSequence(cfg.seed)
    init_seq, _, *actor_seqs = ss.spawn(2 + k)
    ls = create_learner(cfg, market.n_assets, np.random.default_rng(init_seq))

    sink_q = ctx.Queue(maxsize=cfg.queue_bound)
    snap_qs = [ctx.Queue(maxsize=2) for _ in range(k)]
    stop = ctx.Event()
    market_blob = pickle.dumps(market)
    snapshot = ParameterSnapshot.build(0, ls.actor.export_arrays())
    for q in snap_qs:
        publish_to_queue(q, snapshot)
    workers = [
        ctx.Process(
            target=_actor_worker,
            args=(i, cfg, market_blob, actor_seqs[i], snap_qs[i], sink_q, stop),
            daemon=True,
        )
        for i in range(k)
    ]
    for w in workers:
        w.start()

    seen_actors: set[int] = set()
    count = 0
    started = None
    try:
        warm_deadline = time.monotonic() + 60.0
        while len(seen_actors) < k:
            if time.monotonic() > warm_deadline:
                raise RuntimeError("actors failed to start producing")
            try:
                msg = sink_q.get(timeout=1.0)
            except queue_mod.Empty:
                continue
            for item in _unwrap(msg):
                if item[0] == "tr":
                    seen_actors.add(item[1])
        started = time.monotonic()
        cutoff = started + seconds
        while time.monotonic() < cutoff:
            try:
                msg = sink_q.get(timeout=0.1)
            except queue_mod.Empty:
                continue
            count += sum(1 for item in _unwrap(msg) if item[0] == "tr")
        elapsed = time.monotonic() - started
    finally:
        stop.set()
        drained_done = 0
        deadline = time.monotonic() + 15.0
        while drained_done < k and time.monotonic() < deadline:
            try:
                msg = sink_q.get(timeout=0.2)
            except queue_mod.Empty:
                continue
            drained_done += sum(1 for item in _unwrap(msg) if item[0] == "done")
        for w in workers:
            w.join(timeout=5.0)
            if w.is_alive():
                w.terminate()
    return count / elapsed

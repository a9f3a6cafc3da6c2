"""Study-session HTTP service: exploration episodes driven by human
frontier choices over a JSON API.

A session lays out one training round followed by three rounds per map
(rounds 1 and 2 share a start pose, round 3 gets a fresh one) and runs
them in order on a worker thread.  Each round's episode parks on a
relay planner until POST .../choice supplies a frontier; every executed
timestep publishes a snapshot to the round's event stream.  The export
endpoint emits a JSONL log that replays through the episode loop to the
exact recorded results.
"""

from __future__ import annotations

import base64
import hashlib
import json
import queue
import struct
import threading
import time
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse, StreamingResponse

from .episode import Episode, EpisodeConfig, sample_start
from .grids import Pose, to_grayscale
from .planners import HumanRelayPlanner

DEFAULT_PACING_MS = 30

_RUN = struct.Struct("<HB")  # run length u16 LE, cell value u8
_MAX_RUN = 0xFFFF
# population variance of values in [0,1] cannot exceed 1/4
_VARIANCE_FULL_SCALE = 0.25


# ---- wire encoding -----------------------------------------------------------


def encode_rle(values: np.ndarray) -> str:
    """Run-length encode a u8 raster (row-major) to base64."""
    flat = np.ascontiguousarray(values, dtype=np.uint8).reshape(-1)
    if flat.size == 0:
        return ""
    changes = np.flatnonzero(np.diff(flat)) + 1
    starts = np.concatenate([[0], changes])
    ends = np.concatenate([changes, [flat.size]])
    out = bytearray()
    for s, e in zip(starts, ends):
        n = int(e - s)
        v = int(flat[s])
        while n > 0:
            run = min(n, _MAX_RUN)
            out += _RUN.pack(run, v)
            n -= run
    return base64.b64encode(bytes(out)).decode("ascii")


def decode_rle(data: str, size: int) -> np.ndarray:
    raw = base64.b64decode(data)
    if len(raw) % _RUN.size:
        raise ValueError("truncated run-length payload")
    out = np.empty(size, dtype=np.uint8)
    pos = 0
    for off in range(0, len(raw), _RUN.size):
        count, value = _RUN.unpack_from(raw, off)
        if pos + count > size:
            raise ValueError("run-length payload overruns the raster")
        out[pos:pos + count] = value
        pos += count
    if pos != size:
        raise ValueError(f"run-length payload fills {pos} of {size} cells")
    return out


def quantize_mean(mean: np.ndarray) -> np.ndarray:
    return np.rint(np.asarray(mean, dtype=np.float64) * 255).astype(np.uint8)


def quantize_variance(variance: np.ndarray) -> np.ndarray:
    scaled = np.clip(np.asarray(variance, dtype=np.float64)
                     / _VARIANCE_FULL_SCALE, 0.0, 1.0)
    return np.rint(scaled * 255).astype(np.uint8)


def snapshot_hash(snapshot: dict) -> str:
    blob = json.dumps(snapshot, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# ---- session bookkeeping -----------------------------------------------------


@dataclass
class RoundSpec:
    index: int          # global 0-based; 0 is the training round
    kind: str           # "training" | "test"
    map_id: str
    start: tuple        # (x, y)
    round_in_map: int   # 1..3 for test rounds, 0 for training


@dataclass
class _Round:
    spec: RoundSpec
    relay: HumanRelayPlanner
    episode: Episode | None = None
    result: object | None = None
    latest: dict | None = None
    seq: int = 0
    slots_chosen: list = field(default_factory=list)
    subscribers: list = field(default_factory=list)

    @property
    def status(self) -> str:
        if self.result is not None:
            return "done"
        return "active" if self.episode is not None else "pending"


class StudySession:
    def __init__(self, sid, participant, specs, truths, ensembles, config,
                 pacing_s, relay_timeout_s=None):
        self.id = sid
        self.participant = participant
        self.created = datetime.now(timezone.utc).isoformat()
        self.config = config
        self.truths = truths          # map_id -> OccupancyGrid
        self.ensembles = ensembles    # map_id -> predictor list
        self.pacing_s = pacing_s
        self.lock = threading.Lock()
        self.rounds = [_Round(spec, HumanRelayPlanner(relay_timeout_s))
                       for spec in specs]
        self.choices = []             # export log entries, chronological
        self.active_idx = None
        self.complete = False
        self.error = None
        self._shutdown = False
        self._worker = threading.Thread(target=self._run, daemon=True,
                                        name=f"session-{sid}")
        self._worker.start()

    # ---- worker side ----

    def _run(self):
        try:
            for rnd in self.rounds:
                if self._shutdown:
                    break
                self._run_round(rnd)
        except Exception as exc:  # surfaced via GET /sessions/{id}
            with self.lock:
                self.error = f"{type(exc).__name__}: {exc}"
        finally:
            with self.lock:
                self.active_idx = None
                self.complete = self.error is None and not self._shutdown
            for rnd in self.rounds:
                self._close_stream(rnd)

    def _run_round(self, rnd):
        spec = rnd.spec
        truth = self.truths[spec.map_id]
        start_x, start_y = spec.start
        episode = Episode(truth, Pose(start_x, start_y),
                          self.ensembles[spec.map_id], rnd.relay, self.config)
        episode.timestep_hook = lambda ep: self._on_timestep(rnd, ep)
        with self.lock:
            rnd.episode = episode
            self.active_idx = spec.index
        self._publish(rnd, awaiting=False)
        while not episode.done and not self._shutdown:
            view = episode.plan()
            if view.action_set.valid_slots:
                self._publish(rnd, awaiting=True, view=view)
            decision = rnd.relay.decide(view)  # blocks on the human
            episode.execute(decision, view)
        with self.lock:
            rnd.result = episode.result()
        self._publish(rnd, awaiting=False)
        self._close_stream(rnd)

    def _on_timestep(self, rnd, episode):
        self._publish(rnd, awaiting=False)
        if self.pacing_s > 0:
            time.sleep(self.pacing_s)

    def _publish(self, rnd, awaiting, view=None):
        episode = rnd.episode
        snap = self._snapshot(rnd, episode, awaiting, view)
        with self.lock:
            rnd.seq += 1
            snap["seq"] = rnd.seq
            rnd.latest = snap
            for q in rnd.subscribers:
                q.put(snap)

    def _snapshot(self, rnd, episode, awaiting, view):
        observed = episode.state.observed
        bundle = episode.bundle
        h, w = observed.shape
        frontiers = []
        if awaiting and view is not None:
            for i in view.action_set.valid_slots:
                f = view.action_set.slots[i]
                frontiers.append({"slot": i,
                                  "center": [f.center.x, f.center.y],
                                  "utility": f.utility_score,
                                  "prediction": f.prediction_score,
                                  "path_m": f.path_length})
        snap = {
            "round": rnd.spec.index,
            "kind": rnd.spec.kind,
            "map": rnd.spec.map_id,
            "awaiting": awaiting,
            "terminal": episode.done,
            "robot": [episode.state.robot.x, episode.state.robot.y],
            "trajectory": [[p.x, p.y] for p in episode.state.trajectory],
            "b_r": episode.state.b_r,
            "budget": self.config.budget,
            "iou": episode.iou,
            "frontiers": frontiers,
            "grids": {
                "width": w,
                "height": h,
                "observed": encode_rle(to_grayscale(observed)),
                "mean": encode_rle(quantize_mean(bundle.mean.cells)),
                "variance": encode_rle(quantize_variance(bundle.variance)),
            },
        }
        if episode.done:
            result = episode.result()
            snap["study_reward"] = result.study_reward
            snap["terminal_reason"] = result.terminal_reason
        return snap

    def _close_stream(self, rnd):
        with self.lock:
            subscribers = list(rnd.subscribers)
        for q in subscribers:
            q.put(None)

    # ---- request side ----

    def submit(self, k, slot):
        """Returns (status_code, payload)."""
        with self.lock:
            if self.active_idx != k:
                return 409, {"error": "round_not_active",
                             "message": f"round {k} is not accepting choices"}
            latest = self.rounds[k].latest
        ok, msg = self.rounds[k].relay.submit(slot)
        # the awaiting snapshot goes out a moment before the relay parks;
        # bridge that gap so an eager client is not spuriously rejected
        deadline = time.monotonic() + 0.25
        while (not ok and msg == "no decision pending"
               and latest is not None and latest.get("awaiting")
               and time.monotonic() < deadline):
            time.sleep(0.005)
            ok, msg = self.rounds[k].relay.submit(slot)
            with self.lock:
                latest = self.rounds[k].latest
        if not ok:
            if "not a valid frontier" in msg:
                return 422, {"error": "invalid_frontier", "message": msg}
            return 409, {"error": "not_awaiting", "message": msg}
        entry = {"type": "choice", "round": k, "slot": slot,
                 "ts": datetime.now(timezone.utc).isoformat(),
                 "snapshot_hash": snapshot_hash(latest) if latest else None}
        with self.lock:
            self.choices.append(entry)
            self.rounds[k].slots_chosen.append(slot)
        return 200, {"ok": True, "round": k, "slot": slot}

    def describe(self):
        with self.lock:
            rounds = []
            for rnd in self.rounds:
                spec = rnd.spec
                row = {"round": spec.index, "kind": spec.kind,
                       "map": spec.map_id, "start": list(spec.start),
                       "round_in_map": spec.round_in_map,
                       "status": rnd.status}
                if rnd.result is not None:
                    row["final_iou"] = rnd.result.final_iou
                    row["study_reward"] = rnd.result.study_reward
                    row["b_r"] = rnd.result.b_r
                rounds.append(row)
            return {"id": self.id, "participant": self.participant,
                    "created": self.created, "complete": self.complete,
                    "error": self.error, "active_round": self.active_idx,
                    "budget": self.config.budget,
                    "iou_target": self.config.iou_target,
                    "rounds": rounds}

    def state_of(self, k):
        with self.lock:
            return self.rounds[k].latest

    def subscribe(self, k):
        """Latest snapshot plus a live queue (None when already finished)."""
        rnd = self.rounds[k]
        q = queue.Queue()
        with self.lock:
            latest = rnd.latest
            finished = rnd.result is not None
            if not finished:
                rnd.subscribers.append(q)
        return latest, (None if finished else q)

    def unsubscribe(self, k, q):
        with self.lock:
            if q in self.rounds[k].subscribers:
                self.rounds[k].subscribers.remove(q)

    def export_lines(self):
        with self.lock:
            header = {"type": "session", "id": self.id,
                      "participant": self.participant,
                      "created": self.created,
                      "budget": self.config.budget,
                      "iou_target": self.config.iou_target,
                      "rounds": [{"round": r.spec.index, "kind": r.spec.kind,
                                  "map": r.spec.map_id,
                                  "start": list(r.spec.start),
                                  "round_in_map": r.spec.round_in_map}
                                 for r in self.rounds]}
            lines = [header]
            for rnd in self.rounds:
                lines.extend(c for c in self.choices
                             if c["round"] == rnd.spec.index)
                if rnd.result is not None:
                    res = rnd.result
                    lines.append({"type": "round", "round": rnd.spec.index,
                                  "kind": rnd.spec.kind,
                                  "map": rnd.spec.map_id,
                                  "start": list(rnd.spec.start),
                                  "slots": list(rnd.slots_chosen),
                                  "final_iou": res.final_iou,
                                  "study_reward": res.study_reward,
                                  "b_r": res.b_r,
                                  "steps_used": res.steps_used,
                                  "terminal_reason": res.terminal_reason})
            return lines

    def shutdown(self):
        self._shutdown = True
        for rnd in self.rounds:
            rnd.relay.cancel()
        self._worker.join(timeout=10)


class SessionStore:
    def __init__(self, maps, ensemble_factory, config, seed, pacing_s,
                 training_map=None, relay_timeout_s=None):
        if not maps:
            raise ValueError("need at least one map")
        self.maps = list(maps)
        self.config = config
        self.seed = seed
        self.pacing_s = pacing_s
        self.relay_timeout_s = relay_timeout_s
        self.training_map = training_map or self.maps[0]
        self.truths = dict(self.maps)
        train_id, train_truth = self.training_map
        self.truths[train_id] = train_truth
        self.ensembles = {mid: ensemble_factory(truth)
                          for mid, truth in self.truths.items()}
        self.sessions = {}
        self.lock = threading.Lock()
        self._counter = 0
        self.shutting_down = False

    def _layout_rounds(self, session_idx):
        """One training round, then 3 rounds per map; rounds 1 and 2 share
        the start pose, round 3 uses a different one."""
        train_id, train_truth = self.training_map
        rng = np.random.default_rng([self.seed, session_idx, 0, 0])
        start = sample_start(train_truth, rng)
        specs = [RoundSpec(0, "training", train_id, (start.x, start.y), 0)]
        k = 1
        for map_idx, (map_id, truth) in enumerate(self.maps):
            rng = np.random.default_rng([self.seed, session_idx, map_idx, 1])
            first = sample_start(truth, rng)
            third = sample_start(truth, rng)
            for _ in range(32):
                if (third.x, third.y) != (first.x, first.y):
                    break
                third = sample_start(truth, rng)
            for j, pose in enumerate((first, first, third), start=1):
                specs.append(RoundSpec(k, "test", map_id, (pose.x, pose.y), j))
                k += 1
        return specs

    def create(self, participant):
        with self.lock:
            session_idx = self._counter
            self._counter += 1
        sid = uuid.uuid4().hex[:12]
        session = StudySession(sid, participant, self._layout_rounds(session_idx),
                               self.truths, self.ensembles, self.config,
                               self.pacing_s, self.relay_timeout_s)
        with self.lock:
            self.sessions[sid] = session
        return session

    def get(self, sid):
        with self.lock:
            return self.sessions.get(sid)

    def shutdown(self):
        self.shutting_down = True
        with self.lock:
            sessions = list(self.sessions.values())
        for session in sessions:
            session.shutdown()


# ---- HTTP app ----------------------------------------------------------------


def _error(status, code, message):
    return JSONResponse({"error": code, "message": message},
                        status_code=status)


def create_app(maps, ensemble_factory, config=None, seed=0,
               pacing_ms=DEFAULT_PACING_MS, training_map=None,
               relay_timeout_s=None):
    config = config or EpisodeConfig()
    store = SessionStore(maps, ensemble_factory, config, seed,
                         pacing_ms / 1000.0, training_map, relay_timeout_s)

    @asynccontextmanager
    async def lifespan(app):
        yield
        store.shutdown()

    app = FastAPI(title="frontier-lab sessions", lifespan=lifespan)
    app.state.store = store

    def resolve(sid, k=None):
        session = store.get(sid)
        if session is None:
            return None, _error(404, "unknown_session", f"no session {sid}")
        if k is not None and not 0 <= k < len(session.rounds):
            return None, _error(404, "unknown_round",
                                f"round {k} of {len(session.rounds)} rounds")
        return session, None

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        try:
            payload = await request.json()
        except Exception:
            payload = {}
        participant = str(payload.get("participant", "anonymous"))
        session = store.create(participant)
        return session.describe()

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        session, err = resolve(sid)
        return err if err else session.describe()

    @app.get("/sessions/{sid}/rounds/{k}/state")
    def get_state(sid: str, k: int):
        session, err = resolve(sid, k)
        if err:
            return err
        snap = session.state_of(k)
        if snap is None:
            return _error(409, "round_not_started",
                          f"round {k} has not started")
        return snap

    @app.post("/sessions/{sid}/rounds/{k}/choice")
    async def post_choice(sid: str, k: int, request: Request):
        session, err = resolve(sid, k)
        if err:
            return err
        try:
            payload = await request.json()
            slot = int(payload["frontier"])
        except Exception:
            return _error(422, "bad_request",
                          "body must be JSON {\"frontier\": index}")
        status, body = session.submit(k, slot)
        if status != 200:
            return JSONResponse(body, status_code=status)
        return body

    @app.get("/sessions/{sid}/rounds/{k}/stream")
    def stream(sid: str, k: int):
        session, err = resolve(sid, k)
        if err:
            return err

        latest, live = session.subscribe(k)

        def frames():
            try:
                if latest is not None:
                    yield f"data: {json.dumps(latest, sort_keys=True)}\n\n"
                    if latest.get("terminal"):
                        return
                if live is None:
                    return
                while True:
                    try:
                        snap = live.get(timeout=0.5)
                    except queue.Empty:
                        if store.shutting_down:
                            return
                        continue
                    if snap is None:
                        return
                    yield f"data: {json.dumps(snap, sort_keys=True)}\n\n"
                    if snap.get("terminal"):
                        return
            finally:
                if live is not None:
                    session.unsubscribe(k, live)

        return StreamingResponse(frames(), media_type="text/event-stream")

    @app.get("/sessions/{sid}/export")
    def export(sid: str):
        session, err = resolve(sid)
        if err:
            return err
        body = "\n".join(json.dumps(line, sort_keys=True)
                         for line in session.export_lines()) + "\n"
        return PlainTextResponse(body, media_type="application/x-ndjson")

    return app

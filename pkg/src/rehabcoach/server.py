"""WebSocket service for coaching sessions.

One connection drives one session.  The first inbound message must be a
``hello`` carrying the protocol version and the session configuration;
after that the client sends control messages and, in live mode, skeleton
frames.  In replay mode the server itself pumps frames from pre-recorded
clips whenever the client issues the start cue, which exercises the full
pipeline without a sensor attached.

A client that reconnects with the session id of a still-open session
receives the whole logged message history before new output, so a
dropped connection does not lose the session.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from websockets.sync.server import serve

from .errors import CoachError, ConfigError, ProtocolError
from .fsm import CoachState
from .hybrid import ExerciseModels
from .session import (CoachSession, ProfileStore, PROTOCOL_VERSION,
                      SessionConfig, load_profile_or_none)
from .skeleton import N_JOINTS, MotionClip, SkeletonFrame, load_clip

logger = logging.getLogger(__name__)


def frame_from_message(msg: Mapping) -> SkeletonFrame:
    """Validate and decode an inbound frame message."""
    try:
        t = float(msg["t"])
        joints = np.asarray(msg["joints"], dtype=np.float64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ProtocolError(f"bad frame message: {exc}")
    if joints.shape != (N_JOINTS, 3):
        raise ProtocolError(
            f"frame joints must be {N_JOINTS}x3, got {joints.shape}")
    if not np.isfinite(joints).all():
        raise ProtocolError("frame joints contain non-finite values")
    return SkeletonFrame(t, joints)


def parse_message(raw: str | bytes) -> dict:
    try:
        msg = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"message is not valid JSON: {exc}")
    if not isinstance(msg, dict) or "type" not in msg:
        raise ProtocolError("message must be a JSON object with a 'type'")
    return msg


class CoachServer:
    """Serves the session protocol over WebSocket text frames."""

    def __init__(self, host: str = "127.0.0.1", port: int = 8765,
                 models: Mapping[str, ExerciseModels] | None = None,
                 profiles: ProfileStore | None = None,
                 replay_clips: Sequence[MotionClip] = (),
                 log_dir: str | Path | None = None,
                 pace: bool = False):
        self.host = host
        self.port = port
        self.models = models
        self.profiles = profiles
        self.replay_clips = list(replay_clips)
        self.log_dir = Path(log_dir) if log_dir else None
        self.pace = pace
        self._sessions: dict[str, CoachSession] = {}
        self._replay_cursor: dict[str, int] = {}
        self._lock = threading.Lock()
        self._server = None
        self._thread: threading.Thread | None = None

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> int:
        """Bind and serve in a background thread; returns the bound port."""
        self._server = serve(self._handle, self.host, self.port)
        self.port = self._server.socket.getsockname()[1]
        self._thread = threading.Thread(target=self._server.serve_forever,
                                        name="coach-server", daemon=True)
        self._thread.start()
        logger.info("listening on ws://%s:%d", self.host, self.port)
        return self.port

    def serve_forever(self) -> None:
        with serve(self._handle, self.host, self.port) as server:
            self._server = server
            self.port = server.socket.getsockname()[1]
            print(f"listening on ws://{self.host}:{self.port}", flush=True)
            server.serve_forever()

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=5)

    # -- connection handling -------------------------------------------------

    def _send(self, ws, messages: Sequence[Mapping]) -> None:
        for msg in messages:
            ws.send(json.dumps(msg, sort_keys=True))

    def _error(self, ws, text: str) -> None:
        ws.send(json.dumps({"type": "error", "message": text},
                           sort_keys=True))

    def _handle(self, ws) -> None:
        try:
            session, resumed = self._handshake(ws)
        except (ProtocolError, ConfigError) as exc:
            logger.warning("handshake failed: %s", exc)
            try:
                self._error(ws, str(exc))
            except Exception:
                pass
            return
        if session is None:
            return
        try:
            self._session_loop(ws, session)
        except Exception as exc:  # connection drop is routine
            logger.info("connection ended: %s", exc)
        finally:
            self._persist_log(session)

    def _handshake(self, ws) -> tuple[CoachSession | None, bool]:
        raw = ws.recv()
        msg = parse_message(raw)
        if msg["type"] != "hello":
            raise ProtocolError(f"expected hello, got {msg['type']!r}")
        version = msg.get("protocol_version")
        if version != PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol version {version!r} unsupported, "
                f"server speaks {PROTOCOL_VERSION}")
        session_id = str(msg.get("session_id") or f"anon-{id(ws)}")
        with self._lock:
            existing = self._sessions.get(session_id)
        if existing is not None:
            logger.info("resuming session %s", session_id)
            self._send(ws, existing.log.events)
            return existing, True
        config = SessionConfig.from_json(msg.get("config") or {})
        profile = None
        if self.profiles is not None:
            profile = load_profile_or_none(self.profiles, config.subject_id)
        session = CoachSession(config, self.models, profile)
        session.session_id = session_id
        with self._lock:
            self._sessions[session_id] = session
            self._replay_cursor[session_id] = 0
        self._send(ws, session.begin())
        return session, False

    def _session_loop(self, ws, session: CoachSession) -> None:
        for raw in ws:
            try:
                msg = parse_message(raw)
            except ProtocolError as exc:
                self._error(ws, str(exc))
                continue
            kind = msg["type"]
            try:
                if kind == "ready":
                    self._send(ws, session.confirm_ready())
                elif kind == "start_cue":
                    self._send(ws, session.start_cue())
                    if self.replay_clips and \
                            session.state is CoachState.MOVEMENT:
                        self._pump_replay(ws, session)
                elif kind == "demo_skip":
                    self._send(ws, session.demo_done(skipped=True))
                elif kind == "demo_end":
                    self._send(ws, session.demo_done())
                elif kind == "frame":
                    frame = frame_from_message(msg)
                    if frame.t < session.t:
                        logger.warning("dropping stale frame t=%.3f", frame.t)
                        continue
                    self._send(ws, session.push_frame(frame))
                elif kind == "rep_end":
                    self._send(ws, session.end_motion())
                elif kind == "quit":
                    self._send(ws, session.quit())
                elif kind == "hello":
                    self._error(ws, "session already started")
                else:
                    logger.warning("unknown message type %r", kind)
                    self._error(ws, f"unknown message type {kind!r}")
            except ProtocolError as exc:
                self._error(ws, str(exc))
            except CoachError as exc:
                self._send(ws, session.abort(str(exc)))
            if session.done:
                break

    def _pump_replay(self, ws, session: CoachSession) -> None:
        """Feed the next matching pre-recorded clip as the user's motion."""
        clip = self._next_replay_clip(session)
        if clip is None:
            self._send(ws, session.abort(
                f"no replay clip available for {session.exercise.value}"))
            return
        for frame in clip.frames:
            self._send(ws, session.push_frame(frame))
            if self.pace:
                time.sleep(1.0 / 30.0)
            if session.done:
                return
        self._send(ws, session.end_motion())

    def _next_replay_clip(self, session: CoachSession) -> MotionClip | None:
        sid = getattr(session, "session_id", "")
        with self._lock:
            start = self._replay_cursor.get(sid, 0)
        n = len(self.replay_clips)
        for offset in range(n):
            clip = self.replay_clips[(start + offset) % n]
            if clip.exercise is session.exercise:
                with self._lock:
                    self._replay_cursor[sid] = (start + offset + 1) % n
                return clip
        return None

    def _persist_log(self, session: CoachSession) -> None:
        if self.log_dir is None or not session.log.events:
            return
        sid = getattr(session, "session_id", "session")
        try:
            session.log.save(self.log_dir / f"{sid}.jsonl")
        except OSError as exc:
            logger.warning("could not persist session log: %s", exc)


def load_replay_clips(paths: Sequence[str | Path]) -> list[MotionClip]:
    clips = []
    for path in paths:
        clips.append(load_clip(path))
    return clips

"""Newline-delimited JSON server exposing the environment over TCP.

One session per connection. See PROTOCOL.md for the message formats.
"""
from __future__ import annotations

import itertools
import json
import logging
import socket
import socketserver
import threading
import time
from dataclasses import dataclass, field

from .env import OBS_DIM, N_ACTIONS, EnvConfig, RideHailEnv

PROTOCOL_VERSION = 1
DEFAULT_PORT = 7788

log = logging.getLogger(__name__)


@dataclass
class Session:
    id: int
    env: RideHailEnv
    config: EnvConfig
    steps: int = 0
    active: bool = False  # an episode has been reset and is not finished
    last_activity: float = field(default_factory=time.monotonic)

    def handle(self, line: str | bytes) -> tuple[dict, bool]:
        """Process one request line; returns (response, keep_open)."""
        self.last_activity = time.monotonic()
        try:
            req = json.loads(line)
        except (ValueError, UnicodeDecodeError):
            return _err("parse"), True
        if not isinstance(req, dict):
            return _err("parse"), True
        cmd = req.get("cmd")
        if cmd == "hello":
            return {"ok": True, "proto": PROTOCOL_VERSION, "obs_dim": OBS_DIM,
                    "actions": N_ACTIONS, "session": self.id}, True
        if cmd == "reset":
            seed = req.get("seed", self.config.seed)
            if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
                return _err("bad_seed"), True
            obs = self.env.reset(seed)
            self.steps = 0
            self.active = True
            return {"ok": True, "obs": list(obs)}, True
        if cmd == "step":
            if self.env.state is None:
                return _err("no_episode"), True
            if not self.active:
                return _err("finished"), True
            action = req.get("action")
            if action not in (0, 1) or isinstance(action, bool):
                return _err("bad_action"), True
            res = self.env.step(action)
            self.steps += 1
            self.active = not res.done
            return {"ok": True, "obs": list(res.observation), "reward": res.reward,
                    "done": res.done, "info": res.info}, True
        if cmd == "close":
            return {"ok": True, "closed": True}, False
        return _err("unknown_cmd"), True


def _err(code: str) -> dict:
    return {"ok": False, "error": code}


def encode(msg: dict) -> bytes:
    # json writes floats with repr(), which round-trips exactly
    return json.dumps(msg, allow_nan=False).encode() + b"\n"


class _Handler(socketserver.StreamRequestHandler):
    def handle(self):
        server: EnvServer = self.server
        session = server.open_session()
        if server.idle_timeout:
            self.request.settimeout(server.idle_timeout)
        try:
            for line in self.rfile:
                if not line.strip():
                    continue
                resp, keep = session.handle(line)
                self.wfile.write(encode(resp))
                self.wfile.flush()
                if not keep:
                    break
        except (socket.timeout, ConnectionError, OSError) as exc:
            log.info("session %d ended: %s", session.id, exc)
        finally:
            server.close_session(session.id)


class EnvServer(socketserver.ThreadingTCPServer):
    """Threaded server; each connection gets its own environment instance."""

    daemon_threads = True
    allow_reuse_address = False

    def __init__(self, address, config: EnvConfig, idle_timeout: float | None = 300.0):
        self.config = config
        self.idle_timeout = idle_timeout
        self.sessions: dict[int, Session] = {}
        self._lock = threading.Lock()
        self._ids = itertools.count(1)
        config.validate()
        super().__init__(address, _Handler)

    def open_session(self) -> Session:
        with self._lock:
            sid = next(self._ids)
            s = Session(sid, RideHailEnv(self.config), self.config)
            self.sessions[sid] = s
            return s

    def close_session(self, sid: int) -> None:
        with self._lock:
            self.sessions.pop(sid, None)

    @property
    def port(self) -> int:
        return self.server_address[1]


def serve(config: EnvConfig, host: str = "127.0.0.1", port: int = DEFAULT_PORT,
          idle_timeout: float | None = 300.0) -> None:
    """Run until interrupted. Raises OSError if the port cannot be bound."""
    with EnvServer((host, port), config, idle_timeout) as srv:
        log.info("serving on %s:%d", host, srv.port)
        try:
            srv.serve_forever()
        except KeyboardInterrupt:
            pass


class EnvClient:
    """Minimal blocking client, mostly for tests and scripting."""

    def __init__(self, host: str = "127.0.0.1", port: int = DEFAULT_PORT, timeout: float = 30.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self.rfile = self.sock.makefile("rb")

    def request(self, msg: dict | str) -> dict:
        data = msg if isinstance(msg, str) else json.dumps(msg)
        self.sock.sendall(data.encode() + b"\n")
        line = self.rfile.readline()
        if not line:
            raise ConnectionError("server closed the connection")
        return json.loads(line)

    def close(self) -> None:
        try:
            self.request({"cmd": "close"})
        except (OSError, ConnectionError):
            pass
        self.rfile.close()
        self.sock.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

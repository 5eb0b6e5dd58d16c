"""Child-process session speaking the pomdp-forge bridge protocol.

Protocol: one JSON object per line over the child's stdin/stdout; requests
carry a strictly increasing integer ``id`` which every response echoes; at
most one request is in flight per session. Ops: hello, reset, step, close.
"""

from __future__ import annotations

import json
import shutil
import subprocess

PROTOCOL_VERSION = "pomdp-forge-bridge/1"


class BridgeError(Exception):
    """Base class for bridge-side failures."""


class ProtocolError(BridgeError):
    """Malformed, mismatched, or version-incompatible response."""


class ChildExited(BridgeError):
    """The serving process went away mid-session."""


class EpisodeFinished(BridgeError):
    """step() outside an active episode (server-reported)."""


class BridgeSession:
    """One environment served by one child process.

    The session is stateless across episodes apart from the spec binding:
    killing the child and reopening a session on the same spec file
    reproduces every episode exactly.
    """

    def __init__(self, spec_path: str, command=None,
                 expected_digest: str | None = None):
        if command is None:
            exe = shutil.which("pomdp-forge")
            if exe is None:
                raise ChildExited("pomdp-forge not found on PATH; pass command=")
            command = (exe,)
        self._proc = subprocess.Popen(
            [*command, "serve", "--spec", str(spec_path)],
            stdin=subprocess.PIPE, stdout=subprocess.PIPE, text=True,
            bufsize=1)
        self._next_id = 1
        self.spec_digest: str | None = None
        hello = self._request({"op": "hello"})
        if hello.get("protocol") != PROTOCOL_VERSION:
            self.close()
            raise ProtocolError(
                f"protocol mismatch: server speaks {hello.get('protocol')!r}, "
                f"client speaks {PROTOCOL_VERSION!r}")
        self.spec_digest = hello["spec_digest"]
        if expected_digest is not None and self.spec_digest != expected_digest:
            self.close()
            raise ProtocolError(
                f"spec digest mismatch: server {self.spec_digest}, "
                f"expected {expected_digest}")

    # -- plumbing -----------------------------------------------------------

    def _request(self, payload: dict) -> dict:
        if self._proc.poll() is not None:
            raise ChildExited(f"server exited with code {self._proc.returncode}")
        rid = self._next_id
        self._next_id += 1
        msg = dict(payload)
        msg["id"] = rid
        try:
            self._proc.stdin.write(json.dumps(msg) + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ChildExited(f"server pipe closed: {exc}") from exc
        line = self._proc.stdout.readline()
        if not line:
            raise ChildExited("server closed stdout")
        try:
            reply = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"unparseable response {line!r}") from exc
        if reply.get("id") != rid:
            raise ProtocolError(f"response id {reply.get('id')!r} != request id {rid}")
        if not reply.get("ok"):
            error = reply.get("error", "ProtocolError")
            message = reply.get("message", "")
            if error == "EpisodeFinished":
                raise EpisodeFinished(message)
            raise ProtocolError(f"{error}: {message}")
        return reply

    # -- protocol ops --------------------------------------------------------

    def reset(self, episode_index: int) -> list:
        reply = self._request({"op": "reset", "episode": episode_index})
        return reply["obs"]

    def step(self, action):
        reply = self._request({"op": "step", "action": action})
        return reply["obs"], reply["reward"], reply["done"]

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._request({"op": "close"})
            except BridgeError:
                pass
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.wait(timeout=10)

    def __enter__(self) -> "BridgeSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def bridge_reset(session: BridgeSession, episode_index: int) -> list:
    return session.reset(episode_index)


def bridge_step(session: BridgeSession, action):
    return session.step(action)


class BridgeEnv:
    """Minimal gym-flavored facade over a BridgeSession."""

    def __init__(self, spec_path: str, command=None,
                 expected_digest: str | None = None):
        self.session = BridgeSession(spec_path, command=command,
                                     expected_digest=expected_digest)
        self.spec_digest = self.session.spec_digest

    def reset(self, episode_index: int = 0) -> list:
        return self.session.reset(episode_index)

    def step(self, action):
        return self.session.step(action)

    def close(self) -> None:
        self.session.close()

    def __enter__(self) -> "BridgeEnv":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

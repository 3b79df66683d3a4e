"""Environment living in a child process, spoken to in line-delimited JSON.

Requests (one UTF-8 JSON object per LF-terminated line on the child's stdin)::

    {"op":"reset","seed":<int>}
    {"op":"step","action":<int>}

Every request gets exactly one response line on the child's stdout::

    {"obs":[...],"reward":<float>,"terminal":<bool>}

An optional ``"truncated"`` boolean is honoured. Anything else (bad JSON,
wrong field types, the child exiting, a reply slower than ``timeout``
seconds) raises :class:`EnvironmentFault`.
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading

import numpy as np

from ..errors import EnvironmentFault
from .base import Env, EnvSpec, StepResult

_EOF = object()


class BridgeEnv(Env):
    def __init__(self, command, spec: EnvSpec, timeout: float = 10.0):
        super().__init__()
        self.spec = spec
        self.timeout = timeout
        argv = shlex.split(command) if isinstance(command, str) else list(command)
        try:
            self._proc = subprocess.Popen(
                argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.DEVNULL
            )
        except OSError as exc:
            raise EnvironmentFault(f"could not spawn environment {argv!r}: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for raw in self._proc.stdout:
            self._lines.put(raw)
        self._lines.put(_EOF)

    def _request(self, message: dict) -> dict:
        payload = (json.dumps(message, separators=(",", ":")) + "\n").encode("utf-8")
        try:
            self._proc.stdin.write(payload)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise EnvironmentFault(f"environment process is gone: {exc}") from exc
        try:
            raw = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise EnvironmentFault(f"no reply within {self.timeout} s to {message!r}") from None
        if raw is _EOF:
            code = self._proc.poll()
            raise EnvironmentFault(f"environment process exited (code {code}) before replying to {message!r}")
        try:
            line = raw.decode("utf-8")
            reply = json.loads(line)
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise EnvironmentFault(f"malformed reply line {raw!r}: {exc}") from exc
        if not isinstance(reply, dict):
            raise EnvironmentFault(f"malformed reply line {raw!r}: not a JSON object")
        return self._validate(reply, raw)

    def _validate(self, reply: dict, raw: bytes) -> dict:
        obs = reply.get("obs")
        if not isinstance(obs, list) or len(obs) != self.spec.observation_dim:
            raise EnvironmentFault(f"reply {raw!r} lacks an obs list of length {self.spec.observation_dim}")
        try:
            reply["obs"] = np.asarray(obs, dtype=np.float64)
        except (TypeError, ValueError) as exc:
            raise EnvironmentFault(f"non-numeric obs in reply {raw!r}") from exc
        reward = reply.get("reward", 0.0)
        if isinstance(reward, bool) or not isinstance(reward, (int, float)):
            raise EnvironmentFault(f"reply {raw!r} has a non-numeric reward")
        reply["reward"] = float(reward)
        for key in ("terminal", "truncated"):
            if not isinstance(reply.get(key, False), bool):
                raise EnvironmentFault(f"reply {raw!r} has a non-boolean {key!r}")
        return reply

    def _reset(self, seed):
        reply = self._request({"op": "reset", "seed": 0 if seed is None else int(seed)})
        return reply["obs"]

    def _step(self, action):
        reply = self._request({"op": "step", "action": int(action)})
        truncated = reply.get("truncated", False)
        return StepResult(reply["obs"], reply["reward"], reply.get("terminal", False) or truncated, truncated)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            try:
                self._proc.wait(timeout=1.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

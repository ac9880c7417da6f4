"""Subprocess adapter for an external QoI model.

The child process speaks line-delimited JSON on stdin/stdout: one request
object ``{"id": <int>, "x": [4 reals], "p": [12 reals]}`` per line, one
response ``{"id": <int>, "q": <real>}`` per line.  Responses may arrive in
any order; a background reader matches them to waiting callers by id.
"""

from __future__ import annotations

import json
import os
import subprocess
import threading
import time

import numpy as np

from .problem import DesignVector, QoiError, QoiModel


class ExternalModelError(QoiError):
    pass


class ExternalModelTimeout(ExternalModelError):
    """The child did not answer a request within the configured timeout."""


class ExternalModelProtocolError(ExternalModelError):
    """The child wrote something that is not a valid response."""


class ExternalModelExit(ExternalModelError):
    """The child exited (or was killed) while requests were outstanding."""


def cache_key(x: DesignVector, p: np.ndarray) -> str:
    """Canonical 12-significant-digit serialization of (x, p)."""
    parts = [f"{v:.12g}" for v in x.as_array()] + [f"{v:.12g}" for v in np.asarray(p, dtype=float)]
    return ",".join(parts)


class ExternalModel(QoiModel):
    """QoI model backed by a child process, with an optional persistent cache.

    Concurrent ``evaluate`` calls are permitted: requests are serialized onto
    the child's stdin and each caller blocks until its own response id shows
    up.  Cache hits return without touching the child at all.
    """

    def __init__(self, command, timeout: float = 30.0, cache_path: str | None = None):
        self.command = list(command)
        self.timeout = timeout
        self.cache_path = cache_path
        self._cache: dict[str, float] = {}
        if cache_path and os.path.exists(cache_path):
            with open(cache_path, encoding="utf-8") as fh:
                self._cache = {k: float(v) for k, v in json.load(fh).items()}
        self._proc: subprocess.Popen | None = None
        self._reader: threading.Thread | None = None
        self._cond = threading.Condition()
        self._responses: dict[int, float] = {}
        self._pending: set[int] = set()
        self._fault: ExternalModelError | None = None
        self._next_id = 0
        self._count = 0
        self._requests_sent = 0
        self._lock = threading.Lock()

    @property
    def evaluation_count(self) -> int:
        return self._count

    @property
    def child_request_count(self) -> int:
        return self._requests_sent

    def start(self) -> None:
        if self._proc is not None:
            return
        self._proc = subprocess.Popen(
            self.command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._reader = threading.Thread(target=self._read_loop, daemon=True)
        self._reader.start()

    def close(self) -> None:
        if self._proc is None:
            return
        proc, self._proc = self._proc, None
        try:
            proc.stdin.close()
        except OSError:
            pass
        try:
            proc.wait(timeout=5.0)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.close()

    def evaluate(self, x: DesignVector, p: np.ndarray) -> float:
        p = np.asarray(p, dtype=float)
        with self._lock:
            self._count += 1
        key = cache_key(x, p)
        if self.cache_path is not None and key in self._cache:
            return self._cache[key]
        q = self._roundtrip(x, p)
        if self.cache_path is not None:
            self._cache[key] = q
            self._flush_cache()
        return q

    def _roundtrip(self, x: DesignVector, p: np.ndarray) -> float:
        self.start()
        with self._cond:
            self._raise_if_faulted()
            req_id = self._next_id
            self._next_id += 1
            self._pending.add(req_id)
        line = json.dumps({"id": req_id, "x": list(x.as_array()), "p": list(p)})
        with self._lock:
            try:
                self._proc.stdin.write(line + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                raise ExternalModelExit("child closed stdin") from exc
            self._requests_sent += 1
        deadline = time.monotonic() + self.timeout
        with self._cond:
            while req_id not in self._responses:
                self._raise_if_faulted()
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    self._pending.discard(req_id)
                    raise ExternalModelTimeout(f"no response to request {req_id} within {self.timeout}s")
                self._cond.wait(remaining)
            return self._responses.pop(req_id)

    def _raise_if_faulted(self) -> None:
        if self._fault is not None:
            raise self._fault

    def _fail(self, exc: ExternalModelError) -> None:
        with self._cond:
            if self._fault is None:
                self._fault = exc
            self._cond.notify_all()

    def _read_loop(self) -> None:
        proc = self._proc
        while True:
            line = proc.stdout.readline()
            if line == "":
                self._fail(ExternalModelExit("child process exited"))
                return
            line = line.strip()
            if not line:
                continue
            try:
                msg = json.loads(line)
                resp_id = int(msg["id"])
                q = float(msg["q"])
            except (ValueError, TypeError, KeyError):
                self._fail(ExternalModelProtocolError(f"malformed response line: {line!r}"))
                return
            with self._cond:
                if resp_id not in self._pending:
                    self._fault = self._fault or ExternalModelProtocolError(
                        f"response id {resp_id} was never requested"
                    )
                else:
                    self._pending.discard(resp_id)
                    self._responses[resp_id] = q
                self._cond.notify_all()

    def _flush_cache(self) -> None:
        tmp = self.cache_path + ".tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(self._cache, fh, sort_keys=True)
        os.replace(tmp, self.cache_path)


def external_evaluate(model: ExternalModel, x: DesignVector, p: np.ndarray) -> float:
    """Evaluate (x, p) on the child process behind ``model``."""
    return model.evaluate(x, p)

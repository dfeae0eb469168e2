"""Line-delimited JSON inference service over a local socket.

One reader thread per connection feeds a batching worker; requests arriving
within the batch window are executed together.  The merged model is swapped
atomically on hot-swap, so in-flight batches finish on the old branch table.
"""

from __future__ import annotations

import json
import math
import queue
import socket
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from . import merger
from .checkpoint import read_checkpoint
from .encoder import LayerCounter
from .errors import LayerforkError
from .tasks import Example, Vocab, batch_encode


def nearest_rank(samples, p: float):
    """Nearest-rank percentile without interpolation.

    Rank k = floor(p*n) + 1, capped at n: the usual ceil(p*n) order statistic
    whenever p*n is fractional, and the next sample up when p*n lands exactly
    on a rank (so P99 over 100 samples reports the maximum).
    """
    if not samples:
        raise LayerforkError("percentile of an empty sample set")
    ordered = sorted(samples)
    k = min(len(ordered), math.floor(p * len(ordered)) + 1)
    return ordered[k - 1]


@dataclass
class ServeStats:
    latencies_us: list = field(default_factory=list)
    layer_counts: list = field(default_factory=list)

    @property
    def count(self):
        return len(self.latencies_us)

    def record(self, latency_us: int, layers: int):
        self.latencies_us.append(latency_us)
        self.layer_counts.append(layers)

    def summary(self) -> dict:
        out = {"count": self.count, "total_layers": sum(self.layer_counts)}
        if self.count:
            for name, p in (("p50", 0.50), ("p90", 0.90), ("p99", 0.99)):
                out[name + "_us"] = nearest_rank(self.latencies_us, p)
        return out


class _Pending:
    __slots__ = ("request", "conn", "t_start", "done")

    def __init__(self, request, conn):
        self.request = request
        self.conn = conn
        self.t_start = time.perf_counter()


class InferenceServer:
    """Batched NDJSON request loop over a merged multi-task model."""

    def __init__(self, merged: merger.MergedModel, host="127.0.0.1", port=0,
                 batch_window_ms: float = 5.0):
        self.merged = merged
        self.vocab = Vocab(merged.vocab)
        self.batch_window = batch_window_ms / 1000.0
        self.stats = ServeStats()
        self._stats_lock = threading.Lock()
        self._swap_lock = threading.Lock()
        self._queue = queue.Queue()
        self._stop = threading.Event()
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(16)
        self.address = self._sock.getsockname()
        self._threads = []

    # -- lifecycle ---------------------------------------------------------

    def start(self):
        t = threading.Thread(target=self._accept_loop, daemon=True)
        t.start()
        self._threads.append(t)
        w = threading.Thread(target=self._batch_loop, daemon=True)
        w.start()
        self._threads.append(w)

    def serve_forever(self):
        self.start()
        self._stop.wait()

    def shutdown(self):
        self._stop.set()
        try:
            self._sock.close()
        except OSError:
            pass

    # -- socket plumbing ---------------------------------------------------

    def _accept_loop(self):
        while not self._stop.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            t = threading.Thread(target=self._client_loop, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    @staticmethod
    def _send(conn, payload: dict):
        try:
            conn.sendall((json.dumps(payload, sort_keys=True) + "\n").encode("utf-8"))
        except OSError:
            pass

    def _client_loop(self, conn):
        buf = b""
        with conn:
            while not self._stop.is_set():
                try:
                    chunk = conn.recv(65536)
                except OSError:
                    return
                if not chunk:
                    return
                buf += chunk
                while b"\n" in buf:
                    line, buf = buf.split(b"\n", 1)
                    if line.strip():
                        self._handle_line(line, conn)

    def _handle_line(self, line: bytes, conn):
        try:
            req = json.loads(line.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            self._send(conn, {"error": f"malformed request: {e}"})
            return
        op = req.get("op")
        if op == "stats":
            with self._stats_lock:
                self._send(conn, {"stats": self.stats.summary()})
        elif op == "swap":
            try:
                ckpt = read_checkpoint(req["ckpt"])
                with self._swap_lock:
                    self.merged = merger.update_task(self.merged, req["task"], ckpt)
                self._send(conn, {"swapped": req["task"]})
            except (LayerforkError, KeyError, OSError) as e:
                self._send(conn, {"error": str(e)})
        elif op == "shutdown":
            self._send(conn, {"bye": True})
            self.shutdown()
        elif op is None:
            self._queue.put(_Pending(req, conn))
        else:
            self._send(conn, {"error": f"unknown op {op!r}"})

    # -- batching ----------------------------------------------------------

    def _batch_loop(self):
        while not self._stop.is_set():
            try:
                first = self._queue.get(timeout=0.1)
            except queue.Empty:
                continue
            batch = [first]
            deadline = time.perf_counter() + self.batch_window
            while True:
                remaining = deadline - time.perf_counter()
                if remaining <= 0:
                    break
                try:
                    batch.append(self._queue.get(timeout=remaining))
                except queue.Empty:
                    break
            self._execute(batch)

    def _execute(self, batch):
        model = self.merged  # snapshot: swaps do not affect this batch
        groups = {}
        for pending in batch:
            req = pending.request
            try:
                tasks = tuple(sorted(req.get("tasks") or model.task_ids()))
                text = req["text"]
                if isinstance(text, str):
                    ex = Example(text, None, 0)
                else:
                    ex = Example(text[0], text[1] if len(text) > 1 else None, 0)
                groups.setdefault(tasks, []).append((pending, ex))
            except (KeyError, IndexError, TypeError) as e:
                self._send(pending.conn, {"id": req.get("id"),
                                          "error": f"malformed request: {e}"})
        for tasks, members in groups.items():
            pendings = [m[0] for m in members]
            try:
                ids, mask, _ = batch_encode([m[1] for m in members], self.vocab,
                                            model.cfg.max_seq_len)
                counter = LayerCounter()
                outputs = merger.infer(model, ids, mask, list(tasks), counter)
            except LayerforkError as e:
                for pending in pendings:
                    self._send(pending.conn, {"id": pending.request.get("id"),
                                              "error": str(e)})
                continue
            for row, pending in enumerate(pendings):
                latency_us = int((time.perf_counter() - pending.t_start) * 1e6)
                per_task = {}
                for t in tasks:
                    vals = outputs[t][row]
                    if np.ndim(vals) == 0:
                        per_task[t] = float(vals)
                    else:
                        per_task[t] = [float(v) for v in vals]
                with self._stats_lock:
                    self.stats.record(latency_us, counter.count)
                self._send(pending.conn, {"id": pending.request.get("id"),
                                          "outputs": per_task,
                                          "latency_us": latency_us,
                                          "layers": counter.count})


def request_once(address, payload: dict, timeout=10.0) -> dict:
    """Small client helper: one request, one NDJSON response."""
    with socket.create_connection(address, timeout=timeout) as s:
        s.sendall((json.dumps(payload) + "\n").encode("utf-8"))
        buf = b""
        while not buf.endswith(b"\n"):
            chunk = s.recv(65536)
            if not chunk:
                break
            buf += chunk
    return json.loads(buf.decode("utf-8"))

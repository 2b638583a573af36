"""Deterministic discrete-event simulation of N nodes exchanging messages.

All protocol latencies in the library are measured against this clock. The
simulator is single-threaded: events are processed in (deliver_time, seq)
order, so identical configuration and seed give a bit-identical trace.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .errors import (
    InvalidObservationError,
    InvalidTopologyError,
    NodeNotFoundError,
    TimeTravelError,
)

DEFAULT_SIZE_MULTIPLIER = 10.0
DEFAULT_COMPUTE_RANGE = (50.0, 200.0)


@dataclass(frozen=True)
class UniformTopology:
    """All distinct links draw latency from U(lo, hi) milliseconds."""

    lo: float = 10.0
    hi: float = 100.0


@dataclass(frozen=True)
class ClusteredTopology:
    """Low-latency clusters with high-latency links between them.

    Nodes are split into `n_clusters` contiguous, balanced groups;
    intra-cluster links draw from U(intra_lo, intra_hi) and inter-cluster
    links from U(inter_lo, inter_hi).
    """

    n_clusters: int = 5
    intra_lo: float = 5.0
    intra_hi: float = 15.0
    inter_lo: float = 80.0
    inter_hi: float = 120.0


def cluster_labels(n_nodes: int, n_clusters: int) -> np.ndarray:
    """Ground-truth cluster ids used by ClusteredTopology (contiguous blocks)."""
    labels = np.empty(n_nodes, dtype=np.int64)
    for cid, block in enumerate(np.array_split(np.arange(n_nodes), n_clusters)):
        labels[block] = cid
    return labels


def build_topology(n_nodes: int, seed: int, model: UniformTopology | ClusteredTopology) -> np.ndarray:
    """Generate a dense directed latency matrix in milliseconds.

    Deterministic for a given (seed, model). The diagonal is zero; the matrix
    is not required to be symmetric.
    """
    if n_nodes < 2:
        raise InvalidTopologyError(f"need at least 2 nodes, got {n_nodes}")
    rng = np.random.default_rng(seed)
    if isinstance(model, UniformTopology):
        latency = rng.uniform(model.lo, model.hi, size=(n_nodes, n_nodes))
    elif isinstance(model, ClusteredTopology):
        labels = cluster_labels(n_nodes, model.n_clusters)
        latency = rng.uniform(model.inter_lo, model.inter_hi, size=(n_nodes, n_nodes))
        intra = labels[:, None] == labels[None, :]
        latency[intra] = rng.uniform(model.intra_lo, model.intra_hi, size=int(intra.sum()))
    else:
        raise InvalidTopologyError(f"unknown topology model: {model!r}")
    np.fill_diagonal(latency, 0.0)
    return latency


def draw_compute_times(
    n_nodes: int,
    seed: int,
    lo: float = DEFAULT_COMPUTE_RANGE[0],
    hi: float = DEFAULT_COMPUTE_RANGE[1],
) -> np.ndarray:
    """Per-node constant cost (ms) of one local training round, drawn once at setup."""
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=n_nodes)


def chunk_size_units(chunk_len: int, model_len: int, multiplier: float = DEFAULT_SIZE_MULTIPLIER) -> int:
    """Latency multiplier for a weight chunk of `chunk_len` out of `model_len` entries.

    A whole model costs `multiplier` units; a chunk costs its proportional
    share, never less than one unit (control messages use one unit).
    """
    return max(1, round(chunk_len * multiplier / model_len))


class LatencyHistory:
    """Append-only per-pair record of observed link latencies."""

    def __init__(self) -> None:
        self._series: dict[tuple[int, int], list[float]] = {}

    def record(self, i: int, j: int, observed: float) -> None:
        if i == j:
            raise InvalidObservationError(f"self-loop observation for node {i}")
        if observed <= 0:
            raise InvalidObservationError(f"latency must be positive, got {observed}")
        self._series.setdefault((i, j), []).append(float(observed))

    def series(self, i: int, j: int) -> list[float]:
        return self._series.get((i, j), [])

    def pairs(self) -> list[tuple[int, int]]:
        return list(self._series)

    def __len__(self) -> int:
        return len(self._series)


@dataclass(order=True)
class Event:
    deliver_time: float
    seq: int
    src: int = field(compare=False)
    dst: int = field(compare=False)
    kind: str = field(compare=False, default="msg")
    payload: Any = field(compare=False, default=None)
    size_units: int = field(compare=False, default=1)


Handler = Callable[["Simulator", Event], None]


class Simulator:
    """Single-threaded event loop over a fixed latency matrix.

    Handlers are registered per node and invoked with the simulator and the
    delivered event; anything they send is scheduled relative to the current
    clock. Events with equal deliver_time fire in send order.
    """

    def __init__(self, latency: np.ndarray, record_trace: bool = False) -> None:
        self.latency = latency
        self.n_nodes = latency.shape[0]
        self.now = 0.0
        self._queue: list[Event] = []
        self._seq = itertools.count()
        self._handlers: dict[int, Handler] = {}
        self._sent = 0
        self._delivered = 0
        self.trace: list[tuple[float, int, int, str, int]] | None = [] if record_trace else None

    def register(self, node: int, handler: Handler) -> None:
        self._check_node(node)
        self._handlers[node] = handler

    def unregister(self, node: int) -> None:
        self._handlers.pop(node, None)

    def _check_node(self, node: int) -> None:
        if not 0 <= node < self.n_nodes:
            raise NodeNotFoundError(f"node {node} outside [0, {self.n_nodes})")

    def _push(self, event: Event) -> Event:
        if event.deliver_time < self.now:
            raise TimeTravelError(
                f"event scheduled at {event.deliver_time} before clock {self.now}"
            )
        heapq.heappush(self._queue, event)
        self._sent += 1
        return event

    def send(self, src: int, dst: int, payload: Any, size_units: int = 1, kind: str = "msg") -> Event:
        """Enqueue delivery of `payload` at now + latency[src][dst] * size_units."""
        self._check_node(src)
        self._check_node(dst)
        if src == dst:
            raise NodeNotFoundError(f"cannot send from node {src} to itself")
        deliver = self.now + float(self.latency[src, dst]) * size_units
        return self._push(Event(deliver, next(self._seq), src, dst, kind, payload, size_units))

    def schedule(self, delay: float, node: int, payload: Any = None, kind: str = "timer") -> Event:
        """Enqueue a local (self-addressed) event `delay` ms from now."""
        self._check_node(node)
        return self._push(Event(self.now + delay, next(self._seq), node, node, kind, payload, 0))

    def run_until_idle(self) -> float:
        """Process events in (deliver_time, seq) order until the queue drains."""
        while self._queue:
            event = heapq.heappop(self._queue)
            if event.deliver_time < self.now:
                raise TimeTravelError("event queue went backwards")
            self.now = event.deliver_time
            self._delivered += 1
            if self.trace is not None:
                self.trace.append(
                    (event.deliver_time, event.src, event.dst, event.kind, event.size_units)
                )
            handler = self._handlers.get(event.dst)
            if handler is not None:
                handler(self, event)
        return self.now

    @property
    def pending(self) -> int:
        return len(self._queue)

    @property
    def stats(self) -> dict[str, int]:
        return {"sent": self._sent, "delivered": self._delivered}

    def dump_trace(self, path: str) -> None:
        """Write the recorded trace as `time,src,dst,kind,size_units` lines."""
        if self.trace is None:
            raise ValueError("simulator was created with record_trace=False")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("time,src,dst,kind,size_units\n")
            for time, src, dst, kind, size_units in self.trace:
                fh.write(f"{time:.6f},{src},{dst},{kind},{size_units}\n")

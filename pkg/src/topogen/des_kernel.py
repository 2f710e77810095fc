"""Minimal deterministic discrete-event simulation kernel.

A model owns a future-event list ordered by (time, sequence), a clock, an
id-addressed set of components, and a single seeded random stream.  Events
at equal times execute in scheduling order, so a run is a deterministic
function of (model, seed).  One model is strictly single threaded; distinct
models are independent.
"""
from __future__ import annotations

import heapq
import json
from pathlib import Path
from typing import Any

import numpy as np

__all__ = ["SimModel", "SimulationError"]


class SimulationError(RuntimeError):
    """A component failed during dispatch; carries clock time and component id."""


class SimModel:
    """Event queue, clock, components, and wiring for one simulation run.

    Events are (time, sequence, target_component_id, payload) tuples; the
    sequence counter breaks time ties in scheduling order.  Payloads are
    component-defined, by convention small tuples whose first element is a
    tag string.
    """

    def __init__(self, seed: int | np.random.SeedSequence = 0, warmup: float = 0.0,
                 trace: bool = False):
        self.now: float = 0.0
        self.rng = np.random.default_rng(seed)
        self.components: dict[str, Any] = {}
        self.wiring: dict[tuple[str, str], tuple[str, str]] = {}
        self.warmup = warmup
        self.trace: list[tuple[float, str, str]] | None = [] if trace else None
        self._heap: list[tuple[float, int, str, Any]] = []
        self._seq = 0

    def add_component(self, component) -> None:
        if component.id in self.components:
            raise ValueError(f"duplicate component id {component.id!r}")
        self.components[component.id] = component

    def connect(self, out_comp: str, out_port: str, in_comp: str, in_port: str) -> None:
        """Wire an output port to exactly one input port."""
        key = (out_comp, out_port)
        if key in self.wiring:
            raise ValueError(f"output port {key} already wired")
        self.wiring[key] = (in_comp, in_port)

    def schedule(self, delay: float, target: str, payload) -> int:
        """Enqueue an event at ``now + delay``; returns the event's sequence id."""
        if delay < 0:
            raise ValueError(f"cannot schedule into the past (delay={delay})")
        self._seq += 1
        heapq.heappush(self._heap, (self.now + delay, self._seq, target, payload))
        return self._seq

    def run_until(self, horizon: float) -> dict[str, dict]:
        """Dispatch events in (time, sequence) order up to and including ``horizon``.

        Returns the statistics bundle: one dict per component that exposes a
        ``stats()`` method.  The clock ends at the last dispatched event time
        (never beyond the horizon).
        """
        if horizon < 0:
            raise ValueError("horizon must be >= 0")
        heap = self._heap
        components = self.components
        trace = self.trace
        warm = self.warmup > 0.0
        while heap and heap[0][0] <= horizon:
            time, _seq, target, payload = heapq.heappop(heap)
            self.now = time
            if warm and time >= self.warmup:
                for comp in components.values():
                    reset = getattr(comp, "reset_stats", None)
                    if reset is not None:
                        reset()
                warm = False
            if trace is not None:
                tag = payload[0] if isinstance(payload, tuple) and payload else str(payload)
                trace.append((time, target, tag))
            try:
                components[target].handle(self, payload)
            except Exception as e:
                raise SimulationError(
                    f"component {target!r} failed at t={time}: {e}"
                ) from e
        return {
            cid: comp.stats()
            for cid, comp in components.items()
            if hasattr(comp, "stats")
        }

    def pending_events(self) -> list[tuple[float, int, str, Any]]:
        """Snapshot of not-yet-dispatched events in dispatch order."""
        return sorted(self._heap)

    def dump_trace(self, path: str | Path) -> None:
        """Write the recorded event trace as JSONL (time, component, payload tag)."""
        if self.trace is None:
            raise ValueError("model was built without trace recording")
        with open(path, "w", newline="\n") as fh:
            for time, component, tag in self.trace:
                fh.write(json.dumps(
                    {"time": time, "component": component, "payload": tag},
                    separators=(",", ":"),
                ) + "\n")

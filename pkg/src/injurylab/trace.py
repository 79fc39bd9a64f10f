"""Run traces: ordered event streams with a terminal summary.

Events carry a strictly increasing id, a stage, one of a fixed set of
kinds, and a flat string payload.  The text form is line-oriented and
canonical, so a cryptographic digest of it is a stable fingerprint of a
run.  A stateless reducer recomputes the terminal summary from the events
alone, which gives the self-consistency check.
"""

from __future__ import annotations

import hashlib

class ConfigError(ValueError):
    """Bad scenario or run configuration; maps to exit code 2."""


EVENT_KINDS = frozenset({
    "visit", "init", "select", "declare", "enumerate",
    "inject-converge", "inject-diverge",
    "qlist-set", "qlist-remove", "phi-set",
})


class Event:
    __slots__ = ("eid", "stage", "kind", "payload")

    def __init__(self, eid, stage, kind, payload):
        self.eid = eid
        self.stage = stage
        self.kind = kind
        self.payload = payload

    def __repr__(self):
        return f"Event({self.eid}, {self.stage}, {self.kind}, {self.payload})"

    def line(self) -> str:
        parts = [str(self.eid), str(self.stage), self.kind]
        parts += [f"{k}={v}" for k, v in self.payload.items()]
        return " ".join(parts)


class RunTrace:
    def __init__(self, construction: str = "", stages: int = 0):
        self.construction = construction
        self.stages = stages
        self.events = []
        self.summary = {}

    def emit(self, stage: int, kind: str, **payload) -> Event:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        ev = Event(len(self.events), stage, kind, {
            k: str(v) for k, v in payload.items()})
        self.events.append(ev)
        return ev

    def by_kind(self, kind: str):
        return [e for e in self.events if e.kind == kind]

    def finalize(self, summary: dict):
        self.summary = {k: str(v) for k, v in summary.items()}

    # -- text form -----------------------------------------------------

    def to_text(self) -> str:
        lines = [f"trace {self.construction} stages={self.stages}"]
        lines += [e.line() for e in self.events]
        for k in sorted(self.summary):
            lines.append(f"summary {k} {self.summary[k]}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunTrace":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("trace "):
            raise ValueError("missing trace header")
        _, construction, stages_tok = lines[0].split()
        trace = cls(construction, int(stages_tok.split("=")[1]))
        for ln in lines[1:]:
            if ln.startswith("summary "):
                _, key, value = ln.split(" ", 2)
                trace.summary[key] = value
                continue
            toks = ln.split()
            eid, stage, kind = int(toks[0]), int(toks[1]), toks[2]
            payload = dict(t.split("=", 1) for t in toks[3:])
            if eid != len(trace.events):
                raise ValueError(f"event id gap at {eid}")
            trace.events.append(Event(eid, stage, kind, payload))
        return trace

    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()


def reduce_summary(trace: RunTrace) -> dict:
    """Recompute the terminal summary from the event stream alone."""
    A = []
    follower = {}
    use = {}
    for e in trace.events:
        p = e.payload
        if e.kind == "enumerate":
            A.append(int(p["element"]))
            use.pop(p["node"], None)
        elif e.kind == "declare":
            node = p["node"]
            if p.get("what") == "follower":
                follower[node] = p["y"]
            else:
                use[node] = p["u"]
        elif e.kind == "init":
            follower.pop(p["node"], None)
            use.pop(p["node"], None)
    out = {"A": ",".join(str(x) for x in sorted(A)) or "-"}
    for node in sorted(follower):
        state = follower[node]
        if node in use:
            state += ":" + use[node]
        out[f"node.{node}"] = state
    return out

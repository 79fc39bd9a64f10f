"""Tree-of-strategies machinery: nodes, accessibility, initialization.

Nodes are tuples of outcomes, each outcome an index into its level's
alphabet (listed best-to-worst, so smaller = further left).  The engine
walks one path per stage, hands initialization to everything right of the
path, keeps a log, and offers fair actor selection plus a finite-run
true-path estimate.
"""

from __future__ import annotations

INF = 0  # the "infinitary" outcome, left of FIN
FIN = 1

ROOT = ()


def left_of(a: tuple, b: tuple) -> bool:
    """True iff a branches off strictly left of b."""
    for x, y in zip(a, b):
        if x != y:
            return x < y
    return False


def is_prefix(a: tuple, b: tuple) -> bool:
    return b[:len(a)] == a


def render_node(node: tuple, alphabet_fn) -> str:
    """String over {i, f, q}: infinity, finite, single-outcome levels."""
    out = []
    for level, o in enumerate(node):
        alpha = alphabet_fn(level)
        if len(alpha) == 1:
            out.append("q")
        else:
            out.append("i" if o == INF else "f")
    return "".join(out) or "-"


def parse_node(text: str) -> tuple:
    """Inverse of render_node: '-' is the root, i->0, f->1, q->0."""
    if text == "-":
        return ROOT
    return tuple(0 if c in "iq" else 1 for c in text)


def cantor_pair(x: int, y: int) -> int:
    return (x + y) * (x + y + 1) // 2 + y


class PathLog:
    """Per-stage paths plus every initialization event of a run."""

    def __init__(self):
        self.paths = []  # stage -> node
        self.inits = []  # (stage, node)
        self._last_init = {}  # node -> stage

    def append_path(self, node: tuple):
        self.paths.append(node)

    def record_init(self, stage: int, node: tuple):
        self.inits.append((stage, node))
        self._last_init[node] = stage

    def last_init(self, node: tuple) -> int:
        """Stage of the node's most recent initialization, -1 if never."""
        return self._last_init.get(node, -1)


class StrategyTree:
    """Node registry and per-stage path construction.

    ``alphabet_fn(level)`` lists the outcome indices available at a level,
    in left-to-right order.  Outcome and initialization callbacks belong to
    the hosting construction.
    """

    def __init__(self, alphabet_fn=None):
        self.alphabet_fn = alphabet_fn or (lambda level: (INF, FIN))
        self.birth = {ROOT: 0}  # node -> creation order
        self.children = {ROOT: {}}  # node -> outcome -> child node
        self.log = PathLog()
        self.selections = {}  # node -> times selected

    def register(self, node: tuple) -> int:
        if node not in self.birth:
            self.birth[node] = len(self.birth)
            self.children[node] = {}
            if node:
                self.children.setdefault(node[:-1], {})[node[-1]] = node
        return self.birth[node]

    def run_stage(self, outcome_cb, s: int, length: int | None = None,
                  init_cb=None, visit_cb=None) -> tuple:
        """Build the stage-s path of the given length (default s).

        ``outcome_cb(node, s)`` names the outcome the visited node plays;
        everything to the right of each new prefix is initialized via
        ``init_cb(node, s)``.
        """
        if length is None:
            length = s
        node = ROOT
        self.register(node)
        if visit_cb:
            visit_cb(node, s)
        for level in range(length):
            alphabet = self.alphabet_fn(level)
            o = outcome_cb(node, s)
            if o not in alphabet:
                raise ValueError(
                    f"outcome {o!r} outside alphabet at level {level}")
            node = node + (o,)
            self.register(node)
            self._initialize_right_of(node, s, init_cb)
            if visit_cb:
                visit_cb(node, s)
        self.log.append_path(node)
        return node

    def _initialize_right_of(self, node: tuple, s: int, init_cb):
        """Initialize the registered subtrees of node's right siblings."""
        parent, o = node[:-1], node[-1]
        for o2, sib in self.children.get(parent, {}).items():
            if o2 > o:
                self._init_subtree(sib, s, init_cb)

    def _init_subtree(self, node: tuple, s: int, init_cb):
        stack = [node]
        while stack:
            cur = stack.pop()
            self.log.record_init(s, cur)
            if init_cb:
                init_cb(cur, s)
            stack.extend(self.children.get(cur, {}).values())

    def initialize_at_or_right(self, node: tuple, s: int, init_cb=None,
                               include_self: bool = True):
        """Initialize every registered delta >= node and every delta >=_L node."""
        for other in list(self.birth):
            if left_of(node, other) or (is_prefix(node, other)
                                        and (include_self or other != node)):
                self.log.record_init(s, other)
                if init_cb:
                    init_cb(other, s)

    def select_actor(self, theta):
        """Fair argmin of cantor_pair(birth, prior selections); None if empty."""
        best = None
        best_code = None
        for node in theta:
            code = cantor_pair(self.birth[node], self.selections.get(node, 0))
            if best_code is None or code < best_code:
                best, best_code = node, code
        if best is not None:
            self.selections[best] = self.selections.get(best, 0) + 1
        return best

    def true_path_estimate(self) -> tuple:
        """Longest node accessed after its last initialization with nothing
        to its left accessed after that point."""
        if not self.log.paths:
            return ROOT
        node = ROOT
        ext_stages = range(len(self.log.paths))  # stages whose path extends node
        left_last = -1  # last stage whose path branched left of node
        while True:
            level = len(node)
            by_outcome = {}
            for s in ext_stages:
                p = self.log.paths[s]
                if len(p) > level:
                    by_outcome.setdefault(p[level], []).append(s)
            ext = None
            seen_left = left_last
            for o in self.alphabet_fn(level):
                child = node + (o,)
                stages = by_outcome.get(o, [])
                t0 = self.log.last_init(child)
                if seen_left <= t0 and any(s > t0 for s in stages):
                    ext, ext_stages, left_last = child, stages, seen_left
                    break
                if stages:
                    seen_left = max(seen_left, stages[-1])
            if ext is None:
                return node
            node = ext

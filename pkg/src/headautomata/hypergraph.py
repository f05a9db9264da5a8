"""Search over implicit acyclic hypergraphs given by an edge function.

A node is any hashable key.  `edges_fn(node)` returns the incoming hyperedges
of `node` in a fixed order; each edge carries a cost (a negated log
probability) and the tail nodes whose derivations it combines.  A node with
no edges, or whose edges all have an impossible tail, is impossible.

Ties are broken in favour of the earliest edge in `edges_fn` order, and for
k-best in favour of lexicographically smaller rank vectors.
"""

from __future__ import annotations

import heapq
import math
from typing import Any, Callable, Hashable, Iterable, NamedTuple

INF = math.inf


class Edge(NamedTuple):
    label: Any
    cost: float
    tails: tuple = ()


class Derivation(NamedTuple):
    node: Hashable
    edge: Edge
    children: tuple
    cost: float


EdgeFn = Callable[[Hashable], Iterable[Edge]]


class CyclicGraph(ValueError):
    pass


def best_costs(edges_fn: EdgeFn, root) -> dict:
    """Minimum derivation cost of every node reachable from `root`.

    Returns {node: (cost, best edge)}; impossible nodes map to (inf, None).
    Tails are explored left to right and an edge is abandoned as soon as one
    of its tails turns out impossible.
    """
    best: dict = {}
    active = {root}
    stack = [[root, iter(edges_fn(root)), None, INF, None]]
    while stack:
        frame = stack[-1]
        if frame[2] is None:
            edge = next(frame[1], None)
            if edge is None:
                best[frame[0]] = (frame[3], frame[4])
                active.discard(frame[0])
                stack.pop()
                continue
            frame[2] = edge
        edge = frame[2]
        total = edge.cost
        for t in edge.tails:
            r = best.get(t)
            if r is None:
                if t in active:
                    raise CyclicGraph(f"cycle through {t!r}")
                active.add(t)
                stack.append([t, iter(edges_fn(t)), None, INF, None])
                break
            total += r[0]
            if total == INF:
                frame[2] = None
                break
        else:
            if total < frame[3]:
                frame[3] = total
                frame[4] = edge
            frame[2] = None
    return best


def viterbi(edges_fn: EdgeFn, root) -> Derivation | None:
    """Best derivation of `root`, or None if it has none."""
    best = best_costs(edges_fn, root)
    if best[root][0] == INF:
        return None

    def build(node):
        cost, edge = best[node]
        return Derivation(node, edge, tuple(build(t) for t in edge.tails), cost)

    return build(root)


class KBest:
    """Lazy k-best derivations (Huang & Chiang 2005, algorithm 3)."""

    def __init__(self, edges_fn: EdgeFn):
        self.edges_fn = edges_fn
        self._edges: dict = {}
        self._derivs: dict = {}
        self._cands: dict = {}
        self._seen: dict = {}
        self._busy: set = set()

    def _tail_cost(self, edge: Edge, ranks) -> float | None:
        total = edge.cost
        for t, r in zip(edge.tails, ranks):
            d = self._kth(t, r)
            if d is None:
                return None
            total += d[0]
        return total

    def _init(self, node):
        if node in self._busy:
            raise CyclicGraph(f"cycle through {node!r}")
        self._busy.add(node)
        edges = list(self.edges_fn(node))
        self._edges[node] = edges
        cands = []
        seen = set()
        for ei, e in enumerate(edges):
            ranks = (0,) * len(e.tails)
            seen.add((ei, ranks))
            c = self._tail_cost(e, ranks)
            if c is not None:
                cands.append((c, ei, ranks))
        heapq.heapify(cands)
        self._cands[node], self._seen[node], self._derivs[node] = cands, seen, []
        self._busy.discard(node)

    def _kth(self, node, k):
        if node not in self._derivs:
            self._init(node)
        found = self._derivs[node]
        cands, seen, edges = self._cands[node], self._seen[node], self._edges[node]
        while len(found) <= k:
            if not cands:
                return None
            c, ei, ranks = heapq.heappop(cands)
            found.append((c, ei, ranks))
            for i in range(len(ranks)):
                nxt = ranks[:i] + (ranks[i] + 1,) + ranks[i + 1:]
                if (ei, nxt) in seen:
                    continue
                seen.add((ei, nxt))
                c2 = self._tail_cost(edges[ei], nxt)
                if c2 is not None:
                    heapq.heappush(cands, (c2, ei, nxt))
        return found[k]

    def derivation(self, node, k: int = 0) -> Derivation | None:
        d = self._kth(node, k)
        if d is None:
            return None
        cost, ei, ranks = d
        edge = self._edges[node][ei]
        children = tuple(self.derivation(t, r) for t, r in zip(edge.tails, ranks))
        return Derivation(node, edge, children, cost)

    def kbest(self, node, k: int) -> list[Derivation]:
        out = []
        for i in range(k):
            d = self.derivation(node, i)
            if d is None:
                break
            out.append(d)
        return out


# ---------------------------------------------------------------------------
# sum semantics


def _logsumexp(values: list[float]) -> float:
    if not values:
        return -INF
    m = max(values)
    if m == -INF:
        return -INF
    return m + math.log(math.fsum(math.exp(v - m) for v in values))


def topological_edges(edges_fn: EdgeFn, root) -> tuple[list, dict]:
    """Nodes reachable from root in tails-first order, with their edge lists."""
    edges: dict = {}
    order: list = []
    done: set = set()
    active = {root}
    edges[root] = list(edges_fn(root))
    stack = [[root, 0, 0]]  # node, edge index, tail index
    while stack:
        frame = stack[-1]
        node, ei, ti = frame
        es = edges[node]
        if ei == len(es):
            order.append(node)
            done.add(node)
            active.discard(node)
            stack.pop()
            continue
        tails = es[ei].tails
        if ti == len(tails):
            frame[1], frame[2] = ei + 1, 0
            continue
        t = tails[ti]
        frame[2] = ti + 1
        if t in done:
            continue
        if t in active:
            raise CyclicGraph(f"cycle through {t!r}")
        active.add(t)
        edges[t] = list(edges_fn(t))
        stack.append([t, 0, 0])
    return order, edges


def inside_outside(edges_fn: EdgeFn, root):
    """Sum over all derivations of `root`.

    Returns (log total probability, [(node, edge, posterior)]) where
    posterior is the expected number of uses of the edge.  The total is -inf
    and the list empty when root has no derivation.
    """
    order, edges = topological_edges(edges_fn, root)
    inside = _inside_values(order, edges)
    log_z = inside[root]
    if log_z == -INF:
        return log_z, []
    outside: dict = {root: 0.0}
    posteriors = []
    for node in reversed(order):
        o = outside.get(node, -INF)
        if o == -INF:
            continue
        for e in edges[node]:
            ins = [inside[t] for t in e.tails]
            if any(v == -INF for v in ins):
                continue
            base = o - e.cost + math.fsum(ins)
            posteriors.append((node, e, math.exp(base - log_z)))
            for t, v in zip(e.tails, ins):
                contrib = base - v
                prev = outside.get(t, -INF)
                outside[t] = _logsumexp([prev, contrib]) if prev != -INF else contrib
    return log_z, posteriors


def _inside_values(order, edges) -> dict:
    vals: dict = {}
    for node in order:
        vals[node] = _logsumexp([-e.cost + math.fsum(vals[t] for t in e.tails) for e in edges[node]])
    return vals


def log_inside(edges_fn: EdgeFn, root) -> float:
    """Log of the summed probability of all derivations of `root`."""
    order, edges = topological_edges(edges_fn, root)
    return _inside_values(order, edges)[root]

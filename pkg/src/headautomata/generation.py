"""Forward semantics of relational head acceptor models.

Trees are generated top-down: a Top choice picks the root word and its
automaton start, each automaton run writes relation labels into its left and
right sequences, and every written relation selects a dependent word which
recursively starts an automaton of its own.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Iterator, Mapping, Sequence

from .core import (
    LEFT, STOP, CapacityError, HeadAcceptor, ImpossibleDerivation, ModelFormatError,
    RelationalAcceptorModel, SamplingFailure, to_cost,
)

SAMPLING_RETRIES = 1000
ENUMERATION_GUARD = 10 ** 7


@dataclass(frozen=True)
class OrderedDependencyTree:
    """One node of a derivation, with the automaton run that produced its children.

    `left` and `right` hold children in the order the automaton wrote them,
    outermost first.  The i-th left (right) transition in `trace` produced
    ``left[i]`` (``right[i]``).  `relation` is None at the root.
    """

    label: str
    relation: str | None
    automaton: str
    initial_state: int
    trace: tuple[int, ...]
    left: tuple["OrderedDependencyTree", ...] = ()
    right: tuple["OrderedDependencyTree", ...] = ()

    def depth(self) -> int:
        return 1 + max((c.depth() for c in self.left + self.right), default=0)

    def size(self) -> int:
        return 1 + sum(c.size() for c in self.left + self.right)

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "relation": self.relation,
            "automaton": self.automaton,
            "initial_state": self.initial_state,
            "trace": list(self.trace),
            "left": [c.to_json() for c in self.left],
            "right": [c.to_json() for c in self.right],
        }

    @classmethod
    def from_json(cls, obj, where="tree") -> "OrderedDependencyTree":
        keys = {"label", "relation", "automaton", "initial_state", "trace", "left", "right"}
        if not isinstance(obj, dict) or set(obj) - keys or not {"label", "automaton", "trace"} <= set(obj):
            raise ModelFormatError(f"{where}: not a tree object")
        try:
            return cls(
                obj["label"], obj.get("relation"), obj["automaton"], int(obj.get("initial_state", 0)),
                tuple(int(i) for i in obj["trace"]),
                tuple(cls.from_json(c, f"{where}.left[{i}]") for i, c in enumerate(obj.get("left", []))),
                tuple(cls.from_json(c, f"{where}.right[{i}]") for i, c in enumerate(obj.get("right", []))),
            )
        except (TypeError, ValueError) as e:
            if isinstance(e, ModelFormatError):
                raise
            raise ModelFormatError(f"{where}: {e}") from None


def tree_to_string(tree: OrderedDependencyTree) -> list[str]:
    """Left-parent-right traversal.

    Left children are already in string order; right children were written
    to the left end of R, so the last one written is nearest the head.
    """
    out: list[str] = []
    for c in tree.left:
        out.extend(tree_to_string(c))
    out.append(tree.label)
    for c in reversed(tree.right):
        out.extend(tree_to_string(c))
    return out


# ---------------------------------------------------------------------------
# scoring


def _param(table, key, sub, what):
    try:
        return table[key][sub]
    except KeyError:
        raise ImpossibleDerivation(f"missing {what} parameter {key!r} -> {sub!r}") from None


def _local_cost(model: RelationalAcceptorModel, node: OrderedDependencyTree) -> float:
    a = model.automata.get(node.automaton)
    if a is None:
        raise ImpossibleDerivation(f"unknown automaton {node.automaton!r}")
    if not 0 <= node.initial_state < a.state_count:
        raise ImpossibleDerivation(f"automaton {a.id} has no state {node.initial_state}")
    cost = 0.0
    q, li, ri, stopped = node.initial_state, 0, 0, False
    for idx in node.trace:
        if stopped:
            raise ImpossibleDerivation(f"actions after stop at node {node.label!r}")
        acts = a.states[q]
        if not 0 <= idx < len(acts):
            raise ImpossibleDerivation(f"automaton {a.id} state {q} has no action {idx}")
        act = acts[idx]
        cost += act.cost
        if act.kind == STOP:
            stopped = True
            continue
        if act.kind == LEFT:
            if li >= len(node.left):
                raise ImpossibleDerivation(f"node {node.label!r}: trace has more left transitions than children")
            child = node.left[li]
            li += 1
        else:
            if ri >= len(node.right):
                raise ImpossibleDerivation(f"node {node.label!r}: trace has more right transitions than children")
            child = node.right[ri]
            ri += 1
        if child.relation != act.symbol:
            raise ImpossibleDerivation(
                f"child {child.label!r} carries relation {child.relation!r}, transition wrote {act.symbol!r}")
        dep = _param(model.dependency_params, (node.label, act.symbol), child.label, "dependency")
        lex = _param(model.lexicon_params, (act.symbol, child.label),
                     (child.automaton, child.initial_state), "lexicon")
        cost += to_cost(dep) + to_cost(lex) + _local_cost(model, child)
        q = act.next_state
    if not stopped:
        raise ImpossibleDerivation(f"automaton run at node {node.label!r} does not stop")
    if li != len(node.left) or ri != len(node.right):
        raise ImpossibleDerivation(f"node {node.label!r}: children do not match the trace")
    return cost


def derivation_probability(model: RelationalAcceptorModel, tree: OrderedDependencyTree) -> float:
    """Cost (-ln P) of a complete derivation, including its Top parameter."""
    if tree.relation is not None:
        raise ImpossibleDerivation("root node must carry the Top marker (relation None)")
    key = (tree.label, tree.automaton, tree.initial_state)
    if key not in model.top_params:
        raise ImpossibleDerivation(f"missing top parameter {key!r}")
    return to_cost(model.top_params[key]) + _local_cost(model, tree)


# ---------------------------------------------------------------------------
# sampling


class _Overflow(Exception):
    pass


class _Sampler:
    def __init__(self, model: RelationalAcceptorModel, rng: random.Random, max_depth: int, max_width: int):
        self.model, self.rng = model, rng
        self.max_depth, self.max_width = max_depth, max_width

    def choose(self, dist: Mapping):
        keys = list(dist)
        return self.rng.choices(keys, weights=[dist[k] for k in keys])[0]

    def node(self, word, relation, mid, q0, depth) -> OrderedDependencyTree:
        a = self.model.automata[mid]
        q, trace, left, right = q0, [], [], []
        while True:
            acts = a.states[q]
            idx = self.rng.choices(range(len(acts)), weights=[x.prob for x in acts])[0]
            act = acts[idx]
            trace.append(idx)
            if act.kind == STOP:
                break
            if depth + 1 > self.max_depth or len(left) + len(right) >= self.max_width:
                raise _Overflow
            try:
                dep = self.choose(self.model.dependency_params[(word, act.symbol)])
                m2, q2 = self.choose(self.model.lexicon_params[(act.symbol, dep)])
            except KeyError as e:
                raise ImpossibleDerivation(f"sampling reached a missing parameter row {e}") from None
            child = self.node(dep, act.symbol, m2, q2, depth + 1)
            (left if act.kind == LEFT else right).append(child)
            q = act.next_state
        return OrderedDependencyTree(word, relation, mid, q0, tuple(trace), tuple(left), tuple(right))


def sample_derivation(model: RelationalAcceptorModel, seed, max_depth: int,
                      retries: int = SAMPLING_RETRIES, max_width: int = 10_000) -> OrderedDependencyTree:
    """Draw a tree from the model conditioned on depth <= max_depth.

    Oversized draws are rejected and redrawn up to `retries` times.
    """
    if max_depth < 1:
        raise ValueError("max_depth must be at least 1")
    rng = random.Random(seed)
    sampler = _Sampler(model, rng, max_depth, max_width)
    for _ in range(retries):
        w, mid, q = sampler.choose(model.top_params)
        try:
            return sampler.node(w, None, mid, q, 1)
        except _Overflow:
            continue
    raise SamplingFailure(f"no derivation within depth {max_depth} after {retries} attempts")


def sample_derivations(model, seed, max_depth: int, count: int,
                       max_width: int = 10_000) -> list[OrderedDependencyTree]:
    """`count` independent draws from one seeded generator."""
    rng = random.Random(seed)
    return [sample_derivation(model, rng.getrandbits(64), max_depth, max_width=max_width)
            for _ in range(count)]


# ---------------------------------------------------------------------------
# brute-force enumeration


class _Guard:
    def __init__(self, limit):
        self.limit, self.count = limit, 0

    def tick(self):
        self.count += 1
        if self.count > self.limit:
            raise CapacityError(f"enumeration exceeded {self.limit} configurations")


def enumerate_derivations(model: RelationalAcceptorModel, max_depth: int, max_width: int,
                          max_nodes: int | None = None,
                          guard: int = ENUMERATION_GUARD) -> Iterator[tuple[OrderedDependencyTree, float]]:
    """Every tree with depth <= max_depth and <= max_width transitions per node.

    `max_nodes` optionally bounds the total node count as well.  Costs are
    accumulated here directly from the parameter tables.
    """
    g = _Guard(guard)
    node_cap = max_nodes if max_nodes is not None else float("inf")
    deps = {k: [(w, to_cost(p)) for w, p in d.items()] for k, d in model.dependency_params.items()}
    lex = {k: [(mq, to_cost(p)) for mq, p in d.items()] for k, d in model.lexicon_params.items()}

    def runs(word, a: HeadAcceptor, q, depth_left, nodes_left, width_left):
        for idx, act in enumerate(a.states[q]):
            g.tick()
            if act.kind == STOP:
                yield (idx,), (), (), act.cost, 0
                continue
            if width_left == 0 or depth_left <= 1 or nodes_left < 1:
                continue
            for dep, dcost in deps.get((word, act.symbol), ()):
                for (m2, q2), lcost in lex.get((act.symbol, dep), ()):
                    for child, ccost, cused in subtrees(dep, act.symbol, m2, q2, depth_left - 1, nodes_left):
                        for trace, lt, rt, rcost, rused in runs(word, a, act.next_state, depth_left,
                                                                nodes_left - cused, width_left - 1):
                            if act.kind == LEFT:
                                lt = (child,) + lt
                            else:
                                rt = (child,) + rt
                            yield (idx,) + trace, lt, rt, act.cost + dcost + lcost + ccost + rcost, cused + rused

    def subtrees(word, relation, mid, q, depth_left, nodes_left):
        if nodes_left < 1:
            return
        a = model.automata[mid]
        for trace, lt, rt, cost, used in runs(word, a, q, depth_left, nodes_left - 1, max_width):
            yield OrderedDependencyTree(word, relation, mid, q, trace, lt, rt), cost, used + 1

    for (w, mid, q), p in model.top_params.items():
        top = to_cost(p)
        for tree, cost, _ in subtrees(w, None, mid, q, max_depth, node_cap):
            yield tree, top + cost


# ---------------------------------------------------------------------------
# single-acceptor languages


def accepts(a: HeadAcceptor, s: Sequence[str], from_state: int | None = None) -> float | None:
    """Cost of the best run of `a` writing (L, R) with L + R == s, or None.

    Left transitions consume s from the front, right transitions from the
    back; the run must stop exactly when the two meet.
    """
    s = tuple(s)
    n = len(s)
    q0 = a.initial if from_state is None else from_state

    @lru_cache(maxsize=None)
    def best(i, j, q):
        # i symbols consumed from the left, j from the right
        result = None
        for act in a.states[q]:
            if act.kind == STOP:
                c = act.cost if i + j == n else None
            elif i + j == n:
                continue
            elif act.kind == LEFT:
                if s[i] != act.symbol:
                    continue
                rest = best(i + 1, j, act.next_state)
                c = None if rest is None else act.cost + rest
            else:
                if s[n - 1 - j] != act.symbol:
                    continue
                rest = best(i, j + 1, act.next_state)
                c = None if rest is None else act.cost + rest
            if c is not None and (result is None or c < result):
                result = c
        return result

    return best(0, 0, q0)


def simple_cascade_model(acceptors: Mapping[str, HeadAcceptor], top: Mapping[str, float]) -> RelationalAcceptorModel:
    """Encode simple (word-writing) head acceptors as a relational model.

    Each word doubles as the relation naming it, so every written word
    deterministically becomes a dependent that runs its own acceptor.
    """
    words = tuple(acceptors)
    automata, dep, lex = {}, {}, {}
    for w, a in acceptors.items():
        automata[a.id] = replace(a, alphabet="relation")
        lex[(w, w)] = {(a.id, a.initial): 1.0}
        for acts in a.states:
            for act in acts:
                if act.kind != STOP:
                    dep[(w, act.symbol)] = {act.symbol: 1.0}
    top_params = {(w, acceptors[w].id, acceptors[w].initial): p for w, p in top.items()}
    return RelationalAcceptorModel(words, words, automata, dep, lex, top_params)

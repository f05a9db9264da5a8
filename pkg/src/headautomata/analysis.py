"""Exact best-derivation parsing for relational head acceptor models.

Chart nodes (spans are half-open token intervals):

    ("I", h, i, j, m, q)  automaton m, currently in state q, for the word at h
                          still has to write dependents covering [i, h) and
                          [h+1, j) and then stop
    ("C", a, b, h, r)     a complete r-dependent subtree headed at h over [a, b)
    ("D", a, b, w, r)     the r-dependent of head word w, spanning [a, b)

Automata write both dependent sequences from the outside in, so the first
action of an item consumes the outermost dependent on either side.  A
dependent's lexicon parameter is paid when it attaches (in C) and the root
pays its top parameter instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import LEFT, RIGHT, STOP, RelationalAcceptorModel, to_cost
from .generation import OrderedDependencyTree
from .hypergraph import Edge, KBest, best_costs, viterbi

ROOT = ("ROOT",)


@dataclass(frozen=True)
class ParseResult:
    tree: OrderedDependencyTree
    cost: float

    def to_json(self) -> dict:
        return {**self.tree.to_json(), "cost": self.cost}


@dataclass(frozen=True)
class NoParse:
    reason: str
    token: str | None = None

    def __bool__(self):
        return False

    def to_json(self) -> dict:
        return {"result": None, "reason": self.reason, "token": self.token}


class _Chart:
    def __init__(self, model: RelationalAcceptorModel, tokens: Sequence[str], prune: bool):
        self.model = model
        self.tokens = tuple(tokens)
        self.n = len(self.tokens)
        self.lex = model.lexicon_by_word
        self.dep = model.dependency_costs
        self.tops: dict[str, list] = {}
        for (w, m, q), p in model.top_params.items():
            self.tops.setdefault(w, []).append((m, q, to_cost(p)))
        self.prune = prune
        self._eligible: dict = {}

    def _has_dependent(self, a, b, w, r) -> bool:
        """Whether some token in [a, b) can be an r-dependent of w at all."""
        key = (w, r)
        counts = self._eligible.get(key)
        if counts is None:
            row = self.dep.get(key, {})
            counts = [0]
            for t in self.tokens:
                counts.append(counts[-1] + (t in row and r in self.lex.get(t, {})))
            self._eligible[key] = counts
        return counts[b] > counts[a]

    def edges(self, node):
        kind = node[0]
        tokens = self.tokens
        if kind == "I":
            _, h, i, j, m, q = node
            w = tokens[h]
            acts = self.model.automata[m].states[q]
            out = []
            for idx, act in enumerate(acts):
                if act.kind == STOP:
                    if i == h and j == h + 1:
                        out.append(Edge((STOP, idx), act.cost))
                    continue
                r = act.symbol
                if (w, r) not in self.dep:
                    continue
                nxt = act.next_state
                if act.kind == LEFT:
                    for k in range(i + 1, h + 1):
                        if self.prune and not self._has_dependent(i, k, w, r):
                            continue
                        out.append(Edge((LEFT, idx, k), act.cost, (("D", i, k, w, r), ("I", h, k, j, m, nxt))))
                else:
                    for k in range(j - 1, h, -1):
                        if self.prune and not self._has_dependent(k, j, w, r):
                            continue
                        out.append(Edge((RIGHT, idx, k), act.cost, (("D", k, j, w, r), ("I", h, i, k, m, nxt))))
            return out
        if kind == "D":
            _, a, b, w, r = node
            row = self.dep.get((w, r), {})
            out = []
            for h2 in range(a, b):
                c = row.get(tokens[h2])
                if c is not None and r in self.lex.get(tokens[h2], {}):
                    out.append(Edge(("dep", h2), c, (("C", a, b, h2, r),)))
            return out
        if kind == "C":
            _, a, b, h, r = node
            return [Edge(("lex", m, q), c, (("I", h, a, b, m, q),))
                    for m, q, c in self.lex.get(tokens[h], {}).get(r, ())]
        # root
        out = []
        for h in range(self.n):
            for m, q, c in self.tops.get(tokens[h], ()):
                out.append(Edge(("top", h, m, q), c, (("I", h, 0, self.n, m, q),)))
        return out

    # -- turning hyperpaths back into trees

    def node_tree(self, word, relation, m, q0, d) -> OrderedDependencyTree:
        a = self.model.automata[m]
        q, trace, left, right = q0, [], [], []
        while True:
            label = d.edge.label
            act = a.states[q][label[1]]
            trace.append(label[1])
            if label[0] == STOP:
                break
            dep_d, rest = d.children
            child = self.dependent_tree(dep_d, act.symbol)
            (left if label[0] == LEFT else right).append(child)
            q, d = act.next_state, rest
        return OrderedDependencyTree(word, relation, m, q0, tuple(trace), tuple(left), tuple(right))

    def dependent_tree(self, d, relation) -> OrderedDependencyTree:
        h2 = d.edge.label[1]
        c = d.children[0]
        _, m, q = c.edge.label
        return self.node_tree(self.tokens[h2], relation, m, q, c.children[0])

    def root_tree(self, d) -> OrderedDependencyTree:
        _, h, m, q = d.edge.label
        return self.node_tree(self.tokens[h], None, m, q, d.children[0])


def _check(model, tokens):
    if not tokens:
        raise ValueError("cannot parse an empty token sequence")
    vocab = set(model.vocab)
    for t in tokens:
        if t not in vocab:
            return NoParse("out-of-vocabulary", t)
    return None


def parse(model: RelationalAcceptorModel, tokens: Sequence[str], prune: bool = False) -> ParseResult | NoParse:
    """Highest-probability derivation whose yield is exactly `tokens`.

    `prune` skips dependent slots that no token in the span could fill; it
    never changes the result.
    """
    bad = _check(model, tokens)
    if bad is not None:
        return bad
    chart = _Chart(model, tokens, prune)
    d = viterbi(chart.edges, ROOT)
    if d is None:
        return NoParse("no-derivation")
    return ParseResult(chart.root_tree(d), d.cost)


def parse_nbest(model: RelationalAcceptorModel, tokens: Sequence[str], n: int,
                prune: bool = False) -> list[ParseResult]:
    """The n best distinct derivations of `tokens`, best first."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if _check(model, tokens) is not None:
        return []
    chart = _Chart(model, tokens, prune)
    kb = KBest(chart.edges)
    out, seen = [], set()
    k = 0
    while len(out) < n:
        d = kb.derivation(ROOT, k)
        if d is None:
            break
        k += 1
        tree = chart.root_tree(d)
        if tree in seen:
            continue
        seen.add(tree)
        out.append(ParseResult(tree, d.cost))
    return out


def chart_size(model: RelationalAcceptorModel, tokens: Sequence[str]) -> int:
    """Number of chart nodes visited by `parse` (for growth measurements)."""
    chart = _Chart(model, tokens, False)
    return len(best_costs(chart.edges, ROOT))

"""Recursive head transduction: decoding, pair scoring and an enumeration oracle.

A paired derivation is a tree of head pairs (w, v).  Each node runs one head
transducer M ~ P(M | w, v); every transition of M writes a source dependent
w' into L1 or R1 and a target dependent v' into L2 or R2 (per its valency
pair) and spawns the child pair (w', v').  As with head acceptors, the
sequences are filled from the outside in: a left-valency item goes to the
right end of L, a right-valency item to the left end of R.

Chart nodes for the dynamic program (target coordinates are None when the
target side is unconstrained):

    ("S", i, j, ti, tj, w, v, e)
        a complete subtree for pair (w, v) over source [i, j) and target
        [ti, tj), containing exactly e nodes whose source label is epsilon
    ("I", i, hs, he, j, ti, ts, te, tj, w, v, M, q, k, e)
        transducer M in state q for the head at source [hs, he) / target
        [ts, te) still has to produce the material around it; k further
        epsilon-source transitions are allowed for this head, and exactly e
        epsilon-source nodes remain to be produced

Epsilon heads occupy an empty span (hs == he).
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence, Union

from .core import (
    EPS, LEFT, STOP, ConstrainedTransducerModel, TransductionModel, to_cost,
)
from .generation import _Guard, ENUMERATION_GUARD
from .hypergraph import Edge, viterbi

ROOT = ("ROOT",)

AnyTransductionModel = Union[TransductionModel, ConstrainedTransducerModel]


@dataclass(frozen=True)
class EpsBudget:
    """Bounds on target insertions (epsilon-source transitions).

    per_head caps the epsilon-source transitions of one transducer run;
    per_token caps the total number of epsilon-source nodes at per_token
    times the source length.
    """

    per_head: int = 2
    per_token: int = 2

    def total(self, n: int) -> int:
        return self.per_token * n

    @classmethod
    def parse(cls, text: str) -> "EpsBudget":
        parts = [int(x) for x in str(text).split(",")]
        if len(parts) == 1:
            parts.append(cls.per_token)
        if len(parts) != 2 or min(parts) < 0:
            raise ValueError(f"bad epsilon budget {text!r}; expected PER_HEAD[,PER_TOKEN]")
        return cls(*parts)


DEFAULT_BUDGET = EpsBudget()


class OrderedTree(NamedTuple):
    label: str
    left: tuple
    right: tuple  # write order, outermost first

    def tokens(self) -> list[str]:
        out = []
        for c in self.left:
            out.extend(c.tokens())
        if self.label != EPS:
            out.append(self.label)
        for c in reversed(self.right):
            out.extend(c.tokens())
        return out


@dataclass(frozen=True)
class PairedDerivation:
    """A node of the paired source/target derivation.

    `children` are in trace order, one per transition; each child records
    the valencies it was attached with.
    """

    source_label: str
    target_label: str
    transducer: str
    trace: tuple[int, ...]
    children: tuple["PairedDerivation", ...] = ()
    src_dir: str | None = None
    tgt_dir: str | None = None

    def source_tree(self) -> OrderedTree:
        kids = [(c.src_dir, c.source_tree()) for c in self.children]
        return OrderedTree(self.source_label, tuple(t for d, t in kids if d == LEFT),
                           tuple(t for d, t in kids if d != LEFT))

    def target_tree(self) -> OrderedTree:
        kids = [(c.tgt_dir, c.target_tree()) for c in self.children]
        return OrderedTree(self.target_label, tuple(t for d, t in kids if d == LEFT),
                           tuple(t for d, t in kids if d != LEFT))

    def source_yield(self) -> list[str]:
        return self.source_tree().tokens()

    def target_yield(self) -> list[str]:
        return self.target_tree().tokens()

    def nodes(self) -> Iterator["PairedDerivation"]:
        yield self
        for c in self.children:
            yield from c.nodes()

    def to_json(self) -> dict:
        out = {"source_label": self.source_label, "target_label": self.target_label,
               "transducer": self.transducer, "trace": list(self.trace)}
        if self.src_dir is not None:
            out["src_dir"], out["tgt_dir"] = self.src_dir, self.tgt_dir
        out["children"] = [c.to_json() for c in self.children]
        return out


@dataclass(frozen=True)
class TransductionResult:
    target: tuple[str, ...]
    cost: float
    derivation: PairedDerivation

    def to_json(self) -> dict:
        return {"target": list(self.target), "cost": self.cost, "derivation": self.derivation.to_json()}


@dataclass(frozen=True)
class NoTranslation:
    reason: str
    token: str | None = None

    def __bool__(self):
        return False

    def to_json(self) -> dict:
        return {"result": None, "reason": self.reason, "token": self.token}


def as_transduction_model(model: AnyTransductionModel) -> TransductionModel:
    if isinstance(model, ConstrainedTransducerModel):
        return model.as_transduction_model
    if isinstance(model, TransductionModel):
        return model
    raise TypeError(f"not a transduction model: {type(model).__name__}")


def _prefix_counts(seq: Sequence[str]) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    for w in set(seq):
        counts = [0]
        for t in seq:
            counts.append(counts[-1] + (t == w))
        out[w] = counts
    return out


class PairedChart:
    """Implicit hypergraph of paired derivations of a source (and optional target)."""

    def __init__(self, model: AnyTransductionModel, source: Sequence[str],
                 target: Sequence[str] | None = None, budget: EpsBudget = DEFAULT_BUDGET):
        tm = as_transduction_model(model)
        self.model = tm
        self.source = tuple(source)
        self.target = None if target is None else tuple(target)
        self.n = len(self.source)
        self.budget = budget
        self.lex = {pair: [(mid, to_cost(p)) for mid, p in dist.items()]
                    for pair, dist in tm.bilingual_lexicon.items()}
        self.top = [(pair, to_cost(p)) for pair, p in tm.top_params.items()]
        inserts = any(w == EPS for w, _ in tm.top_params) or any(
            act.kind != STOP and act.src == EPS
            for t in tm.transducers.values() for acts in t.states for act in acts)
        self.max_eps = budget.total(self.n) if inserts else 0
        if self.target is not None:
            self.max_eps = min(self.max_eps, len(self.target))
        self._src_occ = _prefix_counts(self.source)
        self._tgt_occ = _prefix_counts(self.target) if self.target is not None else {}

    # -- feasibility helpers

    def _src_has(self, w, a, b) -> bool:
        occ = self._src_occ.get(w)
        return occ is not None and occ[b] > occ[a]

    def _tgt_has(self, v, a, b) -> bool:
        occ = self._tgt_occ.get(v)
        return occ is not None and occ[b] > occ[a]

    def _src_children(self, w2, direction, i, hs, he, j):
        """(child span, rest span) pairs for a source dependent."""
        if direction == LEFT:
            for a in range(i, hs + 1):
                if w2 != EPS and (a == i or not self._src_has(w2, i, a)):
                    continue
                yield (i, a), (a, hs, he, j)
        else:
            for a in range(j, he - 1, -1):
                if w2 != EPS and (a == j or not self._src_has(w2, a, j)):
                    continue
                yield (a, j), (i, hs, he, a)

    def _tgt_children(self, v2, direction, ti, ts, te, tj):
        if self.target is None:
            yield (None, None), (None, None, None, None)
            return
        if direction == LEFT:
            for b in range(ti, ts + 1):
                if v2 != EPS and (b == ti or not self._tgt_has(v2, ti, b)):
                    continue
                yield (ti, b), (b, ts, te, tj)
        else:
            for b in range(tj, te - 1, -1):
                if v2 != EPS and (b == tj or not self._tgt_has(v2, b, tj)):
                    continue
                yield (b, tj), (ti, ts, te, b)

    # -- the hypergraph

    def edges(self, node) -> list[Edge]:
        kind = node[0]
        if kind == "I":
            return self._item_edges(node)
        if kind == "S":
            return self._subtree_edges(node)
        out = []
        n = self.n
        ti, tj = (None, None) if self.target is None else (0, len(self.target))
        for (w, v), c in self.top:
            if w != EPS and w not in self._src_occ:
                continue
            for e in range(1 if w == EPS else 0, self.max_eps + 1):
                out.append(Edge(("top", w, v), c, (("S", 0, n, ti, tj, w, v, e),)))
        return out

    def _subtree_edges(self, node) -> list[Edge]:
        _, i, j, ti, tj, w, v, e = node
        if (w, v) not in self.lex:
            return []
        if w == EPS:
            if e < 1:
                return []
            heads = [(p, p) for p in range(i, j + 1)]
            e_item = e - 1
        else:
            heads = [(p, p + 1) for p in range(i, j) if self.source[p] == w]
            e_item = e
        if self.target is None:
            theads = [(None, None)]
        else:
            if e > tj - ti:
                return []
            if v == EPS:
                theads = [(p, p) for p in range(ti, tj + 1)]
            else:
                theads = [(p, p + 1) for p in range(ti, tj) if self.target[p] == v]
        out = []
        k = self.budget.per_head
        for hs, he in heads:
            for ts, te in theads:
                for mid, c in self.lex[(w, v)]:
                    q0 = self.model.transducers[mid].initial
                    out.append(Edge(("lex", hs, ts, mid), c,
                                    (("I", i, hs, he, j, ti, ts, te, tj, w, v, mid, q0, k, e_item),)))
        return out

    def _item_edges(self, node) -> list[Edge]:
        _, i, hs, he, j, ti, ts, te, tj, w, v, mid, q, k, e = node
        targeted = self.target is not None
        if targeted and e > (ts - ti) + (tj - te):
            return []
        out = []
        for idx, act in enumerate(self.model.transducers[mid].states[q]):
            if act.kind == STOP:
                if i == hs and he == j and e == 0 and (not targeted or (ti == ts and te == tj)):
                    out.append(Edge((STOP, idx), act.cost))
                continue
            w2, v2 = act.src, act.tgt
            if (w2, v2) not in self.lex:
                continue
            if w2 == EPS:
                if k == 0 or e == 0:
                    continue
                k2, ec_min = k - 1, 1
            else:
                k2, ec_min = k, 0
            for (ci, cj), (ri, rhs, rhe, rj) in self._src_children(w2, act.src_dir, i, hs, he, j):
                for (cti, ctj), (rti, rts, rte, rtj) in self._tgt_children(v2, act.tgt_dir, ti, ts, te, tj):
                    for ec in range(ec_min, e + 1):
                        er = e - ec
                        if targeted and (ec > ctj - cti or er > (rts - rti) + (rtj - rte)):
                            continue
                        out.append(Edge(
                            ("trans", idx),
                            act.cost,
                            (("S", ci, cj, cti, ctj, w2, v2, ec),
                             ("I", ri, rhs, rhe, rj, rti, rts, rte, rtj, w, v, mid, act.next_state, k2, er))))
        return out

    # -- interpreting hyperpaths

    def derivation_from(self, d) -> PairedDerivation:
        """Root hyperpath -> PairedDerivation."""
        return self._subtree(d.children[0], None, None)

    def _subtree(self, sd, src_dir, tgt_dir) -> PairedDerivation:
        _, i, j, ti, tj, w, v, e = sd.node
        _, hs, ts, mid = sd.edge.label
        t = self.model.transducers[mid]
        q = t.initial
        d = sd.children[0]
        trace, children = [], []
        while True:
            idx = d.edge.label[1]
            act = t.states[q][idx]
            trace.append(idx)
            if act.kind == STOP:
                break
            child_d, rest = d.children
            children.append(self._subtree(child_d, act.src_dir, act.tgt_dir))
            q, d = act.next_state, rest
        return PairedDerivation(w, v, mid, tuple(trace), tuple(children), src_dir, tgt_dir)

    @staticmethod
    def edge_event(node, edge):
        """What model parameter an edge pays for.

        ("top", (w, v)), ("action", (w, v), transducer id, state, action index),
        ("lexicon", (w, v), transducer id), or None.
        """
        kind = node[0]
        if kind == "ROOT":
            return ("top", (edge.label[1], edge.label[2]))
        if kind == "S":
            return ("lexicon", (node[5], node[6]), edge.label[3])
        return ("action", (node[9], node[10]), node[11], node[12], edge.label[1])


def _untranslatable(tm: TransductionModel, source) -> str | None:
    known = {w for w, _ in tm.bilingual_lexicon} | {w for w, _ in tm.top_params}
    for t in source:
        if t not in known:
            return t
    return None


def transduce(model: AnyTransductionModel, source: Sequence[str],
              budget: EpsBudget = DEFAULT_BUDGET) -> TransductionResult | NoTranslation:
    """Lowest-cost paired derivation whose source yield is `source`."""
    if not source:
        raise ValueError("cannot translate an empty source sequence")
    tm = as_transduction_model(model)
    if not tm.top_params:
        raise ValueError("model has no top parameters and cannot be decoded")
    bad = _untranslatable(tm, source)
    if bad is not None:
        return NoTranslation("untranslatable-token", bad)
    chart = PairedChart(tm, source, None, budget)
    d = viterbi(chart.edges, ROOT)
    if d is None:
        return NoTranslation("no-derivation")
    deriv = chart.derivation_from(d)
    return TransductionResult(tuple(deriv.target_yield()), d.cost, deriv)


def score_pair(model: AnyTransductionModel, source: Sequence[str], target: Sequence[str],
               budget: EpsBudget = DEFAULT_BUDGET) -> float | None:
    """Cost of the best paired derivation yielding both sides, or None."""
    result = best_pair_derivation(model, source, target, budget)
    return None if result is None else result.cost


def best_pair_derivation(model: AnyTransductionModel, source, target,
                         budget: EpsBudget = DEFAULT_BUDGET) -> TransductionResult | None:
    tm = as_transduction_model(model)
    if not source:
        return None
    chart = PairedChart(tm, source, target, budget)
    d = viterbi(chart.edges, ROOT)
    if d is None:
        return None
    return TransductionResult(tuple(target), d.cost, chart.derivation_from(d))


# ---------------------------------------------------------------------------
# brute-force oracle


def enumerate_transductions(model: AnyTransductionModel, source: Sequence[str], max_nodes: int,
                            budget: EpsBudget = DEFAULT_BUDGET, target: Sequence[str] | None = None,
                            guard: int = ENUMERATION_GUARD) -> Iterator[tuple[PairedDerivation, float]]:
    """Every paired derivation with at most `max_nodes` nodes yielding `source`.

    Derivations are generated top-down, straight from the parameter tables,
    under the same epsilon budget as the decoder; `target` additionally
    filters on the target yield.
    """
    source = tuple(source)
    target = None if target is None else tuple(target)
    for d, cost in enumerate_paired_derivations(
            model, Counter(source), max_nodes, budget.total(len(source)), budget.per_head,
            None if target is None else Counter(target), guard):
        if tuple(d.source_yield()) != source:
            continue
        if target is not None and tuple(d.target_yield()) != target:
            continue
        yield d, cost


def enumerate_paired_derivations(model: AnyTransductionModel, source_bag: Counter, max_nodes: int,
                                 max_eps: int, per_head: int, target_bag: Counter | None = None,
                                 guard: int = ENUMERATION_GUARD) -> Iterator[tuple[PairedDerivation, float]]:
    """All derivations using each source word at most as often as `source_bag` says.

    Word order is not constrained, so one call covers every permutation of
    the bag; callers filter or group by yield.  `target_bag` does the same
    for target words when given.
    """
    tm = as_transduction_model(model)
    g = _Guard(guard)

    def take(counter, word):
        if counter is None or word == EPS:
            return counter
        if counter[word] <= 0:
            return False
        out = counter.copy()
        out[word] -= 1
        return out

    def node(w, v, sdir, tdir, nodes_left, eps_left, src_left, tgt_left):
        nodes_left -= 1
        if w == EPS:
            eps_left -= 1
        if nodes_left < 0 or eps_left < 0:
            return
        src_left = take(src_left, w)
        tgt_left = take(tgt_left, v)
        if src_left is False or tgt_left is False:
            return
        for mid, p in tm.bilingual_lexicon.get((w, v), {}).items():
            t = tm.transducers[mid]
            for trace, kids, nl, el, sl, tl, cost in run(t, t.initial, per_head,
                                                         nodes_left, eps_left, src_left, tgt_left):
                yield (PairedDerivation(w, v, mid, trace, kids, sdir, tdir),
                       nl, el, sl, tl, to_cost(p) + cost)

    def run(t, q, k_left, nodes_left, eps_left, src_left, tgt_left):
        for idx, act in enumerate(t.states[q]):
            g.tick()
            if act.kind == STOP:
                yield (idx,), (), nodes_left, eps_left, src_left, tgt_left, act.cost
                continue
            if nodes_left < 1 or (act.src == EPS and k_left == 0):
                continue
            k2 = k_left - (act.src == EPS)
            for child, nl, el, sl, tl, ccost in node(act.src, act.tgt, act.src_dir, act.tgt_dir,
                                                     nodes_left, eps_left, src_left, tgt_left):
                for trace, kids, nl2, el2, sl2, tl2, rcost in run(t, act.next_state, k2, nl, el, sl, tl):
                    yield (idx,) + trace, (child,) + kids, nl2, el2, sl2, tl2, act.cost + ccost + rcost

    for (w, v), p in tm.top_params.items():
        for d, *_, cost in node(w, v, None, None, max_nodes, max_eps, source_bag, target_bag):
            yield d, to_cost(p) + cost


def derivation_cost(model: AnyTransductionModel, d: PairedDerivation) -> float:
    """Cost of a paired derivation read directly off its traces (root Top included)."""
    tm = as_transduction_model(model)

    def local(nd):
        c = to_cost(tm.bilingual_lexicon[(nd.source_label, nd.target_label)][nd.transducer])
        t = tm.transducers[nd.transducer]
        q, kids = t.initial, iter(nd.children)
        for idx in nd.trace:
            act = t.states[q][idx]
            c += act.cost
            if act.kind == STOP:
                break
            c += local(next(kids))
            q = act.next_state
        return c

    return to_cost(tm.top_params[(d.source_label, d.target_label)]) + local(d)

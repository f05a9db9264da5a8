"""Parameter estimation.

Supervised: relative frequencies from a treebank of fully annotated
derivations.  Unsupervised: EM for the constrained single-state transducer
model, with the E-step computed by inside-outside over the paired chart of
`transduction.PairedChart` (sum instead of min).
"""

from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

from .core import (
    DIRECTIONS, EPS, LEFT, RIGHT, STOP, AcceptorAction, ConstrainedTransducerModel, DataError, HeadAcceptor,
    RelationalAcceptorModel, _reachable_relations,
)
from .generation import OrderedDependencyTree
from .hypergraph import inside_outside
from .transduction import DEFAULT_BUDGET, ROOT, EpsBudget, PairedChart, PairedDerivation

log = logging.getLogger(__name__)

Pair = tuple[str, str]


# ---------------------------------------------------------------------------
# supervised estimation of acceptor models


def _ratio(counts: Mapping, support: Iterable, delta: float) -> dict:
    """(count + delta) / (total + delta * |support|) over `support` (or the observed events)."""
    keys = list(support) if delta > 0 else [k for k, c in counts.items() if c > 0]
    total = sum(counts.get(k, 0) for k in keys) + delta * len(keys)
    return {k: (counts.get(k, 0) + delta) / total for k in keys}


def estimate_acceptor_model(trees: Iterable[OrderedDependencyTree], automata: Mapping[str, HeadAcceptor],
                            delta: float = 0.0, vocab: Sequence[str] | None = None,
                            report: list | None = None) -> RelationalAcceptorModel:
    """Relative-frequency estimate of every parameter from annotated trees.

    `automata` supplies the machine skeletons; their probabilities are
    ignored.  With delta > 0 each row is add-delta smoothed over its full
    event space (skeleton actions, vocabulary, automaton states).  Contexts
    never seen in the data get no dependency or lexicon row; automaton
    states never visited become uniform over their actions.  Both are
    appended to `report` (and logged) as strings.
    """
    if delta < 0:
        raise ValueError("delta must be non-negative")
    actions: dict = defaultdict(Counter)   # (m, q) -> {index: n}
    deps: dict = defaultdict(Counter)      # (w, r) -> {w': n}
    lex: dict = defaultdict(Counter)       # (r, w) -> {(m, q): n}
    top: Counter = Counter()
    words: dict[str, None] = dict.fromkeys(vocab or ())

    def visit(node: OrderedDependencyTree, where: str):
        words.setdefault(node.label)
        a = automata.get(node.automaton)
        if a is None:
            raise DataError(f"{where}: automaton {node.automaton!r} is not in the skeleton set")
        if not 0 <= node.initial_state < a.state_count:
            raise DataError(f"{where}: automaton {a.id} has no state {node.initial_state}")
        q, kids, stopped = node.initial_state, {LEFT: iter(node.left), RIGHT: iter(node.right)}, False
        for step, idx in enumerate(node.trace):
            acts = a.states[q]
            if stopped or not 0 <= idx < len(acts):
                raise DataError(f"{where}: trace step {step} ({idx}) is not an action of {a.id} state {q}")
            actions[(a.id, q)][idx] += 1
            act = acts[idx]
            if act.kind == STOP:
                stopped = True
                continue
            child = next(kids[act.kind], None)
            if child is None or child.relation != act.symbol:
                raise DataError(f"{where}: trace step {step} writes {act.kind} {act.symbol!r} "
                                "but the matching child disagrees")
            deps[(node.label, act.symbol)][child.label] += 1
            lex[(act.symbol, child.label)][(child.automaton, child.initial_state)] += 1
            visit(child, f"{where}/{child.label}")
            q = act.next_state
        if not stopped or any(next(it, None) is not None for it in kids.values()):
            raise DataError(f"{where}: trace does not account for the node's children")

    n_trees = 0
    for i, tree in enumerate(trees):
        if tree.relation is not None:
            raise DataError(f"tree {i}: root carries relation {tree.relation!r}")
        top[(tree.label, tree.automaton, tree.initial_state)] += 1
        visit(tree, f"tree {i}")
        n_trees += 1
    if n_trees == 0:
        raise DataError("empty treebank")

    gaps = report if report is not None else []
    starts = [(m, q) for m, a in automata.items() for q in range(a.state_count)]
    vocab_t = tuple(words)
    relations: dict[str, None] = {}
    new_automata = {}
    for m, a in automata.items():
        states = []
        for q, acts in enumerate(a.states):
            for act in acts:
                if act.kind in DIRECTIONS:
                    relations.setdefault(act.symbol)
            seen = actions.get((m, q))
            if not seen:
                gaps.append(f"automaton {m} state {q} never visited; uniform actions")
                probs = [1.0 / len(acts)] * len(acts)
            else:
                row = _ratio(seen, range(len(acts)), delta)
                probs = [row.get(i, 0.0) for i in range(len(acts))]
            # actions never taken (delta = 0) are dropped rather than given p = 0
            states.append(tuple(AcceptorAction(act.kind, act.symbol, act.next_state, p)
                                for act, p in zip(acts, probs) if p > 0))
        new_automata[m] = replace(a, states=tuple(states))

    dependency_params = {k: _ratio(c, vocab_t, delta) for k, c in deps.items()}
    lexicon_params = {k: _ratio(c, starts, delta) for k, c in lex.items()}
    top_params = _ratio(top, [(w, m, q) for w in vocab_t for m, q in starts], delta)
    entry_points = defaultdict(set)
    for (_, w), row in lexicon_params.items():
        entry_points[w].update(row)
    for w, m, q in top_params:
        entry_points[w].add((m, q))
    for w, mqs in entry_points.items():
        needed = set().union(*(_reachable_relations(new_automata[m], q) for m, q in mqs))
        for r in sorted(needed):
            if (w, r) not in dependency_params:
                gaps.append(f"no data for dependency row ({w}, {r})")
    for g in gaps:
        log.info("estimate: %s", g)
    return RelationalAcceptorModel(vocab_t, tuple(relations), new_automata,
                                   dependency_params, lexicon_params, top_params)


# ---------------------------------------------------------------------------
# EM for the constrained transducer model


@dataclass
class ExpectedCounts:
    """Additive expected event counts.

    events: (w, v) -> {STOP or (w', v', src_dir, tgt_dir): count}
    top:    (w, v) -> count
    """

    events: dict = field(default_factory=lambda: defaultdict(Counter))
    top: Counter = field(default_factory=Counter)

    def add(self, other: "ExpectedCounts", scale: float = 1.0) -> None:
        for ctx, row in other.events.items():
            mine = self.events[ctx]
            for e, c in row.items():
                mine[e] += scale * c
        for k, c in other.top.items():
            self.top[k] += scale * c

    def as_dict(self) -> dict:
        """Plain nested dict with zero entries removed (for comparisons)."""
        ev = {ctx: {e: c for e, c in row.items() if c} for ctx, row in self.events.items()}
        return {"events": {k: v for k, v in ev.items() if v},
                "top": {k: c for k, c in self.top.items() if c}}


def _event_table(model: ConstrainedTransducerModel) -> dict:
    """Transducer id -> list of events indexed like its single state's actions."""
    tm = model.as_transduction_model
    return {tid: [act.event for act in t.states[0]] for tid, t in tm.transducers.items()}


def expected_counts(model: ConstrainedTransducerModel, pair: tuple[Sequence[str], Sequence[str]],
                    budget: EpsBudget = DEFAULT_BUDGET, _events: dict | None = None
                    ) -> tuple[ExpectedCounts, float | None]:
    """Posterior expected event counts over all paired derivations of `pair`.

    Returns the counts and the log inside probability, or all-zero counts and
    None when the pair has no derivation.
    """
    source, target = pair
    counts = ExpectedCounts()
    if not source:
        return counts, None
    events = _events if _events is not None else _event_table(model)
    chart = PairedChart(model, source, target, budget)
    log_z, posteriors = inside_outside(chart.edges, ROOT)
    if log_z == -math.inf:
        return counts, None
    for node, edge, post in posteriors:
        kind = node[0]
        if kind == "I":
            counts.events[(node[9], node[10])][events[node[11]][edge.label[1]]] += post
        elif kind == "ROOT":
            counts.top[(edge.label[1], edge.label[2])] += post
    return counts, log_z


def derivation_events(d: PairedDerivation) -> tuple[Counter, Counter]:
    """Event multiset of one derivation of a constrained model: (events, top)."""
    events: Counter = Counter()
    for nd in d.nodes():
        ctx = (nd.source_label, nd.target_label)
        for c in nd.children:
            events[(ctx, (c.source_label, c.target_label, c.src_dir, c.tgt_dir))] += 1
        events[(ctx, STOP)] += 1
    return events, Counter({(d.source_label, d.target_label): 1})


def uniform_model(dictionary: Iterable[Pair], source_vocab=None, target_vocab=None) -> ConstrainedTransducerModel:
    """Uniform distributions over every dictionary-admissible event.

    Each head pair may stop or take any dictionary pair as a dependent with
    any of the four valency combinations; every dictionary pair may be a root.
    """
    pairs = list(dict.fromkeys((w, v) for w, v in dictionary))
    if not pairs:
        raise DataError("empty dictionary")
    admissible = [STOP] + [(w2, v2, d1, d2) for w2, v2 in pairs for d1 in DIRECTIONS for d2 in DIRECTIONS]
    row = {e: 1.0 / len(admissible) for e in admissible}
    params = {p: dict(row) for p in pairs}
    top = {p: 1.0 / len(pairs) for p in pairs}
    src = source_vocab or tuple(dict.fromkeys(w for w, _ in pairs if w != EPS))
    tgt = target_vocab or tuple(dict.fromkeys(v for _, v in pairs if v != EPS))
    return ConstrainedTransducerModel(tuple(src), tuple(tgt), params, top)


def maximize(model: ConstrainedTransducerModel, counts: ExpectedCounts, delta: float = 0.0
             ) -> ConstrainedTransducerModel:
    """M-step: count ratios per head pair, Top normalized over all pairs.

    The event space of each row is the set of events the current model
    admits.  With delta = 0, events with zero count are dropped and rows
    whose context got no counts at all are kept unchanged.
    """
    params = {}
    for ctx, row in model.params.items():
        c = counts.events.get(ctx, {})
        if delta == 0 and sum(c.get(e, 0.0) for e in row) <= 0:
            params[ctx] = dict(row)
        else:
            params[ctx] = _ratio(c, row, delta)
    if delta == 0 and sum(counts.top.get(k, 0.0) for k in model.top_params) <= 0:
        top = dict(model.top_params)
    else:
        top = _ratio(counts.top, model.top_params, delta)
    return ConstrainedTransducerModel(model.source_vocab, model.target_vocab, params, top)


@dataclass
class TrainingResult:
    model: ConstrainedTransducerModel
    logliks: list[float]
    log: list[dict]


def em_train(corpus: Sequence[tuple[Sequence[str], Sequence[str]]], dictionary: Iterable[Pair] | None = None,
             iterations: int = 10, init: ConstrainedTransducerModel | None = None,
             budget: EpsBudget = DEFAULT_BUDGET, delta: float = 0.0) -> TrainingResult:
    """Inside-outside EM for the constrained model.

    `logliks[i]` is the corpus log-likelihood under the model entering
    iteration i+1, i.e. the quantity EM guarantees not to decrease.
    """
    if iterations < 1:
        raise ValueError("iterations must be at least 1")
    if init is None:
        if dictionary is None:
            raise ValueError("need a dictionary or an initial model")
        model = uniform_model(dictionary)
    else:
        model = init
    logliks, entries = [], []
    for it in range(1, iterations + 1):
        events = _event_table(model)
        total = ExpectedCounts()
        ll, skipped = 0.0, []
        for idx, (src, tgt) in enumerate(corpus):
            counts, log_z = expected_counts(model, (src, tgt), budget, events)
            if log_z is None:
                heads = {w for w, _ in model.top_params}
                reason = ("no-admissible-head-pair" if not (heads & (set(src) | {EPS}))
                          else "zero-inside-mass")
                skipped.append({"index": idx, "reason": reason})
                continue
            ll += log_z
            total.add(counts)
        logliks.append(ll)
        entries.append({"iter": it, "loglik": ll, "skipped": skipped})
        for s in skipped:
            log.warning("iteration %d: skipped pair %d (%s)", it, s["index"], s["reason"])
        model = maximize(model, total, delta)
    return TrainingResult(model, logliks, entries)

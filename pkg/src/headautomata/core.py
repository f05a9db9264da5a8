"""Model types for head acceptors and head transducers, and their validation.

All probabilities are stored exactly as given.  Search and scoring code works
with costs (negated natural-log probabilities) obtained through `to_cost`.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Iterable, Mapping, Union

EPS = "<eps>"

# action kinds and valencies
LEFT = "left"
RIGHT = "right"
STOP = "stop"
TRANSITION = "transition"
DIRECTIONS = (LEFT, RIGHT)

TOLERANCE = 1e-9


class ModelFormatError(ValueError):
    """A serialized model, tree or corpus could not be read."""


class DataError(ValueError):
    """Training data is inconsistent with the model structure it targets."""


class ImpossibleDerivation(LookupError):
    """A derivation uses a parameter the model does not have."""


class SamplingFailure(RuntimeError):
    pass


class CapacityError(RuntimeError):
    """A brute-force enumeration exceeded its configuration guard."""


def to_cost(p: float) -> float:
    """Return -ln p.  Zero (or negative) probabilities have no cost."""
    if not p > 0.0:
        raise ValueError(f"probability {p!r} has no cost; use an explicit impossible marker")
    return -math.log(p) + 0.0


def from_cost(c: float) -> float:
    return math.exp(-c)


# ---------------------------------------------------------------------------
# head acceptors


@dataclass(frozen=True)
class AcceptorAction:
    kind: str
    symbol: str | None = None
    next_state: int | None = None
    prob: float = 1.0

    @cached_property
    def cost(self) -> float:
        return to_cost(self.prob)

    def __str__(self):
        if self.kind == STOP:
            return f"stop({self.prob:g})"
        return f"{self.kind}({self.symbol}->{self.next_state}, {self.prob:g})"


@dataclass(frozen=True)
class HeadAcceptor:
    """A machine writing a pair (L, R) of sequences.

    A left transition appends its symbol to the right end of L, a right
    transition prepends its symbol to the left end of R, so both sequences
    are written from the outside in.
    """

    id: str
    states: tuple[tuple[AcceptorAction, ...], ...]
    alphabet: str = "relation"  # "word" or "relation"
    initial: int = 0

    @property
    def state_count(self) -> int:
        return len(self.states)

    def actions(self, q: int) -> tuple[AcceptorAction, ...]:
        return self.states[q]


@dataclass(frozen=True)
class RelationalAcceptorModel:
    """Relational head acceptors plus dependency, lexicon and top tables.

    dependency_params: (head word, relation) -> {dependent word: p}
    lexicon_params:    (relation, word) -> {(automaton id, state): p}
    top_params:        (word, automaton id, state) -> p
    """

    vocab: tuple[str, ...]
    relations: tuple[str, ...]
    automata: Mapping[str, HeadAcceptor]
    dependency_params: Mapping[tuple[str, str], Mapping[str, float]] = field(default_factory=dict)
    lexicon_params: Mapping[tuple[str, str], Mapping[tuple[str, int], float]] = field(default_factory=dict)
    top_params: Mapping[tuple[str, str, int], float] = field(default_factory=dict)

    @property
    def is_bare(self) -> bool:
        """True for a plain collection of acceptors with no parameter tables."""
        return not (self.relations or self.dependency_params or self.lexicon_params or self.top_params)

    @cached_property
    def lexicon_by_word(self) -> dict[str, dict[str, list[tuple[str, int, float]]]]:
        """word -> relation -> [(m, q, cost)], in deterministic order."""
        out: dict[str, dict[str, list]] = defaultdict(dict)
        for (r, w), dist in self.lexicon_params.items():
            out[w][r] = [(m, q, to_cost(p)) for (m, q), p in dist.items()]
        return dict(out)

    @cached_property
    def dependency_costs(self) -> dict[tuple[str, str], dict[str, float]]:
        return {key: {w: to_cost(p) for w, p in dist.items()}
                for key, dist in self.dependency_params.items()}


# ---------------------------------------------------------------------------
# head transducers


@dataclass(frozen=True)
class TransducerAction:
    kind: str
    src: str | None = None
    tgt: str | None = None
    src_dir: str | None = None
    tgt_dir: str | None = None
    next_state: int | None = None
    prob: float = 1.0

    @cached_property
    def cost(self) -> float:
        return to_cost(self.prob)

    @property
    def event(self):
        """Key of this action in a single-state (constrained) parameter table."""
        if self.kind == STOP:
            return STOP
        return (self.src, self.tgt, self.src_dir, self.tgt_dir)


@dataclass(frozen=True)
class HeadTransducer:
    id: str
    states: tuple[tuple[TransducerAction, ...], ...]
    initial: int = 0

    @property
    def state_count(self) -> int:
        return len(self.states)


@dataclass(frozen=True)
class TransductionModel:
    """Head transducers with a bilingual lexicon P(M | w, v) and P(w0, v0 | Top)."""

    source_vocab: tuple[str, ...]
    target_vocab: tuple[str, ...]
    transducers: Mapping[str, HeadTransducer]
    bilingual_lexicon: Mapping[tuple[str, str], Mapping[str, float]]
    top_params: Mapping[tuple[str, str], float]


Event = Union[str, tuple[str, str, str, str]]


@dataclass(frozen=True)
class ConstrainedTransducerModel:
    """Single-state transducer model, one implied transducer per head pair.

    params: (w, v) -> {STOP or (w', v', src_dir, tgt_dir): p}
    """

    source_vocab: tuple[str, ...]
    target_vocab: tuple[str, ...]
    params: Mapping[tuple[str, str], Mapping[Event, float]]
    top_params: Mapping[tuple[str, str], float]

    @property
    def dictionary(self) -> frozenset[tuple[str, str]]:
        return frozenset(self.params)

    def parameter_count(self) -> int:
        return sum(len(dist) for dist in self.params.values())

    @cached_property
    def as_transduction_model(self) -> TransductionModel:
        """One single-state transducer per head pair, selected with probability 1."""
        transducers, lexicon = {}, {}
        for (w, v), dist in self.params.items():
            tid = constrained_transducer_id(w, v)
            if tid in transducers:
                raise ValueError(f"head pairs collide on transducer id {tid!r}")
            acts = []
            for e, p in dist.items():
                if e == STOP:
                    acts.append(TransducerAction(STOP, prob=p))
                else:
                    dw, dv, d1, d2 = e
                    acts.append(TransducerAction(TRANSITION, dw, dv, d1, d2, 0, p))
            transducers[tid] = HeadTransducer(tid, (tuple(acts),), 0)
            lexicon[(w, v)] = {tid: 1.0}
        return TransductionModel(self.source_vocab, self.target_vocab, transducers, lexicon,
                                 dict(self.top_params))


def constrained_transducer_id(w: str, v: str) -> str:
    return f"{w}|{v}"


Model = Union[RelationalAcceptorModel, TransductionModel, ConstrainedTransducerModel]


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Violation:
    location: str
    rule: str
    value: object = None

    def __str__(self):
        return f"{self.location}: {self.rule} ({self.value})"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_json(self) -> dict:
        return {"ok": self.ok,
                "violations": [{"location": v.location, "rule": v.rule, "value": v.value}
                               for v in self.violations]}


class _Collector:
    def __init__(self):
        self.items: list[Violation] = []

    def add(self, location, rule, value=None):
        self.items.append(Violation(location, rule, value))

    def distribution(self, location, dist: Mapping):
        """Check one probability distribution; report its sum if off."""
        total = 0.0
        for key, p in dist.items():
            if not (isinstance(p, (int, float)) and p > 0.0 and math.isfinite(p)):
                self.add(f"{location}[{key}]", "probability-range", p)
            else:
                total += p
        if abs(total - 1.0) > TOLERANCE:
            self.add(location, "normalization", total)

    def report(self) -> ValidationReport:
        return ValidationReport(tuple(self.items))


def _check_duplicates(c: _Collector, location: str, items: Iterable[str]):
    seen = set()
    for s in items:
        if s in seen:
            c.add(location, "duplicate-symbol", s)
        seen.add(s)
        if s == "":
            c.add(location, "empty-symbol", s)


def _acceptor_checks(c: _Collector, a: HeadAcceptor, alphabet=None):
    loc = f"automaton {a.id}"
    if a.state_count < 1:
        c.add(loc, "no-states", 0)
        return
    if not 0 <= a.initial < a.state_count:
        c.add(loc, "dangling-initial-state", a.initial)
    for q, acts in enumerate(a.states):
        c.distribution(f"{loc} state {q}", {i: act.prob for i, act in enumerate(acts)})
        for i, act in enumerate(acts):
            aloc = f"{loc} state {q} action {i}"
            if act.kind == STOP:
                if act.symbol is not None or act.next_state is not None:
                    c.add(aloc, "stop-with-payload", str(act))
            elif act.kind in DIRECTIONS:
                if act.next_state is None or not 0 <= act.next_state < a.state_count:
                    c.add(aloc, "dangling-state", act.next_state)
                if alphabet is not None and act.symbol not in alphabet:
                    c.add(aloc, "out-of-alphabet", act.symbol)
                elif not act.symbol:
                    c.add(aloc, "empty-symbol", act.symbol)
            else:
                c.add(aloc, "unknown-action-kind", act.kind)


def validate_acceptor(a: HeadAcceptor, alphabet: Iterable[str] | None = None) -> ValidationReport:
    """Check normalization, state references and (optionally) the alphabet."""
    c = _Collector()
    _acceptor_checks(c, a, None if alphabet is None else frozenset(alphabet))
    return c.report()


def _transducer_checks(c: _Collector, t: HeadTransducer, src_alphabet=None, tgt_alphabet=None):
    loc = f"transducer {t.id}"
    if t.state_count < 1:
        c.add(loc, "no-states", 0)
        return
    if not 0 <= t.initial < t.state_count:
        c.add(loc, "dangling-initial-state", t.initial)
    for q, acts in enumerate(t.states):
        c.distribution(f"{loc} state {q}", {i: act.prob for i, act in enumerate(acts)})
        for i, act in enumerate(acts):
            aloc = f"{loc} state {q} action {i}"
            if act.kind == STOP:
                if any(x is not None for x in (act.src, act.tgt, act.src_dir, act.tgt_dir, act.next_state)):
                    c.add(aloc, "stop-with-payload", repr(act.event))
                continue
            if act.kind != TRANSITION:
                c.add(aloc, "unknown-action-kind", act.kind)
                continue
            if act.next_state is None or not 0 <= act.next_state < t.state_count:
                c.add(aloc, "dangling-state", act.next_state)
            if act.src_dir not in DIRECTIONS or act.tgt_dir not in DIRECTIONS:
                c.add(aloc, "bad-valency", f"{act.src_dir},{act.tgt_dir}")
            if act.src == EPS and act.tgt == EPS:
                c.add(aloc, "epsilon-epsilon-transition", repr(act.event))
            if src_alphabet is not None and act.src not in src_alphabet:
                c.add(aloc, "out-of-source-alphabet", act.src)
            if tgt_alphabet is not None and act.tgt not in tgt_alphabet:
                c.add(aloc, "out-of-target-alphabet", act.tgt)


def validate_transducer(t: HeadTransducer, source_alphabet=None, target_alphabet=None) -> ValidationReport:
    """Check normalization, state references and the no-(eps, eps) rule."""
    c = _Collector()
    _transducer_checks(c, t,
                       None if source_alphabet is None else frozenset(source_alphabet) | {EPS},
                       None if target_alphabet is None else frozenset(target_alphabet) | {EPS})
    return c.report()


def _reachable_relations(a: HeadAcceptor, q: int) -> set[str]:
    seen, todo, rels = {q}, [q], set()
    while todo:
        s = todo.pop()
        if not 0 <= s < a.state_count:
            continue
        for act in a.states[s]:
            if act.kind in DIRECTIONS:
                rels.add(act.symbol)
                if act.next_state not in seen:
                    seen.add(act.next_state)
                    todo.append(act.next_state)
    return rels


def _validate_acceptor_model(c: _Collector, m: RelationalAcceptorModel):
    vocab, rels = frozenset(m.vocab), frozenset(m.relations)
    _check_duplicates(c, "vocab", m.vocab)
    _check_duplicates(c, "relations", m.relations)
    if EPS in vocab:
        c.add("vocab", "epsilon-in-acceptor-vocab", EPS)
    for a in m.automata.values():
        alphabet = vocab if a.alphabet == "word" else rels
        # a bare acceptor file without declared symbols leaves the alphabet open
        _acceptor_checks(c, a, alphabet if alphabet or not m.is_bare else None)
        if a.alphabet not in ("word", "relation"):
            c.add(f"automaton {a.id}", "unknown-alphabet", a.alphabet)
    if m.is_bare:
        return
    if not m.relations:
        c.add("relations", "empty-relation-set", 0)

    def state_ok(loc, mid, q):
        a = m.automata.get(mid)
        if a is None:
            c.add(loc, "unknown-automaton", mid)
            return False
        if not 0 <= q < a.state_count:
            c.add(loc, "dangling-state", q)
            return False
        if a.alphabet != "relation":
            c.add(loc, "word-automaton-in-relational-model", mid)
        return True

    for (w, r), dist in m.dependency_params.items():
        loc = f"dependency_params[{w}][{r}]"
        if w not in vocab:
            c.add(loc, "unknown-word", w)
        if r not in rels:
            c.add(loc, "unknown-relation", r)
        c.distribution(loc, dist)
        for dep in dist:
            if dep not in vocab:
                c.add(loc, "unknown-word", dep)
    starts: dict[str, set] = defaultdict(set)
    for (r, w), dist in m.lexicon_params.items():
        loc = f"lexicon_params[{r}][{w}]"
        if w not in vocab:
            c.add(loc, "unknown-word", w)
        if r not in rels:
            c.add(loc, "unknown-relation", r)
        c.distribution(loc, dist)
        for mid, q in dist:
            if state_ok(f"{loc}[{mid}:{q}]", mid, q):
                starts[w].add((mid, q))
    c.distribution("top_params", {f"{w}:{mid}:{q}": p for (w, mid, q), p in m.top_params.items()})
    for w, mid, q in m.top_params:
        loc = f"top_params[{w}][{mid}:{q}]"
        if w not in vocab:
            c.add(loc, "unknown-word", w)
        if state_ok(loc, mid, q):
            starts[w].add((mid, q))
    # every relation an automaton can emit for a word needs a dependency row
    for w in sorted(starts):
        needed = set()
        for mid, q in starts[w]:
            needed |= _reachable_relations(m.automata[mid], q)
        for r in sorted(needed):
            if (w, r) not in m.dependency_params:
                c.add(f"dependency_params[{w}][{r}]", "missing-dependency-row", None)


def _validate_transduction_model(c: _Collector, m: TransductionModel):
    _check_duplicates(c, "source_vocab", m.source_vocab)
    _check_duplicates(c, "target_vocab", m.target_vocab)
    src, tgt = frozenset(m.source_vocab) | {EPS}, frozenset(m.target_vocab) | {EPS}
    for t in m.transducers.values():
        _transducer_checks(c, t, src, tgt)
    for (w, v), dist in m.bilingual_lexicon.items():
        loc = f"bilingual_lexicon[{w}][{v}]"
        _pair_checks(c, loc, w, v, src, tgt)
        c.distribution(loc, dist)
        for mid in dist:
            if mid not in m.transducers:
                c.add(loc, "unknown-transducer", mid)
    _top_checks(c, m.top_params, src, tgt)
    for w, v in m.top_params:
        if (w, v) not in m.bilingual_lexicon:
            c.add(f"top_params[{w}][{v}]", "missing-lexicon-row", None)
    for t in m.transducers.values():
        for q, acts in enumerate(t.states):
            for i, act in enumerate(acts):
                if act.kind == TRANSITION and (act.src, act.tgt) not in m.bilingual_lexicon:
                    c.add(f"transducer {t.id} state {q} action {i}", "missing-lexicon-row",
                          f"{act.src},{act.tgt}")


def _pair_checks(c, loc, w, v, src, tgt):
    if w not in src:
        c.add(loc, "unknown-source-word", w)
    if v not in tgt:
        c.add(loc, "unknown-target-word", v)
    if w == EPS and v == EPS:
        c.add(loc, "epsilon-epsilon-pair", None)


def _top_checks(c, top, src, tgt):
    if not top:
        c.add("top_params", "missing-top-parameters", None)
        return
    c.distribution("top_params", {f"{w}:{v}": p for (w, v), p in top.items()})
    for w, v in top:
        _pair_checks(c, f"top_params[{w}][{v}]", w, v, src, tgt)


def _validate_constrained_model(c: _Collector, m: ConstrainedTransducerModel):
    _check_duplicates(c, "source_vocab", m.source_vocab)
    _check_duplicates(c, "target_vocab", m.target_vocab)
    src, tgt = frozenset(m.source_vocab) | {EPS}, frozenset(m.target_vocab) | {EPS}
    for (w, v), dist in m.params.items():
        loc = f"params[{w}][{v}]"
        _pair_checks(c, loc, w, v, src, tgt)
        c.distribution(loc, {str(e): p for e, p in dist.items()})
        for e in dist:
            if e == STOP:
                continue
            if not (isinstance(e, tuple) and len(e) == 4):
                c.add(loc, "malformed-event", repr(e))
                continue
            eloc = f"{loc}[{' '.join(map(str, e))}]"
            dw, dv, a1, a2 = e
            if a1 not in DIRECTIONS or a2 not in DIRECTIONS:
                c.add(eloc, "bad-valency", f"{a1},{a2}")
            if dw == EPS and dv == EPS:
                c.add(eloc, "epsilon-epsilon-transition", None)
            elif (dw, dv) not in m.params:
                c.add(eloc, "dependent-pair-not-in-dictionary", f"{dw},{dv}")
    _top_checks(c, m.top_params, src, tgt)
    for w, v in m.top_params:
        if (w, v) not in m.params:
            c.add(f"top_params[{w}][{v}]", "top-pair-not-in-dictionary", None)


def validate_model(m: Model) -> ValidationReport:
    """Check every parameter table of a model for normalization and integrity."""
    c = _Collector()
    if isinstance(m, RelationalAcceptorModel):
        _validate_acceptor_model(c, m)
    elif isinstance(m, TransductionModel):
        _validate_transduction_model(c, m)
    elif isinstance(m, ConstrainedTransducerModel):
        _validate_constrained_model(c, m)
    else:
        raise TypeError(f"not a model: {type(m).__name__}")
    return c.report()


# ---------------------------------------------------------------------------
# renormalization (used when loading drifted model files)


def _norm(dist: Mapping) -> dict:
    total = sum(dist.values())
    if total <= 0:
        return dict(dist)
    return {k: p / total for k, p in dist.items()}


def _renorm_states(states, make):
    out = []
    for acts in states:
        total = sum(a.prob for a in acts)
        out.append(tuple(make(a, a.prob / total if total > 0 else a.prob) for a in acts))
    return tuple(out)


def renormalize(m: Model) -> Model:
    """Rescale every distribution of `m` to sum to one."""
    if isinstance(m, RelationalAcceptorModel):
        automata = {k: replace(a, states=_renorm_states(a.states, lambda x, p: replace(x, prob=p)))
                    for k, a in m.automata.items()}
        return replace(m, automata=automata,
                       dependency_params={k: _norm(d) for k, d in m.dependency_params.items()},
                       lexicon_params={k: _norm(d) for k, d in m.lexicon_params.items()},
                       top_params=_norm(m.top_params) if m.top_params else {})
    if isinstance(m, TransductionModel):
        transducers = {k: replace(t, states=_renorm_states(t.states, lambda x, p: replace(x, prob=p)))
                       for k, t in m.transducers.items()}
        return replace(m, transducers=transducers,
                       bilingual_lexicon={k: _norm(d) for k, d in m.bilingual_lexicon.items()},
                       top_params=_norm(m.top_params))
    if isinstance(m, ConstrainedTransducerModel):
        return replace(m, params={k: _norm(d) for k, d in m.params.items()},
                       top_params=_norm(m.top_params))
    raise TypeError(f"not a model: {type(m).__name__}")

"""Random toy models and small fixtures shared by the tests."""

from __future__ import annotations

import itertools
import random

from headautomata import example_path, load_model
from headautomata.core import (
    EPS, LEFT, RIGHT, STOP, TRANSITION, AcceptorAction, ConstrainedTransducerModel, HeadAcceptor,
    HeadTransducer, RelationalAcceptorModel, TransducerAction, TransductionModel,
)


def fixture(name):
    return load_model(example_path(name))


def _dist(rng: random.Random, keys):
    """Random distribution over keys, probabilities bounded away from 0."""
    ws = [rng.uniform(0.2, 1.0) for _ in keys]
    total = sum(ws)
    return {k: w / total for k, w in zip(keys, ws)}


def _subset(rng, items, lo=1, hi=None):
    items = list(items)
    k = rng.randint(lo, min(hi or len(items), len(items)))
    chosen = set(rng.sample(range(len(items)), k))
    return [x for i, x in enumerate(items) if i in chosen]


def random_acceptor_model(rng: random.Random, n_words=None, n_rels=None) -> RelationalAcceptorModel:
    words = tuple(f"w{i}" for i in range(n_words or rng.randint(2, 5)))
    rels = tuple(f"r{i}" for i in range(n_rels or rng.randint(1, 3)))
    automata = {}
    for mi in range(rng.randint(1, 2)):
        n_states = rng.randint(1, 2)
        states = []
        for _ in range(n_states):
            options = [(d, r, q) for d in (LEFT, RIGHT) for r in rels for q in range(n_states)]
            trans = _subset(rng, options, 0, 2)
            probs = _dist(rng, [None] + trans)
            acts = [AcceptorAction(STOP, prob=probs[None])]
            acts += [AcceptorAction(d, r, q, probs[(d, r, q)]) for d, r, q in trans]
            states.append(tuple(acts))
        automata[f"m{mi}"] = HeadAcceptor(f"m{mi}", tuple(states))
    starts = [(m, q) for m, a in automata.items() for q in range(a.state_count)]
    dep = {(w, r): _dist(rng, _subset(rng, words, 1, 3)) for w in words for r in rels}
    lex = {(r, w): _dist(rng, _subset(rng, starts, 1, 2)) for r in rels for w in words}
    top = _dist(rng, _subset(rng, [(w, m, q) for w in words for m, q in starts], 1, 4))
    return RelationalAcceptorModel(words, rels, automata, dep, lex, top)


def random_constrained_model(rng: random.Random, max_pairs=6, allow_eps=True) -> ConstrainedTransducerModel:
    src, tgt = ("a", "b"), ("x", "y", "z")
    pool = [(w, v) for w in src for v in tgt]
    if allow_eps:
        pool += [(w, EPS) for w in src] + [(EPS, v) for v in tgt]
    pairs = _subset(rng, pool, 2, max_pairs)
    if not any(w == "a" for w, _ in pairs):
        pairs[0] = ("a", rng.choice(tgt))
    if not any(w == "b" for w, _ in pairs):
        pairs[-1] = ("b", rng.choice(tgt))
    pairs = list(dict.fromkeys(pairs))
    params = {}
    for p in pairs:
        events = [(w2, v2, d1, d2) for w2, v2 in pairs for d1 in (LEFT, RIGHT) for d2 in (LEFT, RIGHT)]
        params[p] = _dist(rng, [STOP] + _subset(rng, events, 0, 2))
    top = _dist(rng, _subset(rng, pairs, 1, len(pairs)))
    return ConstrainedTransducerModel(src, tgt, params, top)


def random_transduction_model(rng: random.Random, max_pairs=6) -> TransductionModel:
    """Multi-state transducers over a small dictionary."""
    base = random_constrained_model(rng, max_pairs)
    pairs = list(base.params)
    transducers, lexicon = {}, {}
    for i in range(rng.randint(1, 3)):
        n_states = rng.randint(1, 2)
        states = []
        for _ in range(n_states):
            options = [(w2, v2, d1, d2, q) for w2, v2 in pairs for d1 in (LEFT, RIGHT)
                       for d2 in (LEFT, RIGHT) for q in range(n_states)]
            trans = _subset(rng, options, 0, 2)
            probs = _dist(rng, [None] + trans)
            acts = [TransducerAction(STOP, prob=probs[None])]
            acts += [TransducerAction(TRANSITION, *o[:4], o[4], probs[o]) for o in trans]
            states.append(tuple(acts))
        transducers[f"t{i}"] = HeadTransducer(f"t{i}", tuple(states))
    for p in pairs:
        lexicon[p] = _dist(rng, _subset(rng, list(transducers), 1, 2))
    return TransductionModel(base.source_vocab, base.target_vocab, transducers, lexicon, dict(base.top_params))


def all_strings(alphabet, max_len, min_len=0):
    for n in range(min_len, max_len + 1):
        for s in itertools.product(alphabet, repeat=n):
            yield s


def identity_model(alphabet=("a", "b")) -> ConstrainedTransducerModel:
    row = {STOP: 0.5, **{(x, x, LEFT, LEFT): 0.5 / len(alphabet) for x in alphabet}}
    params = {(x, x): dict(row) for x in alphabet}
    return ConstrainedTransducerModel(tuple(alphabet), tuple(alphabet), params,
                                      {(x, x): 1 / len(alphabet) for x in alphabet})

"""Acceptance suite: one test per acceptance criterion.

Each test prints a single ``[criterion N] PASS/FAIL`` line with its runtime
and re-raises on failure.
"""

from __future__ import annotations

import contextlib
import io
import itertools
import json
import math
import random
import time
from collections import Counter, defaultdict

from headautomata import cli, example_path
from headautomata.analysis import parse
from headautomata.core import (
    EPS, LEFT, RIGHT, STOP, TRANSITION, AcceptorAction, HeadAcceptor,
    HeadTransducer, RelationalAcceptorModel, TransducerAction, TransductionModel, validate_model,
)
from headautomata.generation import (
    accepts, derivation_probability, enumerate_derivations, sample_derivations, tree_to_string,
)
from headautomata.serialization import model_from_json, model_to_json
from headautomata.training import derivation_events, em_train, expected_counts, uniform_model
from headautomata.transduction import (
    EpsBudget, enumerate_paired_derivations, enumerate_transductions, transduce,
)
from toys import (
    all_strings, fixture, random_acceptor_model, random_constrained_model,
    random_transduction_model,
)

FIXTURE_MODELS = ["anbn.json", "palindrome.json", "ambiguous.json", "identity.json", "reorder.json"]


@contextlib.contextmanager
def criterion(n, title, limit, capsys):
    start = time.perf_counter()
    ok = False
    try:
        yield
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        if ok and elapsed > limit:
            ok = False
            title += f" (runtime {elapsed:.2f}s exceeds {limit}s)"
        with capsys.disabled():
            print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {title} ({elapsed:.2f}s)")
    assert elapsed <= limit, f"runtime {elapsed:.2f}s exceeds {limit}s"


# ---------------------------------------------------------------------------
# 1. normalization


def _probability_paths(doc, path=()):
    """Paths of every probability leaf in a model JSON document."""
    if isinstance(doc, dict):
        for k, v in doc.items():
            if k in ("next", "initial", "format_version"):
                continue
            yield from _probability_paths(v, path + (k,))
    elif isinstance(doc, list):
        for i, v in enumerate(doc):
            yield from _probability_paths(v, path + (i,))
    elif isinstance(doc, (int, float)) and not isinstance(doc, bool):
        yield path


def _mutated(doc, path, delta):
    doc = json.loads(json.dumps(doc))
    node = doc
    for k in path[:-1]:
        node = node[k]
    node[path[-1]] += delta
    return doc


def test_criterion_1_normalization(capsys):
    with criterion(1, "fixture models validate; any single 1e-3 mutation gives exactly one violation",
                   1.0, capsys):
        checked = 0
        for name in FIXTURE_MODELS:
            model = fixture(name)
            assert validate_model(model).ok, name
            doc = model_to_json(model)
            paths = list(_probability_paths(doc))
            assert paths
            for path in paths:
                for delta in (1e-3, -1e-3):
                    report = validate_model(model_from_json(_mutated(doc, path, delta)))
                    assert len(report.violations) == 1, (name, path, delta, report.violations)
                    checked += 1
        assert checked >= 40


# ---------------------------------------------------------------------------
# 2. formal power


def test_criterion_2_formal_power(capsys):
    with criterion(2, "a^n b^n, even palindromes and DFA languages recognized exactly", 10.0, capsys):
        anbn = fixture("anbn.json").automata["anbn"]
        accepted = {s for s in all_strings("ab", 16) if accepts(anbn, s) is not None}
        assert accepted == {("a",) * n + ("b",) * n for n in range(9)}

        pal = fixture("palindrome.json").automata["palindrome"]
        accepted = {s for s in all_strings("ab", 8) if accepts(pal, s) is not None}
        assert accepted == {s for s in all_strings("ab", 8) if len(s) % 2 == 0 and s == s[::-1]}

        # DFA: number of a's divisible by 3 and the string does not end in "bb"
        # states: (a count mod 3, trailing b run capped at 2)
        states = [(i, j) for i in range(3) for j in range(3)]
        index = {s: k for k, s in enumerate(states)}

        def delta(s, x):
            i, j = s
            return ((i + 1) % 3, 0) if x == "a" else (i, min(j + 1, 2))

        def dfa(string):
            s = (0, 0)
            for x in string:
                s = delta(s, x)
            return s[0] == 0 and s[1] < 2

        acceptor_states = []
        for s in states:
            acts = [AcceptorAction(LEFT, x, index[delta(s, x)]) for x in "ab"]
            if s[0] == 0 and s[1] < 2:
                acts.append(AcceptorAction(STOP))
            p = 1 / len(acts)
            acceptor_states.append(tuple(AcceptorAction(a.kind, a.symbol, a.next_state, p) for a in acts))
        left_only = HeadAcceptor("dfa", tuple(acceptor_states), alphabet="word")
        for s in all_strings("ab", 6):
            assert (accepts(left_only, s) is not None) == dfa(s), s


# ---------------------------------------------------------------------------
# 3. parser optimality


def test_criterion_3_parser_optimality(capsys):
    with criterion(3, "parse cost equals the enumeration minimum on 200 random models", 120.0, capsys):
        n_inputs = 0
        for seed in range(200):
            model = random_acceptor_model(random.Random(seed))
            assert validate_model(model).ok
            best = defaultdict(lambda: math.inf)
            # every derivation with <= 4 nodes (depth and width follow from the node bound)
            for tree, cost in enumerate_derivations(model, max_depth=4, max_width=3, max_nodes=4):
                y = tuple(tree_to_string(tree))
                best[y] = min(best[y], cost)
            sampled = {tuple(tree_to_string(t)) for t in sample_derivations(model, seed, 4, 20)}
            for y in set(best) | {s for s in sampled if len(s) <= 4}:
                result = parse(model, y)
                assert result, (seed, y)
                assert abs(result.cost - best[y]) <= 1e-9, (seed, y, result.cost, best[y])
                assert tuple(tree_to_string(result.tree)) == y
                assert abs(derivation_probability(model, result.tree) - result.cost) <= 1e-9
                n_inputs += 1
        assert n_inputs > 1000


# ---------------------------------------------------------------------------
# 4. sampler calibration


def calibration_model() -> RelationalAcceptorModel:
    """Three words, two relations; every tree of depth <= 3 is enumerable."""
    A = AcceptorAction
    automata = {
        "verb": HeadAcceptor("verb", ((A(STOP, prob=0.2), A(LEFT, "subj", 1, 0.5), A(RIGHT, "obj", 1, 0.3)),
                                      (A(STOP, prob=0.6), A(RIGHT, "obj", 2, 0.4)),
                                      (A(STOP, prob=1.0),))),
        "noun": HeadAcceptor("noun", ((A(STOP, prob=0.7), A(LEFT, "subj", 1, 0.3)),
                                      (A(STOP, prob=1.0),))),
    }
    dep = {("sees", "subj"): {"dogs": 0.6, "cats": 0.4}, ("sees", "obj"): {"cats": 0.5, "dogs": 0.5},
           ("dogs", "subj"): {"cats": 1.0}, ("cats", "subj"): {"dogs": 1.0}}
    lex = {("subj", "dogs"): {("noun", 0): 1.0}, ("subj", "cats"): {("noun", 0): 0.5, ("noun", 1): 0.5},
           ("obj", "cats"): {("noun", 0): 1.0}, ("obj", "dogs"): {("noun", 0): 0.8, ("noun", 1): 0.2}}
    top = {("sees", "verb", 0): 0.7, ("dogs", "noun", 0): 0.3}
    return RelationalAcceptorModel(("sees", "dogs", "cats"), ("subj", "obj"), automata, dep, lex, top)


def test_criterion_4_sampler_calibration(capsys):
    with criterion(4, "100k samples within 3 SE of exact depth<=3 probabilities for >= 95% of trees",
                   60.0, capsys):
        model = calibration_model()
        assert validate_model(model).ok
        exact = {t: math.exp(-c) for t, c in enumerate_derivations(model, max_depth=3, max_width=10)}
        z = sum(exact.values())
        n = 100_000
        counts = Counter(sample_derivations(model, seed=20240601, max_depth=3, count=n))
        assert set(counts) <= set(exact)
        within = 0
        for t, p in exact.items():
            p /= z
            se = math.sqrt(p * (1 - p) / n)
            within += abs(counts[t] / n - p) <= 3 * se
        assert len(exact) >= 20
        assert within / len(exact) >= 0.95, (within, len(exact))


# ---------------------------------------------------------------------------
# 5. decoder optimality


def sequential_fst():
    """s0 --a:x--> s1, s0 --b:y--> s0, s1 --a:z--> s0, s1 --b:y--> s1; both final."""
    return {("s0", "a"): ("x", "s1"), ("s0", "b"): ("y", "s0"),
            ("s1", "a"): ("z", "s0"), ("s1", "b"): ("y", "s1")}


def run_fst(fst, s):
    state, out = "s0", []
    for x in s:
        y, state = fst[(state, x)]
        out.append(y)
    return tuple(out)


def degenerate_model() -> TransductionModel:
    """Root head transducer reading its left dependents with only (left, left) valencies.

    The root pair translates the first source word (a -> X, b -> Y); the
    transducer then copies the remaining words through the sequential machine.
    """
    T = TransducerAction
    chain = HeadTransducer("chain", (
        (T(TRANSITION, "a", "x", LEFT, LEFT, 1, 0.4), T(TRANSITION, "b", "y", LEFT, LEFT, 0, 0.4), T(STOP, prob=0.2)),
        (T(TRANSITION, "a", "z", LEFT, LEFT, 0, 0.4), T(TRANSITION, "b", "y", LEFT, LEFT, 1, 0.4), T(STOP, prob=0.2)),
    ))
    leaf = HeadTransducer("leaf", ((T(STOP, prob=1.0),),))
    lexicon = {("a", "X"): {"chain": 1.0}, ("b", "Y"): {"chain": 1.0},
               ("a", "x"): {"leaf": 1.0}, ("a", "z"): {"leaf": 1.0}, ("b", "y"): {"leaf": 1.0}}
    return TransductionModel(("a", "b"), ("X", "Y", "x", "y", "z"), {"chain": chain, "leaf": leaf},
                             lexicon, {("a", "X"): 0.5, ("b", "Y"): 0.5})


def test_criterion_5_decoder_optimality(capsys):
    with criterion(5, "transduce matches the enumeration minimum; identity and sequential cases", 120.0, capsys):
        budget = EpsBudget(per_head=1, per_token=1)
        compared = 0
        for seed in range(100):
            rng = random.Random(seed)
            model = random_constrained_model(rng) if seed % 2 else random_transduction_model(rng)
            assert validate_model(model).ok
            for n in range(1, 5):
                for n_a in range(n + 1):
                    bag = Counter({"a": n_a, "b": n - n_a})
                    best = defaultdict(lambda: math.inf)
                    # one enumeration serves every ordering of the bag
                    for d, cost in enumerate_paired_derivations(model, bag, n + budget.total(n),
                                                                budget.total(n), budget.per_head):
                        y = tuple(d.source_yield())
                        if len(y) == n:
                            best[y] = min(best[y], cost)
                    for s in sorted(set(itertools.permutations(["a"] * n_a + ["b"] * (n - n_a)))):
                        result = transduce(model, s, budget)
                        if s not in best:
                            assert not result, (seed, s)
                            continue
                        assert abs(result.cost - best[s]) <= 1e-9, (seed, s, result.cost, best[s])
                        assert tuple(result.derivation.source_yield()) == s
                        compared += 1
        assert compared > 500

        ident = fixture("identity.json")
        for s in all_strings("ab", 5, 1):
            assert transduce(ident, s).target == s

        fst, model = sequential_fst(), degenerate_model()
        for rest in all_strings("ab", 4):
            for head, head_out in (("a", "X"), ("b", "Y")):
                # left dependents are written outside-in, so the run reads the
                # words before the head from left to right
                s = rest + (head,)
                result = transduce(model, s)
                assert result.target == run_fst(fst, rest) + (head_out,), s
                assert len(result.target) == len(s)


# ---------------------------------------------------------------------------
# 6. separation witness


def separation_model() -> TransductionModel:
    T = TransducerAction
    swap = HeadTransducer("swap", (
        (T(STOP, prob=0.5), T(TRANSITION, "b", "B", RIGHT, LEFT, 1, 0.5)),
        (T(STOP, prob=0.5), T(TRANSITION, "b", "B", RIGHT, LEFT, 0, 0.5)),
    ))
    leaf = HeadTransducer("leaf", ((T(STOP, prob=1.0),),))
    return TransductionModel(("a", "b"), ("A", "B"), {"swap": swap, "leaf": leaf},
                             {("a", "A"): {"swap": 1.0}, ("b", "B"): {"leaf": 1.0}}, {("a", "A"): 1.0})


def test_criterion_6_separation(capsys):
    with criterion(6, "translated head pair separation grows with n under a fixed 2-state model", 1.0, capsys):
        model = separation_model()
        seps = []
        for n in (2, 4, 8):
            source = ("a",) + ("b",) * (n - 1)
            result = transduce(model, source)
            assert result
            d = result.derivation
            assert (d.source_label, d.target_label) == ("a", "A")
            src_pos = source.index("a")
            tgt_pos = result.target.index("A")
            seps.append(abs(tgt_pos - src_pos))
            assert seps[-1] == n - 1
        assert seps == sorted(seps) and len(set(seps)) == 3


# ---------------------------------------------------------------------------
# 7. EM


EM_CORPORA = [
    [(("a", "b"), ("x", "y")), (("b", "a"), ("y", "x")), (("a",), ("x",)), (("b", "b"), ("y", "y"))],
    [(("a", "c"), ("z", "x")), (("c",), ("z",)), (("a", "b", "c"), ("x", "y", "z"))],
    [(("a", "b"), ("x",)), (("b", "a", "b"), ("y", "x")), (("a",), ("x", "w"))],
]
EM_DICTS = [
    [("a", "x"), ("b", "y"), ("a", "y")],
    [("a", "x"), ("c", "z"), ("b", "y"), ("c", "x")],
    [("a", "x"), ("b", "y"), ("b", EPS), (EPS, "w")],
]


def test_criterion_7_em(capsys):
    with criterion(7, "E-step matches enumeration; EM log-likelihood non-decreasing; single path goes to 1",
                   120.0, capsys):
        budget = EpsBudget(per_head=1, per_token=1)
        for corpus, dictionary in zip(EM_CORPORA, EM_DICTS):
            model = uniform_model(dictionary)
            for src, tgt in corpus:
                if len(src) > 3 or len(tgt) > 3:
                    continue
                counts, log_z = expected_counts(model, (src, tgt), budget)
                derivs = list(enumerate_transductions(model, src, len(src) + budget.total(len(src)),
                                                      budget, target=tgt))
                if not derivs:
                    assert log_z is None
                    continue
                z = math.fsum(math.exp(-c) for _, c in derivs)
                assert abs(log_z - math.log(z)) <= 1e-9
                oracle = Counter()
                for d, c in derivs:
                    events, _ = derivation_events(d)
                    for key, k in events.items():
                        oracle[key] += k * math.exp(-c) / z
                mine = {(ctx, e): v for ctx, row in counts.events.items() for e, v in row.items()}
                for key in set(oracle) | set(mine):
                    assert abs(oracle[key] - mine.get(key, 0.0)) <= 1e-6, key

            result = em_train(corpus, dictionary, iterations=10, budget=budget)
            ll = result.logliks
            assert len(ll) == 10
            assert all(b >= a - 1e-9 for a, b in zip(ll, ll[1:])), ll

        result = em_train([(("a",), ("x",))], [("a", "x")], iterations=1)
        assert abs(result.model.top_params[("a", "x")] - 1.0) <= 1e-9
        assert abs(result.model.params[("a", "x")][STOP] - 1.0) <= 1e-9


# ---------------------------------------------------------------------------
# 8. parameter growth


def synthetic_setup(n_words, c=2):
    words = [f"s{i}" for i in range(n_words)]
    dictionary = [(w, f"t{i}_{k}") for i, w in enumerate(words) for k in range(c)]
    rng = random.Random(n_words)
    corpus = []
    for _ in range(4):
        src = tuple(rng.sample(words, 2))
        corpus.append((src, tuple(rng.choice([v for w2, v in dictionary if w2 == w]) for w in src)))
    return corpus, dictionary


def test_criterion_8_parameter_growth(capsys):
    with criterion(8, "trained table size ratio |V|=16 vs 8 within [3.5, 4.5]", 60.0, capsys):
        sizes = {}
        for n in (4, 8, 16):
            corpus, dictionary = synthetic_setup(n)
            result = em_train(corpus, dictionary, iterations=1, delta=0.1)
            sizes[n] = result.model.parameter_count()
        assert sizes[4] < sizes[8] < sizes[16]
        ratio = sizes[16] / sizes[8]
        assert 3.5 <= ratio <= 4.5, sizes


# ---------------------------------------------------------------------------
# 9. CLI


def _cli_commands(tmp):
    ex = lambda name: str(example_path(name))  # noqa: E731
    return [
        (["validate", "--model", ex("anbn.json")], 0),
        (["validate", "--model", ex("palindrome.json")], 0),
        (["validate", "--model", ex("identity.json")], 0),
        (["accepts", "--model", ex("anbn.json"), "--in", ex("anbn.txt")], 0),
        (["sample", "--model", ex("ambiguous.json"), "--seed", "11", "--count", "25", "--max-depth", "4"], 0),
        (["sample", "--model", ex("ambiguous.json"), "--seed", "11", "--count", "5", "--format", "text"], 0),
        (["score", "--model", ex("ambiguous.json"), "--in", ex("ambiguous_treebank.jsonl")], 0),
        (["parse", "--model", ex("ambiguous.json"), "--in", ex("ab.txt")], 0),
        (["parse", "--model", ex("ambiguous.json"), "--in", ex("ab.txt"), "--nbest", "3"], 0),
        (["parse", "--model", ex("ambiguous.json"), "--in", ex("ambiguous_treebank.jsonl")], 0),
        (["translate", "--model", ex("identity.json"), "--in", ex("identity.txt")], 0),
        (["translate", "--model", ex("reorder.json"), "--in", ex("reorder.txt"), "--eps-budget", "1,1"], 0),
        (["train-acceptor", "--model", ex("ambiguous.json"), "--in", ex("ambiguous_treebank.jsonl")], 0),
        (["train-transducer", "--in", ex("toy_corpus.jsonl"), "--dict", ex("toy_dict.tsv"),
          "--iterations", "10", "--log", str(tmp / "train.log")], 0),
        (["validate", "--model", ex("toy_dict.tsv")], 2),
        (["parse", "--model", ex("ambiguous.json"), "--in", str(tmp / "missing.txt")], 2),
        (["sample", "--model", ex("ambiguous.json")], 2),
    ]


def _run(argv, out):
    err = io.StringIO()
    with contextlib.redirect_stderr(err):
        status = cli.main(argv + ["--out", str(out)])
    return status, err.getvalue()


def test_criterion_9_cli_determinism(tmp_path, capsys, monkeypatch):
    with criterion(9, "bundled-fixture commands are byte-identical across runs; exit codes follow the contract",
                   30.0, capsys):
        for i, (argv, expected) in enumerate(_cli_commands(tmp_path)):
            runs = []
            for attempt in range(2):
                out = tmp_path / f"out{i}_{attempt}"
                status, err = _run(argv, out)
                assert status == expected, (argv, status, err)
                if expected == 2:
                    assert "error" in err, err
                    continue
                files = [out] + ([tmp_path / "train.log"] if "--log" in argv else [])
                runs.append([f.read_bytes() for f in files])
            if expected == 0:
                assert runs[0] == runs[1], argv
                assert all(runs[0]), argv

        log = [json.loads(line) for line in (tmp_path / "train.log").read_text().splitlines()]
        ll = [e["loglik"] for e in log]
        assert [e["iter"] for e in log] == list(range(1, 11))
        assert all(b >= a - 1e-9 for a, b in zip(ll, ll[1:]))

        # an invalid (unnormalized) model is an input error
        bad = model_to_json(fixture("ambiguous.json"))
        bad["top_params"]["a"]["head"]["0"] = 0.7
        (tmp_path / "bad.json").write_text(json.dumps(bad))
        status, _ = _run(["validate", "--model", str(tmp_path / "bad.json")], tmp_path / "v.out")
        assert status == 2
        status, err = _run(["parse", "--model", str(tmp_path / "bad.json"), "--in",
                            str(example_path("ab.txt"))], tmp_path / "p.out")
        assert status == 2 and "invalid model" in err

        # malformed input lines name the file and line
        (tmp_path / "bad.jsonl").write_text('{"src": ["a"], "tgt": ["x"]}\n{"src": []}\n')
        status, err = _run(["train-transducer", "--in", str(tmp_path / "bad.jsonl"), "--dict",
                            str(example_path("toy_dict.tsv"))], tmp_path / "t.out")
        assert status == 2 and "bad.jsonl:2" in err

        # an unexpected failure is an internal error
        def boom(*args, **kwargs):
            raise RuntimeError("boom")

        monkeypatch.setattr(cli, "parse", boom)
        status, err = _run(["parse", "--model", str(example_path("ambiguous.json")), "--in",
                            str(example_path("ab.txt"))], tmp_path / "x.out")
        assert status == 1 and err.startswith("internal error")

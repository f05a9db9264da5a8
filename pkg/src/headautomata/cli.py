"""Command-line interface.

Exit status: 0 on success, 1 on an internal error, 2 on an input error
(malformed file, invalid model, bad flag).  A sentence that cannot be parsed
or translated is not an error; it produces a null-result record.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager
from typing import Iterator

from .analysis import parse, parse_nbest
from .core import (
    CapacityError, ConstrainedTransducerModel, DataError, ImpossibleDerivation, ModelFormatError,
    RelationalAcceptorModel, SamplingFailure, TransductionModel, validate_model,
)
from .generation import (
    OrderedDependencyTree, accepts, derivation_probability, sample_derivations, tree_to_string,
)
from .serialization import dumps, load_model, read_corpus, read_dictionary, read_jsonl, save_model
from .training import em_train, estimate_acceptor_model
from .transduction import DEFAULT_BUDGET, EpsBudget, transduce


class InputError(Exception):
    """Bad user input; reported with exit status 2."""


@contextmanager
def _output(path) -> Iterator:
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            yield f


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _budget(text: str) -> EpsBudget:
    try:
        return EpsBudget.parse(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _load(path, renormalize=False, kinds=None):
    model = load_model(path, renormalize)
    if kinds is not None and not isinstance(model, kinds):
        raise InputError(f"{path}: wrong model kind {type(model).__name__}")
    if not isinstance(model, RelationalAcceptorModel) or not model.is_bare:
        report = validate_model(model)
        if not report.ok:
            first = report.violations[0]
            raise InputError(f"{path}: invalid model ({len(report.violations)} violations); first: {first}")
    return model


def _lines(path) -> Iterator[tuple[int, str]]:
    f = sys.stdin if path in (None, "-") else open(path, encoding="utf-8")
    try:
        for lineno, line in enumerate(f, 1):
            if line.strip():
                yield lineno, line.rstrip("\n")
    finally:
        if f is not sys.stdin:
            f.close()


def _sentence(line: str, where: str) -> list[str]:
    """A plain whitespace-separated sentence, a JSON token array, or a tree record."""
    text = line.strip()
    if text.startswith("{") or text.startswith("["):
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as e:
            raise InputError(f"{where}: invalid JSON ({e.msg})") from None
        if isinstance(obj, list) and all(isinstance(t, str) for t in obj):
            return obj
        try:
            return tree_to_string(OrderedDependencyTree.from_json(obj, where))
        except ModelFormatError as e:
            raise InputError(str(e)) from None
    return text.split()


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    model = load_model(args.model, args.renormalize)
    report = validate_model(model)
    with _output(args.out) as out:
        out.write(dumps(report.to_json()) + "\n")
    return 0 if report.ok else 2


def cmd_sample(args) -> int:
    model = _load(args.model, args.renormalize, RelationalAcceptorModel)
    trees = sample_derivations(model, args.seed, args.max_depth, args.count, args.max_width)
    with _output(args.out) as out:
        for t in trees:
            if args.format == "text":
                out.write(" ".join(tree_to_string(t)) + "\n")
            else:
                out.write(dumps(t.to_json()) + "\n")
    return 0


def cmd_score(args) -> int:
    model = _load(args.model, args.renormalize, RelationalAcceptorModel)
    with _output(args.out) as out:
        for lineno, obj in read_jsonl(args.inp):
            tree = OrderedDependencyTree.from_json(obj, f"{args.inp}:{lineno}")
            try:
                rec = {"cost": derivation_probability(model, tree)}
            except ImpossibleDerivation as e:
                rec = {"result": None, "reason": str(e)}
            out.write(dumps(rec) + "\n")
    return 0


def cmd_parse(args) -> int:
    model = _load(args.model, args.renormalize, RelationalAcceptorModel)
    with _output(args.out) as out:
        for lineno, line in _lines(args.inp):
            tokens = _sentence(line, f"{args.inp}:{lineno}")
            if not tokens:
                raise InputError(f"{args.inp}:{lineno}: empty sentence")
            if args.nbest > 1:
                results = parse_nbest(model, tokens, args.nbest)
                rec = {"nbest": [r.to_json() for r in results]}
            else:
                rec = parse(model, tokens).to_json()
            out.write(dumps(rec) + "\n")
    return 0


def cmd_translate(args) -> int:
    model = _load(args.model, args.renormalize, (TransductionModel, ConstrainedTransducerModel))
    if not model.top_params:
        raise InputError(f"{args.model}: model has no top parameters and cannot be decoded")
    with _output(args.out) as out:
        for lineno, line in _lines(args.inp):
            tokens = _sentence(line, f"{args.inp}:{lineno}")
            if not tokens:
                raise InputError(f"{args.inp}:{lineno}: empty sentence")
            rec = transduce(model, tokens, args.eps_budget).to_json()
            out.write(dumps(rec) + "\n")
    return 0


def cmd_accepts(args) -> int:
    model = _load(args.model, False, RelationalAcceptorModel)
    if args.automaton is None:
        if len(model.automata) != 1:
            raise InputError(f"{args.model}: several automata; choose one with --automaton")
        a = next(iter(model.automata.values()))
    elif args.automaton in model.automata:
        a = model.automata[args.automaton]
    else:
        raise InputError(f"{args.model}: no automaton {args.automaton!r}")
    if args.state is not None and not 0 <= args.state < a.state_count:
        raise InputError(f"automaton {a.id} has no state {args.state}")
    with _output(args.out) as out:
        for lineno, line in _lines(args.inp):
            s = _sentence(line, f"{args.inp}:{lineno}") if line.strip() != "-" else []
            out.write(dumps({"input": s, "cost": accepts(a, s, args.state)}) + "\n")
    return 0


def cmd_train_acceptor(args) -> int:
    skeleton = load_model(args.model)
    if not isinstance(skeleton, RelationalAcceptorModel):
        raise InputError(f"{args.model}: expected an acceptor model with the automaton skeletons")
    trees = [OrderedDependencyTree.from_json(obj, f"{args.inp}:{lineno}") for lineno, obj in read_jsonl(args.inp)]
    gaps: list[str] = []
    model = estimate_acceptor_model(trees, skeleton.automata, args.delta, skeleton.vocab, gaps)
    for g in gaps:
        print(f"note: {g}", file=sys.stderr)
    save_model(model, args.out)
    return 0


def cmd_train_transducer(args) -> int:
    corpus = read_corpus(args.inp)
    init = None
    if args.init is not None:
        init = _load(args.init, args.renormalize, ConstrainedTransducerModel)
    dictionary = read_dictionary(args.dict) if args.dict else None
    if init is None and dictionary is None:
        raise InputError("train-transducer needs --dict or --init")
    result = em_train(corpus, dictionary, args.iterations, init, args.eps_budget, args.delta)
    save_model(result.model, args.out)
    if args.log:
        with _output(args.log) as f:
            for entry in result.log:
                f.write(dumps(entry) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="headautomata", description="Head automata toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def command(name, func, help, model=True, inp=False):
        sp = sub.add_parser(name, help=help)
        sp.set_defaults(func=func)
        if model:
            sp.add_argument("--model", required=True)
        if inp:
            sp.add_argument("--in", dest="inp", default="-")
        sp.add_argument("--out", default="-")
        sp.add_argument("--renormalize", action="store_true",
                        help="rescale every distribution to sum to 1 after loading")
        return sp

    command("validate", cmd_validate, "check a model file")

    sp = command("sample", cmd_sample, "draw derivations from an acceptor model")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--max-depth", type=_positive, default=10)
    sp.add_argument("--max-width", type=_positive, default=10_000,
                    help="most transitions per automaton run")
    sp.add_argument("--count", type=_positive, default=1)
    sp.add_argument("--format", choices=("tree", "text"), default="tree")

    command("score", cmd_score, "cost of each tree (JSON lines)", inp=True)

    sp = command("parse", cmd_parse, "best derivation of each sentence", inp=True)
    sp.add_argument("--nbest", type=_positive, default=1)

    sp = command("translate", cmd_translate, "translate each sentence", inp=True)
    sp.add_argument("--eps-budget", type=_budget, default=DEFAULT_BUDGET,
                    help="PER_HEAD[,PER_TOKEN] bound on target insertions")

    sp = command("accepts", cmd_accepts, "cost of each string under one head acceptor", inp=True)
    sp.add_argument("--automaton")
    sp.add_argument("--state", type=int)

    sp = command("train-acceptor", cmd_train_acceptor, "relative-frequency estimation from a treebank", inp=True)
    sp.add_argument("--delta", type=float, default=0.0)

    sp = command("train-transducer", cmd_train_transducer, "EM training of the constrained model",
                 model=False, inp=True)
    sp.add_argument("--dict")
    sp.add_argument("--init")
    sp.add_argument("--iterations", type=_positive, default=10)
    sp.add_argument("--delta", type=float, default=0.0)
    sp.add_argument("--eps-budget", type=_budget, default=DEFAULT_BUDGET)
    sp.add_argument("--log")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    if getattr(args, "delta", 0.0) < 0:
        print("error: --delta must be non-negative", file=sys.stderr)
        return 2
    if args.command in ("train-acceptor", "train-transducer") and args.out == "-":
        print("error: --out is required for training commands", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (InputError, ModelFormatError, DataError, OSError, SamplingFailure, CapacityError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
